"""
Pipeline stages as functions of persisted artifacts.

Each stage reads its inputs from the configured files or from an earlier
stage's output directory, writes its artifacts plus a manifest, and holds
the output-directory lock while doing so.
"""

import logging
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple

from . import __version__
from .config import ConfigManager, RunConfig
from .core.absa import Aspect, AspectSentimentSet
from .core.aggregate import FacilityAspectProfile, facility_profiles, profiles_frame, region_summary
from .core.backends import create_backend
from .core.census import (COVARIATE_LABELS, CbgIndex, EnrichedProfile, join_covariates, load_cbg_geometries,
                          load_cbg_join, load_cbg_profiles)
from .core.classifier import FailureRecord, SentimentRecord, classify_batch
from .core.corpus import (FacilitySet, ReviewSet, corpus_summary, drop_textless, facility_from_record,
                          filter_region, filter_urgent_care, load_facilities, load_reviews, merge_review_sets,
                          restrict_to_facilities, review_from_record)
from .core.evaluation import build_gold_set, evaluate_predictions, load_annotations
from .core.manifest import RunManifest
from .core.reporting import (boxplot_payload, correlation_payload, facility_features, format_comparison,
                             format_eval_report, format_fit_table, format_vif_table)
from .core.stats import (RegressionFit, corr_matrix, fit_interactions, fit_model1, fit_model2, model2_vif,
                         sensitivity_run)
from .core.synthetic import SyntheticConfig, generate, write_corpus
from .utils import (EvaluationError, ProgressReporter, PropertyCheckError, StageError, StatsError,
                    validate_file_path)
from .utils.io import (OutputLock, dumps_canonical, dumps_line, iter_jsonl, read_appended_jsonl, read_json,
                       sha256_file, write_json, write_jsonl, write_text)

logger = logging.getLogger(__name__)

EXCLUDED_FROM_DETERMINISM = ('manifests', 'logs', 'cache')


class RunLayout:
    """Paths of every artifact under one output directory."""

    def __init__(self, output_dir):
        self.root = Path(output_dir)

    corpus = property(lambda self: self.root / 'corpus')
    facilities = property(lambda self: self.corpus / 'facilities.jsonl')
    reviews_all = property(lambda self: self.corpus / 'reviews_all.jsonl')
    reviews = property(lambda self: self.corpus / 'reviews.jsonl')
    corpus_summary = property(lambda self: self.corpus / 'summary.json')
    sentiments_dir = property(lambda self: self.root / 'sentiments')
    evaluation_dir = property(lambda self: self.root / 'evaluation')
    profiles_dir = property(lambda self: self.root / 'profiles')
    profiles_csv = property(lambda self: self.profiles_dir / 'profiles.csv')
    profiles_json = property(lambda self: self.profiles_dir / 'profiles.json')
    regions_json = property(lambda self: self.profiles_dir / 'regions.json')
    enriched_json = property(lambda self: self.profiles_dir / 'enriched.json')
    join_diagnostics = property(lambda self: self.profiles_dir / 'join_diagnostics.json')
    fits_dir = property(lambda self: self.root / 'fits')
    report_dir = property(lambda self: self.root / 'report')
    logs_dir = property(lambda self: self.root / 'logs')

    def sentiments(self, label: str) -> Path:
        return self.sentiments_dir / f"{label}.jsonl"

    def failures(self, label: str) -> Path:
        return self.sentiments_dir / f"{label}.failures.jsonl"

    def fit(self, name: str) -> Path:
        return self.fits_dir / f"{name}.json"

    def prediction_labels(self) -> List[str]:
        if not self.sentiments_dir.exists():
            return []
        return sorted(p.name[:-len('.jsonl')] for p in self.sentiments_dir.glob('*.jsonl')
                      if not p.name.endswith('.failures.jsonl'))


def require(path: Path, stage: str) -> Path:
    """Fail with the stage to run when an upstream artifact is missing."""
    if not path.exists():
        raise StageError(f"missing {path.name}; run '{stage}' first")
    return path


@contextmanager
def stage_run(config_manager: ConfigManager, stage: str) -> Iterator[Tuple[RunConfig, RunLayout, RunManifest]]:
    run = config_manager.to_run_config()
    layout = RunLayout(run.output_dir)
    with OutputLock(run.output_dir):
        manifest = RunManifest(stage, __version__, config_manager.snapshot(), run.output_dir)
        yield run, layout, manifest
        manifest.write()


def _emit_json(manifest: RunManifest, path: Path, payload: Dict[str, Any]) -> Path:
    write_json(path, manifest.stamp(payload))
    manifest.add_artifact(path)
    return path


def _emit(manifest: RunManifest, path: Path) -> Path:
    manifest.add_artifact(path)
    return path


def _load_corpus(layout: RunLayout) -> Tuple[FacilitySet, ReviewSet, ReviewSet]:
    facilities = FacilitySet(tuple(facility_from_record(r) for r in iter_jsonl(require(layout.facilities, 'ingest'))))
    reviews_all = ReviewSet(tuple(review_from_record(r) for r in iter_jsonl(require(layout.reviews_all, 'ingest'))))
    reviews = ReviewSet(tuple(review_from_record(r) for r in iter_jsonl(require(layout.reviews, 'ingest'))))
    return facilities, reviews_all, reviews


def _load_predictions(path: Path) -> Dict[str, AspectSentimentSet]:
    return {r['review_id']: AspectSentimentSet.from_record(r) for r in iter_jsonl(path)}


def run_ingest(config_manager: ConfigManager) -> Dict[str, Any]:
    """Load, filter and persist the corpus; returns the filtered summary."""
    with stage_run(config_manager, 'ingest') as (run, layout, manifest):
        if not run.reviews:
            raise StageError("no review files configured (inputs.reviews)")
        paths = [validate_file_path(p, 'review file') for p in run.reviews]
        poi_path = validate_file_path(run.pois, 'poi file')

        shards = []
        for i, path in enumerate(paths):
            manifest.add_input(f"reviews[{i}]", path)
            shards.append(load_reviews(path))
        manifest.add_input('pois', poi_path)
        merged = merge_review_sets(shards)
        facilities = load_facilities(poi_path)
        raw_summary = corpus_summary(merged, facilities)

        kept = filter_region(filter_urgent_care(facilities, run.keyword), run.regions)
        if not len(kept):
            logger.warning(f"No facility matches keyword {run.keyword!r} in regions "
                           f"{', '.join(sorted(r.value for r in run.regions))}")
        reviews_all = restrict_to_facilities(merged, kept)
        reviews = drop_textless(reviews_all)
        filtered_summary = corpus_summary(reviews_all, kept)

        _emit(manifest, write_jsonl(layout.facilities, [f.to_record() for f in kept]))
        _emit(manifest, write_jsonl(layout.reviews_all, [r.to_record() for r in reviews_all]))
        _emit(manifest, write_jsonl(layout.reviews, [r.to_record() for r in reviews]))
        _emit_json(manifest, layout.corpus_summary, {
            'raw': raw_summary.to_dict(),
            'filtered': filtered_summary.to_dict(),
            'malformed': {'reviews': merged.malformed_count, 'pois': facilities.malformed_count},
            'diagnostics': dict(kept.diagnostics),
            'keyword': run.keyword,
            'regions': sorted(r.value for r in run.regions),
        })
        manifest.counts = {
            'facilities_raw': len(facilities),
            'facilities_kept': len(kept),
            'reviews_raw': len(merged),
            'reviews_kept': len(reviews_all),
            'reviews_with_text': len(reviews),
        }
        logger.info(f"Ingested {len(kept)} facilities and {len(reviews)} text reviews "
                    f"({len(reviews_all)} reviews in total)")
        return filtered_summary.to_dict()


def run_classify(config_manager: ConfigManager, client: Optional[Any] = None,
                 show_progress: Optional[bool] = None) -> Dict[str, Any]:
    """Classify every text review not already classified; failures are retried on rerun."""
    with stage_run(config_manager, 'classify') as (run, layout, manifest):
        reviews_path = require(layout.reviews, 'ingest')
        manifest.add_upstream(reviews_path)
        reviews = [review_from_record(r) for r in iter_jsonl(reviews_path)]
        corpus_ids = {r.review_id for r in reviews}

        backend = create_backend(run.backend, run.cache_dir, client=client)
        label = backend.label
        out_path, fail_path = layout.sentiments(label), layout.failures(label)

        existing: Dict[str, Dict[str, Any]] = {}
        if out_path.exists():
            for record in read_appended_jsonl(out_path):
                if record.get('review_id') in corpus_ids:
                    existing[record['review_id']] = record
            if existing:
                logger.info(f"Resuming: {len(existing)} review(s) already classified by {label}")
            # Clean file before appending, so a torn tail cannot merge with new lines
            write_jsonl(out_path, [existing[k] for k in sorted(existing)])

        out_path.parent.mkdir(parents=True, exist_ok=True)
        new_records: Dict[str, Dict[str, Any]] = {}
        failures: Dict[str, Dict[str, Any]] = {}
        todo = len(corpus_ids) - len(existing)

        with open(out_path, 'a', encoding='utf-8', newline='\n') as sink:
            def on_result(result: SentimentRecord):
                record = result.to_record()
                new_records[record['review_id']] = record
                sink.write(dumps_line(record))
                sink.flush()

            def on_failure(failure: FailureRecord):
                failures[failure.review_id] = failure.to_record()

            progress = ProgressReporter(todo, f"Classifying with {label}", enabled=show_progress)
            try:
                with progress:
                    batch = classify_batch(reviews, backend, max_workers=run.backend.max_workers,
                                           failure_threshold=run.backend.failure_threshold,
                                           skip_ids=set(existing), on_result=on_result,
                                           on_failure=on_failure, progress=progress)
            finally:
                sink.flush()
                records = {**existing, **new_records}
                # Final rewrite: one record per review, sorted by id
                write_jsonl(out_path, [records[k] for k in sorted(records)])
                write_jsonl(fail_path, [failures[k] for k in sorted(failures) if k not in records])

        _emit(manifest, out_path)
        _emit(manifest, fail_path)
        manifest.decoding = backend.decoding_parameters()
        manifest.counts = {**batch.summary(), 'backend': label, 'reviews': len(corpus_ids)}
        return manifest.counts


def run_evaluate(config_manager: ConfigManager) -> Dict[str, Any]:
    """Score every selected prediction set against majority-vote gold labels."""
    with stage_run(config_manager, 'evaluate') as (run, layout, manifest):
        annotations = validate_file_path(run.annotations, 'annotation file')
        manifest.add_input('annotations', annotations)
        gold = build_gold_set(load_annotations(annotations))

        labels = list(run.evaluate_backends) or layout.prediction_labels()
        if not labels:
            raise StageError("no prediction files found; run 'classify' first")

        reports = {}
        results = {}
        for label in labels:
            path = require(layout.sentiments(label), 'classify')
            manifest.add_upstream(path)
            predictions = _load_predictions(path)
            overlap = gold.review_ids & set(predictions)
            if not overlap:
                raise EvaluationError(f"no overlapping review_ids between annotations and {label} predictions")
            missing = len(gold.review_ids - overlap)
            if missing:
                logger.warning(f"{missing} annotated review(s) have no {label} prediction and are left out")
            restricted = gold.restrict(overlap)
            report = evaluate_predictions(restricted, predictions)
            reports[label] = report
            results[label] = {'accuracy': report.accuracy, 'macro_f1': report.macro['f1'], 'n_rows': report.n_rows}

            _emit_json(manifest, layout.evaluation_dir / f"{label}.json", {
                'backend': label,
                'gold': restricted.counts(),
                'annotated_without_prediction': missing,
                'report': report.to_dict(),
            })
            _emit(manifest, write_text(layout.evaluation_dir / f"{label}.txt", format_eval_report(label, report)))
            logger.info(f"{label}: accuracy {report.accuracy:.4f} over {report.n_rows} instances")

        _emit(manifest, write_text(layout.evaluation_dir / 'comparison.txt', format_comparison(reports)))
        manifest.counts = {'gold': gold.counts(), 'backends': results}
        return results


def run_aggregate(config_manager: ConfigManager) -> Dict[str, Any]:
    """Per-facility profiles over every facility, unfiltered, plus regional summaries."""
    with stage_run(config_manager, 'aggregate') as (run, layout, manifest):
        facilities, reviews_all, reviews = _load_corpus(layout)
        for path in (layout.facilities, layout.reviews_all, layout.reviews):
            manifest.add_upstream(path)
        label = run.backend.label
        sentiments_path = require(layout.sentiments(label), 'classify')
        manifest.add_upstream(sentiments_path)
        sentiments = _load_predictions(sentiments_path)

        profile_set = facility_profiles(reviews, sentiments, facilities, reviews_all)
        summaries = region_summary(profile_set, reviews, sentiments)

        layout.profiles_dir.mkdir(parents=True, exist_ok=True)
        profiles_frame(profile_set).to_csv(layout.profiles_csv, index=False, lineterminator='\n')
        _emit(manifest, layout.profiles_csv)
        _emit_json(manifest, layout.profiles_json, {
            'backend': label,
            'profiles': [p.to_record() for p in profile_set],
            'omitted_no_text': profile_set.omitted_no_text,
            'unclassified_reviews': profile_set.unclassified_reviews,
        })
        _emit_json(manifest, layout.regions_json, {'regions': [s.to_dict() for s in summaries]})
        manifest.counts = {
            'profiles': len(profile_set),
            'omitted_no_text': profile_set.omitted_no_text,
            'unclassified_reviews': profile_set.unclassified_reviews,
        }
        return manifest.counts


def _load_profiles(layout: RunLayout) -> List[FacilityAspectProfile]:
    data = read_json(require(layout.profiles_json, 'aggregate'))
    return [FacilityAspectProfile.from_record(r) for r in data['profiles']]


def run_join_census(config_manager: ConfigManager) -> Dict[str, Any]:
    """Attach CBG covariates to every profile."""
    with stage_run(config_manager, 'join-census') as (run, layout, manifest):
        profiles = _load_profiles(layout)
        manifest.add_upstream(layout.profiles_json)
        cbg_path = validate_file_path(run.cbg_profiles, 'cbg profile file')
        manifest.add_input('cbg_profiles', cbg_path)
        table = load_cbg_profiles(cbg_path)

        index, join_map = None, None
        if run.cbg_join is not None:
            manifest.add_input('cbg_join', validate_file_path(run.cbg_join, 'cbg join file'))
            join_map = load_cbg_join(run.cbg_join)
        elif run.cbg_geometries is not None:
            manifest.add_input('cbg_geometries', validate_file_path(run.cbg_geometries, 'cbg geometry file'))
            index = CbgIndex(load_cbg_geometries(run.cbg_geometries))
        else:
            raise StageError("configure inputs.cbg_geometries or inputs.cbg_join")

        result = join_covariates(profiles, table, index=index, join_map=join_map)
        diagnostics = {**result.diagnostics(), 'profiles': len(profiles), 'rejected_cbg_rows': table.rejected,
                       'method': 'join_table' if join_map is not None else 'point_in_polygon'}
        _emit_json(manifest, layout.enriched_json, {'enriched': [e.to_record() for e in result.enriched]})
        _emit_json(manifest, layout.join_diagnostics, diagnostics)
        manifest.counts = diagnostics
        return diagnostics


def _load_enriched(layout: RunLayout) -> List[EnrichedProfile]:
    data = read_json(require(layout.enriched_json, 'join-census'))
    return [EnrichedProfile.from_record(r) for r in data['enriched']]


def run_fit(config_manager: ConfigManager) -> Dict[str, Any]:
    """Fit both rating models, interactions, VIF and correlations on the filtered sample."""
    with stage_run(config_manager, 'fit') as (run, layout, manifest):
        enriched = _load_enriched(layout)
        manifest.add_upstream(layout.enriched_json)
        sample = [e for e in enriched if run.policy.admits(e.profile)]
        logger.info(f"{len(sample)} of {len(enriched)} facilities meet the per-aspect minimums "
                    f"{run.policy.to_dict()}")
        profiles = [e.profile for e in sample]
        common = {'rating_source': run.rating_source, 'policy': run.policy.to_dict()}

        model1 = fit_model1(profiles, run.rating_source)
        model2 = fit_model2(sample, run.rating_source)
        interactions = fit_interactions(sample, run.rating_source)
        vif_report = model2_vif(sample)
        for name, fit in (('model1', model1), ('model2', model2), ('interactions', interactions)):
            _emit_json(manifest, layout.fit(name), {**common, 'fit': fit.to_json()})
        _emit_json(manifest, layout.fit('vif'), vif_report.to_dict())

        correlations = {**corr_matrix(profiles, False, run.rating_source),
                        **corr_matrix(profiles, True, run.rating_source)}
        _emit_json(manifest, layout.fit('correlations'),
                   {'correlations': correlation_payload(correlations)})

        relaxed = run.relaxed_policy()
        sensitivity: Dict[str, Any]
        if relaxed.to_dict() == run.policy.to_dict():
            sensitivity = {'skipped': 'relaxed policy equals the strict policy'}
        else:
            try:
                result = sensitivity_run(enriched, run.policy, relaxed, run.rating_source)
                sensitivity = {**result.to_json(), 'relaxed_policy': relaxed.to_dict()}
            except StatsError as e:
                logger.warning(f"Sensitivity fit failed: {e}")
                sensitivity = {'error': str(e), 'relaxed_policy': relaxed.to_dict()}
        _emit_json(manifest, layout.fit('sensitivity'), {**common, 'sensitivity': sensitivity})

        table = format_fit_table({'Model 1': model1, 'Model 2': model2}) + '\n' + format_vif_table(vif_report)
        _emit(manifest, write_text(layout.fits_dir / 'table.txt', table))
        manifest.counts = {'enriched': len(enriched), 'sample': len(sample),
                           'sensitivity_relaxed': sensitivity.get('n_relaxed')}
        return {'n': len(sample), 'model1_r2': model1.r_squared, 'model2_r2': model2.r_squared}


def run_report(config_manager: ConfigManager) -> Dict[str, Any]:
    """Regression tables, facility GeoJSON, box-plot and correlation JSON."""
    with stage_run(config_manager, 'report') as (run, layout, manifest):
        fits = {}
        for name in ('model1', 'model2', 'interactions', 'sensitivity', 'correlations'):
            path = require(layout.fit(name), 'fit')
            manifest.add_upstream(path)
            fits[name] = read_json(path)
        profiles = _load_profiles(layout)
        regions = read_json(require(layout.regions_json, 'aggregate'))
        manifest.add_upstream(layout.profiles_json)
        manifest.add_upstream(layout.regions_json)

        model1 = RegressionFit.from_json(fits['model1']['fit'])
        model2 = RegressionFit.from_json(fits['model2']['fit'])
        sections = [format_fit_table({'Model 1': model1, 'Model 2': model2})]
        sections.append(format_fit_table({'Interactions': RegressionFit.from_json(fits['interactions']['fit'])},
                                         title='Model 2 with centered interaction terms'))
        sens = fits['sensitivity']['sensitivity']
        if 'strict' in sens:
            sections.append(format_fit_table(
                {'Strict': RegressionFit.from_json(sens['strict']),
                 'Relaxed': RegressionFit.from_json(sens['relaxed'])},
                title='Sensitivity: Finances minimum relaxed, Finances dropped'))
        _emit(manifest, write_text(layout.report_dir / 'regression_table.txt', '\n'.join(sections)))

        collection = facility_features(profiles)
        _emit(manifest, write_text(layout.report_dir / 'facilities.geojson', dumps_canonical(collection)))
        _emit_json(manifest, layout.report_dir / 'boxplots.json', {'boxplots': boxplot_payload(regions['regions'])})
        _emit_json(manifest, layout.report_dir / 'correlations.json',
                   {'correlations': fits['correlations']['correlations']})
        manifest.counts = {'features': len(collection['features'])}
        return manifest.counts


def artifact_hashes(output_dir) -> Dict[str, str]:
    """sha256 of every artifact outside manifests, logs and the response cache."""
    root = Path(output_dir)
    hashes = {}
    for path in sorted(root.rglob('*')):
        rel = path.relative_to(root)
        if not path.is_file() or rel.parts[0] in EXCLUDED_FROM_DETERMINISM or path.name.startswith('.'):
            continue
        hashes[rel.as_posix()] = sha256_file(path)
    return hashes


def run_synthesize(config_manager: ConfigManager, out_dir, synthetic: Optional[SyntheticConfig] = None
                   ) -> Dict[str, Path]:
    """Write a synthetic corpus, its ground truth and a ready-to-run config into `out_dir`."""
    run = config_manager.to_run_config()
    synthetic = synthetic or run.synthetic
    out_dir = Path(out_dir)
    with OutputLock(out_dir):
        manifest = RunManifest('synthesize', __version__, config_manager.snapshot(), out_dir)
        corpus = generate(synthetic)
        paths = write_corpus(corpus, out_dir, synthetic)
        for path in paths.values():
            manifest.add_artifact(path)
        manifest.counts = {
            'facilities': len(corpus.facilities),
            'reviews': len(corpus.reviews),
            'annotation_rows': len(corpus.annotations),
            'seed': synthetic.seed,
            'finances_coverage': synthetic.finances_coverage,
        }
        manifest.write()
    return paths


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'passed': self.passed, 'detail': self.detail}


def run_full_pipeline(config_file, seed: int, client: Optional[Any] = None) -> Path:
    """ingest → classify → evaluate → aggregate → join-census → fit → report; returns the output dir."""
    config_manager = ConfigManager(Path(config_file))
    config_manager.set('seed', seed)
    run_ingest(config_manager)
    run_classify(config_manager, client=client, show_progress=False)
    if config_manager.to_run_config().annotations is not None:
        run_evaluate(config_manager)
    run_aggregate(config_manager)
    run_join_census(config_manager)
    run_fit(config_manager)
    run_report(config_manager)
    return config_manager.to_run_config().output_dir


def _coefficient(fit: RegressionFit, aspect_or_label) -> Dict[str, float]:
    label = aspect_or_label.label if isinstance(aspect_or_label, Aspect) else aspect_or_label
    return fit.coefficient(label)


def _recovery_checks(output_dir: Path) -> List[CheckOutcome]:
    model2 = RegressionFit.from_json(read_json(RunLayout(output_dir).fit('model2'))['fit'])
    checks = []

    def bounded(name, target, low, high, max_p):
        c = _coefficient(model2, target)
        ok = low <= c['coef'] <= high and c['p'] < max_p
        checks.append(CheckOutcome(name, ok, f"coef {c['coef']:.4f} (expected [{low}, {high}]), "
                                             f"p {c['p']:.3g} (expected < {max_p})"))

    bounded('interpersonal recovered', Aspect.INTERPERSONAL, 1.5, 1.9, 0.001)
    bounded('operational efficiency recovered', Aspect.OPERATIONAL_EFFICIENCY, 0.2, 0.4, 0.001)
    bounded('population density positive', COVARIATE_LABELS['population_density'], 0.0, float('inf'), 0.05)
    for aspect in (Aspect.TECHNICAL_QUALITY, Aspect.FINANCES, Aspect.FACILITIES):
        c = _coefficient(model2, aspect)
        checks.append(CheckOutcome(f"{aspect.label} not significant", c['p'] > 0.05,
                                   f"coef {c['coef']:.4f}, p {c['p']:.3g} (expected > 0.05)"))
    return checks


def _label_agreement(synthetic_dir: Path, output_dir: Path, label: str) -> CheckOutcome:
    truth = {r['review_id']: r['labels'] for r in iter_jsonl(synthetic_dir / 'ground_truth_labels.jsonl')}
    predicted = {r['review_id']: r['labels'] for r in iter_jsonl(RunLayout(output_dir).sentiments(label))}
    shared = set(truth) & set(predicted)
    agree = sum(1 for rid in shared if truth[rid] == predicted[rid])
    rate = agree / len(shared) if shared else 0.0
    return CheckOutcome('lexicon labels match generated labels', rate >= 0.99,
                        f"{agree}/{len(shared)} reviews ({rate:.2%}, expected >= 99%)")


def run_e2e_check(config_manager: ConfigManager, work_dir=None, sensitivity: bool = False,
                  keep: bool = False) -> Dict[str, Any]:
    """Synthesize, run the whole pipeline twice and check determinism and coefficient recovery."""
    run = config_manager.to_run_config()
    scratch = Path(work_dir) if work_dir else Path(tempfile.mkdtemp(prefix='urgentcare-absa-e2e-'))
    checks: List[CheckOutcome] = []
    try:
        outputs = []
        for name in ('a', 'b'):
            synthetic_dir = scratch / name
            run_synthesize(config_manager, synthetic_dir, run.synthetic)
            logger.info(f"End-to-end run {name} in {synthetic_dir}")
            outputs.append((synthetic_dir, run_full_pipeline(synthetic_dir / 'config.yaml', run.seed)))

        (dir_a, out_a), (dir_b, out_b) = outputs
        hashes_a, hashes_b = artifact_hashes(out_a), artifact_hashes(out_b)
        differing = sorted(k for k in set(hashes_a) | set(hashes_b) if hashes_a.get(k) != hashes_b.get(k))
        checks.append(CheckOutcome('byte-identical reruns', not differing,
                                   f"{len(hashes_a)} artifacts compared"
                                   + (f"; differing: {', '.join(differing[:5])}" if differing else '')))
        checks.append(_label_agreement(dir_a, out_a, 'lexicon'))
        checks.extend(_recovery_checks(out_a))

        if sensitivity:
            synthetic_dir = scratch / 'sensitivity'
            run_synthesize(config_manager, synthetic_dir, replace(run.synthetic, finances_coverage=0.3))
            out = run_full_pipeline(synthetic_dir / 'config.yaml', run.seed)
            sens = read_json(RunLayout(out).fit('sensitivity'))['sensitivity']
            if 'strict' not in sens:
                checks.append(CheckOutcome('sensitivity fits', False, str(sens)))
            else:
                checks.append(CheckOutcome('relaxed sample larger', sens['n_relaxed'] > sens['n_strict'],
                                           f"strict n={sens['n_strict']}, relaxed n={sens['n_relaxed']}"))
                for which in ('strict', 'relaxed'):
                    c = _coefficient(RegressionFit.from_json(sens[which]), Aspect.INTERPERSONAL)
                    checks.append(CheckOutcome(f"interpersonal significant ({which})", c['p'] < 0.05,
                                               f"coef {c['coef']:.4f}, p {c['p']:.3g}"))
    finally:
        if not keep and not work_dir:
            shutil.rmtree(scratch, ignore_errors=True)

    failed = [c for c in checks if not c.passed]
    report = {'passed': not failed, 'checks': [c.to_dict() for c in checks], 'work_dir': str(scratch)}
    if failed:
        raise PropertyCheckError('; '.join(f"{c.name}: {c.detail}" for c in failed))
    return report
