"""
Text tables, GeoJSON and JSON payloads for the report stage.
"""

import logging
import math
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import geojson

from ..utils import ValidationError
from .absa import ASPECT_ORDER
from .aggregate import FacilityAspectProfile, RegionAspectSummary
from .evaluation import EvalReport
from .stats import CorrelationMatrix, RegressionFit, VifReport, significance_stars

logger = logging.getLogger(__name__)

LABEL_WIDTH = 34
CELL_WIDTH = 14


def _num(value: Optional[float], digits: int = 3) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return '-'
    if math.isinf(value):
        return 'inf'
    return f"{value:.{digits}f}"


def format_fit_table(fits: Mapping[str, RegressionFit], title: str = 'Dependent variable: mean rating') -> str:
    """Side-by-side coefficient table: estimate with stars, SE in parentheses below."""
    if not fits:
        raise ValidationError("no fits to tabulate")
    names = list(fits)
    rows: List[str] = []
    for fit in fits.values():
        rows += [c for c in fit.columns if c not in rows]

    def line(label: str, cells: Sequence[str]) -> str:
        return label.ljust(LABEL_WIDTH) + ''.join(c.rjust(CELL_WIDTH) for c in cells)

    rule = '-' * (LABEL_WIDTH + CELL_WIDTH * len(names))
    out = [title, rule, line('', names), rule]
    for row in rows:
        estimates, errors = [], []
        for name in names:
            fit = fits[name]
            if row in fit.columns:
                c = fit.coefficient(row)
                estimates.append(f"{c['coef']:.3f}{significance_stars(c['p'])}")
                errors.append(f"({c['se']:.3f})")
            else:
                estimates.append('')
                errors.append('')
        out.append(line(row, estimates))
        out.append(line('', errors))
    out.append(rule)
    out.append(line('R²', [_num(fits[n].r_squared) for n in names]))
    out.append(line('Adj. R²', [_num(fits[n].adj_r_squared) for n in names]))
    out.append(line('F statistic', [_num(fits[n].f_statistic, 1) for n in names]))
    out.append(line('Observations', [str(fits[n].n_obs) for n in names]))
    out.append(rule)
    out.append('Note: ** p < 0.05, *** p < 0.001')
    return '\n'.join(out) + '\n'


def format_vif_table(report: VifReport) -> str:
    out = ['Variance inflation factors', '-' * (LABEL_WIDTH + CELL_WIDTH)]
    for name, value in report.values.items():
        out.append(name.ljust(LABEL_WIDTH) + _num(value, 2).rjust(CELL_WIDTH))
    return '\n'.join(out) + '\n'


def facility_features(profiles: Iterable[FacilityAspectProfile]) -> geojson.FeatureCollection:
    """Point features with rating and per-aspect properties, for map rendering.

    Profiles without coordinates are skipped.
    """
    features = []
    skipped = 0
    for p in sorted(profiles, key=lambda p: p.facility_id):
        if p.latitude is None or p.longitude is None:
            skipped += 1
            continue
        properties: Dict[str, Any] = {
            'facility_id': p.facility_id,
            'name': p.name,
            'region': p.region.value,
            'mean_rating': p.mean_rating,
            'n_text_reviews': p.n_text_reviews,
        }
        for aspect in ASPECT_ORDER:
            properties[f"{aspect.slug}_mean"] = p.aspect_mean.get(aspect)
            properties[f"{aspect.slug}_count"] = p.count(aspect)
        features.append(geojson.Feature(
            geometry=geojson.Point((float(p.longitude), float(p.latitude))),
            properties=properties,
            id=p.facility_id,
        ))
    if skipped:
        logger.warning(f"{skipped} facilit{'y' if skipped == 1 else 'ies'} without coordinates left off the map")

    collection = geojson.FeatureCollection(features)
    if not collection.is_valid:
        raise ValidationError(f"invalid GeoJSON: {collection.errors()}")
    return collection


def boxplot_payload(summaries: Iterable[Union[RegionAspectSummary, Mapping[str, Any]]]) -> Dict[str, Any]:
    """Per-region box-plot arrays over facility aspect means.

    Accepts summaries or their persisted dict form.
    """
    payload: Dict[str, Any] = {}
    for summary in summaries:
        record = summary.to_dict() if isinstance(summary, RegionAspectSummary) else summary
        payload[record['region']] = {
            a.value: record['aspects'][a.value]['facility_means_box'] for a in ASPECT_ORDER
        }
    return payload


def correlation_payload(matrices: Mapping[str, CorrelationMatrix]) -> Dict[str, Any]:
    return {key: matrix.to_dict() for key, matrix in matrices.items()}


def format_eval_report(label: str, report: EvalReport) -> str:
    """Per-class metrics and the confusion matrix as plain text."""
    out = [f"Backend: {label}", f"Instances: {report.n_rows}", f"Accuracy: {report.accuracy:.4f}", '']
    out.append(f"{'class':<12}{'precision':>11}{'recall':>9}{'f1':>9}{'support':>9}  flags")
    for name, m in report.per_class.items():
        out.append(f"{name:<12}{m.precision:>11.4f}{m.recall:>9.4f}{m.f1:>9.4f}{m.support:>9d}  "
                   f"{','.join(m.flags)}")
    for name, avg in (('macro avg', report.macro), ('weighted avg', report.weighted)):
        out.append(f"{name:<12}{avg['precision']:>11.4f}{avg['recall']:>9.4f}{avg['f1']:>9.4f}")
    out.append('')
    gold_classes = list(next(iter(report.confusion.values())))
    out.append('Confusion (rows = predicted, columns = gold)')
    out.append(f"{'':<12}" + ''.join(f"{g:>10}" for g in gold_classes))
    for pred, cols in report.confusion.items():
        out.append(f"{pred:<12}" + ''.join(f"{cols[g]:>10d}" for g in gold_classes))
    return '\n'.join(out) + '\n'


def format_comparison(reports: Mapping[str, EvalReport]) -> str:
    """One row per backend: accuracy and per-class F1."""
    if not reports:
        raise ValidationError("no evaluation reports to compare")
    classes = list(next(iter(reports.values())).per_class)
    header = f"{'backend':<32}{'accuracy':>10}" + ''.join(f"{'f1 ' + c:>14}" for c in classes) + f"{'macro f1':>10}"
    out = [header, '-' * len(header)]
    for label in sorted(reports):
        r = reports[label]
        out.append(f"{label:<32}{r.accuracy:>10.4f}" + ''.join(f"{r.per_class[c].f1:>14.4f}" for c in classes)
                   + f"{r.macro['f1']:>10.4f}")
    return '\n'.join(out) + '\n'
