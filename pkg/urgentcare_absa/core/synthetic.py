"""
Seeded synthetic corpus with a planted rating model.

Review texts are written from the lexicon cue table, so the lexicon backend
recovers the planted labels and the pipeline can be checked end to end
without a remote model.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import geojson
import numpy as np
import pandas as pd
import yaml

from ..utils import ValidationError
from ..utils.io import write_json, write_jsonl, write_text
from .absa import ASPECT_ORDER, Aspect, Polarity
from .census import COVARIATE_LABELS, COVARIATE_NAMES
from .lexicon import NEGATIVE, POSITIVE

logger = logging.getLogger(__name__)

INTERCEPT = 3.0
PLANTED = {
    Aspect.INTERPERSONAL: 1.7,
    Aspect.OPERATIONAL_EFFICIENCY: 0.3,
}
DENSITY_EFFECT = 0.02
MEAN_BOUND = 0.75
MIN_MENTIONS, MAX_MENTIONS = 10, 25
CELL_SIZE = 0.01
GRID_COLUMNS = 25
BASE_TIME = 1600000000000

NOUNS: Dict[Aspect, Tuple[str, ...]] = {
    Aspect.INTERPERSONAL: ('staff', 'nurse', 'doctor', 'receptionist', 'physician'),
    Aspect.TECHNICAL_QUALITY: ('diagnosis', 'treatment', 'exam', 'prescription'),
    Aspect.OPERATIONAL_EFFICIENCY: ('wait', 'appointment', 'check-in', 'queue'),
    Aspect.FINANCES: ('bill', 'copay', 'insurance', 'price'),
    Aspect.FACILITIES: ('clinic', 'parking', 'lobby', 'bathroom', 'building'),
}

NEUTRAL_TEMPLATES = ('I asked about the {noun}.', 'We talked about the {noun}.',
                     'There was a question about the {noun}.')
FILLERS = ('Came in on a Tuesday afternoon.', 'Visited with my daughter.',
           'This was my second visit here.', 'Went in after a bike accident.',
           'Stopped by on the way home.')

# state, FIPS prefix, city, ZIP
DMV_PLACES = (('DC', '11', 'Washington', '20001'), ('MD', '24', 'Bethesda', '20814'),
              ('VA', '51', 'Arlington', '22201'))
FL_PLACES = (('FL', '12', 'Tampa', '33602'),)
REGION_ORIGINS = {'DMV': (-77.50, 38.50), 'FL': (-82.80, 27.50)}


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 42
    n_facilities: int = 500
    finances_coverage: float = 1.0
    noise_sd: float = 0.05
    n_annotated: int = 400
    n_annotators: int = 4
    n_decoys: int = 20

    def __post_init__(self):
        if self.n_facilities < 20:
            raise ValidationError("n_facilities must be at least 20")
        if not 0.0 <= self.finances_coverage <= 1.0:
            raise ValidationError("finances_coverage must be in [0, 1]")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")


@dataclass
class SyntheticCorpus:
    facilities: List[Dict[str, Any]] = field(default_factory=list)
    reviews: List[Dict[str, Any]] = field(default_factory=list)
    cbg_rows: List[Dict[str, Any]] = field(default_factory=list)
    cbg_features: List[Any] = field(default_factory=list)
    annotations: List[Dict[str, Any]] = field(default_factory=list)
    true_labels: Dict[str, Dict[str, str]] = field(default_factory=dict)
    ground_truth: Dict[str, Any] = field(default_factory=dict)


def _polarity_counts(rng: np.random.Generator, k: int, target: float) -> Tuple[int, int, int]:
    """(positive, negative, neutral) over k mentions with mean close to `target`."""
    d = int(round(target * k))
    room = k - abs(d)
    neutral = int(rng.integers(0, room // 2 + 1))
    if (k - neutral - d) % 2:
        neutral += 1 if neutral < room else -1
    positive = (k - neutral + d) // 2
    return positive, k - neutral - positive, neutral


def _aspect_sentence(rng: np.random.Generator, aspect: Aspect, polarity: Polarity) -> str:
    noun = NOUNS[aspect][int(rng.integers(len(NOUNS[aspect])))]
    positive, negative = sorted(POSITIVE[aspect]), sorted(NEGATIVE[aspect])
    if polarity is Polarity.NEUTRAL:
        template = NEUTRAL_TEMPLATES[int(rng.integers(len(NEUTRAL_TEMPLATES)))]
        return template.format(noun=noun)
    negated = rng.random() < 0.15
    if polarity is Polarity.POSITIVE:
        words, template = (negative, 'The {noun} was not {adj}.') if negated else (positive, 'The {noun} was {adj}.')
    else:
        words, template = (positive, 'The {noun} was not {adj}.') if negated else (negative, 'The {noun} was {adj}.')
    return template.format(noun=noun, adj=words[int(rng.integers(len(words)))])


def _review_text(rng: np.random.Generator, sentence: Optional[str]) -> str:
    parts = [sentence] if sentence else []
    n_fillers = int(rng.integers(0, 2)) if sentence else int(rng.integers(1, 3))
    for _ in range(n_fillers):
        parts.append(FILLERS[int(rng.integers(len(FILLERS)))])
    order = rng.permutation(len(parts))
    return ' '.join(parts[i] for i in order)


def _covariates(rng: np.random.Generator) -> Dict[str, float]:
    return {
        'population_density': round(float(math.exp(rng.normal(7.0, 1.0))), 3),
        'median_income': round(float(max(15000.0, rng.normal(70000.0, 20000.0))), 2),
        'rent_to_income_ratio': round(float(rng.uniform(0.15, 0.45)), 4),
        'gini_index': round(float(rng.uniform(0.30, 0.55)), 4),
        'household_below_poverty_rate': round(float(rng.uniform(0.02, 0.30)), 4),
        'no_insurance_rate': round(float(rng.uniform(0.02, 0.25)), 4),
        'unemployment_rate': round(float(rng.uniform(0.02, 0.15)), 4),
    }


def _zscore(values: np.ndarray) -> np.ndarray:
    centered = values - values.mean()
    return centered / centered.std(ddof=1)


def _orthogonal_noise(rng: np.random.Generator, design: np.ndarray, sd: float) -> np.ndarray:
    raw = rng.normal(size=design.shape[0])
    coef, *_ = np.linalg.lstsq(design, raw, rcond=None)
    resid = raw - design @ coef
    return resid * (sd / resid.std(ddof=1)) if sd > 0 else np.zeros_like(resid)


def generate(config: SyntheticConfig) -> SyntheticCorpus:
    """Build the corpus in memory; identical seeds give identical corpora."""
    rng = np.random.default_rng(config.seed)
    corpus = SyntheticCorpus()
    n = config.n_facilities

    regions = ['DMV' if i < (n + 1) // 2 else 'FL' for i in range(n)]
    latent = rng.uniform(-MEAN_BOUND, MEAN_BOUND, size=n)
    targets = {
        a: np.clip(0.5 * latent + 0.5 * rng.uniform(-MEAN_BOUND, MEAN_BOUND, size=n), -MEAN_BOUND, MEAN_BOUND)
        for a in ASPECT_ORDER
    }
    finance_covered = np.zeros(n, dtype=bool)
    finance_covered[rng.permutation(n)[:int(round(config.finances_coverage * n))]] = True

    # Per-facility mention polarities and realized aspect means
    mentions: List[List[Tuple[Aspect, Polarity]]] = []
    realized = {a: np.zeros(n) for a in ASPECT_ORDER}
    counts = {a: np.zeros(n, dtype=int) for a in ASPECT_ORDER}
    for i in range(n):
        items: List[Tuple[Aspect, Polarity]] = []
        for aspect in ASPECT_ORDER:
            if aspect is Aspect.FINANCES and not finance_covered[i]:
                k = int(rng.integers(0, 6))
            else:
                k = int(rng.integers(MIN_MENTIONS, MAX_MENTIONS + 1))
            if k == 0:
                continue
            pos, neg, neu = _polarity_counts(rng, k, float(targets[aspect][i]))
            items += [(aspect, Polarity.POSITIVE)] * pos + [(aspect, Polarity.NEGATIVE)] * neg \
                + [(aspect, Polarity.NEUTRAL)] * neu
            realized[aspect][i] = (pos - neg) / k
            counts[aspect][i] = k
        mentions.append([items[j] for j in rng.permutation(len(items))])

    # Facilities, CBG cells and covariates
    cbg_ids, covariates = [], []
    region_slot = {'DMV': 0, 'FL': 0}
    for i in range(n):
        region = regions[i]
        slot = region_slot[region]
        region_slot[region] += 1
        places = DMV_PLACES if region == 'DMV' else FL_PLACES
        state, fips, city, zipcode = places[slot % len(places)]
        lon0, lat0 = REGION_ORIGINS[region]
        row, col = divmod(slot, GRID_COLUMNS)
        west, south = round(lon0 + col * CELL_SIZE, 6), round(lat0 + row * CELL_SIZE, 6)
        east, north = round(west + CELL_SIZE, 6), round(south + CELL_SIZE, 6)
        cbg_id = f"{fips}001{i:06d}1"
        values = _covariates(rng)
        cbg_ids.append(cbg_id)
        covariates.append(values)
        corpus.cbg_rows.append({'cbg_id': cbg_id, **values})
        corpus.cbg_features.append(geojson.Feature(
            geometry=geojson.Polygon([[(west, south), (east, south), (east, north), (west, north), (west, south)]]),
            properties={'GEOID': cbg_id},
        ))
        corpus.facilities.append({
            'gmap_id': f"syn-f{i:04d}",
            'name': f"Synthetic Urgent Care {i:04d}",
            'address': f"{100 + i} Main St, {city}, {state} {zipcode}",
            'latitude': round(south + CELL_SIZE / 2, 6),
            'longitude': round(west + CELL_SIZE / 2, 6),
            'category': ['Urgent care center', 'Medical clinic'],
            'avg_rating': None,
            'num_of_reviews': None,
        })

    density_z = _zscore(np.array([c['population_density'] for c in covariates]))
    design = np.column_stack(
        [np.ones(n)] + [realized[a] for a in ASPECT_ORDER]
        + [_zscore(np.array([c[name] for c in covariates])) for name in COVARIATE_NAMES]
    )
    noise = _orthogonal_noise(rng, design, config.noise_sd)
    rating_target = (INTERCEPT + sum(coef * realized[a] for a, coef in PLANTED.items())
                     + DENSITY_EFFECT * density_z + noise)
    rating_target = np.clip(rating_target, 1.0, 5.0)

    # Reviews: one aspect sentence each, plus no-aspect and textless reviews
    review_no = 0
    facility_truth = {}
    for i, facility in enumerate(corpus.facilities):
        texts: List[Tuple[Optional[str], Dict[str, str]]] = [
            (_review_text(rng, _aspect_sentence(rng, aspect, polarity)), {aspect.value: polarity.value})
            for aspect, polarity in mentions[i]
        ]
        for _ in range(int(rng.integers(1, 4))):
            texts.insert(int(rng.integers(0, len(texts) + 1)), (_review_text(rng, None), {}))

        n_text = len(texts)
        total = int(round(float(rating_target[i]) * n_text))
        base, extra = divmod(total, n_text)
        stars = np.full(n_text, base, dtype=int)
        stars[rng.permutation(n_text)[:extra]] += 1
        stars = np.clip(stars, 1, 5)

        for (text, labels), star in zip(texts, stars):
            review_id = f"syn-r{review_no:06d}"
            corpus.reviews.append({
                'review_id': review_id, 'gmap_id': facility['gmap_id'], 'rating': int(star),
                'text': text, 'time': BASE_TIME + review_no * 60000, 'user_id': f"u{review_no % 9973:04d}",
            })
            corpus.true_labels[review_id] = labels
            review_no += 1
        for _ in range(int(rng.integers(0, 4))):
            corpus.reviews.append({
                'review_id': f"syn-r{review_no:06d}", 'gmap_id': facility['gmap_id'],
                'rating': int(rng.integers(1, 6)), 'text': None,
                'time': BASE_TIME + review_no * 60000, 'user_id': f"u{review_no % 9973:04d}",
            })
            review_no += 1

        ratings = [r['rating'] for r in corpus.reviews if r['gmap_id'] == facility['gmap_id']]
        facility['avg_rating'] = round(sum(ratings) / len(ratings), 1)
        facility['num_of_reviews'] = len(ratings)
        facility_truth[facility['gmap_id']] = {
            'cbg_id': cbg_ids[i],
            'rating_target': float(rating_target[i]),
            'text_rating_mean': float(stars.mean()),
            'aspect_mean': {a.value: float(realized[a][i]) for a in ASPECT_ORDER if counts[a][i]},
            'aspect_count': {a.value: int(counts[a][i]) for a in ASPECT_ORDER},
        }

    review_no = _add_decoys(rng, corpus, config.n_decoys, review_no)
    corpus.annotations = _annotate(rng, corpus.true_labels, config.n_annotated, config.n_annotators)

    corpus.ground_truth = {
        'seed': config.seed,
        'n_facilities': n,
        'noise_sd': config.noise_sd,
        'finances_coverage': config.finances_coverage,
        'planted_model': 'rating = 3 + 1.7*interpersonal + 0.3*operational_efficiency '
                         '+ 0.02*z(population_density) + e',
        'coefficients': {
            'Intercept': INTERCEPT,
            **{a.label: PLANTED.get(a, 0.0) for a in ASPECT_ORDER},
            **{COVARIATE_LABELS[name]: (DENSITY_EFFECT if name == 'population_density' else 0.0)
               for name in COVARIATE_NAMES},
        },
        'facilities': facility_truth,
    }
    logger.info(f"Generated {n} facilities, {len(corpus.reviews)} reviews, "
                f"{len(corpus.annotations)} annotation rows (seed {config.seed})")
    return corpus


def _add_decoys(rng: np.random.Generator, corpus: SyntheticCorpus, n_decoys: int, review_no: int) -> int:
    """Out-of-scope POIs: non-urgent-care places in DC and urgent care in Texas."""
    for j in range(n_decoys):
        if j % 2 == 0:
            name, category, address = f"Joe's Pizza {j}", ['Restaurant'], f"{j} K St NW, Washington, DC 20005"
            lon, lat = -77.03, 38.90
        else:
            name, category, address = (f"Lone Star Urgent Care {j}", ['Urgent care center'],
                                       f"{j} Congress Ave, Austin, TX 78701")
            lon, lat = -97.74, 30.27
        facility_id = f"syn-d{j:04d}"
        corpus.facilities.append({
            'gmap_id': facility_id, 'name': name, 'address': address, 'latitude': lat,
            'longitude': lon, 'category': category, 'avg_rating': 4.0, 'num_of_reviews': 3,
        })
        for _ in range(3):
            corpus.reviews.append({
                'review_id': f"syn-r{review_no:06d}", 'gmap_id': facility_id,
                'rating': int(rng.integers(1, 6)), 'text': 'The staff was friendly.',
                'time': BASE_TIME + review_no * 60000, 'user_id': None,
            })
            review_no += 1
    return review_no


def _annotate(rng: np.random.Generator, true_labels: Dict[str, Dict[str, str]],
              n_annotated: int, n_annotators: int) -> List[Dict[str, Any]]:
    """Noisy annotator rows: mostly correct, some flipped, omitted or spurious labels."""
    polarities = [p.value for p in Polarity]
    aspects = [a.value for a in ASPECT_ORDER]
    ids = sorted(true_labels)
    chosen = sorted(ids[int(i)] for i in rng.choice(len(ids), size=min(n_annotated, len(ids)), replace=False))
    rows = []
    for review_id in chosen:
        truth = true_labels[review_id]
        for annotator in range(1, n_annotators + 1):
            labels = {}
            for aspect, polarity in truth.items():
                u = rng.random()
                if u < 0.90:
                    labels[aspect] = polarity
                elif u < 0.95:
                    others = [p for p in polarities if p != polarity]
                    labels[aspect] = others[int(rng.integers(len(others)))]
            if rng.random() < 0.02:
                unused = [a for a in aspects if a not in truth]
                if unused:
                    labels[unused[int(rng.integers(len(unused)))]] = polarities[int(rng.integers(3))]
            if not labels:
                rows.append({'review_id': review_id, 'annotator_id': annotator, 'aspect': 'None', 'polarity': 'None'})
            for aspect in aspects:
                if aspect in labels:
                    rows.append({'review_id': review_id, 'annotator_id': annotator,
                                 'aspect': aspect, 'polarity': labels[aspect]})
    return rows


def write_corpus(corpus: SyntheticCorpus, out_dir, config: SyntheticConfig) -> Dict[str, Path]:
    """Write inputs, ground truth and a ready-to-run config file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        'pois': write_jsonl(out / 'pois.jsonl', corpus.facilities),
        'reviews': write_jsonl(out / 'reviews.jsonl', corpus.reviews),
        'cbg_profiles': out / 'cbg_profiles.csv',
        'cbg_geometries': write_text(out / 'cbg_geometries.geojson',
                                     geojson.dumps(geojson.FeatureCollection(corpus.cbg_features),
                                                   sort_keys=True) + '\n'),
        'annotations': out / 'annotations.csv',
        'ground_truth': write_json(out / 'ground_truth.json', corpus.ground_truth),
        'true_labels': write_jsonl(out / 'ground_truth_labels.jsonl',
                                   [{'review_id': k, 'labels': v} for k, v in sorted(corpus.true_labels.items())]),
    }
    pd.DataFrame(corpus.cbg_rows, columns=['cbg_id', *COVARIATE_NAMES]).to_csv(
        paths['cbg_profiles'], index=False, lineterminator='\n')
    pd.DataFrame(corpus.annotations, columns=['review_id', 'annotator_id', 'aspect', 'polarity']).to_csv(
        paths['annotations'], index=False, lineterminator='\n')

    run_config = {
        'inputs': {
            'reviews': ['reviews.jsonl'],
            'pois': 'pois.jsonl',
            'cbg_profiles': 'cbg_profiles.csv',
            'cbg_geometries': 'cbg_geometries.geojson',
            'annotations': 'annotations.csv',
        },
        'filters': {'keyword': 'urgent care', 'regions': ['DMV', 'FL']},
        'backend': {'kind': 'lexicon'},
        'output_dir': './run',
        'seed': config.seed,
    }
    paths['config'] = write_text(out / 'config.yaml', yaml.safe_dump(run_config, default_flow_style=False, sort_keys=True))
    return paths
