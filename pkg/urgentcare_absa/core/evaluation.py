"""
Gold-label construction from multiple annotators and per-class scoring of
backend predictions over flattened (review, aspect) instances.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import pandas as pd

from ..utils import EvaluationError, InputError, SchemaError, ValidationError
from .absa import (ASPECT_ORDER, POLARITY_BY_VALUE, POLARITY_ORDER, Aspect, AspectSentimentSet,
                   Polarity, aspect_from_name)

logger = logging.getLogger(__name__)

ANNOTATION_COLUMNS = ('review_id', 'annotator_id', 'aspect', 'polarity')
MAX_ANNOTATORS = 4
ABSENT = 'absent'

GoldKey = Tuple[str, Aspect]


@dataclass(frozen=True)
class AnnotationRecord:
    review_id: str
    annotator_id: int
    labels: Mapping[Aspect, Polarity] = field(default_factory=dict)


@dataclass(frozen=True)
class GoldSet:
    entries: Mapping[GoldKey, Polarity]
    unresolved: FrozenSet[GoldKey] = frozenset()
    review_ids: FrozenSet[str] = frozenset()
    absent_majority: int = 0

    def __post_init__(self):
        overlap = set(self.entries) & set(self.unresolved)
        if overlap:
            raise ValidationError(f"{len(overlap)} gold pair(s) both resolved and unresolved")

    def restrict(self, review_ids: Iterable[str]) -> 'GoldSet':
        keep = set(review_ids)
        return GoldSet(
            {k: v for k, v in self.entries.items() if k[0] in keep},
            frozenset(k for k in self.unresolved if k[0] in keep),
            frozenset(r for r in self.review_ids if r in keep),
            self.absent_majority,
        )

    def supports(self) -> Dict[str, int]:
        counts = Counter(p.value for p in self.entries.values())
        return {p.value: counts.get(p.value, 0) for p in POLARITY_ORDER}

    def counts(self) -> Dict[str, Any]:
        """Instance accounting with and without unresolved ties."""
        return {
            'reviews': len(self.review_ids),
            'gold_instances': len(self.entries),
            'unresolved': len(self.unresolved),
            'raw_instances': len(self.entries) + len(self.unresolved),
            'absent_majority': self.absent_majority,
            'supports': self.supports(),
        }


@dataclass(frozen=True)
class FlatRow:
    review_id: str
    aspect: Aspect
    gold: Polarity
    predicted: Optional[Polarity]

    @property
    def correct(self) -> bool:
        return self.predicted is self.gold


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    flags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class EvalReport:
    per_class: Mapping[str, ClassMetrics]
    accuracy: float
    confusion: Mapping[str, Mapping[str, int]]
    n_rows: int
    macro: Mapping[str, float]
    weighted: Mapping[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'accuracy': self.accuracy,
            'n_rows': self.n_rows,
            'per_class': {
                name: {
                    'precision': m.precision,
                    'recall': m.recall,
                    'f1': m.f1,
                    'support': m.support,
                    'flags': list(m.flags),
                }
                for name, m in self.per_class.items()
            },
            'macro_avg': dict(self.macro),
            'weighted_avg': dict(self.weighted),
            'confusion': {row: dict(cols) for row, cols in self.confusion.items()},
            'confusion_orientation': 'rows=predicted, columns=gold',
        }


def load_annotations(path) -> List[AnnotationRecord]:
    """Read `review_id,annotator_id,aspect,polarity` rows into per-annotator records.

    An aspect of ``None`` records an annotator who found no aspect in the review.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"annotation file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except Exception as e:
        raise InputError(f"cannot read annotation file {path}: {e}")
    missing = [c for c in ANNOTATION_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"annotation file {path} is missing column(s): {', '.join(missing)}")

    grouped: Dict[Tuple[str, int], Dict[Aspect, Polarity]] = {}
    for line, row in enumerate(frame.itertuples(index=False), start=2):
        review_id = str(row.review_id).strip()
        try:
            annotator_id = int(str(row.annotator_id).strip())
        except ValueError:
            raise InputError(f"{path}:{line}: annotator_id must be an integer")
        labels = grouped.setdefault((review_id, annotator_id), {})
        aspect_name = str(row.aspect).strip()
        if aspect_name in ('None', ''):
            continue
        try:
            aspect = aspect_from_name(aspect_name)
        except ValidationError as e:
            raise InputError(f"{path}:{line}: {e}")
        polarity = POLARITY_BY_VALUE.get(str(row.polarity).strip().lower())
        if polarity is None:
            raise InputError(f"{path}:{line}: invalid polarity {row.polarity!r}")
        if aspect in labels and labels[aspect] is not polarity:
            raise InputError(f"{path}:{line}: annotator {annotator_id} gives review "
                             f"{review_id} two polarities for {aspect.value}")
        labels[aspect] = polarity

    records = [AnnotationRecord(rid, aid, labels) for (rid, aid), labels in sorted(grouped.items())]
    logger.info(f"Loaded {len(records)} annotation records for "
                f"{len({r.review_id for r in records})} reviews from {path}")
    return records


def majority_vote(records: Sequence[AnnotationRecord]) -> Tuple[Dict[Aspect, Polarity], Set[Aspect]]:
    """Resolve one review's annotations into gold labels and unresolved aspects.

    Every annotator votes on every aspect any of them mentioned; not labelling
    it is a vote for 'not mentioned'. A label needs a strict majority. An
    aspect where no option has one is unresolved; one where 'not mentioned'
    wins is left out.
    """
    n = len(records)
    if not 1 <= n <= MAX_ANNOTATORS:
        raise ValidationError(f"expected 1-{MAX_ANNOTATORS} annotators per review, got {n}")
    annotators = [r.annotator_id for r in records]
    if len(set(annotators)) != n:
        raise ValidationError("duplicate annotator records for one review")
    if len({r.review_id for r in records}) != 1:
        raise ValidationError("majority_vote takes the records of a single review")

    gold: Dict[Aspect, Polarity] = {}
    unresolved: Set[Aspect] = set()
    mentioned = {a for r in records for a in r.labels}
    for aspect in ASPECT_ORDER:
        if aspect not in mentioned:
            continue
        votes = Counter(r.labels[aspect].value if aspect in r.labels else ABSENT for r in records)
        winner, count = max(votes.items(), key=lambda kv: (kv[1], kv[0]))
        if count * 2 <= n:
            unresolved.add(aspect)
        elif winner != ABSENT:
            gold[aspect] = POLARITY_BY_VALUE[winner]
    return gold, unresolved


def build_gold_set(records: Iterable[AnnotationRecord]) -> GoldSet:
    by_review: Dict[str, List[AnnotationRecord]] = defaultdict(list)
    for record in records:
        by_review[record.review_id].append(record)

    entries: Dict[GoldKey, Polarity] = {}
    unresolved: Set[GoldKey] = set()
    absent_majority = 0
    for review_id in sorted(by_review):
        group = by_review[review_id]
        gold, ties = majority_vote(group)
        mentioned = {a for r in group for a in r.labels}
        absent_majority += len(mentioned) - len(gold) - len(ties)
        for aspect, polarity in gold.items():
            entries[(review_id, aspect)] = polarity
        unresolved.update((review_id, aspect) for aspect in ties)

    if unresolved:
        logger.info(f"{len(unresolved)} (review, aspect) pair(s) tied and left unresolved")
    return GoldSet(entries, frozenset(unresolved), frozenset(by_review), absent_majority)


def flatten(gold: GoldSet, predictions: Mapping[str, AspectSentimentSet]) -> List[FlatRow]:
    """One row per gold (review, aspect); an unpredicted aspect is ``None``."""
    gold_reviews = {rid for rid, _ in gold.entries}
    missing = sorted(gold_reviews - set(predictions))
    if missing:
        shown = ', '.join(missing[:10]) + (' ...' if len(missing) > 10 else '')
        raise EvaluationError(f"{len(missing)} gold review(s) have no prediction record: {shown}")

    order = {aspect: i for i, aspect in enumerate(ASPECT_ORDER)}
    rows = [
        FlatRow(rid, aspect, polarity, predictions[rid].labels.get(aspect))
        for (rid, aspect), polarity in gold.entries.items()
    ]
    rows.sort(key=lambda r: (r.review_id, order[r.aspect]))
    return rows


def _ratio(num: int, den: int) -> Tuple[float, bool]:
    if den == 0:
        return 0.0, False
    return num / den, True


def score(rows: Sequence[FlatRow]) -> EvalReport:
    """Per-class precision/recall/F1, accuracy and the confusion matrix.

    A missing prediction is a false negative for the gold class and never a
    true positive. Undefined ratios are reported as 0 and flagged.
    """
    if not rows:
        raise EvaluationError("no rows to score")

    classes = [p.value for p in POLARITY_ORDER]
    confusion = {pred: {g: 0 for g in classes} for pred in classes + [ABSENT]}
    for row in rows:
        pred = row.predicted.value if row.predicted is not None else ABSENT
        confusion[pred][row.gold.value] += 1

    per_class: Dict[str, ClassMetrics] = {}
    for c in classes:
        tp = confusion[c][c]
        predicted_c = sum(confusion[c].values())
        support = sum(confusion[p][c] for p in confusion)
        flags = []
        precision, ok = _ratio(tp, predicted_c)
        if not ok:
            flags.append('undefined_precision')
        recall, ok = _ratio(tp, support)
        if not ok:
            flags.append('undefined_recall')
        if support == 0:
            flags.append('zero_support')
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
            flags.append('undefined_f1')
        per_class[c] = ClassMetrics(precision, recall, f1, support, tuple(flags))

    supported = [m for m in per_class.values() if m.support > 0]
    total_support = sum(m.support for m in supported)
    macro = {
        k: (sum(getattr(m, k) for m in supported) / len(supported)) if supported else 0.0
        for k in ('precision', 'recall', 'f1')
    }
    weighted = {
        k: (sum(getattr(m, k) * m.support for m in supported) / total_support) if total_support else 0.0
        for k in ('precision', 'recall', 'f1')
    }
    correct = sum(confusion[c][c] for c in classes)
    return EvalReport(per_class, correct / len(rows), confusion, len(rows), macro, weighted)


def evaluate_predictions(gold: GoldSet, predictions: Mapping[str, AspectSentimentSet]) -> EvalReport:
    return score(flatten(gold, predictions))
