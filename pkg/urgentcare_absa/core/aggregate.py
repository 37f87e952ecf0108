"""
Per-facility aspect profiles, minimum-mention filtering and regional summaries.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..utils import ConfigError, ValidationError
from .absa import ASPECT_ORDER, Aspect, AspectSentimentSet, aspect_from_name
from .corpus import Facility, Region, Review

logger = logging.getLogger(__name__)

RATING_SOURCES = ('text', 'all')

PROFILE_COLUMNS = [
    'facility_id', 'name', 'region', 'latitude', 'longitude', 'mean_rating', 'mean_rating_all',
    'meta_avg_rating', 'n_text_reviews', 'n_reviews_all',
] + [f"{a.slug}_{kind}" for a in ASPECT_ORDER for kind in ('mean', 'count')]


@dataclass(frozen=True)
class FacilityAspectProfile:
    facility_id: str
    mean_rating: float
    aspect_mean: Mapping[Aspect, float]
    aspect_count: Mapping[Aspect, int]
    n_text_reviews: int
    region: Region = Region.OTHER
    name: str = ''
    latitude: Optional[float] = None
    longitude: Optional[float] = None
    mean_rating_all: Optional[float] = None
    n_reviews_all: Optional[int] = None
    meta_avg_rating: Optional[float] = None

    def __post_init__(self):
        for aspect in ASPECT_ORDER:
            count = self.aspect_count.get(aspect, 0)
            if (aspect in self.aspect_mean) != (count > 0):
                raise ValidationError(f"{self.facility_id}: {aspect.value} mean defined iff count > 0")

    def count(self, aspect: Aspect) -> int:
        return self.aspect_count.get(aspect, 0)

    def rating(self, source: str = 'text') -> float:
        if source == 'all' and self.mean_rating_all is not None:
            return self.mean_rating_all
        return self.mean_rating

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {
            'facility_id': self.facility_id,
            'name': self.name,
            'region': self.region.value,
            'latitude': self.latitude,
            'longitude': self.longitude,
            'mean_rating': self.mean_rating,
            'mean_rating_all': self.mean_rating_all,
            'meta_avg_rating': self.meta_avg_rating,
            'n_text_reviews': self.n_text_reviews,
            'n_reviews_all': self.n_reviews_all,
        }
        for aspect in ASPECT_ORDER:
            record[f"{aspect.slug}_mean"] = self.aspect_mean.get(aspect)
            record[f"{aspect.slug}_count"] = self.count(aspect)
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> 'FacilityAspectProfile':
        means, counts = {}, {}
        for aspect in ASPECT_ORDER:
            count = int(record.get(f"{aspect.slug}_count") or 0)
            counts[aspect] = count
            if count > 0:
                means[aspect] = float(record[f"{aspect.slug}_mean"])
        return cls(
            facility_id=str(record['facility_id']),
            mean_rating=float(record['mean_rating']),
            aspect_mean=means,
            aspect_count=counts,
            n_text_reviews=int(record['n_text_reviews']),
            region=Region(record.get('region') or Region.OTHER.value),
            name=record.get('name') or '',
            latitude=record.get('latitude'),
            longitude=record.get('longitude'),
            mean_rating_all=record.get('mean_rating_all'),
            n_reviews_all=record.get('n_reviews_all'),
            meta_avg_rating=record.get('meta_avg_rating'),
        )


@dataclass(frozen=True)
class ProfileSet:
    profiles: Tuple[FacilityAspectProfile, ...]
    omitted_no_text: int = 0
    unclassified_reviews: int = 0

    def __len__(self) -> int:
        return len(self.profiles)

    def __iter__(self):
        return iter(self.profiles)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def facility_profiles(reviews: Iterable[Review], sentiments: Mapping[str, AspectSentimentSet],
                      facilities: Optional[Iterable[Facility]] = None,
                      all_reviews: Optional[Iterable[Review]] = None) -> ProfileSet:
    """Average review scores and star ratings per facility.

    Only text reviews with a sentiment record count; reviews whose
    classification failed are excluded and tallied. `all_reviews` (textless
    included) feeds `mean_rating_all`.
    """
    reviews = list(reviews)
    review_ids = {r.review_id for r in reviews}
    dangling = sorted(set(sentiments) - review_ids)
    if dangling:
        raise ValidationError(f"{len(dangling)} sentiment record(s) do not match a review, "
                              f"e.g. {dangling[0]}")

    ratings: Dict[str, List[int]] = defaultdict(list)
    scores: Dict[str, Dict[Aspect, List[float]]] = defaultdict(lambda: defaultdict(list))
    unclassified = 0
    for review in reviews:
        if not review.has_text:
            continue
        labels = sentiments.get(review.review_id)
        if labels is None:
            unclassified += 1
            continue
        ratings[review.facility_id].append(review.rating)
        for aspect, value in labels.scores().items():
            scores[review.facility_id][aspect].append(value)

    ratings_all: Dict[str, List[int]] = defaultdict(list)
    for review in (all_reviews if all_reviews is not None else reviews):
        ratings_all[review.facility_id].append(review.rating)

    meta = {f.facility_id: f for f in facilities} if facilities is not None else {}
    known = set(meta) | set(ratings_all) | set(ratings)
    profiles = []
    for facility_id in sorted(ratings):
        facility = meta.get(facility_id)
        per_aspect = scores.get(facility_id, {})
        all_ratings = ratings_all.get(facility_id) or []
        profiles.append(FacilityAspectProfile(
            facility_id=facility_id,
            mean_rating=_mean(ratings[facility_id]),
            aspect_mean={a: _mean(per_aspect[a]) for a in ASPECT_ORDER if per_aspect.get(a)},
            aspect_count={a: len(per_aspect.get(a, ())) for a in ASPECT_ORDER},
            n_text_reviews=len(ratings[facility_id]),
            region=facility.region if facility else Region.OTHER,
            name=facility.name if facility else '',
            latitude=facility.latitude if facility else None,
            longitude=facility.longitude if facility else None,
            mean_rating_all=_mean(all_ratings) if all_ratings else None,
            n_reviews_all=len(all_ratings),
            meta_avg_rating=facility.meta_avg_rating if facility else None,
        ))

    omitted = len(known - set(ratings))
    if omitted:
        logger.info(f"{omitted} facilit{'y' if omitted == 1 else 'ies'} without classified text reviews omitted")
    if unclassified:
        logger.info(f"{unclassified} text review(s) without a sentiment record excluded")
    return ProfileSet(tuple(profiles), omitted, unclassified)


@dataclass(frozen=True)
class FilterPolicy:
    min_per_aspect: Mapping[Aspect, int] = field(default_factory=lambda: {a: 10 for a in ASPECT_ORDER})

    def __post_init__(self):
        for aspect, threshold in self.min_per_aspect.items():
            if int(threshold) < 0:
                raise ConfigError(f"minimum count for {aspect.value} must be >= 0")

    @classmethod
    def uniform(cls, threshold: int) -> 'FilterPolicy':
        return cls({a: int(threshold) for a in ASPECT_ORDER})

    @classmethod
    def from_config(cls, value: Union[int, Mapping[str, int]]) -> 'FilterPolicy':
        """An integer for every aspect, or a mapping by aspect name (others default to 0)."""
        if isinstance(value, Mapping):
            thresholds = {a: 0 for a in ASPECT_ORDER}
            for name, threshold in value.items():
                try:
                    thresholds[aspect_from_name(str(name))] = int(threshold)
                except ValidationError as e:
                    raise ConfigError(str(e))
            return cls(thresholds)
        try:
            return cls.uniform(int(value))
        except (TypeError, ValueError):
            raise ConfigError(f"policy.min_per_aspect must be an integer or mapping, got {value!r}")

    def threshold(self, aspect: Aspect) -> int:
        return int(self.min_per_aspect.get(aspect, 0))

    def with_threshold(self, aspect: Aspect, threshold: int) -> 'FilterPolicy':
        updated = dict(self.min_per_aspect)
        updated[aspect] = int(threshold)
        return FilterPolicy(updated)

    def admits(self, profile: FacilityAspectProfile) -> bool:
        return all(profile.count(a) >= self.threshold(a) for a in ASPECT_ORDER)

    def to_dict(self) -> Dict[str, int]:
        return {a.value: self.threshold(a) for a in ASPECT_ORDER}


def apply_filter(profiles: Iterable[FacilityAspectProfile], policy: FilterPolicy) -> List[FacilityAspectProfile]:
    """Keep profiles meeting every per-aspect minimum (inclusive)."""
    return [p for p in profiles if policy.admits(p)]


@dataclass(frozen=True)
class BoxStats:
    n: int
    median: float
    q1: float
    q3: float
    iqr: float
    lower_fence: float
    upper_fence: float
    whisker_low: float
    whisker_high: float
    outliers: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n, 'median': self.median, 'q1': self.q1, 'q3': self.q3, 'iqr': self.iqr,
            'lower_fence': self.lower_fence, 'upper_fence': self.upper_fence,
            'whisker_low': self.whisker_low, 'whisker_high': self.whisker_high,
            'outliers': list(self.outliers),
        }


def box_stats(values: Sequence[float]) -> Optional[BoxStats]:
    """Quartiles (linear interpolation), 1.5 IQR fences, whiskers and outliers."""
    data = np.sort(np.asarray(values, dtype=float))
    if data.size == 0:
        return None
    q1, median, q3 = (float(q) for q in np.percentile(data, [25, 50, 75]))
    iqr = q3 - q1
    lower, upper = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = data[(data >= lower) & (data <= upper)]
    outliers = tuple(float(v) for v in data[(data < lower) | (data > upper)])
    return BoxStats(int(data.size), median, q1, q3, iqr, lower, upper,
                    float(inside.min()), float(inside.max()), outliers)


@dataclass(frozen=True)
class RegionAspectSummary:
    region: Region
    n_facilities: int
    n_reviews: int
    mean_rating: float
    aspect_mean: Mapping[Aspect, Optional[float]]
    aspect_count: Mapping[Aspect, int]
    boxplots: Mapping[Aspect, Optional[BoxStats]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'region': self.region.value,
            'n_facilities': self.n_facilities,
            'n_reviews': self.n_reviews,
            'mean_rating': self.mean_rating,
            'aspects': {
                a.value: {
                    'mean': self.aspect_mean.get(a),
                    'count': self.aspect_count.get(a, 0),
                    'facility_means_box': self.boxplots[a].to_dict() if self.boxplots.get(a) else None,
                }
                for a in ASPECT_ORDER
            },
        }


def region_summary(profiles: Iterable[FacilityAspectProfile], reviews: Iterable[Review],
                   sentiments: Mapping[str, AspectSentimentSet]) -> List[RegionAspectSummary]:
    """Review-weighted aspect means and ratings per region, with box-plot data.

    Means pool every aspect-mentioning review in the region; box plots are
    drawn over the per-facility aspect means.
    """
    profiles = list(profiles)
    region_of = {p.facility_id: p.region for p in profiles}
    by_region: Dict[Region, List[FacilityAspectProfile]] = defaultdict(list)
    for profile in profiles:
        by_region[profile.region].append(profile)

    ratings: Dict[Region, List[int]] = defaultdict(list)
    scores: Dict[Region, Dict[Aspect, List[float]]] = defaultdict(lambda: defaultdict(list))
    for review in reviews:
        region = region_of.get(review.facility_id)
        labels = sentiments.get(review.review_id)
        if region is None or labels is None or not review.has_text:
            continue
        ratings[region].append(review.rating)
        for aspect, value in labels.scores().items():
            scores[region][aspect].append(value)

    summaries = []
    for region in sorted(by_region, key=lambda r: r.value):
        members = by_region[region]
        region_scores = scores.get(region, {})
        summaries.append(RegionAspectSummary(
            region=region,
            n_facilities=len(members),
            n_reviews=len(ratings.get(region, ())),
            mean_rating=_mean(ratings[region]) if ratings.get(region) else float('nan'),
            aspect_mean={a: (_mean(region_scores[a]) if region_scores.get(a) else None) for a in ASPECT_ORDER},
            aspect_count={a: len(region_scores.get(a, ())) for a in ASPECT_ORDER},
            boxplots={a: box_stats([p.aspect_mean[a] for p in members if a in p.aspect_mean])
                      for a in ASPECT_ORDER},
        ))
    return summaries


def profiles_frame(profiles: Iterable[FacilityAspectProfile]) -> pd.DataFrame:
    """One row per facility with mean and count columns per aspect."""
    return pd.DataFrame([p.to_record() for p in profiles], columns=PROFILE_COLUMNS)
