"""
Review and POI ingestion, urgent-care / region filtering and corpus counts.

Facility and review records follow the Google Local (UCSD) JSON-lines dump:
reviews carry ``gmap_id``, ``rating``, ``text``, ``time``; POIs carry
``gmap_id``, ``name``, ``address``, ``latitude``, ``longitude``, ``category``,
``avg_rating`` and ``num_of_reviews``.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Tuple

import pandas as pd

from ..utils import CorruptInputError, InputError, ValidationError
from ..utils.io import sha256_text

logger = logging.getLogger(__name__)

CORRUPTION_THRESHOLD = 0.5


class Region(str, Enum):
    DMV = 'DMV'
    FL = 'FL'
    OTHER = 'OTHER'


STATE_REGIONS = {'DC': Region.DMV, 'MD': Region.DMV, 'VA': Region.DMV, 'FL': Region.FL}

# "..., Tampa, FL 33602" / "..., Washington, DC 20001-1234"
_STATE_ZIP = re.compile(r'\b([A-Z]{2})\s+(\d{5})(?:-\d{4})?\b')


@dataclass(frozen=True)
class Facility:
    facility_id: str
    name: str
    address: str
    latitude: float
    longitude: float
    category_tags: Tuple[str, ...] = ()
    meta_avg_rating: Optional[float] = None
    meta_num_ratings: Optional[int] = None
    region: Region = Region.OTHER
    state: Optional[str] = None

    def to_record(self) -> Dict[str, Any]:
        return {
            'gmap_id': self.facility_id,
            'name': self.name,
            'address': self.address,
            'latitude': self.latitude,
            'longitude': self.longitude,
            'category': list(self.category_tags),
            'avg_rating': self.meta_avg_rating,
            'num_of_reviews': self.meta_num_ratings,
            'region': self.region.value,
            'state': self.state,
        }


@dataclass(frozen=True)
class Review:
    review_id: str
    facility_id: str
    rating: int
    text: Optional[str] = None
    timestamp: Optional[int] = None
    user_id: Optional[str] = None

    @property
    def has_text(self) -> bool:
        return self.text is not None and self.text.strip() != ''

    def to_record(self) -> Dict[str, Any]:
        return {
            'review_id': self.review_id,
            'gmap_id': self.facility_id,
            'rating': self.rating,
            'text': self.text,
            'time': self.timestamp,
            'user_id': self.user_id,
        }


@dataclass(frozen=True)
class ReviewSet:
    reviews: Tuple[Review, ...] = ()
    malformed_count: int = 0

    def __len__(self) -> int:
        return len(self.reviews)

    def __iter__(self) -> Iterator[Review]:
        return iter(self.reviews)

    def ids(self) -> FrozenSet[str]:
        return frozenset(r.review_id for r in self.reviews)

    def by_id(self) -> Dict[str, Review]:
        return {r.review_id: r for r in self.reviews}


@dataclass(frozen=True)
class FacilitySet:
    facilities: Tuple[Facility, ...] = ()
    malformed_count: int = 0
    diagnostics: Mapping[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.facilities)

    def __iter__(self) -> Iterator[Facility]:
        return iter(self.facilities)

    def ids(self) -> FrozenSet[str]:
        return frozenset(f.facility_id for f in self.facilities)

    def by_id(self) -> Dict[str, Facility]:
        return {f.facility_id: f for f in self.facilities}


@dataclass(frozen=True)
class RegionCounts:
    n_facilities: int = 0
    n_reviews_total: int = 0
    n_reviews_with_text: int = 0


@dataclass(frozen=True)
class CorpusSummary:
    n_facilities: int
    n_reviews_total: int
    n_reviews_with_text: int
    per_region: Mapping[str, RegionCounts]
    orphan_reviews: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_facilities': self.n_facilities,
            'n_reviews_total': self.n_reviews_total,
            'n_reviews_with_text': self.n_reviews_with_text,
            'orphan_reviews': self.orphan_reviews,
            'per_region': {
                region: {
                    'n_facilities': counts.n_facilities,
                    'n_reviews_total': counts.n_reviews_total,
                    'n_reviews_with_text': counts.n_reviews_with_text,
                }
                for region, counts in sorted(self.per_region.items())
            },
        }


def resolve_region(address: Optional[str]) -> Tuple[Region, Optional[str]]:
    """Map an address to (region, state); the last STATE ZIP pair wins."""
    if not address:
        return Region.OTHER, None
    matches = _STATE_ZIP.findall(address)
    if not matches:
        return Region.OTHER, None
    state = matches[-1][0]
    return STATE_REGIONS.get(state, Region.OTHER), state


def _detect_format(path: Path, fmt: Optional[str]) -> str:
    if fmt:
        if fmt not in ('json-lines', 'csv'):
            raise ValidationError(f"unsupported input format: {fmt}")
        return fmt
    return 'csv' if path.suffix.lower() == '.csv' else 'json-lines'


def _iter_raw_records(path: Path, fmt: str) -> Iterator[Optional[Dict[str, Any]]]:
    """Yield dict records; None stands for a line that is not a JSON object."""
    if fmt == 'csv':
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        except (OSError, pd.errors.ParserError, UnicodeDecodeError) as e:
            raise InputError(f"cannot read {path}: {e}")
        except pd.errors.EmptyDataError:
            return
        for record in frame.to_dict(orient='records'):
            yield {k: (None if v == '' else v) for k, v in record.items()}
        return

    try:
        fh = open(path, 'r', encoding='utf-8')
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}")
    with fh:
        try:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    yield None
                    continue
                yield record if isinstance(record, dict) else None
        except UnicodeDecodeError as e:
            raise InputError(f"cannot read {path}: {e}")


def _as_int(value: Any) -> Optional[int]:
    """Integral numbers (or numeric strings) only; 4.0 -> 4, 4.5 -> None."""
    if value is None or isinstance(value, bool):
        return None
    if isinstance(value, str):
        value = value.strip()
        if not value:
            return None
        try:
            value = float(value)
        except ValueError:
            return None
    if isinstance(value, (int, float)):
        if isinstance(value, float) and (not math.isfinite(value) or not value.is_integer()):
            return None
        return int(value)
    return None


def _as_float(value: Any) -> Optional[float]:
    if value is None or isinstance(value, bool):
        return None
    try:
        number = float(value)
    except (TypeError, ValueError):
        return None
    return number if math.isfinite(number) else None


def _parse_review(record: Mapping[str, Any]) -> Optional[Review]:
    facility_id = record.get('gmap_id')
    if not isinstance(facility_id, str) or not facility_id.strip():
        return None
    rating = _as_int(record.get('rating'))
    if rating is None or not 1 <= rating <= 5:
        return None
    text = record.get('text')
    if text is not None and not isinstance(text, str):
        return None
    timestamp = record.get('time')
    if timestamp is not None:
        timestamp = _as_int(timestamp)
        if timestamp is None:
            return None
    user_id = record.get('user_id')
    user_id = None if user_id is None else str(user_id)

    review_id = record.get('review_id', record.get('id'))
    if review_id is None or str(review_id).strip() == '':
        review_id = sha256_text(f"{user_id or ''}|{facility_id}|{timestamp if timestamp is not None else ''}")[:16]
    return Review(str(review_id), facility_id, rating, text, timestamp, user_id)


def _check_corruption(path: Path, malformed: int, total: int):
    if total and malformed / total > CORRUPTION_THRESHOLD:
        raise CorruptInputError(f"{path}: {malformed} of {total} records are malformed", malformed, total)
    if malformed:
        logger.warning(f"{path}: skipped {malformed} malformed record(s) of {total}")


def load_reviews(path, format: Optional[str] = None) -> ReviewSet:
    """Load a review file; malformed records are skipped and counted."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"review file not found: {path}")
    fmt = _detect_format(path, format)

    seen = set()
    reviews: List[Review] = []
    malformed = total = 0
    for record in _iter_raw_records(path, fmt):
        total += 1
        review = _parse_review(record) if record is not None else None
        if review is None or review.review_id in seen:
            malformed += 1
            continue
        seen.add(review.review_id)
        reviews.append(review)

    _check_corruption(path, malformed, total)
    logger.info(f"Loaded {len(reviews)} reviews from {path}")
    return ReviewSet(tuple(reviews), malformed)


def merge_review_sets(shards: Iterable[ReviewSet]) -> ReviewSet:
    """Merge shards; duplicates across shards count as malformed. Order independent."""
    merged: Dict[str, Review] = {}
    malformed = 0
    for shard in shards:
        malformed += shard.malformed_count
        for review in shard:
            if review.review_id in merged:
                malformed += 1
                # keep a deterministic winner regardless of shard order
                if _review_sort_key(review) < _review_sort_key(merged[review.review_id]):
                    merged[review.review_id] = review
            else:
                merged[review.review_id] = review
    return ReviewSet(tuple(merged[k] for k in sorted(merged)), malformed)


def _review_sort_key(review: Review) -> str:
    return json.dumps(review.to_record(), sort_keys=True)


def _parse_facility(record: Mapping[str, Any]) -> Optional[Facility]:
    facility_id = record.get('gmap_id')
    if not isinstance(facility_id, str) or not facility_id.strip():
        return None
    latitude = _as_float(record.get('latitude'))
    longitude = _as_float(record.get('longitude'))
    if latitude is None or longitude is None:
        return None
    if not (-90.0 <= latitude <= 90.0 and -180.0 <= longitude <= 180.0):
        return None

    category = record.get('category')
    if category is None:
        tags: Tuple[str, ...] = ()
    elif isinstance(category, str):
        # CSV fixtures: "Urgent care center;Medical clinic"
        tags = tuple(t.strip() for t in category.split(';') if t.strip())
    elif isinstance(category, list):
        tags = tuple(str(t) for t in category if t is not None)
    else:
        return None

    avg_rating = _as_float(record.get('avg_rating'))
    if avg_rating is not None and not 1.0 <= avg_rating <= 5.0:
        avg_rating = None
    num_ratings = _as_int(record.get('num_of_reviews'))
    if num_ratings is not None and num_ratings < 0:
        num_ratings = None

    address = record.get('address') or ''
    region, state = resolve_region(str(address))
    return Facility(
        facility_id=facility_id,
        name=str(record.get('name') or ''),
        address=str(address),
        latitude=latitude,
        longitude=longitude,
        category_tags=tags,
        meta_avg_rating=avg_rating,
        meta_num_ratings=num_ratings,
        region=region,
        state=state,
    )


def load_facilities(path, format: Optional[str] = None) -> FacilitySet:
    """Load POI metadata; malformed or duplicate records are skipped and counted."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"poi file not found: {path}")
    fmt = _detect_format(path, format)

    facilities: Dict[str, Facility] = {}
    malformed = total = 0
    for record in _iter_raw_records(path, fmt):
        total += 1
        facility = _parse_facility(record) if record is not None else None
        if facility is None or facility.facility_id in facilities:
            malformed += 1
            continue
        facilities[facility.facility_id] = facility

    _check_corruption(path, malformed, total)
    logger.info(f"Loaded {len(facilities)} facilities from {path}")
    ordered = tuple(facilities[k] for k in sorted(facilities))
    return FacilitySet(ordered, malformed)


def filter_urgent_care(facilities: FacilitySet, keyword: str = 'urgent care') -> FacilitySet:
    """Keep facilities whose name or any category tag contains `keyword`."""
    if not keyword or not keyword.strip():
        raise ValidationError("keyword must be non-empty")
    needle = keyword.strip().casefold()
    kept = tuple(
        f for f in facilities
        if needle in f.name.casefold() or any(needle in tag.casefold() for tag in f.category_tags)
    )
    return FacilitySet(kept, facilities.malformed_count, dict(facilities.diagnostics))


def filter_region(facilities: FacilitySet, regions: Iterable[Region]) -> FacilitySet:
    """Keep facilities in `regions`.

    OTHER keeps facilities in a known state outside DMV and FL. Facilities
    whose state cannot be resolved are never kept; they are tallied.
    """
    wanted = {Region(r) for r in regions}
    unresolved = sum(1 for f in facilities if f.state is None)
    if unresolved:
        logger.info(f"{unresolved} facilit{'y' if unresolved == 1 else 'ies'} with unresolvable region")
    kept = tuple(f for f in facilities if f.region in wanted and f.state is not None)
    diagnostics = dict(facilities.diagnostics)
    diagnostics['unresolved_region'] = unresolved
    return FacilitySet(kept, facilities.malformed_count, diagnostics)


def drop_textless(reviews: ReviewSet) -> ReviewSet:
    """Keep reviews whose text is non-empty after trimming whitespace."""
    return ReviewSet(tuple(r for r in reviews if r.has_text), reviews.malformed_count)


def restrict_to_facilities(reviews: ReviewSet, facilities: FacilitySet) -> ReviewSet:
    """Keep reviews of facilities in the set."""
    ids = facilities.ids()
    return ReviewSet(tuple(r for r in reviews if r.facility_id in ids), reviews.malformed_count)


def corpus_summary(reviews: ReviewSet, facilities: FacilitySet) -> CorpusSummary:
    """Count facilities and joined reviews overall and per region.

    Reviews whose facility is not in `facilities` are orphans: reported, but
    left out of every other count.
    """
    by_id = facilities.by_id()
    per_region: Dict[str, Dict[str, int]] = {}
    for facility in facilities:
        counts = per_region.setdefault(facility.region.value, {'f': 0, 't': 0, 'x': 0})
        counts['f'] += 1

    orphans = 0
    for review in reviews:
        facility = by_id.get(review.facility_id)
        if facility is None:
            orphans += 1
            continue
        counts = per_region[facility.region.value]
        counts['t'] += 1
        if review.has_text:
            counts['x'] += 1

    if orphans:
        logger.warning(f"{orphans} orphan review(s) reference unknown facilities")

    region_counts = {
        region: RegionCounts(c['f'], c['t'], c['x']) for region, c in per_region.items()
    }
    return CorpusSummary(
        n_facilities=len(facilities),
        n_reviews_total=sum(c.n_reviews_total for c in region_counts.values()),
        n_reviews_with_text=sum(c.n_reviews_with_text for c in region_counts.values()),
        per_region=region_counts,
        orphan_reviews=orphans,
    )


def review_from_record(record: Mapping[str, Any]) -> Review:
    """Rebuild a Review from a persisted corpus record."""
    return Review(
        review_id=record['review_id'],
        facility_id=record['gmap_id'],
        rating=int(record['rating']),
        text=record.get('text'),
        timestamp=record.get('time'),
        user_id=record.get('user_id'),
    )


def facility_from_record(record: Mapping[str, Any]) -> Facility:
    """Rebuild a Facility from a persisted corpus record."""
    return Facility(
        facility_id=record['gmap_id'],
        name=record.get('name') or '',
        address=record.get('address') or '',
        latitude=float(record['latitude']),
        longitude=float(record['longitude']),
        category_tags=tuple(record.get('category') or ()),
        meta_avg_rating=record.get('avg_rating'),
        meta_num_ratings=record.get('num_of_reviews'),
        region=Region(record.get('region', Region.OTHER.value)),
        state=record.get('state'),
    )
