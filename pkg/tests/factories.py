"""Small builders shared by the test modules."""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

from urgentcare_absa.core.absa import ASPECT_ORDER, Aspect, AspectSentimentSet, Polarity
from urgentcare_absa.core.aggregate import FacilityAspectProfile
from urgentcare_absa.core.census import CbgProfile, EnrichedProfile
from urgentcare_absa.core.corpus import Facility, Region, Review, resolve_region

POIS = [
    {'gmap_id': 'f1', 'name': 'CityMD Urgent Care', 'address': '1 K St NW, Washington, DC 20001',
     'latitude': 38.90, 'longitude': -77.03, 'category': ['Urgent care center'],
     'avg_rating': 4.5, 'num_of_reviews': 2},
    {'gmap_id': 'f2', 'name': 'URGENT CARE OF TAMPA', 'address': '9 Kennedy Blvd, Tampa, FL 33602',
     'latitude': 27.95, 'longitude': -82.46, 'category': ['Medical clinic'],
     'avg_rating': 2.5, 'num_of_reviews': 2},
    {'gmap_id': 'f3', 'name': "Joe's Pizza", 'address': '5 M St NW, Washington, DC 20007',
     'latitude': 38.91, 'longitude': -77.06, 'category': ['restaurant'],
     'avg_rating': 4.8, 'num_of_reviews': 1},
    {'gmap_id': 'f4', 'name': 'Lone Star Urgent Care', 'address': '7 Congress Ave, Austin, TX 78701',
     'latitude': 30.27, 'longitude': -97.74, 'category': ['Urgent care center'],
     'avg_rating': 3.0, 'num_of_reviews': 1},
    {'gmap_id': 'f5', 'name': 'Walk-in Clinic', 'address': 'somewhere downtown',
     'latitude': 40.0, 'longitude': -75.0, 'category': ['Urgent care center'],
     'avg_rating': None, 'num_of_reviews': None},
]

REVIEWS = [
    {'review_id': 'r1', 'gmap_id': 'f1', 'rating': 5, 'text': 'The staff was friendly.', 'time': 1600000000000},
    {'review_id': 'r2', 'gmap_id': 'f1', 'rating': 4, 'text': '', 'time': 1600000060000},
    {'review_id': 'r3', 'gmap_id': 'f2', 'rating': 2, 'text': 'The wait was long.', 'time': 1600000120000},
    {'review_id': 'r4', 'gmap_id': 'f2', 'rating': 3, 'text': None, 'time': 1600000180000},
    {'review_id': 'r5', 'gmap_id': 'f3', 'rating': 5, 'text': 'great pizza', 'time': 1600000240000},
    {'review_id': 'r6', 'gmap_id': 'f4', 'rating': 1, 'text': 'The nurse was rude.', 'time': 1600000300000},
    {'review_id': 'r7', 'gmap_id': 'fz', 'rating': 3, 'text': 'hello', 'time': 1600000360000},
]


def write_jsonl(path: Path, records: Iterable[Mapping[str, Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(''.join(json.dumps(r) + '\n' for r in records), encoding='utf-8')
    return path


def facility(facility_id: str, name: str = 'Test Urgent Care', address: str = '1 Main St, Washington, DC 20001',
             tags=(), latitude: float = 38.9, longitude: float = -77.0) -> Facility:
    region, state = resolve_region(address)
    return Facility(facility_id, name, address, latitude, longitude, tuple(tags), region=region, state=state)


def review(review_id: str, facility_id: str = 'f1', rating: int = 5, text: Optional[str] = 'ok') -> Review:
    return Review(review_id, facility_id, rating, text)


def sentiments(review_id: str, labels: Optional[Mapping[Aspect, Polarity]] = None) -> AspectSentimentSet:
    return AspectSentimentSet.of(review_id, labels or {})


def profile(facility_id: str, means: Optional[Mapping[Aspect, float]] = None, count: int = 10,
            rating: float = 4.0, region: Region = Region.DMV, latitude: Optional[float] = 38.9,
            longitude: Optional[float] = -77.0, counts: Optional[Mapping[Aspect, int]] = None,
            n_text_reviews: int = 10) -> FacilityAspectProfile:
    if means is None:
        means = {a: 0.0 for a in ASPECT_ORDER}
    if counts is None:
        counts = {a: (count if a in means else 0) for a in ASPECT_ORDER}
    return FacilityAspectProfile(
        facility_id=facility_id,
        mean_rating=rating,
        aspect_mean=dict(means),
        aspect_count=dict(counts),
        n_text_reviews=n_text_reviews,
        region=region,
        name=f"{facility_id} Urgent Care",
        latitude=latitude,
        longitude=longitude,
    )


def cbg(cbg_id: str = '110010001001', **overrides: float) -> CbgProfile:
    values: Dict[str, float] = {
        'population_density': 5000.0,
        'median_income': 70000.0,
        'rent_to_income_ratio': 0.3,
        'gini_index': 0.45,
        'household_below_poverty_rate': 0.1,
        'no_insurance_rate': 0.08,
        'unemployment_rate': 0.05,
    }
    values.update(overrides)
    return CbgProfile(cbg_id=cbg_id, **values)


def enriched(p: FacilityAspectProfile, c: CbgProfile) -> EnrichedProfile:
    return EnrichedProfile(p, c)
