"""
Census block group covariates: loading, point-in-polygon assignment and
z-score normalization.
"""

import logging
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import geojson
import numpy as np
import pandas as pd
from shapely.geometry import Point, shape
from shapely.strtree import STRtree

from ..utils import ConfigError, InputError, InsufficientDataError, SchemaError, ValidationError, ZeroVarianceError
from .aggregate import FacilityAspectProfile

logger = logging.getLogger(__name__)

FIPS_PATTERN = re.compile(r'^\d{12}$')

# Column name -> display label, in regression-table order
COVARIATES: Tuple[Tuple[str, str], ...] = (
    ('population_density', 'Population Density'),
    ('median_income', 'Median Income'),
    ('rent_to_income_ratio', 'Rent-to-Income Ratio'),
    ('gini_index', 'GINI Index'),
    ('household_below_poverty_rate', 'Household Below Poverty Rate'),
    ('no_insurance_rate', 'No Insurance Rate'),
    ('unemployment_rate', 'Unemployment Rate'),
)
COVARIATE_NAMES = tuple(name for name, _ in COVARIATES)
COVARIATE_LABELS = dict(COVARIATES)

_UNIT_INTERVAL = {'gini_index', 'household_below_poverty_rate', 'no_insurance_rate', 'unemployment_rate'}


@dataclass(frozen=True)
class CbgProfile:
    cbg_id: str
    population_density: float
    median_income: float
    rent_to_income_ratio: float
    gini_index: float
    household_below_poverty_rate: float
    no_insurance_rate: float
    unemployment_rate: float

    def __post_init__(self):
        if not FIPS_PATTERN.match(self.cbg_id):
            raise ValidationError(f"cbg_id {self.cbg_id!r} is not a 12-digit FIPS code")
        for name in COVARIATE_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"{name} is not finite")
            if value < 0:
                raise ValidationError(f"{name} must be >= 0, got {value}")
            if name in _UNIT_INTERVAL and value > 1:
                raise ValidationError(f"{name} must be in [0, 1], got {value}")

    def covariates(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in COVARIATE_NAMES}


@dataclass(frozen=True)
class CbgTable:
    profiles: Mapping[str, CbgProfile]
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.profiles)

    def get(self, cbg_id: str) -> Optional[CbgProfile]:
        return self.profiles.get(cbg_id)


def _read_csv(path, label: str) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{label} not found: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except Exception as e:
        raise InputError(f"cannot read {label} {path}: {e}")


def load_cbg_profiles(path) -> CbgTable:
    """Load and validate CBG covariates; rows out of range are rejected and counted."""
    frame = _read_csv(path, 'cbg profile file')
    required = ('cbg_id',) + COVARIATE_NAMES
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"cbg profile file {path} is missing column(s): {', '.join(missing)}")

    profiles: Dict[str, CbgProfile] = {}
    rejected = 0
    for line, row in enumerate(frame[list(required)].itertuples(index=False), start=2):
        try:
            values = {name: float(getattr(row, name)) for name in COVARIATE_NAMES}
            profile = CbgProfile(cbg_id=str(row.cbg_id).strip(), **values)
        except (ValueError, ValidationError) as e:
            logger.debug(f"{path}:{line}: rejected ({e})")
            rejected += 1
            continue
        if profile.cbg_id in profiles:
            logger.debug(f"{path}:{line}: duplicate cbg_id {profile.cbg_id}")
            rejected += 1
            continue
        profiles[profile.cbg_id] = profile

    if rejected:
        logger.warning(f"Rejected {rejected} of {len(frame)} CBG profile rows from {path}")
    return CbgTable(dict(sorted(profiles.items())), rejected)


@dataclass(frozen=True)
class CbgGeometry:
    cbg_id: str
    geometry: Any


def _valid_ring(ring: Sequence[Sequence[float]]) -> bool:
    if len(ring) < 4 or tuple(ring[0]) != tuple(ring[-1]):
        return False
    return len({tuple(p) for p in ring[:-1]}) >= 3


def _rings(geometry: Mapping[str, Any]) -> List[Sequence[Sequence[float]]]:
    if geometry['type'] == 'Polygon':
        return list(geometry['coordinates'])
    if geometry['type'] == 'MultiPolygon':
        return [ring for polygon in geometry['coordinates'] for ring in polygon]
    return []


def load_cbg_geometries(path) -> List[CbgGeometry]:
    """Read a GeoJSON FeatureCollection of CBG polygons keyed by ``GEOID``."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"cbg geometry file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            collection = geojson.load(fh)
    except Exception as e:
        raise InputError(f"cannot read cbg geometry file {path}: {e}")
    if collection.get('type') != 'FeatureCollection':
        raise SchemaError(f"{path} is not a GeoJSON FeatureCollection")

    geometries = []
    rejected = 0
    for feature in collection.get('features', []):
        properties = feature.get('properties') or {}
        geometry = feature.get('geometry')
        cbg_id = str(properties.get('GEOID', '')).strip()
        if (not FIPS_PATTERN.match(cbg_id) or not geometry
                or geometry.get('type') not in ('Polygon', 'MultiPolygon')
                or not all(_valid_ring(r) for r in _rings(geometry))):
            rejected += 1
            continue
        geometries.append(CbgGeometry(cbg_id, shape(geometry)))

    if rejected:
        logger.warning(f"Rejected {rejected} CBG feature(s) in {path} (bad GEOID or ring)")
    geometries.sort(key=lambda g: g.cbg_id)
    logger.info(f"Loaded {len(geometries)} CBG geometries from {path}")
    return geometries


def load_cbg_join(path) -> Dict[str, str]:
    """Read a precomputed ``facility_id,cbg_id`` assignment table."""
    frame = _read_csv(path, 'cbg join file')
    missing = [c for c in ('facility_id', 'cbg_id') if c not in frame.columns]
    if missing:
        raise SchemaError(f"cbg join file {path} is missing column(s): {', '.join(missing)}")
    mapping: Dict[str, str] = {}
    for line, row in enumerate(frame.itertuples(index=False), start=2):
        facility_id, cbg_id = str(row.facility_id).strip(), str(row.cbg_id).strip()
        if mapping.get(facility_id, cbg_id) != cbg_id:
            raise InputError(f"{path}:{line}: facility {facility_id} assigned to two CBGs")
        mapping[facility_id] = cbg_id
    return dict(sorted(mapping.items()))


class CbgIndex:
    """STR-tree over CBG polygons for point lookups."""

    def __init__(self, geometries: Iterable[CbgGeometry]):
        self.geometries = list(geometries)
        self._shapes = [g.geometry for g in self.geometries]
        self._tree = STRtree(self._shapes) if self._shapes else None

    def __len__(self) -> int:
        return len(self.geometries)

    def lookup(self, longitude: float, latitude: float) -> Optional[str]:
        """Smallest cbg_id whose polygon covers the point (boundary included)."""
        if not (math.isfinite(longitude) and math.isfinite(latitude)):
            raise ValidationError("facility coordinates must be finite")
        if self._tree is None:
            return None
        point = Point(longitude, latitude)
        hits = [self.geometries[int(i)].cbg_id for i in self._tree.query(point)
                if self._shapes[int(i)].covers(point)]
        return min(hits) if hits else None


def assign_cbg(facility, geometries) -> Optional[str]:
    """CBG containing `facility` (anything with latitude/longitude), or None."""
    index = geometries if isinstance(geometries, CbgIndex) else CbgIndex(geometries)
    return index.lookup(float(facility.longitude), float(facility.latitude))


def zscore(values: Sequence[float], name: str = 'values') -> np.ndarray:
    """Standardize to mean 0 and sample (n-1) standard deviation 1."""
    data = np.asarray(values, dtype=float)
    if data.size < 2:
        raise InsufficientDataError(f"z-score of '{name}' needs at least 2 values")
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"'{name}' contains non-finite values")
    if np.all(data == data[0]):
        raise ZeroVarianceError(name)
    centered = data - data.mean()
    centered -= centered.mean()
    sd = centered.std(ddof=1)
    if not sd > 0:
        raise ZeroVarianceError(name)
    return centered / sd


@dataclass(frozen=True)
class EnrichedProfile:
    profile: FacilityAspectProfile
    cbg: CbgProfile

    def to_record(self) -> Dict[str, Any]:
        record = self.profile.to_record()
        record['cbg_id'] = self.cbg.cbg_id
        record.update(self.cbg.covariates())
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> 'EnrichedProfile':
        names = {f.name for f in fields(CbgProfile)}
        cbg = CbgProfile(**{k: (str(record[k]) if k == 'cbg_id' else float(record[k])) for k in names})
        return cls(FacilityAspectProfile.from_record(record), cbg)


@dataclass(frozen=True)
class JoinResult:
    enriched: Tuple[EnrichedProfile, ...]
    unassigned: int = 0
    missing_cbg_data: int = 0
    missing_coordinates: int = 0

    def diagnostics(self) -> Dict[str, int]:
        return {
            'enriched': len(self.enriched),
            'unassigned': self.unassigned,
            'missing_cbg_data': self.missing_cbg_data,
            'missing_coordinates': self.missing_coordinates,
        }


def join_covariates(profiles: Iterable[FacilityAspectProfile], cbg_table: CbgTable,
                    index: Optional[CbgIndex] = None,
                    join_map: Optional[Mapping[str, str]] = None) -> JoinResult:
    """Attach each facility's CBG covariates; unmatched facilities are dropped and counted.

    A precomputed `join_map` takes precedence over geometry lookup.
    """
    if index is None and join_map is None:
        raise ConfigError("join_covariates needs CBG geometries or a facility-to-CBG join table")

    enriched = []
    unassigned = missing_data = missing_coords = 0
    for profile in profiles:
        if join_map is not None:
            cbg_id = join_map.get(profile.facility_id)
        elif profile.latitude is None or profile.longitude is None:
            missing_coords += 1
            continue
        else:
            cbg_id = index.lookup(float(profile.longitude), float(profile.latitude))
        if cbg_id is None:
            unassigned += 1
            continue
        cbg = cbg_table.get(cbg_id)
        if cbg is None:
            missing_data += 1
            continue
        enriched.append(EnrichedProfile(profile, cbg))

    result = JoinResult(tuple(sorted(enriched, key=lambda e: e.profile.facility_id)),
                        unassigned, missing_data, missing_coords)
    dropped = unassigned + missing_data + missing_coords
    if dropped:
        logger.info(f"Census join dropped {dropped} facilit{'y' if dropped == 1 else 'ies'}: "
                    f"{unassigned} unassigned, {missing_data} without CBG data, "
                    f"{missing_coords} without coordinates")
    return result
