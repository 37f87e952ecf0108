"""
Correlation and regression: Pearson r, OLS with full inference, VIF,
centered interactions and the two rating models plus the Finances
sensitivity variant.

Distribution tails go through the regularized incomplete beta function.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import betainc

from ..utils import (CollinearityError, ConfigError, InsufficientDataError, ValidationError,
                     ZeroVarianceError)
from .absa import ASPECT_ORDER, Aspect
from .aggregate import FacilityAspectProfile, FilterPolicy
from .census import COVARIATE_LABELS, COVARIATE_NAMES, EnrichedProfile, zscore

logger = logging.getLogger(__name__)

INTERCEPT = 'Intercept'
RATING = 'Rating'
RANK_TOLERANCE = 1e-10
VIF_TOLERANCE = 1e-10

ASPECT_COLUMNS = tuple(a.label for a in ASPECT_ORDER)
COVARIATE_COLUMNS = tuple(COVARIATE_LABELS[n] for n in COVARIATE_NAMES)
INTERACTIONS = (
    (Aspect.INTERPERSONAL.label, Aspect.OPERATIONAL_EFFICIENCY.label),
    (Aspect.INTERPERSONAL.label, COVARIATE_LABELS['population_density']),
    (Aspect.OPERATIONAL_EFFICIENCY.label, COVARIATE_LABELS['population_density']),
)


def significance_stars(p: float) -> str:
    if p is None or not math.isfinite(p):
        return ''
    if p < 0.001:
        return '***'
    if p < 0.05:
        return '**'
    return ''


def t_cdf(t: float, df: float) -> float:
    """Student t cumulative probability."""
    if df < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got {df}")
    if not math.isfinite(t):
        raise ValidationError("t must be finite")
    if t == 0:
        return 0.5
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return 1.0 - tail if t > 0 else tail


def t_two_sided_p(t, df):
    """Two-sided p-value for t statistic(s); infinite |t| gives 0."""
    t = np.asarray(t, dtype=float)
    with np.errstate(over='ignore', invalid='ignore'):
        p = betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(p) if p.ndim == 0 else p


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper-tail probability of the F distribution."""
    if not f >= 0:
        return float('nan')
    if math.isinf(f):
        return 0.0
    return float(betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)))


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p_value: float
    n: int

    def to_dict(self) -> Dict[str, Any]:
        return {'r': self.r, 'p': self.p_value, 'n': self.n}


def _as_vector(values, name: str) -> np.ndarray:
    data = np.asarray(values, dtype=float)
    if data.ndim != 1:
        raise ValidationError(f"'{name}' must be one-dimensional")
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"'{name}' contains non-finite values")
    return data


def pearson(x: Sequence[float], y: Sequence[float], x_name: str = 'x', y_name: str = 'y') -> CorrelationResult:
    """Product-moment correlation with a two-sided t-test p-value."""
    xs, ys = _as_vector(x, x_name), _as_vector(y, y_name)
    if xs.size != ys.size:
        raise ValidationError(f"length mismatch: {xs.size} vs {ys.size}")
    n = int(xs.size)
    if n < 3:
        raise InsufficientDataError(f"correlation needs n >= 3, got {n}")
    for data, name in ((xs, x_name), (ys, y_name)):
        if np.all(data == data[0]):
            raise ZeroVarianceError(name)

    dx, dy = xs - xs.mean(), ys - ys.mean()
    r = float(np.dot(dx, dy) / math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy))))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return CorrelationResult(r, 0.0, n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return CorrelationResult(r, t_two_sided_p(t, n - 2), n)


def center(values: Sequence[float]) -> np.ndarray:
    """Subtract the mean; no scaling."""
    data = np.asarray(values, dtype=float)
    if data.size < 1:
        raise InsufficientDataError("cannot center an empty vector")
    shifted = data - data.mean()
    return shifted - shifted.mean()


@dataclass(frozen=True)
class DesignMatrix:
    column_names: Tuple[str, ...]
    rows: np.ndarray
    intercept_included: bool = True

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(self.column_names):
            raise ValidationError("design matrix shape does not match its column names")
        if not np.all(np.isfinite(rows)):
            raise ValidationError("design matrix contains non-finite entries")
        object.__setattr__(self, 'rows', rows)
        object.__setattr__(self, 'column_names', tuple(self.column_names))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows.shape

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence[float]], intercept: bool = True) -> 'DesignMatrix':
        names = list(columns)
        data = [np.asarray(columns[n], dtype=float) for n in names]
        lengths = {d.size for d in data}
        if len(lengths) > 1:
            raise ValidationError("design columns differ in length")
        n = lengths.pop() if lengths else 0
        if intercept:
            names.insert(0, INTERCEPT)
            data.insert(0, np.ones(n))
        return cls(tuple(names), np.column_stack(data) if data else np.empty((n, 0)), intercept)

    def without_intercept(self) -> 'DesignMatrix':
        if not self.intercept_included:
            return self
        return DesignMatrix(self.column_names[1:], self.rows[:, 1:], False)


@dataclass(frozen=True)
class RegressionFit:
    columns: Tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    r_squared: float
    adj_r_squared: float
    f_statistic: float
    f_p_value: float
    n_obs: int
    df_resid: int
    residuals: np.ndarray
    intercept_included: bool = True

    def coefficient(self, name: str) -> Dict[str, float]:
        i = self.columns.index(name)
        return {
            'coef': float(self.coefficients[i]),
            'se': float(self.standard_errors[i]),
            't': float(self.t_values[i]),
            'p': float(self.p_values[i]),
        }

    def to_json(self) -> Dict[str, Any]:
        def floats(values):
            return [float(v) for v in values]
        return {
            'columns': list(self.columns),
            'coef': floats(self.coefficients),
            'se': floats(self.standard_errors),
            't': floats(self.t_values),
            'p': floats(self.p_values),
            'r2': self.r_squared,
            'adj_r2': self.adj_r_squared,
            'f': self.f_statistic,
            'f_p': self.f_p_value,
            'n': self.n_obs,
            'df_resid': self.df_resid,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> 'RegressionFit':
        """Rebuild a persisted fit; residuals are not stored and come back empty."""
        def array(key):
            return np.array([math.nan if v is None else v for v in data[key]], dtype=float)

        def scalar(key):
            return math.nan if data[key] is None else float(data[key])
        return cls(tuple(data['columns']), array('coef'), array('se'), array('t'), array('p'),
                   scalar('r2'), scalar('adj_r2'), scalar('f'), scalar('f_p'),
                   int(data['n']), int(data['df_resid']), np.empty(0),
                   list(data['columns'][:1]) == [INTERCEPT])


def _rank_check(X: DesignMatrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    Q, R, piv = linalg.qr(X.rows, mode='economic', pivoting=True)
    singular = linalg.svdvals(X.rows)
    rank = int(np.sum(singular > RANK_TOLERANCE * singular[0])) if singular.size and singular[0] > 0 else 0
    p = X.rows.shape[1]
    if rank < p:
        raise CollinearityError([X.column_names[i] for i in piv[rank:]])
    return Q, R, piv


def ols_fit(X: DesignMatrix, y: Sequence[float], y_name: str = 'y') -> RegressionFit:
    """Least squares via pivoted QR with classical standard errors."""
    ys = _as_vector(y, y_name)
    n, p = X.rows.shape
    if ys.size != n:
        raise ValidationError(f"response has {ys.size} values for {n} design rows")
    if n <= p:
        raise InsufficientDataError(f"need more observations than parameters (n={n}, p={p})")
    if np.all(ys == ys[0]):
        raise ZeroVarianceError(y_name)

    Q, R, piv = _rank_check(X)
    beta = np.empty(p)
    beta[piv] = linalg.solve_triangular(R, Q.T @ ys)
    r_inv = linalg.solve_triangular(R, np.eye(p))
    cov_unscaled = np.empty((p, p))
    cov_unscaled[np.ix_(piv, piv)] = r_inv @ r_inv.T

    residuals = ys - X.rows @ beta
    ssr = float(residuals @ residuals)
    df_resid = n - p
    sigma2 = ssr / df_resid
    se = np.sqrt(sigma2 * np.diag(cov_unscaled))

    with np.errstate(divide='ignore', invalid='ignore'):
        t = np.where(se > 0, beta / np.where(se > 0, se, 1.0), np.copysign(np.inf, beta))
    p_values = np.asarray(t_two_sided_p(t, df_resid), dtype=float)
    p_values = np.where(np.isnan(p_values), 1.0, p_values)

    if X.intercept_included:
        sst = float(np.sum((ys - ys.mean()) ** 2))
        df_model = p - 1
    else:
        sst = float(ys @ ys)
        df_model = p
    r2 = min(1.0, max(0.0, 1.0 - ssr / sst))
    if X.intercept_included:
        adj = 1.0 - (1.0 - r2) * (n - 1) / df_resid
    else:
        adj = 1.0 - (1.0 - r2) * n / df_resid

    if df_model > 0:
        f = math.inf if r2 == 1.0 else (r2 / df_model) / ((1.0 - r2) / df_resid)
        f_p = f_sf(f, df_model, df_resid)
    else:
        f, f_p = float('nan'), float('nan')

    return RegressionFit(X.column_names, beta, se, t, p_values, r2, adj, f, f_p, n, df_resid,
                         residuals, X.intercept_included)


@dataclass(frozen=True)
class VifReport:
    values: Mapping[str, float]
    infinite: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            'vif': {name: (None if name in self.infinite else value) for name, value in self.values.items()},
            'infinite': list(self.infinite),
        }


def vif(X: DesignMatrix) -> VifReport:
    """VIF_j = 1 / (1 - R_j^2), regressing column j on the rest plus an intercept."""
    if X.intercept_included:
        raise ValidationError("vif expects a design without the intercept column")
    n, p = X.rows.shape
    if p < 2:
        raise InsufficientDataError("vif needs at least two predictors")
    if n <= p:
        raise InsufficientDataError(f"need more observations than predictors (n={n}, p={p})")

    values: Dict[str, float] = {}
    infinite: List[str] = []
    for j, name in enumerate(X.column_names):
        target = X.rows[:, j]
        others = np.column_stack([np.ones(n), np.delete(X.rows, j, axis=1)])
        coef, *_ = np.linalg.lstsq(others, target, rcond=None)
        resid = target - others @ coef
        sst = float(np.sum((target - target.mean()) ** 2))
        unexplained = float(resid @ resid) / sst if sst > 0 else 0.0
        if unexplained <= VIF_TOLERANCE:
            values[name] = math.inf
            infinite.append(name)
        else:
            values[name] = 1.0 / unexplained
    return VifReport(values, tuple(infinite))


def _rating(profile: FacilityAspectProfile, source: str) -> float:
    return profile.rating(source)


def _require_aspects(profiles: Sequence[FacilityAspectProfile], aspects: Sequence[Aspect]):
    incomplete = [p.facility_id for p in profiles if any(a not in p.aspect_mean for a in aspects)]
    if incomplete:
        raise ValidationError(f"{len(incomplete)} profile(s) lack an aspect mean, e.g. {incomplete[0]}")


def model1_design(profiles: Sequence[FacilityAspectProfile], rating_source: str = 'text'
                  ) -> Tuple[DesignMatrix, np.ndarray]:
    profiles = list(profiles)
    _require_aspects(profiles, ASPECT_ORDER)
    columns = {a.label: [p.aspect_mean[a] for p in profiles] for a in ASPECT_ORDER}
    y = np.array([_rating(p, rating_source) for p in profiles], dtype=float)
    return DesignMatrix.from_columns(columns), y


def fit_model1(profiles: Sequence[FacilityAspectProfile], rating_source: str = 'text') -> RegressionFit:
    """Rating on the five aspect means plus intercept."""
    X, y = model1_design(profiles, rating_source)
    return ols_fit(X, y, y_name='mean_rating')


def model2_columns(enriched: Sequence[EnrichedProfile], aspects: Sequence[Aspect] = ASPECT_ORDER
                   ) -> Dict[str, np.ndarray]:
    """Aspect means (raw) then the seven covariates z-scored over this sample."""
    enriched = list(enriched)
    _require_aspects([e.profile for e in enriched], aspects)
    columns: Dict[str, np.ndarray] = {
        a.label: np.array([e.profile.aspect_mean[a] for e in enriched], dtype=float) for a in aspects
    }
    for name in COVARIATE_NAMES:
        label = COVARIATE_LABELS[name]
        columns[label] = zscore([getattr(e.cbg, name) for e in enriched], name=label)
    return columns


def fit_model2(enriched: Sequence[EnrichedProfile], rating_source: str = 'text',
               aspects: Sequence[Aspect] = ASPECT_ORDER) -> RegressionFit:
    """Model 1 plus z-scored CBG covariates."""
    enriched = list(enriched)
    X = DesignMatrix.from_columns(model2_columns(enriched, aspects))
    y = np.array([_rating(e.profile, rating_source) for e in enriched], dtype=float)
    return ols_fit(X, y, y_name='mean_rating')


def fit_interactions(enriched: Sequence[EnrichedProfile], rating_source: str = 'text') -> RegressionFit:
    """Model 2 on centered predictors plus three products of centered terms."""
    enriched = list(enriched)
    columns = {name: center(values) for name, values in model2_columns(enriched).items()}
    for left, right in INTERACTIONS:
        columns[f"{left} × {right}"] = columns[left] * columns[right]
    X = DesignMatrix.from_columns(columns)
    y = np.array([_rating(e.profile, rating_source) for e in enriched], dtype=float)
    return ols_fit(X, y, y_name='mean_rating')


def model2_vif(enriched: Sequence[EnrichedProfile]) -> VifReport:
    return vif(DesignMatrix.from_columns(model2_columns(list(enriched)), intercept=False))


@dataclass(frozen=True)
class SensitivityResult:
    strict: RegressionFit
    relaxed: RegressionFit
    n_strict: int
    n_relaxed: int

    def to_json(self) -> Dict[str, Any]:
        return {
            'strict': self.strict.to_json(),
            'relaxed': self.relaxed.to_json(),
            'n_strict': self.n_strict,
            'n_relaxed': self.n_relaxed,
        }


def sensitivity_run(enriched: Iterable[EnrichedProfile], strict: FilterPolicy, relaxed: FilterPolicy,
                    rating_source: str = 'text') -> SensitivityResult:
    """Model 2 on the strict sample against Model 2 without Finances on the relaxed one."""
    for aspect in ASPECT_ORDER:
        if aspect is not Aspect.FINANCES and strict.threshold(aspect) != relaxed.threshold(aspect):
            raise ConfigError(f"relaxed policy may only change the Finances threshold "
                              f"({aspect.value}: {strict.threshold(aspect)} vs {relaxed.threshold(aspect)})")
    enriched = list(enriched)
    strict_sample = [e for e in enriched if strict.admits(e.profile)]
    relaxed_sample = [e for e in enriched if relaxed.admits(e.profile)]
    no_finances = [a for a in ASPECT_ORDER if a is not Aspect.FINANCES]
    strict_fit = fit_model2(strict_sample, rating_source)
    relaxed_fit = fit_model2(relaxed_sample, rating_source, aspects=no_finances)
    logger.info(f"Sensitivity: strict n={len(strict_sample)}, relaxed n={len(relaxed_sample)}")
    return SensitivityResult(strict_fit, relaxed_fit, len(strict_sample), len(relaxed_sample))


@dataclass(frozen=True)
class CorrelationMatrix:
    variables: Tuple[str, ...]
    cells: Tuple[Tuple[Optional[CorrelationResult], ...], ...]
    n: int

    def r(self, i: int, j: int) -> Optional[float]:
        cell = self.cells[i][j]
        return cell.r if cell is not None else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'variables': list(self.variables),
            'n': self.n,
            'r': [[c.r if c else None for c in row] for row in self.cells],
            'p': [[c.p_value if c else None for c in row] for row in self.cells],
        }


def _correlations(profiles: Sequence[FacilityAspectProfile], rating_source: str) -> CorrelationMatrix:
    names = ASPECT_COLUMNS + (RATING,)
    data = [[p.aspect_mean[a] for p in profiles] for a in ASPECT_ORDER]
    data.append([_rating(p, rating_source) for p in profiles])
    n = len(profiles)
    k = len(names)
    cells: List[List[Optional[CorrelationResult]]] = [[None] * k for _ in range(k)]
    for i in range(k):
        cells[i][i] = CorrelationResult(1.0, 0.0, n)
        for j in range(i + 1, k):
            try:
                cell = pearson(data[i], data[j], names[i], names[j])
            except ZeroVarianceError as e:
                logger.warning(f"Correlation {names[i]} / {names[j]} undefined: {e}")
                cell = None
            cells[i][j] = cells[j][i] = cell
    return CorrelationMatrix(names, tuple(tuple(row) for row in cells), n)


def corr_matrix(profiles: Iterable[FacilityAspectProfile], by_region: bool = False,
                rating_source: str = 'text') -> Dict[str, CorrelationMatrix]:
    """Pairwise correlations of the five aspect means and the rating.

    Keyed by ``ALL`` or by region; groups with fewer than three complete
    profiles are omitted.
    """
    profiles = [p for p in profiles if all(a in p.aspect_mean for a in ASPECT_ORDER)]
    groups: Dict[str, List[FacilityAspectProfile]] = {}
    if by_region:
        for p in profiles:
            groups.setdefault(p.region.value, []).append(p)
    else:
        groups['ALL'] = profiles

    result = {}
    for key in sorted(groups):
        members = groups[key]
        if len(members) < 3:
            logger.warning(f"Skipping correlations for {key}: only {len(members)} profile(s)")
            continue
        result[key] = _correlations(members, rating_source)
    return result
