"""
Mixed-effects limits of agreement.

Random-intercept model y = X beta + Z b + e with b ~ N(0, V1), e ~ N(0, V2),
fitted by maximum likelihood so that nested models can be compared with
likelihood ratio tests.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize, special

from app.models.models import (
    Design,
    EffectExclusion,
    LoAReport,
    LrtResult,
    MethodAnalysis,
    MixedFit,
)
from app.utils.constants import (
    LOA_Z,
    LOG_RATIO_BOUNDS,
    LOG_RATIO_GRID_POINTS,
    OPTIMIZER_MAX_ITER,
    OPTIMIZER_XATOL,
    V2_LOWER_CLAMP,
)
from app.utils.exceptions import (
    ConvergenceError,
    DesignError,
    IdentifiabilityError,
    InvalidParameterError,
    NestingError,
    UndefinedCorrelationError,
)
from app.utils.logger import get_logger

logger = get_logger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


class ProfiledLikelihood:
    """
    Log-likelihood as a function of the variance ratio lam = V1 / V2 only.

    V1 * Z Z' + V2 * I is diagonalised once; for each lam, beta comes from
    generalized least squares and V2 from the weighted residual sum of squares.
    """

    def __init__(self, y: np.ndarray, X: np.ndarray, Z: np.ndarray):
        eigvals, U = linalg.eigh(Z @ Z.T)
        self.s = np.clip(eigvals, 0.0, None)
        self.U = U
        self.Z = Z
        self.X = X
        self.y = y
        self.Uy = U.T @ y
        self.UX = U.T @ X
        self.n = y.size

    def solve(self, lam: float) -> Tuple[float, np.ndarray, float]:
        """(loglik, beta, v2) at variance ratio lam."""
        d = 1.0 + lam * self.s
        w = 1.0 / d
        A = self.UX.T @ (w[:, None] * self.UX)
        b = self.UX.T @ (w * self.Uy)
        try:
            beta = linalg.solve(A, b, assume_a='pos')
        except linalg.LinAlgError:
            beta = linalg.lstsq(A, b)[0]
        r = self.Uy - self.UX @ beta
        quad = float(np.sum(w * r * r))
        v2 = max(quad / self.n, V2_LOWER_CLAMP)
        loglik = -0.5 * (self.n * _LOG_2PI + self.n * math.log(v2) + float(np.sum(np.log(d))) + quad / v2)
        return loglik, beta, v2

    def loglik(self, lam: float) -> float:
        return self.solve(lam)[0]

    def blups(self, lam: float, beta: np.ndarray) -> np.ndarray:
        """Predicted random intercepts lam * Z' (lam Z Z' + I)^-1 (y - X beta)."""
        d = 1.0 + lam * self.s
        r = self.y - self.X @ beta
        return lam * (self.Z.T @ (self.U @ ((self.U.T @ r) / d)))


def _maximize(profile: ProfiledLikelihood, max_iter: int) -> Tuple[float, int]:
    """Grid over log(lam) then bounded Brent between the best grid point's neighbours."""
    grid = np.linspace(LOG_RATIO_BOUNDS[0], LOG_RATIO_BOUNDS[1], LOG_RATIO_GRID_POINTS)
    values = np.array([profile.loglik(math.exp(t)) for t in grid])
    values[~np.isfinite(values)] = -np.inf
    at_zero = profile.loglik(0.0)
    evaluations = grid.size + 1

    best = int(np.argmax(values))
    if not np.isfinite(values[best]) and not math.isfinite(at_zero):
        raise ConvergenceError("log-likelihood is not finite anywhere on the search grid",
                               diagnostics={'grid_points': int(grid.size)})
    if at_zero >= values[best]:
        return 0.0, evaluations

    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda t: -profile.loglik(math.exp(t)),
        bounds=(lo, hi),
        method='bounded',
        options={'xatol': OPTIMIZER_XATOL, 'maxiter': max_iter},
    )
    evaluations += int(res.nfev)
    if not res.success:
        raise ConvergenceError(
            "variance ratio search did not converge",
            diagnostics={
                'log_ratio': float(res.x),
                'bracket': (float(lo), float(hi)),
                'evaluations': evaluations,
                'max_iter': max_iter,
                'message': str(res.message),
            })
    t = float(res.x) if -res.fun >= values[best] else float(grid[best])
    return math.exp(t), evaluations


def fit_mixed(design: Design, max_iter: int = OPTIMIZER_MAX_ITER) -> MixedFit:
    """
    Maximum-likelihood fit of y ~ N(X beta, V1 Z Z' + V2 I), Z the group indicators.

    V1 is clamped at 0 (flagged as boundary) and V2 at its lower clamp. When
    every group holds a single observation V1 and V2 cannot be separated; the
    fit then reports V1 = 0 and identifiable = False.
    """
    y, X = design.y, design.X
    n, p = X.shape
    if np.linalg.matrix_rank(X) < p:
        raise DesignError(f"fixed-effect matrix {design.column_names} is rank deficient")
    labels, inverse = np.unique(design.groups, return_inverse=True)
    q = labels.size
    if q < 2:
        raise IdentifiabilityError(f"need at least 2 random-effect groups, got {q}")

    Z = np.zeros((n, q))
    Z[np.arange(n), inverse] = 1.0
    profile = ProfiledLikelihood(y, X, Z)

    identifiable = q < n
    if identifiable:
        lam, evaluations = _maximize(profile, max_iter)
    else:
        logger.warning(f"⚠️ All {n} groups are singletons: V1/V2 split not identifiable, V1 set to 0")
        lam, evaluations = 0.0, 1

    loglik, beta, v2 = profile.solve(lam)
    if not math.isfinite(loglik):
        raise ConvergenceError("log-likelihood is not finite at the optimum",
                               diagnostics={'variance_ratio': lam, 'v2': v2})
    effects = profile.blups(lam, beta)
    fit = MixedFit(
        beta=beta,
        v1=lam * v2,
        v2=v2,
        loglik=loglik,
        n_params=p + 2,
        column_names=design.column_names,
        n_obs=n,
        n_groups=q,
        random_effects={label: float(b) for label, b in zip(labels.tolist(), effects)},
        converged=True,
        boundary=lam == 0.0,
        identifiable=identifiable,
        iterations=evaluations,
    )
    logger.info(
        f"Mixed fit {design.column_names}: V1={fit.v1:.4g}, V2={fit.v2:.4g}, "
        f"loglik={fit.loglik:.6g} ({evaluations} evaluations)")
    return fit


def fit_random_intercept(y: Sequence[float], groups: Sequence, max_iter: int = OPTIMIZER_MAX_ITER) -> MixedFit:
    """Intercept-only model; beta[0] is the mean bias."""
    y = np.asarray(y, dtype=float)
    design = Design(y, np.ones((y.size, 1)), np.asarray(groups), column_names=("intercept",))
    return fit_mixed(design, max_iter=max_iter)


def limits_of_agreement(bias: float, sd: float, method: str = "") -> LoAReport:
    """bias -/+ 1.96 sd"""
    if not (math.isfinite(bias) and math.isfinite(sd)) or sd < 0:
        raise InvalidParameterError(f"need finite bias and sd >= 0, got {bias} / {sd}")
    return LoAReport(bias=bias, sd=sd, lower=bias - LOA_Z * sd, upper=bias + LOA_Z * sd, method=method)


def loa_95(full_fit: MixedFit, bias_fit: MixedFit, method: str = "") -> LoAReport:
    """
    SD from the full model's V1 + V2, bias from the intercept-only model.

    Example: bias 0.56, sd 1.436 -> (-2.25, 3.37)
    """
    for name, fit in (('full', full_fit), ('bias', bias_fit)):
        if not fit.converged:
            raise ConvergenceError(f"{name} fit did not converge")
    return limits_of_agreement(bias_fit.intercept, full_fit.sd, method)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution, Q(df / 2, x / 2)."""
    if int(df) != df or df < 1:
        raise InvalidParameterError(f"df must be a positive integer, got {df}")
    if math.isnan(x) or x < 0:
        raise InvalidParameterError(f"chi-square statistic must be >= 0, got {x}")
    if x == 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def likelihood_ratio_test(full: MixedFit, reduced: MixedFit) -> LrtResult:
    df = full.n_params - reduced.n_params
    if df <= 0:
        raise NestingError(f"reduced model must have fewer parameters ({reduced.n_params} vs {full.n_params})")
    if full.n_obs != reduced.n_obs:
        raise NestingError(f"models fitted on different data ({full.n_obs} vs {reduced.n_obs} observations)")
    # optimizer slack can make the difference slightly negative
    chi2 = max(0.0, 2.0 * (full.loglik - reduced.loglik))
    return LrtResult(chi2=chi2, df=df, p=chi2_sf(chi2, df))


def pearson_r(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidParameterError(f"need two vectors of equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise InvalidParameterError("correlation needs at least 2 pairs")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    da = a - a.mean()
    db = b - b.mean()
    r = float(np.dot(da, db) / math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db))))
    return min(1.0, max(-1.0, r))


def exclude_effect(design: Design, effect: str) -> Design:
    """Design with every column of `effect` removed."""
    if effect not in design.effects:
        raise InvalidParameterError(f"design has no effect '{effect}' (has {sorted(design.effects)})")
    dropped = set(design.effects[effect])
    keep = [j for j in range(design.n_fixed) if j not in dropped]
    position = {old: new for new, old in enumerate(keep)}
    effects = {
        name: tuple(position[j] for j in cols)
        for name, cols in design.effects.items() if name != effect
    }
    return Design(
        design.y,
        design.X[:, keep],
        design.groups,
        column_names=tuple(design.column_names[j] for j in keep),
        effects=effects,
    )


def analyze_method(design: Design, method: str = "", estimates: Optional[Sequence[float]] = None,
                   gold: Optional[Sequence[float]] = None, workers: int = 1) -> MethodAnalysis:
    """
    Limits of agreement for one estimator plus one exclusion row per effect.

    Each exclusion row refits without the effect, reports that model's LoA
    (bias from the intercept-only model) and its likelihood ratio test
    against the full model.
    """
    full_fit = fit_mixed(design)
    bias_fit = fit_random_intercept(design.y, design.groups)
    loa = loa_95(full_fit, bias_fit, method)

    def exclusion(effect: str) -> EffectExclusion:
        reduced = fit_mixed(exclude_effect(design, effect))
        return EffectExclusion(
            effect=effect,
            loa=limits_of_agreement(bias_fit.intercept, reduced.sd, method),
            lrt=likelihood_ratio_test(full_fit, reduced),
            fit=reduced,
        )

    effects = list(design.effects)
    if workers > 1 and len(effects) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            exclusions = tuple(executor.map(exclusion, effects))
    else:
        exclusions = tuple(exclusion(effect) for effect in effects)

    r = None
    if estimates is not None and gold is not None:
        try:
            r = pearson_r(estimates, gold)
        except UndefinedCorrelationError as e:
            logger.warning(f"⚠️ {method}: {e}")

    logger.info(f"✅ {method or 'method'}: bias {loa.bias:.3f} bpm, LoA ({loa.lower:.3f}, {loa.upper:.3f})")
    return MethodAnalysis(
        method=method,
        full_fit=full_fit,
        bias_fit=bias_fit,
        loa=loa,
        exclusions=exclusions,
        pearson_r=r,
        n_trials=design.n_obs,
    )
