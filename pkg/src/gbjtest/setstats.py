"""Observed supremum statistics: GBJ, BJ, HC, GHC and MinP.

Each supremum statistic maximizes a per-index objective over the larger half
of the absolute order statistics, subject to the one-sided indicator
2*sf(t) < j/d.  The per-index objectives defined here are also what the
crossing module inverts to obtain rejection boundaries, so they are evaluated
through one shared vectorized path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ndtr, ndtri

from . import gauss
from .ebb import GAMMA_CLAMP_MARGIN
from .errors import DegenerateInputError, DomainError
from .exceedance import (CorrPowerProfile, corr_powers, count_variance,
                         exceed_prob, zero_profile, DEFAULT_R_MAX)

GBJ = "GBJ"
BJ = "BJ"
HC = "HC"
GHC = "GHC"
MINP = "MinP"

SUPREMUM_METHODS = (GBJ, BJ, HC, GHC)
ALL_METHODS = (GBJ, BJ, HC, GHC, MINP)

# deepest threshold the inversion machinery will chase; sf(38) is still a
# positive subnormal, sf(40) underflows to zero
T_MAX = 38.0
_LAM_FLOOR = 1e-310


@dataclass(frozen=True)
class ZVector:
    """Marginal test statistics for one set, with cached |Z| order statistics."""

    z: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if z.ndim != 1 or z.size < 1:
            raise DomainError("ZVector requires a one-dimensional, non-empty vector")
        if not np.all(np.isfinite(z)):
            raise DomainError("ZVector entries must all be finite")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "_abs_order", np.sort(np.abs(z), kind="stable"))

    @property
    def d(self) -> int:
        return self.z.size

    @property
    def abs_order(self) -> np.ndarray:
        """|Z|_(1) <= ... <= |Z|_(d), ascending."""
        return self._abs_order


@dataclass
class TestOutcome:
    method: str
    statistic: float
    pvalue: float | None = None
    achieving_index: int | None = None
    indicator_ever_true: bool = False
    diagnostics: tuple[str, ...] = field(default_factory=tuple)


def solve_mu(t: float, j: int, d: int) -> float:
    """The positive mean shift at which E #(|Z_i| >= t) equals j.

    Solves j/d = 1 - {Phi(t - mu) - Phi(-t - mu)} by bisection on
    mu in (0, t + ndtri(1 - j/(2d)) + 10].  Requires 2*sf(t) < j/d.
    """
    if t <= 0:
        raise DomainError(f"solve_mu requires t > 0, got {t!r}")
    if not (1 <= j <= d):
        raise DomainError(f"solve_mu requires 1 <= j <= d, got j={j}, d={d}")
    if 2.0 * float(gauss.norm_sf(t)) >= j / d:
        raise DomainError(f"indicator violated: 2*sf({t}) >= {j}/{d}")
    return float(_solve_mu_vec(np.array([t]), np.array([j]), d)[0])


def _solve_mu_vec(t: np.ndarray, j: np.ndarray, d: int, iters: int = 48) -> np.ndarray:
    """Vectorized bisection for solve_mu; assumes the indicator holds."""
    t = np.asarray(t, dtype=float)
    j = np.asarray(j, dtype=float)
    target = j / d
    lo = np.zeros_like(t)
    hi = t + ndtri(1.0 - j / (2.0 * d)) + 10.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        high = ndtr(mid - t) + ndtr(-mid - t) >= target
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    return 0.5 * (lo + hi)


def _match_gamma_vec(lam: np.ndarray, var: np.ndarray, d: int):
    """Vectorized gamma recovery from (lambda, variance), with the feasibility
    clamp of ebb_match.  Returns (gamma, clamped_mask)."""
    base = d * lam * (1.0 - lam)
    if d == 1:
        return np.zeros_like(lam), np.zeros_like(lam, dtype=bool)
    ratio = (var - base) / ((d - 1) * base)
    clamped = ratio >= 1.0
    ratio = np.where(clamped, 1.0 - 1e-12, ratio)
    gamma = ratio / (1.0 - ratio)
    floor = -np.minimum(lam, 1.0 - lam) / (d - 1)
    low = gamma <= floor
    gamma = np.where(low, floor * (1.0 - GAMMA_CLAMP_MARGIN), gamma)
    return gamma, clamped | low


def _ebb_log_pmf_at(v: np.ndarray, d: int, lam: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """log EBB pmf at single points v, with per-entry (lambda, gamma).

    All factors are positive for k < d because gamma respects the size-d
    feasibility floor, so the masked log sums below are safe.
    """
    v = np.asarray(v, dtype=int)
    k = np.arange(d, dtype=float)
    la = lam[:, None]
    ga = gamma[:, None]
    log_a = np.log(la + ga * k)
    log_b = np.log1p(-la + ga * k)
    log_c = np.log1p(ga * k)
    mask_a = k[None, :] < v[:, None]
    mask_b = k[None, :] < (d - v)[:, None]
    comb = gammaln(d + 1) - gammaln(v + 1) - gammaln(d - v + 1)
    return (comb + np.where(mask_a, log_a, 0.0).sum(axis=1)
            + np.where(mask_b, log_b, 0.0).sum(axis=1) - log_c.sum(axis=1))


def objective_values(method: str, t: np.ndarray, j: np.ndarray, d: int,
                     profile: CorrPowerProfile):
    """Per-index objective for a supremum statistic at thresholds t.

    ``t`` and ``j`` are parallel arrays; every entry must satisfy the
    indicator 2*sf(t) < j/d.  Returns (values, diagnostics tuple).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    j = np.atleast_1d(np.asarray(j, dtype=int))
    flags: list[str] = []
    lam0 = np.maximum(exceed_prob(t, 0.0), _LAM_FLOOR)
    if method in (HC, GHC):
        num = (j - d * lam0) ** 2
        if method == HC:
            den = d * lam0 * (1.0 - lam0)
        else:
            den = count_variance(t, 0.0, profile)
        return num / den, tuple(flags)
    if method not in (GBJ, BJ):
        raise DomainError(f"objective not defined for method {method!r}")

    lam_a = j / float(d)
    if method == GBJ:
        var0 = count_variance(t, 0.0, profile)
        gamma0, cl0 = _match_gamma_vec(lam0, var0, d)
        mu = _solve_mu_vec(t, j, d)
        var_a = count_variance(t, mu, profile)
        gamma_a, cla = _match_gamma_vec(lam_a, var_a, d)
        if np.any(cl0) or np.any(cla):
            flags.append("ebb_gamma_clamped")
    else:
        gamma0 = np.zeros_like(lam0)
        gamma_a = np.zeros_like(lam0)
    num = _ebb_log_pmf_at(j, d, lam_a, gamma_a)
    den = _ebb_log_pmf_at(j, d, lam0, gamma0)
    return num - den, tuple(flags)


def gbj_objective(t: float, j: int, d: int, profile: CorrPowerProfile) -> float:
    """The GBJ per-index objective: the EBB log likelihood ratio at count j."""
    if 2.0 * float(gauss.norm_sf(t)) >= j / d:
        raise DomainError(f"indicator violated: 2*sf({t}) >= {j}/{d}")
    vals, _ = objective_values(GBJ, np.array([t]), np.array([j]), d, profile)
    return float(vals[0])


def max_index(d: int) -> int:
    """Upper end of the maximization range: floor(d / 2)."""
    return d // 2


def compute_statistic(method: str, Z: ZVector, Sigma: np.ndarray | None = None,
                      r_max: int = DEFAULT_R_MAX,
                      profile: CorrPowerProfile | None = None) -> TestOutcome:
    """Observed value of one set-based statistic.

    GBJ and GHC consume the correlation structure through its averaged power
    profile; BJ and HC are defined with independent (binomial) reference laws
    regardless of Sigma; MinP is the largest |Z|.
    """
    if method not in ALL_METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {ALL_METHODS}")
    d = Z.d
    if Sigma is not None:
        Sigma = gauss.check_correlation(Sigma)
        if Sigma.shape[0] != d:
            raise DomainError(f"dimension mismatch: {d} statistics vs "
                              f"{Sigma.shape[0]}x{Sigma.shape[0]} correlation")

    if method == MINP:
        return TestOutcome(method=MINP, statistic=float(Z.abs_order[-1]),
                           indicator_ever_true=True)
    if d < 2:
        raise DegenerateInputError(f"{method} requires d >= 2; only MinP is defined at d=1")

    if profile is None:
        if method in (GBJ, GHC):
            if Sigma is None:
                raise DomainError(f"{method} requires a correlation matrix")
            profile = corr_powers(Sigma, r_max=r_max)
        else:
            profile = zero_profile(d, r_max=r_max)

    jmax = max_index(d)
    js = np.arange(1, jmax + 1)
    ts = Z.abs_order[d - js]                       # t_j = |Z|_(d-j+1)
    qualifies = 2.0 * gauss.norm_sf(ts) < js / d
    flags: list[str] = []
    if profile.high_corr:
        flags.append("high_correlation")
    if not np.any(qualifies):
        return TestOutcome(method=method, statistic=0.0, indicator_ever_true=False,
                           diagnostics=tuple(flags))

    jq = js[qualifies]
    tq = ts[qualifies]
    vals, obj_flags = objective_values(method, tq, jq, d, profile)
    flags.extend(obj_flags)
    best = int(np.argmax(vals))
    stat = float(vals[best])
    if stat <= 0.0:
        # indicator form: non-qualifying indices contribute exactly zero to
        # the max, so a lone negative qualifying objective floors it at zero
        return TestOutcome(method=method, statistic=0.0, achieving_index=None,
                           indicator_ever_true=True,
                           diagnostics=tuple(flags + ["objective_floor"]))
    return TestOutcome(method=method, statistic=stat,
                       achieving_index=int(jq[best]),
                       indicator_ever_true=True, diagnostics=tuple(flags))
