"""Marginal score statistics and correlation estimates.

Individual-level mode fits a gaussian or logistic null model and produces
standardized score statistics for each genotype column together with their
estimated correlation.  Summary-statistic mode estimates the correlation from
an external reference panel with optional principal-component adjustment.

The n x n projection matrix is never formed: weighted residualization against
the covariates gives the same quadratic forms in O(n q d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DomainError, ModelError
from .setstats import ZVector

GAUSSIAN = "gaussian"
BINOMIAL = "binomial"

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50


@dataclass(frozen=True)
class GenotypeMatrix:
    """n x d genotype values (allele counts or dosages in [0, 2]) plus ids."""

    values: np.ndarray
    ids: tuple[str, ...]
    imputed: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DomainError("genotype matrix must be two-dimensional")
        if len(self.ids) != v.shape[1]:
            raise DomainError(f"{len(self.ids)} ids for {v.shape[1]} genotype columns")
        if not np.all(np.isfinite(v)):
            raise DomainError("genotype matrix contains non-finite values after imputation")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NullModelFit:
    """Null GLM fit: coefficients, fitted means, working weights, dispersion.

    ``residual`` carries y - mu0 so that score statistics can be formed
    without re-passing the outcome.
    """

    family: str
    alpha_hat: np.ndarray
    mu0: np.ndarray
    weights: np.ndarray          # per-subject a_i(phi) * v(mu0_i)
    dispersion: float
    residual: np.ndarray
    converged: bool
    iterations: int = 0


def fit_null(y: np.ndarray, X: np.ndarray, family: str) -> NullModelFit:
    """Fit the covariate-only null model with a canonical link.

    gaussian: closed-form least squares, dispersion = residual MSE.
    binomial: logistic IRLS to gradient norm < 1e-8 (or 50 iterations, then
    flagged as non-converged rather than raising; perfect separation lands
    here).
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise DomainError(f"incompatible shapes: y {y.shape}, X {X.shape}")
    n, q = X.shape
    if n <= q:
        raise ModelError(f"need more subjects ({n}) than covariates ({q})")
    if np.linalg.matrix_rank(X) < q:
        raise ModelError("covariate matrix is rank deficient")

    if family == GAUSSIAN:
        alpha, *_ = np.linalg.lstsq(X, y, rcond=None)
        mu0 = X @ alpha
        resid = y - mu0
        phi = float(resid @ resid) / (n - q)
        if phi <= 0:
            raise ModelError("null model has zero residual variance")
        return NullModelFit(family=GAUSSIAN, alpha_hat=alpha, mu0=mu0,
                            weights=np.full(n, phi), dispersion=phi,
                            residual=resid, converged=True)

    if family == BINOMIAL:
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise DomainError("binomial outcome must be coded 0/1")
        alpha = np.zeros(q)
        converged = False
        it = 0
        for it in range(1, IRLS_MAX_ITER + 1):
            eta = X @ alpha
            mu = 1.0 / (1.0 + np.exp(-eta))
            mu = np.clip(mu, 1e-10, 1.0 - 1e-10)
            grad = X.T @ (y - mu)
            if np.linalg.norm(grad) < IRLS_TOL:
                converged = True
                break
            w = mu * (1.0 - mu)
            WX = X * w[:, None]
            try:
                step = np.linalg.solve(X.T @ WX, grad)
            except np.linalg.LinAlgError as exc:
                raise ModelError(f"IRLS normal equations singular: {exc}") from exc
            alpha = alpha + step
        eta = X @ alpha
        if np.max(np.abs(eta)) > 30.0:
            # fitted probabilities saturated: separation, the MLE diverges and
            # the vanishing gradient is spurious
            converged = False
        mu0 = np.clip(1.0 / (1.0 + np.exp(-eta)), 1e-10, 1.0 - 1e-10)
        return NullModelFit(family=BINOMIAL, alpha_hat=alpha, mu0=mu0,
                            weights=mu0 * (1.0 - mu0), dispersion=1.0,
                            residual=y - mu0, converged=converged, iterations=it)

    raise DomainError(f"unknown family {family!r}; expected gaussian or binomial")


def _residualize_weighted(G: np.ndarray, X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sqrt(W)-scaled genotype columns with the sqrt(W)X span projected out,
    so that A.T @ A equals G.T P G with P = W - WX(X'WX)^{-1}X'W."""
    sw = np.sqrt(w)[:, None]
    Q, _ = np.linalg.qr(X * sw)
    A = G * sw
    return A - Q @ (Q.T @ A)


def score_stats(G: GenotypeMatrix, fit: NullModelFit, X: np.ndarray):
    """Marginal score statistics and their estimated correlation.

    Z_j = G_j'(y - mu0) / sqrt(G_j' P G_j); Sigma_jk is the corresponding
    normalized cross form.  Genotype columns inside the covariate span are
    dropped and reported.

    Returns (ZVector, Sigma, kept_ids, dropped_ids).
    """
    X = np.asarray(X, dtype=float)
    if G.n != X.shape[0] or G.n != fit.mu0.size:
        raise DomainError(f"dimension mismatch: genotypes n={G.n}, covariates "
                          f"n={X.shape[0]}, fit n={fit.mu0.size}")
    if not fit.converged:
        raise ModelError("null model fit did not converge; refusing to score")
    A = _residualize_weighted(G.values, X, fit.weights)
    denom2 = np.einsum("ij,ij->j", A, A)
    scale = float(np.mean(np.einsum("ij,ij->j", G.values, G.values))) + 1.0
    keep = denom2 > 1e-10 * scale
    dropped = tuple(gid for gid, k in zip(G.ids, keep) if not k)
    if not np.any(keep):
        raise DegenerateInputError("every genotype column lies in the covariate span")
    A = A[:, keep]
    denom2 = denom2[keep]
    num = G.values[:, keep].T @ fit.residual
    z = num / np.sqrt(denom2)
    cross = A.T @ A
    dinv = 1.0 / np.sqrt(denom2)
    Sigma = cross * dinv[:, None] * dinv[None, :]
    np.fill_diagonal(Sigma, 1.0)
    Sigma = 0.5 * (Sigma + Sigma.T)
    kept_ids = tuple(gid for gid, k in zip(G.ids, keep) if k)
    return ZVector(z), Sigma, kept_ids, dropped


def ref_panel_cov(G_ref: GenotypeMatrix, m: int = 0) -> np.ndarray:
    """Correlation estimate from a reference panel with m principal components.

    Columns are centered; the top-m PCs of the centered panel are regressed
    out (together with the intercept, which centering already handles); the
    residual columns are then correlated.  m = 0 gives the plain sample
    correlation of centered columns.
    """
    if m < 0 or m != int(m):
        raise DomainError(f"number of PCs must be a non-negative integer, got {m!r}")
    vals = G_ref.values
    n_r, d = vals.shape
    if m >= n_r - 1:
        raise DomainError(f"need m < n_r - 1 (m={m}, n_r={n_r})")
    C = vals - vals.mean(axis=0)
    if m > 0:
        # PCs via thin SVD; numpy picks the cheaper Gram side internally
        U, s, _ = np.linalg.svd(C, full_matrices=False)
        ncomp = min(m, int(np.sum(s > 1e-12 * max(s[0], 1.0))))
        pcs = U[:, :ncomp]
        C = C - pcs @ (pcs.T @ C)
    denom2 = np.einsum("ij,ij->j", C, C)
    if np.any(denom2 <= 1e-12):
        bad = [G_ref.ids[i] for i in np.nonzero(denom2 <= 1e-12)[0]]
        raise DegenerateInputError(f"constant or PC-explained panel columns: {bad}")
    dinv = 1.0 / np.sqrt(denom2)
    Sigma = (C.T @ C) * dinv[:, None] * dinv[None, :]
    np.fill_diagonal(Sigma, 1.0)
    return 0.5 * (Sigma + Sigma.T)
