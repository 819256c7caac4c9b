"""Slope estimation at a given partition.

Three estimators:

* ``regime_ols``: pooled OLS per regime. It converges to the pseudo-true
  coefficient, not to the slope, when individual effects correlate with the
  regressors. No standard errors are attached.
* ``fe_estimate``: OLS after demeaning each individual within each regime.
  Only regimes with at least two periods are estimable, and columns that are
  constant inside a regime drop out there.
* ``ffe_estimate``: OLS after demeaning over the full sample, with the
  regressor expanded into one block per regime. Valid when the individual
  effect is constant over time. For a time-invariant column the regime-1 block
  is dropped, and the remaining blocks estimate ``beta_j - beta_1``.

Covariances are asymptotic (``sqrt(N)`` scale): standard errors are
``sqrt(diag(cov) / N)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .detect import segment_sse
from .panel import (
    GramTable,
    PanelData,
    Partition,
    demean_full_sample,
    demean_within_regime,
)

__all__ = [
    "VCOV_KINDS",
    "EstimationError",
    "RankDeficiencyError",
    "NoEstimableRegimeError",
    "RegimeOLS",
    "FEEstimate",
    "FFEEstimate",
    "regime_ols",
    "fe_estimate",
    "ffe_estimate",
    "sigma2_hat",
    "efficiency_factors",
    "vcov_plugin_fe",
    "vcov_plugin_ffe",
    "vcov_cluster",
]

VCOV_KINDS = ("plugin", "cluster")
SINGULAR_RTOL = 1e-12
ILL_CONDITIONED = 1e10


class EstimationError(ValueError):
    pass


class RankDeficiencyError(EstimationError):
    pass


class NoEstimableRegimeError(EstimationError):
    pass


def _check_gram(G: np.ndarray, what: str) -> None:
    evals = np.linalg.eigvalsh(G)
    if evals[-1] <= 0 or evals[0] <= SINGULAR_RTOL * evals[-1]:
        raise RankDeficiencyError(f"{what}: singular Gram matrix")
    cond = evals[-1] / evals[0]
    if cond > ILL_CONDITIONED:
        warnings.warn(f"{what}: condition number {cond:.3g}", RuntimeWarning, stacklevel=3)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _check_vcov(kind: str) -> str:
    kind = kind.lower()
    if kind not in VCOV_KINDS:
        raise ValueError(f"unknown vcov kind {kind!r}; expected one of {VCOV_KINDS}")
    return kind


# ---------------------------------------------------------------------------
# pooled OLS


@dataclass(frozen=True)
class RegimeOLS:
    gamma_hat: np.ndarray
    full_rank: np.ndarray
    partition: Partition


def regime_ols(gram: GramTable, part: Partition) -> RegimeOLS:
    fits = [segment_sse(gram, s, e) for s, e in part.regimes()]
    return RegimeOLS(
        gamma_hat=np.array([f[1] for f in fits]),
        full_rank=np.array([f[2] for f in fits]),
        partition=part,
    )


# ---------------------------------------------------------------------------
# variance building blocks


def sigma2_hat(residuals: np.ndarray, part: Partition, n_coef: int,
               full_sample: bool = False) -> float:
    """Homoskedastic error variance from demeaned residuals.

    Within-regime residuals (default): ``SSR / (sum_{j in S} N (dT_j - 1) - K)``
    over regimes with at least two periods. With ``full_sample=True`` the
    residuals come from full-sample demeaning and the divisor is
    ``N (T - 1) - K``.
    """
    residuals = np.asarray(residuals, dtype=float)
    N = residuals.shape[1]
    if full_sample:
        ssr = float(np.sum(residuals**2))
        dof = N * (part.n_periods - 1) - n_coef
    else:
        S = part.regime_index().estimable_set
        slices = part.slices()
        ssr = float(sum(np.sum(residuals[slices[j]] ** 2) for j in S))
        dof = int(sum(N * (part.lengths[j] - 1) for j in S)) - n_coef
    if dof <= 0:
        raise EstimationError(f"nonpositive residual degrees of freedom ({dof})")
    return ssr / dof


def efficiency_factors(T: int, dT) -> tuple:
    """Variance multipliers of ``sigma^2 Q_j^{-1}`` for FE and FFE.

    Under serially uncorrelated, homoskedastic errors and regressors that are
    uncorrelated across periods: FE ``1 / (dT - 1)``, FFE
    ``(T^2 - 3T + 1) T^2 / ((T - 1)^4 dT)``.
    """
    dT = np.asarray(dT, dtype=float)
    with np.errstate(divide="ignore"):
        fe = 1.0 / (dT - 1.0)
    ffe = (T**2 - 3 * T + 1) * T**2 / ((T - 1) ** 4 * dT)
    return fe, ffe


def vcov_plugin_fe(grams: list[np.ndarray], sigma2: float) -> np.ndarray:
    """``sigma2 * Omega_1^{-1}``, block diagonal over regimes."""
    return block_diag(*[sigma2 * np.linalg.inv(G) for G in grams])


def vcov_plugin_ffe(q_hats: list[np.ndarray], T: int, lengths, sigma2: float) -> np.ndarray:
    """Closed-form FFE covariance, block diagonal over regimes.

    Equivalent to ``sigma2 Omega_2^{-1} [Omega_2 - T^{-1} D] Omega_2^{-1}`` with
    ``D = diag(dT_j Q_j)`` and ``Omega_2 = (1 - 1/T)^2 D``.
    """
    if T**2 - 3 * T + 1 <= 0:
        raise EstimationError(f"plug-in FFE variance undefined for T={T}; use cluster")
    _, ffe = efficiency_factors(T, lengths)
    return block_diag(*[sigma2 * f * np.linalg.inv(Q) for Q, f in zip(q_hats, ffe)])


def vcov_cluster(omega: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Sandwich ``Omega^{-1} W Omega^{-1}`` with ``W = N^{-1} sum_i s_i s_i'``.

    ``scores`` has one row per individual (time-summed score), so arbitrary
    within-individual serial dependence is allowed.
    """
    N = scores.shape[0]
    W = scores.T @ scores / N
    inv = np.linalg.inv(omega)
    return _sym(inv @ W @ inv)


# ---------------------------------------------------------------------------
# FE


@dataclass(frozen=True)
class FEEstimate:
    """Within-regime fixed effects estimates.

    ``coef`` stacks, for each regime in ``regimes`` (0-based, at least two
    periods), the coefficients of that regime's identified columns;
    ``identified_mask[r]`` lists them. ``blocks[r]`` slices the stacked vector.
    """

    partition: Partition
    regimes: tuple[int, ...]
    singletons: tuple[int, ...]
    identified_mask: np.ndarray
    coef: np.ndarray
    cov: np.ndarray
    blocks: tuple[slice, ...]
    sigma2: float
    vcov_kind: str
    n_individuals: int
    regressor_names: tuple[str, ...]
    residuals: np.ndarray

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None) / self.n_individuals)

    def beta_table(self) -> np.ndarray:
        """``(n_regimes, p)`` estimates; NaN where not identified or not estimable."""
        return self._table(self.coef)

    def se_table(self) -> np.ndarray:
        return self._table(self.se)

    def _table(self, v: np.ndarray) -> np.ndarray:
        out = np.full((self.partition.n_regimes, len(self.regressor_names)), np.nan)
        for r, j in enumerate(self.regimes):
            out[j, self.identified_mask[r]] = v[self.blocks[r]]
        return out

    def index_of(self, regime: int, column: int) -> int | None:
        """Position in ``coef`` of (0-based regime, column), or None."""
        if regime not in self.regimes:
            return None
        r = self.regimes.index(regime)
        mask = self.identified_mask[r]
        if not mask[column]:
            return None
        return self.blocks[r].start + int(np.count_nonzero(mask[:column]))


def fe_estimate(panel: PanelData, part: Partition, vcov: str = "plugin") -> FEEstimate:
    """Fixed effects slopes for every regime with at least two periods."""
    vcov = _check_vcov(vcov)
    wd = demean_within_regime(panel, part)
    S = wd.regime_index.estimable_set
    if not S:
        raise NoEstimableRegimeError("no regime spans two or more periods")
    N, T = panel.n_individuals, panel.n_periods
    slices = part.slices()
    resid = np.full((T, N), np.nan)
    coefs, grams, scores, masks, blocks = [], [], [], [], []
    start = 0
    for j in S:
        sl = slices[j]
        cols = ~wd.invariant[j]
        if not cols.any():
            raise RankDeficiencyError(f"regime {j + 1}: every regressor is constant within the regime")
        X = wd.x[sl][:, :, cols]
        y = wd.y[sl]
        G = np.einsum("tik,til->kl", X, X)
        _check_gram(G, f"FE regime {j + 1}")
        b = np.linalg.solve(G, np.einsum("tik,ti->k", X, y))
        e = y - X @ b
        resid[sl] = e
        coefs.append(b)
        grams.append(G / N)
        scores.append(np.einsum("tik,ti->ik", X, e))
        masks.append(cols)
        blocks.append(slice(start, start + b.size))
        start += b.size
    coef = np.concatenate(coefs)
    sigma2 = sigma2_hat(resid, part, coef.size)
    if vcov == "plugin":
        cov = vcov_plugin_fe(grams, sigma2)
    else:
        cov = vcov_cluster(block_diag(*grams), np.hstack(scores))
    resid.setflags(write=False)
    return FEEstimate(
        partition=part,
        regimes=tuple(S),
        singletons=wd.regime_index.singleton_set,
        identified_mask=np.array(masks),
        coef=coef,
        cov=_sym(cov),
        blocks=tuple(blocks),
        sigma2=sigma2,
        vcov_kind=vcov,
        n_individuals=N,
        regressor_names=panel.regressor_names,
        residuals=resid,
    )


# ---------------------------------------------------------------------------
# FFE


@dataclass(frozen=True)
class FFEEstimate:
    """Full-sample fixed effects estimates in the reparameterized basis.

    ``terms[k] = (regime, column, kind)``: ``kind == "level"`` is ``beta_j``
    for a time-varying column; ``kind == "change"`` is ``beta_j - beta_1`` for
    a column that is constant over time for every individual (``j >= 1``,
    0-based).
    """

    partition: Partition
    coef: np.ndarray
    cov: np.ndarray
    terms: tuple[tuple[int, int, str], ...]
    time_invariant: np.ndarray
    sigma2: float
    vcov_kind: str
    n_individuals: int
    regressor_names: tuple[str, ...]
    residuals: np.ndarray

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None) / self.n_individuals)

    @property
    def rank_deficiency(self) -> int:
        return int(np.count_nonzero(self.time_invariant))

    @property
    def names(self) -> tuple[str, ...]:
        out = []
        for j, k, kind in self.terms:
            name = self.regressor_names[k]
            out.append(f"{name}[{j + 1}]" if kind == "level" else f"{name}[{j + 1}-1]")
        return tuple(out)

    def beta_table(self) -> np.ndarray:
        """``(n_regimes, p)`` slope levels; NaN for time-invariant columns."""
        return self._table(self.coef)

    def se_table(self) -> np.ndarray:
        return self._table(self.se)

    def _table(self, v) -> np.ndarray:
        out = np.full((self.partition.n_regimes, len(self.regressor_names)), np.nan)
        for pos, (j, k, kind) in enumerate(self.terms):
            if kind == "level":
                out[j, k] = v[pos]
        return out

    @property
    def contrast_table(self) -> dict[str, list[tuple[int, float, float]]]:
        """Per time-invariant column: ``(regime, beta_j - beta_1, se)`` for ``j >= 2`` (1-based)."""
        se = self.se
        out: dict[str, list[tuple[int, float, float]]] = {}
        for pos, (j, k, kind) in enumerate(self.terms):
            if kind == "change":
                out.setdefault(self.regressor_names[k], []).append(
                    (j + 1, float(self.coef[pos]), float(se[pos])))
        return out

    def index_of(self, regime: int, column: int) -> int | None:
        for pos, (j, k, _) in enumerate(self.terms):
            if j == regime and k == column:
                return pos
        return None


def _ffe_q_hat(panel: PanelData, part: Partition, cols: np.ndarray) -> list[np.ndarray]:
    """Per-regime second moments of the demeaned regressors, one period's worth.

    Regimes with two or more periods use within-regime demeaning; a regime
    where that is singular (single period, or a column constant there) falls
    back to full-sample demeaning.
    """
    N, T = panel.n_individuals, panel.n_periods
    x = panel.x[:, :, cols]
    xd_full = x - x.mean(axis=0, keepdims=True)
    out = []
    for j, sl in enumerate(part.slices()):
        dT = sl.stop - sl.start
        Q = None
        if dT >= 2:
            xs = x[sl] - x[sl].mean(axis=0, keepdims=True)
            Q = np.einsum("tik,til->kl", xs, xs) / (N * (dT - 1))
            ev = np.linalg.eigvalsh(Q)
            if ev[0] <= SINGULAR_RTOL * max(ev[-1], 0.0) or ev[-1] <= 0:
                Q = None
        if Q is None:
            xs = xd_full[sl]
            Q = np.einsum("tik,til->kl", xs, xs) / (N * dT * (T - 1) / T)
            _check_gram(Q, f"FFE plug-in regime {j + 1}")
        out.append(Q)
    return out


def ffe_estimate(panel: PanelData, part: Partition, vcov: str = "plugin") -> FFEEstimate:
    """Full-sample demeaning estimator over all regimes, including single-period ones."""
    vcov = _check_vcov(vcov)
    fd = demean_full_sample(panel, part)
    N, T, p = panel.n_individuals, panel.n_periods, panel.n_regressors
    R = part.n_regimes
    inv_cols = fd.time_invariant
    keep, terms = [], []
    for j in range(R):
        for k in range(p):
            if inv_cols[k] and j == 0:
                continue
            keep.append(j * p + k)
            terms.append((j, k, "change" if inv_cols[k] else "level"))
    if not keep:
        raise RankDeficiencyError("FFE design is empty: every regressor is time-invariant and m = 0")
    X = fd.x_tilde[:, :, keep]
    G = np.einsum("tik,til->kl", X, X)
    evals, evecs = np.linalg.eigh(G)
    if evals[-1] <= 0 or evals[0] <= SINGULAR_RTOL * evals[-1]:
        null = evecs[:, evals <= SINGULAR_RTOL * max(evals[-1], 0.0)]
        bad = np.flatnonzero(np.any(np.abs(null) > 1e-3, axis=1))
        names = [f"{panel.regressor_names[terms[b][1]]}[{terms[b][0] + 1}]" for b in bad]
        raise RankDeficiencyError(f"FFE design is rank deficient in columns {names}")
    if evals[-1] / evals[0] > ILL_CONDITIONED:
        warnings.warn(f"FFE design condition number {evals[-1] / evals[0]:.3g}",
                      RuntimeWarning, stacklevel=2)
    coef = np.linalg.solve(G, np.einsum("tik,ti->k", X, fd.y_star))
    resid = fd.y_star - X @ coef
    sigma2 = sigma2_hat(resid, part, coef.size, full_sample=True)
    omega = G / N
    if vcov == "cluster":
        cov = vcov_cluster(omega, np.einsum("tik,ti->ik", X, resid))
    else:
        cov = np.zeros((coef.size, coef.size))
        tv = ~inv_cols
        level = [pos for pos, t in enumerate(terms) if t[2] == "level"]
        if level:
            cov[np.ix_(level, level)] = vcov_plugin_ffe(
                _ffe_q_hat(panel, part, tv), T, part.lengths, sigma2)
        change = [pos for pos, t in enumerate(terms) if t[2] == "change"]
        if change:
            # no closed form for time-invariant columns: homoskedastic OLS block
            cov[np.ix_(change, change)] = sigma2 * np.linalg.inv(omega)[np.ix_(change, change)]
    resid.setflags(write=False)
    return FFEEstimate(
        partition=part,
        coef=coef,
        cov=_sym(cov),
        terms=tuple(terms),
        time_invariant=np.array(inv_cols),
        sigma2=sigma2,
        vcov_kind=vcov,
        n_individuals=N,
        regressor_names=panel.regressor_names,
        residuals=resid,
    )
