"""Wald tests for changes between adjacent regimes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .estimate import FEEstimate, FFEEstimate, RankDeficiencyError
from .panel import PanelData, Partition, is_negligible

__all__ = [
    "NotTestableError",
    "WaldResult",
    "BonferroniReport",
    "wald_linear",
    "wald_slope_change",
    "wald_gram_change",
    "bonferroni_adjust",
]


class NotTestableError(ValueError):
    pass


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    df: int
    p_value: float
    pair: tuple[int, int]
    basis: tuple[str, ...]
    kind: str = "slope"


def wald_linear(diff: np.ndarray, cov: np.ndarray, n: int) -> float:
    """``n * d' C^{-1} d`` for an asymptotic covariance ``C`` of ``sqrt(n) d``."""
    cov = 0.5 * (cov + cov.T)
    evals = np.linalg.eigvalsh(cov)
    if evals[-1] <= 0 or evals[0] <= 1e-12 * evals[-1]:
        raise RankDeficiencyError("singular covariance of the tested difference")
    w = float(n * diff @ np.linalg.solve(cov, diff))
    return max(w, 0.0)


def wald_slope_change(est: FEEstimate | FFEEstimate, j: int) -> WaldResult:
    """Test ``beta_j = beta_{j+1}`` (1-based regimes) on the shared identified columns.

    With FE estimates the pair must both span two or more periods. With FFE
    estimates time-invariant columns enter through their changes.
    """
    a, b = j - 1, j
    n_reg = est.partition.n_regimes
    if not 0 <= a < b < n_reg:
        raise NotTestableError(f"no regime pair ({j}, {j + 1}) among {n_reg} regimes")
    if isinstance(est, FEEstimate):
        for r in (a, b):
            if r not in est.regimes:
                raise NotTestableError(f"regime {r + 1} spans a single period")
    p = len(est.regressor_names)
    K = est.coef.size
    rows, basis = [], []
    for k in range(p):
        ia, ib = est.index_of(a, k), est.index_of(b, k)
        if isinstance(est, FFEEstimate) and est.time_invariant[k]:
            # changes relative to regime 1, whose own entry is zero
            if ib is None:
                continue
        elif ia is None or ib is None:
            continue
        row = np.zeros(K)
        if ia is not None:
            row[ia] += 1.0
        row[ib] -= 1.0
        rows.append(row)
        basis.append(est.regressor_names[k])
    if not rows:
        raise NotTestableError(f"regimes {j} and {j + 1} share no identified coefficient")
    Rm = np.array(rows)
    stat = wald_linear(Rm @ est.coef, Rm @ est.cov @ Rm.T, est.n_individuals)
    df = len(rows)
    return WaldResult(statistic=stat, df=df, p_value=float(stats.chi2.sf(stat, df)),
                      pair=(j, j + 1), basis=tuple(basis), kind="slope")


def wald_gram_change(panel: PanelData, part: Partition, j: int) -> WaldResult:
    """Test equal regressor second moments in regimes ``j`` and ``j+1`` (1-based).

    Each individual contributes the difference of its time-averaged
    ``vech(x x')`` across the two regimes. Elements that are identically zero
    for everyone (e.g. the squared intercept) are dropped from the basis.
    """
    a, b = j - 1, j
    if not 0 <= a < b < part.n_regimes:
        raise NotTestableError(f"no regime pair ({j}, {j + 1}) among {part.n_regimes} regimes")
    p = panel.n_regressors
    rows, cols = np.tril_indices(p)
    slices = part.slices()

    def vech_mean(sl):
        xs = panel.x[sl]
        return np.einsum("tip,tiq->ipq", xs, xs)[:, rows, cols] / (sl.stop - sl.start)

    qa, qb = vech_mean(slices[a]), vech_mean(slices[b])
    d = qa - qb
    live = ~is_negligible(d, np.concatenate([qa, qb]), axis=0)
    if not live.any():
        raise NotTestableError(f"second moments of regimes {j} and {j + 1} are identical by construction")
    d = d[:, live]
    N = d.shape[0]
    cov = np.atleast_2d(np.cov(d, rowvar=False))
    stat = wald_linear(d.mean(axis=0), cov, N)
    names = panel.regressor_names
    basis = tuple(f"{names[r]}*{names[c]}" for r, c, keep in zip(rows, cols, live) if keep)
    df = int(live.sum())
    return WaldResult(statistic=stat, df=df, p_value=float(stats.chi2.sf(stat, df)),
                      pair=(j, j + 1), basis=basis, kind="gram")


@dataclass(frozen=True)
class BonferroniReport:
    alpha: float
    per_test_level: float
    results: tuple[WaldResult, ...]
    rejected: tuple[bool, ...] = field(default=())

    @property
    def family_bound(self) -> float:
        return self.alpha


def bonferroni_adjust(results, alpha: float = 0.05, n_tests: int | None = None) -> BonferroniReport:
    """Evaluate each test at ``alpha / n_tests`` (default: number of results).

    The family-wise error of the adjusted procedure is at most ``alpha``.
    """
    results = tuple(results)
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    n = len(results) if n_tests is None else int(n_tests)
    if n < 1:
        raise ValueError("Bonferroni adjustment needs at least one test")
    level = alpha / n
    return BonferroniReport(alpha=alpha, per_test_level=level, results=results,
                            rejected=tuple(r.p_value < level for r in results))
