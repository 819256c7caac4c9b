"""Least-squares change point estimation by dynamic programming.

Every segment's pooled OLS fit is computed once from the Gram table; the
optimal partition for each number of breaks is then an exact Bellman
recursion over segment costs. Individual effects are left in the error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .panel import GramTable, PanelData, Partition, build_gram_table

__all__ = [
    "SegmentSSETable",
    "DetectionResult",
    "segment_sse",
    "build_sse_table",
    "dp_optimal_partition",
    "brute_force_partition",
    "detect_breaks",
]

# relative eigenvalue cutoff below which a pooled Gram counts as singular
RANK_RTOL = 1e-10
# costs within this relative distance of the optimum are treated as ties
TIE_RTOL = 1e-10
BRUTE_FORCE_LIMIT = 10**6


def _solve_normal(sxx: np.ndarray, sxy: np.ndarray) -> tuple[np.ndarray, bool]:
    evals, evecs = np.linalg.eigh(sxx)
    cutoff = RANK_RTOL * max(evals[-1], 0.0)
    keep = evals > cutoff
    full_rank = bool(np.all(keep)) and evals[-1] > 0
    if full_rank:
        return np.linalg.solve(sxx, sxy), True
    # minimum-norm solution on the numerical range
    v = evecs[:, keep]
    return v @ ((v.T @ sxy) / evals[keep]), False


def segment_sse(gram: GramTable, s: int, e: int) -> tuple[float, np.ndarray, bool]:
    """Pooled OLS over periods ``s..e`` (1-based, inclusive).

    Returns
    -------
    sse : float
        Minimized sum of squared residuals (clipped at zero).
    gamma : ndarray, shape (p,)
        Segment coefficients; the minimum-norm solution when rank deficient.
    full_rank : bool
        Whether the pooled Gram matrix was nonsingular.
    """
    sxx, sxy, syy = gram.segment(s, e)
    gamma, full_rank = _solve_normal(sxx, sxy)
    sse = max(syy - float(gamma @ sxy), 0.0)
    return sse, gamma, full_rank


@dataclass(frozen=True)
class SegmentSSETable:
    """SSE, coefficients and rank flag for every segment ``[s, e]``.

    Arrays are indexed 0-based, ``sse[s-1, e-1]`` for the 1-based segment
    ``[s, e]``; entries with ``s > e`` are NaN.
    """

    sse: np.ndarray
    gamma: np.ndarray
    full_rank: np.ndarray
    n_obs: int

    @property
    def n_periods(self) -> int:
        return self.sse.shape[0]

    def cost(self, s: int, e: int) -> float:
        return float(self.sse[s - 1, e - 1])

    def partition_sse(self, part: Partition) -> float:
        """Total SSE of a partition, summed left to right."""
        total = 0.0
        for s, e in part.regimes():
            total += self.sse[s - 1, e - 1]
        return float(total)


def build_sse_table(gram: GramTable) -> SegmentSSETable:
    """Fit pooled OLS on all ``T(T+1)/2`` segments at once."""
    T, p = gram.n_periods, gram.n_regressors
    s_idx, e_idx = np.triu_indices(T)
    sxx = gram.prefix_xx[e_idx + 1] - gram.prefix_xx[s_idx]
    sxy = gram.prefix_xy[e_idx + 1] - gram.prefix_xy[s_idx]
    syy = gram.prefix_yy[e_idx + 1] - gram.prefix_yy[s_idx]

    evals = np.linalg.eigvalsh(sxx)
    top = evals[:, -1]
    full = (evals[:, 0] > RANK_RTOL * np.maximum(top, 0.0)) & (top > 0)
    gam = np.empty((len(s_idx), p))
    if np.any(full):
        gam[full] = np.linalg.solve(sxx[full], sxy[full][..., None])[..., 0]
    for k in np.flatnonzero(~full):
        gam[k], _ = _solve_normal(sxx[k], sxy[k])
    sse_flat = np.maximum(syy - np.einsum("kp,kp->k", gam, sxy), 0.0)

    sse = np.full((T, T), np.nan)
    gamma = np.full((T, T, p), np.nan)
    full_rank = np.zeros((T, T), dtype=bool)
    sse[s_idx, e_idx] = sse_flat
    gamma[s_idx, e_idx] = gam
    full_rank[s_idx, e_idx] = full
    for a in (sse, gamma, full_rank):
        a.setflags(write=False)
    return SegmentSSETable(sse=sse, gamma=gamma, full_rank=full_rank,
                           n_obs=gram.n_individuals * T)


def _suffix_costs(table: SegmentSSETable, m_max: int) -> np.ndarray:
    """``F[k, s]``: least SSE covering 0-based periods ``s..T-1`` with ``k`` breaks."""
    T = table.n_periods
    sse = table.sse
    F = np.full((m_max + 1, T + 1), np.inf)
    F[0, :T] = sse[np.arange(T), T - 1]
    for k in range(1, m_max + 1):
        for s in range(T - k):
            # first segment [s, b], remainder [b+1, T-1] needs k-1 breaks
            b = np.arange(s, T - k)
            F[k, s] = np.min(sse[s, b] + F[k - 1, b + 1])
    return F


def _trace(table: SegmentSSETable, F: np.ndarray, m: int) -> tuple[int, ...]:
    T = table.n_periods
    sse = table.sse
    breaks = []
    s = 0
    for k in range(m, 0, -1):
        b = np.arange(s, T - k)
        cost = sse[s, b] + F[k - 1, b + 1]
        target = F[k, s]
        tol = TIE_RTOL * max(abs(target), 1.0)
        # smallest first break among (near-)optimal choices
        first = int(b[np.flatnonzero(cost <= target + tol)[0]])
        breaks.append(first + 1)
        s = first + 1
    return tuple(breaks)


def _check_m(m: int, T: int) -> None:
    if not 0 <= m <= T - 1:
        raise ValueError(f"number of breaks m={m} must lie in [0, {T - 1}]")


def dp_optimal_partition(table: SegmentSSETable, m: int) -> tuple[Partition, float]:
    """Globally optimal partition with exactly ``m`` breaks.

    Ties are resolved toward the lexicographically smallest break vector.
    """
    T = table.n_periods
    _check_m(m, T)
    F = _suffix_costs(table, m)
    part = Partition(_trace(table, F, m), T)
    return part, table.partition_sse(part)


def brute_force_partition(table: SegmentSSETable, m: int,
                          limit: int = BRUTE_FORCE_LIMIT) -> tuple[Partition, float]:
    """Exhaustive search over all ``C(T-1, m)`` partitions (testing oracle)."""
    T = table.n_periods
    _check_m(m, T)
    n = math.comb(T - 1, m)
    if n > limit:
        raise ValueError(f"C({T - 1}, {m}) = {n} partitions exceeds the limit {limit}")
    candidates = list(itertools.combinations(range(1, T), m))
    totals = np.array([table.partition_sse(Partition(c, T)) for c in candidates])
    best = totals.min()
    tol = TIE_RTOL * max(abs(best), 1.0)
    # combinations() is lexicographic, so the first hit is the smallest
    first = int(np.flatnonzero(totals <= best + tol)[0])
    return Partition(candidates[first], T), float(totals[first])


@dataclass
class DetectionResult:
    """Optimal partitions and normalized SSE for ``m = 0..m_max``.

    ``s_nt[m]`` is the minimized SSE divided by ``NT``. ``m_hat`` is filled in
    by model selection.
    """

    partitions: list[Partition]
    s_nt: np.ndarray
    gammas: list[np.ndarray]
    full_rank: list[np.ndarray]
    n_individuals: int
    n_periods: int
    n_regressors: int
    m_hat: int | None = None

    @property
    def m_max(self) -> int:
        return len(self.partitions) - 1

    @property
    def sse(self) -> np.ndarray:
        return self.s_nt * self.n_individuals * self.n_periods

    def chosen(self) -> Partition:
        if self.m_hat is None:
            raise ValueError("number of breaks has not been selected yet")
        return self.partitions[self.m_hat]


def detect_breaks(data: PanelData | GramTable | SegmentSSETable,
                  m_max: int | None = None) -> DetectionResult:
    """Optimal partitions for every ``m`` up to ``m_max`` (default ``T - 1``)."""
    if isinstance(data, PanelData):
        data = build_gram_table(data)
    if isinstance(data, GramTable):
        n_ind, p = data.n_individuals, data.n_regressors
        table = build_sse_table(data)
    else:
        table = data
        p = table.gamma.shape[2]
        n_ind = table.n_obs // table.n_periods
    T = table.n_periods
    m_max = T - 1 if m_max is None else int(m_max)
    _check_m(m_max, T)

    F = _suffix_costs(table, m_max)
    parts, snt, gammas, ranks = [], [], [], []
    for m in range(m_max + 1):
        part = Partition(_trace(table, F, m), T)
        parts.append(part)
        snt.append(table.partition_sse(part) / table.n_obs)
        gammas.append(np.array([table.gamma[s - 1, e - 1] for s, e in part.regimes()]))
        ranks.append(np.array([table.full_rank[s - 1, e - 1] for s, e in part.regimes()]))
    return DetectionResult(partitions=parts, s_nt=np.asarray(snt), gammas=gammas,
                           full_rank=ranks, n_individuals=n_ind, n_periods=T,
                           n_regressors=p)
