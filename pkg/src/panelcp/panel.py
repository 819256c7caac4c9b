"""Balanced panel storage, sample partitions, Gram tables and demeaning.

Arrays are stored period-major: ``y`` has shape ``(T, N)`` and ``x`` has
shape ``(T, N, p)``. Periods are 1-based in every public interface (break
dates, segment bounds); internal slicing converts to 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "PanelError",
    "PanelData",
    "Partition",
    "RegimeIndex",
    "GramTable",
    "WithinDemeaned",
    "FullSampleDemeaned",
    "build_gram_table",
    "demean_within_regime",
    "demean_full_sample",
    "is_negligible",
]

# max |demeaned| < INVARIANCE_RTOL * (1 + max |raw|) marks a column as constant
INVARIANCE_RTOL = 1e-10


class PanelError(ValueError):
    """Invalid panel or partition."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def is_negligible(demeaned: np.ndarray, raw: np.ndarray, axis=None) -> np.ndarray:
    """Relative-scale test for an identically-zero demeaned column."""
    scale = 1.0 + np.max(np.abs(raw), axis=axis, initial=0.0)
    return np.max(np.abs(demeaned), axis=axis, initial=0.0) < INVARIANCE_RTOL * scale


@dataclass(frozen=True)
class PanelData:
    """A balanced ``N x T`` panel with ``p`` regressors.

    Parameters
    ----------
    y : array_like, shape (T, N)
        Outcome, period-major.
    x : array_like, shape (T, N, p)
        Regressors, period-major.
    regressor_names : sequence of str, optional
        Column labels; defaults to ``x1..xp``.
    has_intercept : bool
        Whether column 0 is the constant.
    time_labels, ids : sequence of str, optional
        Original calendar labels and individual identifiers, echoed in reports.
    """

    y: np.ndarray
    x: np.ndarray
    regressor_names: tuple[str, ...] = ()
    has_intercept: bool = False
    time_labels: tuple[str, ...] = ()
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 2:
            x = x[:, :, None]
        if y.ndim != 2 or x.ndim != 3 or x.shape[:2] != y.shape:
            raise PanelError(
                f"expected y of shape (T, N) and x of shape (T, N, p); got {y.shape} and {x.shape}"
            )
        T, N, p = x.shape
        if p < 1:
            raise PanelError("panel needs at least one regressor")
        if T < 2:
            raise PanelError(f"panel needs T >= 2 periods, got {T}")
        if N < p + 1:
            raise PanelError(f"panel needs N >= p + 1 individuals, got N={N}, p={p}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise PanelError("panel contains non-finite values")
        names = tuple(self.regressor_names) or tuple(f"x{k + 1}" for k in range(p))
        if len(names) != p:
            raise PanelError(f"{len(names)} regressor names for {p} columns")
        labels = tuple(str(s) for s in self.time_labels) or tuple(str(t + 1) for t in range(T))
        if len(labels) != T:
            raise PanelError(f"{len(labels)} time labels for {T} periods")
        ids = tuple(str(s) for s in self.ids) or tuple(str(i + 1) for i in range(N))
        if len(ids) != N:
            raise PanelError(f"{len(ids)} ids for {N} individuals")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "regressor_names", names)
        object.__setattr__(self, "time_labels", labels)
        object.__setattr__(self, "ids", ids)

    @property
    def n_periods(self) -> int:
        return self.y.shape[0]

    @property
    def n_individuals(self) -> int:
        return self.y.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.x.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        """``(N, T, p)``."""
        return self.n_individuals, self.n_periods, self.n_regressors

    def replace(self, *, y=None, x=None) -> "PanelData":
        """Copy with a new outcome and/or regressor array, labels kept."""
        return PanelData(
            y=self.y if y is None else y,
            x=self.x if x is None else x,
            regressor_names=self.regressor_names,
            has_intercept=self.has_intercept,
            time_labels=self.time_labels,
            ids=self.ids,
        )

    def take_individuals(self, index) -> "PanelData":
        """Sub-panel (or re-ordered / duplicated panel) over individuals."""
        index = np.asarray(index)
        return PanelData(
            y=self.y[:, index],
            x=self.x[:, index, :],
            regressor_names=self.regressor_names,
            has_intercept=self.has_intercept,
            time_labels=self.time_labels,
            ids=tuple(self.ids[i] for i in index),
        )


@dataclass(frozen=True)
class RegimeIndex:
    """Split of regimes (0-based) into FE-estimable and single-period ones."""

    estimable_set: tuple[int, ...]
    singleton_set: tuple[int, ...]


@dataclass(frozen=True)
class Partition:
    """Ordered break dates ``T_1 < ... < T_m`` in ``[1, T-1]``.

    Regime ``j`` (1-based) spans periods ``T_{j-1}+1 .. T_j`` with ``T_0 = 0``
    and ``T_{m+1} = T``.
    """

    breaks: tuple[int, ...]
    n_periods: int

    def __post_init__(self):
        b = tuple(int(v) for v in self.breaks)
        T = int(self.n_periods)
        if T < 1:
            raise PanelError(f"n_periods must be positive, got {T}")
        if any(v < 1 or v > T - 1 for v in b):
            raise PanelError(f"break dates must lie in [1, {T - 1}], got {list(b)}")
        if any(b1 >= b2 for b1, b2 in zip(b, b[1:])):
            raise PanelError(f"break dates must be strictly increasing, got {list(b)}")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "n_periods", T)

    @property
    def m(self) -> int:
        return len(self.breaks)

    @property
    def n_regimes(self) -> int:
        return len(self.breaks) + 1

    @property
    def bounds(self) -> tuple[int, ...]:
        """``(0, T_1, ..., T_m, T)``."""
        return (0, *self.breaks, self.n_periods)

    def regimes(self) -> list[tuple[int, int]]:
        """1-based inclusive ``(start, end)`` for each regime."""
        b = self.bounds
        return [(b[j] + 1, b[j + 1]) for j in range(self.n_regimes)]

    def slices(self) -> list[slice]:
        """0-based period slices for each regime."""
        b = self.bounds
        return [slice(b[j], b[j + 1]) for j in range(self.n_regimes)]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.bounds)

    @property
    def fractions(self) -> np.ndarray:
        """Sample-fraction view ``lambda_j = T_j / T`` including 0 and 1."""
        return np.asarray(self.bounds, dtype=float) / self.n_periods

    def regime_of_period(self) -> np.ndarray:
        """0-based regime number for every 0-based period."""
        return np.repeat(np.arange(self.n_regimes), self.lengths)

    def regime_index(self) -> RegimeIndex:
        lengths = self.lengths
        return RegimeIndex(
            estimable_set=tuple(int(j) for j in np.flatnonzero(lengths >= 2)),
            singleton_set=tuple(int(j) for j in np.flatnonzero(lengths == 1)),
        )

    @classmethod
    def from_breaks(cls, breaks: Sequence[int], n_periods: int) -> "Partition":
        return cls(tuple(breaks), n_periods)


@dataclass(frozen=True)
class GramTable:
    """Per-period cross-products and their prefix sums.

    ``prefix_xx[t]`` holds the sum over periods ``1..t`` (``prefix_xx[0] = 0``),
    so any segment's pooled cross-products cost two lookups.
    """

    sxx: np.ndarray
    sxy: np.ndarray
    syy: np.ndarray
    prefix_xx: np.ndarray = field(repr=False)
    prefix_xy: np.ndarray = field(repr=False)
    prefix_yy: np.ndarray = field(repr=False)
    n_individuals: int = 0

    @property
    def n_periods(self) -> int:
        return self.syy.shape[0]

    @property
    def n_regressors(self) -> int:
        return self.sxy.shape[1]

    def segment(self, s: int, e: int) -> tuple[np.ndarray, np.ndarray, float]:
        """Pooled ``(sum xx', sum xy, sum y^2)`` over periods ``s..e`` (1-based, inclusive)."""
        if not 1 <= s <= e <= self.n_periods:
            raise PanelError(f"segment [{s}, {e}] outside [1, {self.n_periods}]")
        return (
            self.prefix_xx[e] - self.prefix_xx[s - 1],
            self.prefix_xy[e] - self.prefix_xy[s - 1],
            float(self.prefix_yy[e] - self.prefix_yy[s - 1]),
        )


def build_gram_table(panel: PanelData) -> GramTable:
    """Accumulate per-period cross-section sums and their prefix sums."""
    x, y = panel.x, panel.y
    sxx = np.einsum("tip,tiq->tpq", x, x)
    # exact symmetry regardless of summation order
    sxx = 0.5 * (sxx + np.swapaxes(sxx, 1, 2))
    sxy = np.einsum("tip,ti->tp", x, y)
    syy = np.einsum("ti,ti->t", y, y)

    def prefix(a):
        out = np.zeros((a.shape[0] + 1,) + a.shape[1:])
        np.cumsum(a, axis=0, out=out[1:])
        return _frozen(out)

    return GramTable(
        sxx=_frozen(sxx),
        sxy=_frozen(sxy),
        syy=_frozen(syy),
        prefix_xx=prefix(sxx),
        prefix_xy=prefix(sxy),
        prefix_yy=prefix(syy),
        n_individuals=panel.n_individuals,
    )


@dataclass(frozen=True)
class WithinDemeaned:
    """Data demeaned per individual within each regime.

    ``invariant[j, k]`` flags column ``k`` as time-invariant inside regime ``j``
    (always true for single-period regimes).
    """

    x: np.ndarray
    y: np.ndarray
    partition: Partition
    invariant: np.ndarray
    regime_index: RegimeIndex


def demean_within_regime(panel: PanelData, part: Partition) -> WithinDemeaned:
    """Subtract each individual's regime mean from ``x`` and ``y``."""
    _check_partition(panel, part)
    xd = np.empty_like(panel.x)
    yd = np.empty_like(panel.y)
    invariant = np.zeros((part.n_regimes, panel.n_regressors), dtype=bool)
    for j, sl in enumerate(part.slices()):
        xs, ys = panel.x[sl], panel.y[sl]
        xd[sl] = xs - xs.mean(axis=0, keepdims=True)
        yd[sl] = ys - ys.mean(axis=0, keepdims=True)
        invariant[j] = is_negligible(xd[sl], xs, axis=(0, 1))
    for a in (xd, yd, invariant):
        a.setflags(write=False)
    return WithinDemeaned(x=xd, y=yd, partition=part, invariant=invariant,
                          regime_index=part.regime_index())


@dataclass(frozen=True)
class FullSampleDemeaned:
    """Full-sample demeaned outcome and block-expanded regressors.

    ``x_tilde`` has shape ``(T, N, (m+1) p)`` with regime-major blocks: column
    ``j * p + k`` belongs to regime ``j``, regressor ``k``. ``time_invariant[k]``
    marks regressors that are constant over the whole sample for every
    individual; their ``m + 1`` block-columns sum to zero.
    """

    x_tilde: np.ndarray
    y_star: np.ndarray
    partition: Partition
    time_invariant: np.ndarray


def demean_full_sample(panel: PanelData, part: Partition) -> FullSampleDemeaned:
    """Build ``y*_it = y_it - ybar_i`` and the block regressor ``x~_it``.

    For ``t`` in regime ``j`` the block for regime ``k`` is
    ``1{k == j} x_it - w_ik`` with ``w_ik = T^{-1} sum_{t in I_k} x_it``.
    """
    _check_partition(panel, part)
    T, N, p = panel.n_periods, panel.n_individuals, panel.n_regressors
    R = part.n_regimes
    x = panel.x
    w = np.stack([x[sl].sum(axis=0) for sl in part.slices()], axis=1) / T  # (N, R, p)
    xt = np.broadcast_to(-w.reshape(1, N, R * p), (T, N, R * p)).copy()
    for j, sl in enumerate(part.slices()):
        xt[sl, :, j * p:(j + 1) * p] += x[sl]
    y_star = panel.y - panel.y.mean(axis=0, keepdims=True)
    xd = x - x.mean(axis=0, keepdims=True)
    time_invariant = is_negligible(xd, x, axis=(0, 1))
    for a in (xt, y_star, time_invariant):
        a.setflags(write=False)
    return FullSampleDemeaned(x_tilde=xt, y_star=y_star, partition=part,
                              time_invariant=time_invariant)


def _check_partition(panel: PanelData, part: Partition) -> None:
    if part.n_periods != panel.n_periods:
        raise PanelError(
            f"partition is for T={part.n_periods} but panel has T={panel.n_periods}"
        )
