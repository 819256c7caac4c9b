"""Simulation designs and seeded Monte Carlo experiments.

The base design has a time-constant individual effect ``c_i`` that enters both
the outcome and the regressor::

    y_it = x_it' beta_j + c_i + eps_it,
    x_itk = loading * c_i + w * g_ik + (1 - w) * z_itk

with ``c_i ~ N(0, sigma_c2)``, ``eps_it ~ N(0, sigma_eps2)`` and ``g, z`` iid
``N(0, z_variance)``. At ``w = 0`` this is the slope-only design with pooled
OLS pseudo-bias ``loading * sigma_c2 / (loading^2 sigma_c2 + z_variance)``.

Replication ``r`` draws from ``numpy.random.default_rng([seed, r])``, so any
replication can be regenerated on its own and the schedule order does not
matter.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .detect import build_sse_table, detect_breaks, dp_optimal_partition
from .estimate import fe_estimate, ffe_estimate, regime_ols
from .infer import wald_slope_change
from .panel import PanelData, Partition, build_gram_table
from .select import ICConfig, select_m

__all__ = [
    "EXPERIMENTS",
    "DGPConfig",
    "SimulatedPanel",
    "EstimatorSummary",
    "MCSummary",
    "third_breaks",
    "alternating_beta",
    "generate_panel",
    "summarize",
    "run_monte_carlo",
    "one_break_preset",
    "two_break_preset",
    "no_break_preset",
    "breaksize_preset",
]

EXPERIMENTS = ("locations", "slopes", "selection", "wsweep", "breaksize", "wald")


def _round(v: float, rounding: str) -> int:
    if rounding == "floor":
        return math.floor(v)
    if rounding == "ceil":
        return math.ceil(v)
    raise ValueError(f"rounding must be 'floor' or 'ceil', got {rounding!r}")


def third_breaks(T: int, n_breaks: int, rounding: str = "floor") -> tuple[int, ...]:
    """``[T/3]`` for one break, ``([T/3], [2T/3])`` for two."""
    if n_breaks == 0:
        return ()
    if n_breaks == 1:
        return (_round(T / 3, rounding),)
    if n_breaks == 2:
        return (_round(T / 3, rounding), _round(2 * T / 3, rounding))
    raise ValueError("third_breaks supports 0, 1 or 2 breaks")


def alternating_beta(n_regimes: int, p: int = 1, size: float = 0.1) -> np.ndarray:
    """Slopes alternating ``-size, +size, -size, ...`` across regimes."""
    signs = np.where(np.arange(n_regimes) % 2 == 0, -1.0, 1.0)
    return np.repeat(signs[:, None] * size, p, axis=1)


@dataclass(frozen=True)
class DGPConfig:
    N: int = 500
    T: int = 20
    breaks: tuple[int, ...] = (6,)
    beta: tuple[tuple[float, ...], ...] | None = None
    sigma_c2: float = 0.25
    sigma_eps2: float = 0.25
    z_variance: float = 0.5
    loading: float = math.sqrt(2.0)
    w: float = 0.0
    p: int = 1
    intercept: bool = False
    ar_rho: float = 0.0
    x_ar_rho: float = 0.0
    replications: int = 1000
    seed: int = 0

    def __post_init__(self):
        breaks = tuple(int(b) for b in self.breaks)
        Partition(breaks, self.T)
        object.__setattr__(self, "breaks", breaks)
        k = self.p + int(self.intercept)
        if self.beta is None:
            beta = alternating_beta(len(breaks) + 1, k)
        else:
            beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if beta.shape != (len(breaks) + 1, k):
            raise ValueError(
                f"beta must have shape ({len(breaks) + 1}, {k}), got {beta.shape}")
        object.__setattr__(self, "beta", tuple(map(tuple, beta.tolist())))
        if self.sigma_c2 < 0 or self.sigma_eps2 <= 0 or self.z_variance <= 0:
            raise ValueError("variances must be positive (sigma_c2 may be zero)")
        if not 0 <= self.w <= 1:
            raise ValueError(f"w must lie in [0, 1], got {self.w}")
        for name in ("ar_rho", "x_ar_rho"):
            rho = getattr(self, name)
            if not -1 < rho < 1:
                raise ValueError(f"{name} must lie in (-1, 1), got {rho}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")

    @property
    def partition(self) -> Partition:
        return Partition(self.breaks, self.T)

    @property
    def beta_array(self) -> np.ndarray:
        return np.array(self.beta)

    def pseudo_bias(self) -> float:
        """Population ``gamma_j - beta_j`` for a single regressor at ``w = 0``."""
        a = self.loading * self.sigma_c2
        return a / (self.loading**2 * self.sigma_c2 + self.z_variance)


@dataclass(frozen=True)
class SimulatedPanel:
    panel: PanelData
    c: np.ndarray
    beta: np.ndarray
    partition: Partition


def _ar1(shocks: np.ndarray, rho: float) -> np.ndarray:
    """Stationary AR(1) along axis 0 with the marginal variance of ``shocks``."""
    if not rho:
        return shocks
    out = np.empty_like(shocks)
    out[0] = shocks[0]
    scale = math.sqrt(1 - rho**2)
    for t in range(1, shocks.shape[0]):
        out[t] = rho * out[t - 1] + scale * shocks[t]
    return out


def generate_panel(cfg: DGPConfig, rep_index: int = 0) -> SimulatedPanel:
    """One draw from the design; deterministic in ``(cfg.seed, rep_index)``."""
    rng = np.random.default_rng([cfg.seed, rep_index])
    N, T, p = cfg.N, cfg.T, cfg.p
    c = rng.normal(0.0, math.sqrt(cfg.sigma_c2), size=N)
    sd_z = math.sqrt(cfg.z_variance)
    g = rng.normal(0.0, sd_z, size=(N, p))
    z = rng.normal(0.0, sd_z, size=(T, N, p))
    eps = rng.normal(0.0, math.sqrt(cfg.sigma_eps2), size=(T, N))
    eps = _ar1(eps, cfg.ar_rho)
    z = _ar1(z, cfg.x_ar_rho)
    x = cfg.loading * c[None, :, None] + cfg.w * g[None] + (1 - cfg.w) * z
    if cfg.intercept:
        x = np.concatenate([np.ones((T, N, 1)), x], axis=2)
    part = cfg.partition
    beta = cfg.beta_array
    slope = beta[part.regime_of_period()]  # (T, k)
    y = np.einsum("tik,tk->ti", x, slope) + c[None, :] + eps
    names = (("const",) if cfg.intercept else ()) + tuple(f"x{k + 1}" for k in range(p))
    panel = PanelData(y=y, x=x, regressor_names=names, has_intercept=cfg.intercept)
    return SimulatedPanel(panel=panel, c=c, beta=beta, partition=part)


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class EstimatorSummary:
    """Monte Carlo moments of one estimator, one entry per coefficient.

    ``se`` is the average estimated standard error (NaN when none is
    available); ``sd`` is the empirical standard deviation of the estimates.
    """

    bias: np.ndarray
    se: np.ndarray
    mse: np.ndarray
    sd: np.ndarray
    n: int


def summarize(estimates, truth, ses=None) -> EstimatorSummary:
    """Bias, mean SE, MSE and SD over replications (rows of ``estimates``)."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    if est.shape[0] == 0:
        raise ValueError("summarize needs at least one replication")
    err = est - np.asarray(truth, dtype=float)
    bias = err.mean(axis=0)
    mse = (err**2).mean(axis=0)
    sd = est.std(axis=0, ddof=1) if est.shape[0] > 1 else np.zeros(est.shape[1])
    se = np.full(est.shape[1], np.nan) if ses is None else np.atleast_2d(ses).mean(axis=0)
    return EstimatorSummary(bias=bias, se=se, mse=mse, sd=sd, n=est.shape[0])


@dataclass
class MCSummary:
    """Aggregated output of one experiment.

    Histogram keys are 1-based break dates. ``location_hist[j]`` counts the
    ``j``-th estimated break (conditioning noted in ``conditioning``);
    ``partition_hist`` counts whole break vectors. ``m_hat`` maps each
    criterion to a count per number of breaks.
    """

    kind: str
    config: DGPConfig
    replications: int
    estimators: dict[str, EstimatorSummary] = field(default_factory=dict)
    location_hist: list[Counter] = field(default_factory=list)
    partition_hist: Counter = field(default_factory=Counter)
    m_hat: dict[str, Counter] = field(default_factory=dict)
    rejection_rate: dict[str, float] = field(default_factory=dict)
    conditioning: str = ""
    parameter: float | None = None

    def exact_rate(self) -> float:
        """Share of replications whose break vector equals the true one."""
        n = sum(self.partition_hist.values())
        return self.partition_hist[self.config.breaks] / n if n else float("nan")

    def m_hat_rate(self, criterion: str, m: int) -> float:
        counts = self.m_hat[criterion]
        return counts[m] / sum(counts.values())

    def modal_location(self, j: int = 0) -> int | None:
        if not self.location_hist or not self.location_hist[j]:
            return None
        return max(sorted(self.location_hist[j]), key=self.location_hist[j].__getitem__)


# ---------------------------------------------------------------------------
# replications


def _rep_locations(cfg, rep, opts):
    sim = generate_panel(cfg, rep)
    table = build_sse_table(build_gram_table(sim.panel))
    part, _ = dp_optimal_partition(table, opts.get("m", len(cfg.breaks)))
    return {"breaks": part.breaks}


def _rep_slopes(cfg, rep, opts):
    sim = generate_panel(cfg, rep)
    part = sim.partition
    vcov = opts.get("vcov", "plugin")
    ols = regime_ols(build_gram_table(sim.panel), part).gamma_hat
    fe = fe_estimate(sim.panel, part, vcov)
    ffe = ffe_estimate(sim.panel, part, vcov)
    return {"ols": ols.ravel(),
            "fe": fe.beta_table().ravel(), "fe_se": fe.se_table().ravel(),
            "ffe": ffe.beta_table().ravel(), "ffe_se": ffe.se_table().ravel()}


def _rep_selection(cfg, rep, opts):
    sim = generate_panel(cfg, rep)
    det = detect_breaks(sim.panel, opts.get("m_max"))
    out = {"partitions": {m: p.breaks for m, p in enumerate(det.partitions)}}
    for crit in opts.get("penalties", ("hqic", "bic")):
        out[crit] = select_m(det, ICConfig(crit)).m_hat
    return out


def _rep_wald(cfg, rep, opts):
    sim = generate_panel(cfg, rep)
    fe = fe_estimate(sim.panel, sim.partition, opts.get("vcov", "cluster"))
    alpha = opts.get("alpha", 0.05)
    pvals = [wald_slope_change(fe, j).p_value for j in range(1, sim.partition.n_regimes)]
    return {"pvalues": pvals, "alpha": alpha}


_REPLICATORS = {
    "locations": _rep_locations,
    "slopes": _rep_slopes,
    "selection": _rep_selection,
    "wald": _rep_wald,
}


def _run_reps(cfg, kind, opts, workers):
    fn = _REPLICATORS[kind]
    reps = range(cfg.replications)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, [cfg] * len(reps), reps, [opts] * len(reps)))
    return [fn(cfg, r, opts) for r in reps]


def _summarize_locations(cfg, records, kind="locations"):
    m = len(records[0]["breaks"]) if records else 0
    s = MCSummary(kind=kind, config=cfg, replications=len(records),
                  conditioning="number of breaks fixed at the true value")
    s.location_hist = [Counter() for _ in range(m)]
    for r in records:
        s.partition_hist[r["breaks"]] += 1
        for j, b in enumerate(r["breaks"]):
            s.location_hist[j][b] += 1
    return s


def _summarize_slopes(cfg, records):
    s = MCSummary(kind="slopes", config=cfg, replications=len(records),
                  conditioning="true partition")
    truth = cfg.beta_array.ravel()
    stack = lambda key: np.array([r[key] for r in records])
    s.estimators["ols"] = summarize(stack("ols"), truth)
    s.estimators["fe"] = summarize(stack("fe"), truth, stack("fe_se"))
    s.estimators["ffe"] = summarize(stack("ffe"), truth, stack("ffe_se"))
    return s


def _summarize_selection(cfg, records, penalties):
    s = MCSummary(kind="selection", config=cfg, replications=len(records))
    for crit in penalties:
        s.m_hat[crit] = Counter(r[crit] for r in records)
    return s


def run_monte_carlo(cfg: DGPConfig, kind: str, *, m: int | None = None,
                    m_max: int | None = None, penalties=("hqic", "bic"),
                    vcov: str | None = None, alpha: float = 0.05,
                    sweep=None, workers: int | None = None):
    """Run one experiment over ``cfg.replications`` seeded replications.

    Kinds
    -----
    ``locations``
        Break-date histograms with the number of breaks known (``m`` overrides it).
    ``slopes``
        OLS / FE / FFE bias, mean SE and MSE at the true partition.
    ``selection``
        Distribution of the selected number of breaks for each penalty.
    ``wsweep``
        ``selection`` repeated for each mixing weight in ``sweep``; returns a list.
    ``breaksize``
        For each break size in ``sweep`` (the design's slope jump at its single
        break), the HQIC distribution and, conditional on one selected break, the
        location histogram; returns a list.
    ``wald``
        Rejection rate of the adjacent-regime slope tests at the true partition.
    """
    if kind not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {kind!r}; expected one of {EXPERIMENTS}")
    penalties = tuple(penalties)
    if kind == "locations":
        opts = {} if m is None else {"m": m}
        return _summarize_locations(cfg, _run_reps(cfg, kind, opts, workers))
    if kind == "slopes":
        return _summarize_slopes(cfg, _run_reps(cfg, kind, {"vcov": vcov or "plugin"}, workers))
    if kind == "selection":
        recs = _run_reps(cfg, kind, {"m_max": m_max, "penalties": penalties}, workers)
        return _summarize_selection(cfg, recs, penalties)
    if kind == "wald":
        recs = _run_reps(cfg, kind, {"vcov": vcov or "cluster", "alpha": alpha}, workers)
        s = MCSummary(kind="wald", config=cfg, replications=len(recs),
                      conditioning="true partition")
        p = np.array([r["pvalues"] for r in recs])
        s.rejection_rate = {
            "any_unadjusted": float(np.mean(np.any(p < alpha, axis=1))),
            "any_bonferroni": float(np.mean(np.any(p < alpha / p.shape[1], axis=1))),
        }
        for j in range(p.shape[1]):
            s.rejection_rate[f"pair_{j + 1}"] = float(np.mean(p[:, j] < alpha))
        return s
    if sweep is None:
        raise ValueError(f"experiment {kind!r} needs sweep values")
    out = []
    for v in sweep:
        if kind == "wsweep":
            c = replace(cfg, w=float(v))
            recs = _run_reps(c, "selection", {"m_max": m_max, "penalties": penalties}, workers)
            s = _summarize_selection(c, recs, penalties)
            s.kind = "wsweep"
            _add_conditional_locations(s, recs, penalties[0], len(c.breaks))
        else:
            c = _with_break_size(cfg, float(v))
            recs = _run_reps(c, "selection", {"m_max": m_max, "penalties": penalties}, workers)
            s = _summarize_selection(c, recs, penalties)
            s.kind = "breaksize"
            _add_conditional_locations(s, recs, penalties[0], len(c.breaks))
        s.parameter = float(v)
        out.append(s)
    return out


def _add_conditional_locations(s: MCSummary, recs, crit: str, m_true: int) -> None:
    s.conditioning = f"{crit} selects m = {m_true}"
    s.location_hist = [Counter() for _ in range(m_true)]
    for r in recs:
        if r[crit] == m_true:
            b = r["partitions"][m_true]
            s.partition_hist[b] += 1
            for j, v in enumerate(b):
                s.location_hist[j][v] += 1


def _with_break_size(cfg: DGPConfig, size: float) -> DGPConfig:
    beta = cfg.beta_array.copy()
    beta[1:] = beta[0] + size
    return replace(cfg, beta=tuple(map(tuple, beta)))


# ---------------------------------------------------------------------------
# presets


def one_break_preset(N: int = 500, T: int = 20, break_at: int | str = "third",
                 rounding: str = "floor", **kw) -> DGPConfig:
    """Single-break slope design; ``break_at`` is a date or ``"third"``."""
    b = third_breaks(T, 1, rounding) if break_at == "third" else (int(break_at),)
    return DGPConfig(N=N, T=T, breaks=b, **kw)


def two_break_preset(N: int = 500, T: int = 20, rounding: str = "floor", **kw) -> DGPConfig:
    return DGPConfig(N=N, T=T, breaks=third_breaks(T, 2, rounding), **kw)


def no_break_preset(N: int = 500, T: int = 20, slope: float = -0.1, **kw) -> DGPConfig:
    p = kw.get("p", 1) + int(kw.get("intercept", False))
    return DGPConfig(N=N, T=T, breaks=(), beta=((slope,) * p,), **kw)


def breaksize_preset(size: float = 0.02, N: int = 216, T: int = 18, break_at: int = 14,
                     p: int = 15, **kw) -> DGPConfig:
    """Many-regressor single-break design: every slope moves by ``size`` at ``break_at``."""
    beta = np.zeros((2, p))
    beta[1] = size
    return DGPConfig(N=N, T=T, breaks=(break_at,), p=p, beta=tuple(map(tuple, beta)), **kw)
