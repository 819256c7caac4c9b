"""Command-line entry point: ``panelcp {detect,estimate,test,simulate}``.

Every command writes CSV tables and a ``run.log`` into ``--out-dir``. Exit
status is 0 on success and 2 on any input or estimation error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import simlab
from .detect import detect_breaks
from .estimate import fe_estimate, ffe_estimate, regime_ols
from .infer import bonferroni_adjust, wald_gram_change, wald_slope_change
from .io import load_csv, write_csv
from .panel import PanelData, Partition, build_gram_table
from .select import PENALTIES, ICConfig, select_m

log = logging.getLogger("panelcp")


def _write(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    log.info("wrote %s", path)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def _setup(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    log.setLevel(logging.INFO)
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    fh = logging.FileHandler(out_dir / "run.log", mode="w", encoding="utf-8")
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    sh = logging.StreamHandler(sys.stderr)
    sh.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(fh)
    log.addHandler(sh)


# ---------------------------------------------------------------------------
# shared pipeline


def _load(args) -> PanelData:
    panel = load_csv(args.input, args.id_col, args.time_col, args.y_col,
                     [c.strip() for c in args.x_cols.split(",") if c.strip()],
                     intercept=args.intercept)
    N, T, p = panel.shape
    log.info("loaded %s: N=%d, T=%d, p=%d (%s)", args.input, N, T, p,
             ", ".join(panel.regressor_names))
    return panel


def _label_breaks(panel: PanelData, labels: str) -> Partition:
    idx = {lab: t + 1 for t, lab in enumerate(panel.time_labels)}
    breaks = []
    for lab in labels.split(","):
        lab = lab.strip()
        if lab not in idx:
            raise ValueError(f"unknown break label {lab!r}")
        breaks.append(idx[lab])
    return Partition(tuple(breaks), panel.n_periods)


def _partition(panel: PanelData, args, out_dir: Path) -> Partition:
    """Detect breaks (or take them from ``--breaks``) and write the detection tables."""
    if getattr(args, "breaks", None):
        part = _label_breaks(panel, args.breaks)
        log.info("using supplied breaks %s", _labels(panel, part))
        return part
    T = panel.n_periods
    m_max = T - 1 if args.m_max is None else min(args.m_max, T - 1)
    if args.m is not None:
        m_max = max(m_max, args.m)
    det = detect_breaks(panel, m_max)
    curve = None
    if args.m is None:
        curve = select_m(det, ICConfig(args.penalty))
    else:
        det.m_hat = args.m
    part = det.chosen()
    log.info("selected m = %d (%s); breaks at %s", det.m_hat,
             "fixed" if curve is None else args.penalty, _labels(panel, part) or "none")
    _write(out_dir / "ic_curve.csv", ["m", "s_nt", "p_star", "ic", "breaks"],
           [[m, _fmt(det.s_nt[m]),
             "" if curve is None else int(curve.p_star[m]),
             "" if curve is None else _fmt(curve.ic[m]),
             ";".join(_labels(panel, det.partitions[m]))] for m in range(det.m_max + 1)])
    _write(out_dir / "breaks.csv", ["break", "period", "label"],
           [[j + 1, b, panel.time_labels[b - 1]] for j, b in enumerate(part.breaks)])
    return part


def _labels(panel: PanelData, part: Partition) -> list[str]:
    return [panel.time_labels[b - 1] for b in part.breaks]


def _regime_span(panel, part, j):
    s, e = part.regimes()[j]
    return panel.time_labels[s - 1], panel.time_labels[e - 1]


# ---------------------------------------------------------------------------
# commands


def cmd_detect(args) -> int:
    out = Path(args.out_dir)
    _setup(out)
    panel = _load(args)
    part = _partition(panel, args, out)
    ols = regime_ols(build_gram_table(panel), part)
    rows = []
    for j in range(part.n_regimes):
        start, end = _regime_span(panel, part, j)
        for k, name in enumerate(panel.regressor_names):
            rows.append([j + 1, start, end, name, _fmt(ols.gamma_hat[j, k]),
                         int(ols.full_rank[j])])
    _write(out / "regime_ols.csv",
           ["regime", "start", "end", "regressor", "gamma", "full_rank"], rows)
    return 0


def cmd_estimate(args) -> int:
    out = Path(args.out_dir)
    _setup(out)
    panel = _load(args)
    part = _partition(panel, args, out)
    names = panel.regressor_names
    rows, changes = [], []
    fe = None
    if part.regime_index().estimable_set:
        fe = fe_estimate(panel, part, args.vcov)
        beta, se = fe.beta_table(), fe.se_table()
        for j in range(part.n_regimes):
            start, end = _regime_span(panel, part, j)
            for k, name in enumerate(names):
                ident = j in fe.regimes and bool(fe.identified_mask[fe.regimes.index(j)][k])
                rows.append(["FE", j + 1, start, end, name, _fmt(beta[j, k]),
                             _fmt(se[j, k]), int(ident)])
        changes += _changes(fe, "FE", panel)
        log.info("FE: sigma2 = %.6g, singleton regimes %s", fe.sigma2,
                 [j + 1 for j in fe.singletons] or "none")
    else:
        log.warning("FE skipped: no regime spans two or more periods")
    try:
        ffe = ffe_estimate(panel, part, args.vcov)
    except ValueError as exc:
        log.warning("FFE skipped: %s", exc)
        ffe = None
    if ffe is not None:
        beta, se = ffe.beta_table(), ffe.se_table()
        for j in range(part.n_regimes):
            start, end = _regime_span(panel, part, j)
            for k, name in enumerate(names):
                rows.append(["FFE", j + 1, start, end, name, _fmt(beta[j, k]),
                             _fmt(se[j, k]), int(not ffe.time_invariant[k])])
        changes += _changes(ffe, "FFE", panel)
        log.info("FFE: sigma2 = %.6g, time-invariant columns %s", ffe.sigma2,
                 [n for n, f in zip(names, ffe.time_invariant) if f] or "none")
    _write(out / "coefficients.csv",
           ["estimator", "regime", "start", "end", "regressor", "estimate", "se", "identified"],
           rows)
    _write(out / "changes.csv",
           ["estimator", "from_regime", "to_regime", "regressor", "change", "se"], changes)
    return 0


def _changes(est, label, panel):
    """Adjacent-regime slope changes ``beta_{j+1} - beta_j`` with standard errors."""
    rows = []
    N = est.n_individuals
    for j in range(est.partition.n_regimes - 1):
        for k, name in enumerate(panel.regressor_names):
            ia, ib = est.index_of(j, k), est.index_of(j + 1, k)
            if ib is None or (ia is None and not (label == "FFE" and est.time_invariant[k])):
                continue
            row = np.zeros(est.coef.size)
            row[ib] = 1.0
            if ia is not None:
                row[ia] -= 1.0
            rows.append([label, j + 1, j + 2, name, _fmt(row @ est.coef),
                         _fmt(np.sqrt(max(row @ est.cov @ row, 0.0) / N))])
    return rows


def cmd_test(args) -> int:
    out = Path(args.out_dir)
    _setup(out)
    panel = _load(args)
    part = _partition(panel, args, out)
    if part.m == 0:
        log.info("no breaks: nothing to test")
        _write(out / "wald.csv", ["kind", "pair", "break", "statistic", "df", "p_value",
                                  "per_test_level", "reject", "basis"], [])
        return 0
    fe = fe_estimate(panel, part, args.vcov) if part.regime_index().estimable_set else None
    slope, gram = [], []
    for j in range(1, part.n_regimes):
        if fe is not None:
            try:
                slope.append(wald_slope_change(fe, j))
            except ValueError as exc:
                log.warning("slope test %d-%d skipped: %s", j, j + 1, exc)
        try:
            gram.append(wald_gram_change(panel, part, j))
        except ValueError as exc:
            log.warning("Gram test %d-%d skipped: %s", j, j + 1, exc)
    rows = []
    for results in (slope, gram):
        if not results:
            continue
        rep = bonferroni_adjust(results, args.alpha, n_tests=part.m)
        for r, rej in zip(rep.results, rep.rejected):
            rows.append([r.kind, f"{r.pair[0]}-{r.pair[1]}",
                         panel.time_labels[part.breaks[r.pair[0] - 1] - 1],
                         _fmt(r.statistic), r.df, _fmt(r.p_value), _fmt(rep.per_test_level),
                         int(rej), ";".join(r.basis)])
            log.info("%s change %d-%d: W = %.4f (df %d), p = %.4g%s", r.kind, *r.pair,
                     r.statistic, r.df, r.p_value, " *" if rej else "")
    log.info("each test at level %.4g; family-wise level <= %.4g", args.alpha / part.m, args.alpha)
    _write(out / "wald.csv", ["kind", "pair", "break", "statistic", "df", "p_value",
                              "per_test_level", "reject", "basis"], rows)
    return 0


def _sim_config(args) -> simlab.DGPConfig:
    kw = dict(replications=args.reps, seed=args.seed, w=args.w, p=args.p,
              intercept=args.intercept, ar_rho=args.ar_rho,
              x_ar_rho=args.x_ar_rho)
    preset = args.preset
    if preset == "one-break":
        return simlab.one_break_preset(args.N, args.T, "third", args.rounding, **kw)
    if preset == "early-break":
        return simlab.one_break_preset(args.N, args.T, 2, **kw)
    if preset == "two-break":
        return simlab.two_break_preset(args.N, args.T, args.rounding, **kw)
    if preset == "no-break":
        return simlab.no_break_preset(args.N, args.T, **kw)
    if preset == "breaksize":
        kw.pop("p")
        return simlab.breaksize_preset(args.size, N=args.N, T=args.T, break_at=args.break_at,
                                       p=args.p, **kw)
    breaks = tuple(int(b) for b in args.breaks.split(",")) if args.breaks else ()
    return simlab.DGPConfig(N=args.N, T=args.T, breaks=breaks, **kw)


def cmd_simulate(args) -> int:
    out = Path(args.out_dir)
    _setup(out)
    cfg = _sim_config(args)
    log.info("simulate %s: %s", args.experiment, cfg)
    if args.export_panel:
        write_csv(simlab.generate_panel(cfg, 0).panel, out / "panel_rep0.csv")
        log.info("wrote %s", out / "panel_rep0.csv")
    sweep = [float(v) for v in args.sweep.split(",")] if args.sweep else None
    res = simlab.run_monte_carlo(cfg, args.experiment, m=args.m, m_max=args.m_max,
                                 penalties=args.penalties.split(","), vcov=args.vcov,
                                 alpha=args.alpha, sweep=sweep, workers=args.workers)
    summaries = res if isinstance(res, list) else [res]
    est_rows, hist_rows, m_rows, rate_rows = [], [], [], []
    for s in summaries:
        par = _fmt(s.parameter)
        n_reg = s.config.partition.n_regimes
        k = len(s.config.beta[0])
        for name, e in s.estimators.items():
            for pos in range(e.bias.size):
                est_rows.append([par, name.upper(), pos // k + 1, pos % k + 1, _fmt(e.bias[pos]),
                                 _fmt(e.se[pos]), _fmt(e.mse[pos]), _fmt(e.sd[pos]), e.n])
        for j, h in enumerate(s.location_hist):
            for loc in sorted(h):
                hist_rows.append([par, j + 1, loc, h[loc], s.conditioning])
        for crit, counts in s.m_hat.items():
            for m in sorted(counts):
                m_rows.append([par, crit, m, counts[m]])
        for key, v in s.rejection_rate.items():
            rate_rows.append([par, key, _fmt(v)])
        log.info("done%s: %d replications, %d regimes",
                 "" if s.parameter is None else f" ({s.parameter})", s.replications, n_reg)
    if est_rows:
        _write(out / "summary.csv", ["parameter", "estimator", "regime", "coefficient",
                                     "bias", "se", "mse", "sd", "replications"], est_rows)
    if hist_rows:
        _write(out / "histogram.csv",
               ["parameter", "break", "location", "count", "conditioning"], hist_rows)
    if m_rows:
        _write(out / "m_hat.csv", ["parameter", "criterion", "m", "count"], m_rows)
    if rate_rows:
        _write(out / "rejections.csv", ["parameter", "rate", "value"], rate_rows)
    return 0


# ---------------------------------------------------------------------------
# parser


def _data_args(p: argparse.ArgumentParser, tests: bool = False) -> None:
    p.add_argument("--input", required=True, help="long-format CSV, one row per (id, t)")
    p.add_argument("--id-col", default="id")
    p.add_argument("--time-col", default="t")
    p.add_argument("--y-col", default="y")
    p.add_argument("--x-cols", required=True, help="comma-separated regressor columns")
    p.add_argument("--intercept", action="store_true", help="prepend a constant regressor")
    p.add_argument("--penalty", choices=PENALTIES, default="hqic")
    p.add_argument("--m-max", type=int, default=None, help="largest number of breaks searched")
    p.add_argument("--m", type=int, default=None, help="fix the number of breaks")
    p.add_argument("--out-dir", default="panelcp-out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="panelcp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="estimate number and dates of breaks")
    _data_args(p)
    p.set_defaults(func=cmd_detect)

    for name, func, helptext in (("estimate", cmd_estimate, "FE / FFE slopes per regime"),
                                 ("test", cmd_test, "Wald tests for adjacent-regime changes")):
        p = sub.add_parser(name, help=helptext)
        _data_args(p)
        p.add_argument("--breaks", default=None,
                       help="comma-separated time labels of break periods (skips detection)")
        p.add_argument("--vcov", choices=("plugin", "cluster"), default="cluster")
        p.add_argument("--alpha", type=float, default=0.05)
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="seeded Monte Carlo experiments")
    p.add_argument("--experiment", choices=simlab.EXPERIMENTS, default="slopes")
    p.add_argument("--preset", choices=("one-break", "early-break", "two-break", "no-break",
                                        "breaksize", "custom"), default="one-break")
    p.add_argument("--N", type=int, default=500)
    p.add_argument("--T", type=int, default=20)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--breaks", default=None, help="break dates for --preset custom")
    p.add_argument("--rounding", choices=("floor", "ceil"), default="floor")
    p.add_argument("--w", type=float, default=0.0, help="cross-sectional mixing weight")
    p.add_argument("--ar-rho", type=float, default=0.0, help="AR(1) coefficient of the errors")
    p.add_argument("--x-ar-rho", type=float, default=0.0,
                   help="AR(1) coefficient of the time-varying regressor shocks")
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--size", type=float, default=0.02, help="break size for --preset breaksize")
    p.add_argument("--break-at", type=int, default=14)
    p.add_argument("--sweep", default=None, help="comma-separated w or break-size values")
    p.add_argument("--m", type=int, default=None, help="imposed number of breaks (locations)")
    p.add_argument("--m-max", type=int, default=None)
    p.add_argument("--penalties", default="hqic,bic")
    p.add_argument("--vcov", choices=("plugin", "cluster"), default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--export-panel", action="store_true",
                   help="also write replication 0 as a long-format CSV")
    p.add_argument("--out-dir", default="panelcp-out")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if hasattr(args, "alpha") and not 0 < args.alpha < 1:
        print("panelcp: --alpha must lie in (0, 1)", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        module = type(exc).__module__.split(".")[-1]
        if module == "builtins":
            module = args.command
        msg = f"panelcp {module}: {exc}"
        log.error(msg) if log.handlers else print(msg, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
