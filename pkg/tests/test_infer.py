import numpy as np
import numpy.testing as npt
import pytest
from scipy import stats

from panelcp.estimate import fe_estimate, ffe_estimate
from panelcp.infer import (
    NotTestableError,
    bonferroni_adjust,
    wald_gram_change,
    wald_linear,
    wald_slope_change,
)
from panelcp.panel import PanelData, Partition
from panelcp.simlab import DGPConfig, generate_panel

from conftest import random_panel


def const_beta_panel(seed, N=300, T=12, breaks=(4, 8), p=2):
    beta = ((0.5,) * p,) * (len(breaks) + 1)
    return generate_panel(DGPConfig(N=N, T=T, breaks=breaks, beta=beta, p=p, seed=seed), 0)


class TestWaldLinear:

    def test_zero_difference(self):
        assert wald_linear(np.zeros(2), np.eye(2), 100) == 0.0

    def test_scalar(self):
        assert wald_linear(np.array([0.2]), np.array([[4.0]]), 100) == pytest.approx(1.0)

    def test_singular(self):
        with pytest.raises(ValueError):
            wald_linear(np.ones(2), np.ones((2, 2)), 10)


class TestSlopeWald:

    def test_identical_regimes_give_zero(self, rng):
        # duplicate a block of periods so both regimes hold the same data
        base = random_panel(rng, N=40, T=4, p=2)
        panel = PanelData(y=np.concatenate([base.y, base.y]),
                          x=np.concatenate([base.x, base.x]))
        part = Partition((4,), 8)
        res = wald_slope_change(fe_estimate(panel, part, "plugin"), 1)
        assert res.statistic == pytest.approx(0.0, abs=1e-20)
        assert res.df == 2 and res.p_value == pytest.approx(1.0)
        # matched scores make the clustered difference degenerate
        with pytest.raises(ValueError, match="singular"):
            wald_slope_change(fe_estimate(panel, part, "cluster"), 1)

    def test_reparameterisation_invariance(self, rng):
        sim = const_beta_panel(1)
        panel, part = sim.panel, sim.partition
        A = np.array([[2.0, 0.5], [-1.0, 3.0]])
        moved = panel.replace(x=panel.x @ A)
        for est in (fe_estimate, ffe_estimate):
            for j in (1, 2):
                a = wald_slope_change(est(panel, part, "cluster"), j)
                b = wald_slope_change(est(moved, part, "cluster"), j)
                assert b.statistic == pytest.approx(a.statistic, rel=1e-8)

    def test_y_scale_invariance(self):
        sim = const_beta_panel(2)
        for est in (fe_estimate, ffe_estimate):
            for vcov in ("plugin", "cluster"):
                a = wald_slope_change(est(sim.panel, sim.partition, vcov), 1)
                b = wald_slope_change(est(sim.panel.replace(y=7.5 * sim.panel.y),
                                          sim.partition, vcov), 1)
                assert b.statistic == pytest.approx(a.statistic, rel=1e-8)

    def test_singleton_not_testable(self, rng):
        panel = random_panel(rng, N=30, T=6, p=1)
        fe = fe_estimate(panel, Partition((1, 3), 6))
        with pytest.raises(NotTestableError, match="single period"):
            wald_slope_change(fe, 1)
        assert wald_slope_change(fe, 2).df == 1
        # FFE identifies single-period regimes
        assert wald_slope_change(ffe_estimate(panel, Partition((1, 3), 6)), 1).df == 1

    def test_pair_out_of_range(self, rng):
        fe = fe_estimate(random_panel(rng, N=30, T=6, p=1), Partition((3,), 6))
        with pytest.raises(NotTestableError):
            wald_slope_change(fe, 2)

    def test_intercept_dropped_from_fe_basis(self, rng):
        panel = random_panel(rng, N=50, T=6, p=3, intercept=True)
        names = panel.regressor_names
        res = wald_slope_change(fe_estimate(panel, Partition((3,), 6)), 1)
        assert res.basis == names[1:] and res.df == 2
        res = wald_slope_change(ffe_estimate(panel, Partition((3,), 6), "cluster"), 1)
        assert res.basis == names and res.df == 3

    def test_power(self):
        sim = generate_panel(DGPConfig(N=500, T=20, breaks=(6,), seed=4), 0)
        res = wald_slope_change(fe_estimate(sim.panel, sim.partition, "cluster"), 1)
        assert res.p_value < 1e-6


class TestGramWald:

    def test_scalar_matches_t_test(self, rng):
        panel = random_panel(rng, N=60, T=6, p=1)
        part = Partition((2,), 6)
        x = panel.x[:, :, 0]
        d = (x[:2] ** 2).mean(axis=0) - (x[2:] ** 2).mean(axis=0)
        t = stats.ttest_1samp(d, 0.0).statistic
        res = wald_gram_change(panel, part, 1)
        assert res.statistic == pytest.approx(t**2, rel=1e-10)
        assert res.kind == "gram" and res.basis == ("x1*x1",)

    def test_intercept_element_dropped(self, rng):
        panel = random_panel(rng, N=60, T=6, p=3, intercept=True)
        c = panel.regressor_names[0]
        res = wald_gram_change(panel, Partition((3,), 6), 1)
        assert res.df == 5 and f"{c}*{c}" not in res.basis

    def test_identical_moments_not_testable(self, rng):
        x = np.broadcast_to(rng.normal(size=(1, 20, 1)), (4, 20, 1))
        panel = PanelData(y=rng.normal(size=(4, 20)), x=np.array(x))
        with pytest.raises(NotTestableError):
            wald_gram_change(panel, Partition((2,), 4), 1)

    @pytest.mark.slow
    def test_size_and_power(self):
        null, alt = [], []
        for r in range(300):
            sim = generate_panel(DGPConfig(N=200, T=10, breaks=(5,), p=2, seed=21), r)
            null.append(wald_gram_change(sim.panel, sim.partition, 1).p_value < 0.05)
        x = sim.panel.x.copy()
        x[5:] *= 1.3
        alt = wald_gram_change(sim.panel.replace(x=x), sim.partition, 1)
        assert 0.02 <= np.mean(null) <= 0.08
        assert alt.p_value < 1e-4


class TestBonferroni:

    def _results(self, pvals):
        from panelcp.infer import WaldResult
        return [WaldResult(0.0, 1, p, (k + 1, k + 2), ("x",)) for k, p in enumerate(pvals)]

    def test_levels(self):
        rep = bonferroni_adjust(self._results([0.01, 0.02, 0.2]), alpha=0.05)
        assert rep.per_test_level == pytest.approx(0.05 / 3)
        assert rep.rejected == (True, False, False)
        assert rep.family_bound == 0.05

    def test_explicit_count(self):
        rep = bonferroni_adjust(self._results([0.02]), alpha=0.05, n_tests=2)
        assert rep.per_test_level == 0.025 and rep.rejected == (True,)

    def test_bad_input(self):
        with pytest.raises(ValueError):
            bonferroni_adjust(self._results([0.1]), alpha=1.5)
        with pytest.raises(ValueError):
            bonferroni_adjust([], alpha=0.05)

    @pytest.mark.slow
    def test_familywise_error(self):
        cfg = DGPConfig(N=200, T=12, breaks=(4, 8), beta=((0.5,),) * 3, seed=33)
        any_reject = []
        for r in range(300):
            sim = generate_panel(cfg, r)
            fe = fe_estimate(sim.panel, sim.partition, "cluster")
            rep = bonferroni_adjust([wald_slope_change(fe, j) for j in (1, 2)], alpha=0.05)
            any_reject.append(any(rep.rejected))
        assert np.mean(any_reject) <= 0.05 + 2 * np.sqrt(0.05 * 0.95 / 300)
