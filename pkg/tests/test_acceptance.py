"""Acceptance gate: one test per criterion, each printed as PASS/FAIL in the summary."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from iblab.dist import HybridMeasure, UniformPiece, sample
from iblab.ibcost import Threshold, ib_decision, ib_raw, precision_bound_report, random_bound_trial
from iblab.info import dimension_slopes, quantized_mi
from iblab.net import Layer, Network, NoiseSpec, as_scalar_pwl, flatten_grads, grad_params, law_pushforward
from iblab.scenarios import (FIG1_DATASET_BLACK, FIG1_DATASET_RED, fig1_network, fig1_scenario, fig2_scenario,
                             fig3_scenario, robustness_probe, sweep)
from iblab.train import TrainConfig, finite_diff_grad, mc_decision, mc_noisy_grad, spread_init, train_sgd

DATA = Path(__file__).parent / "data"
GRID = (0.0, 5.0, 0.05)


def golden(name):
    table = np.loadtxt(DATA / name, delimiter=",", skiprows=1, ndmin=2)
    return table[:, 0], table[:, 1]


def key(a):
    return round(float(a), 6)


@pytest.fixture(scope="module")
def fig2():
    return fig2_scenario()


class TestAcceptance:
    def test_c01_discrete_golden_curve(self):
        """Discrete scenario sweep reproduces every golden plateau value (<= 1e-6, < 1 s)."""
        a, expected = golden("fig1e_discrete.csv")
        t0 = time.perf_counter()
        res = sweep(fig1_scenario("discrete"), fig1_network, GRID)
        elapsed = time.perf_counter() - t0
        np.testing.assert_allclose(res.params, a, atol=1e-12)
        np.testing.assert_allclose(res.compression, expected, atol=1e-6)
        plateaus = [0, 0.721928, 1.521928, 0.970951, 1.295462, 0.468996]
        assert all(np.any(np.abs(res.compression - v) < 1e-6) for v in plateaus)
        assert elapsed < 1.0

    def test_c02_dataset_golden_curve(self):
        """Dataset scenario reproduces the golden curve and its spot values (<= 1e-6, < 1 s)."""
        a, expected = golden("fig1f_dataset.csv")
        t0 = time.perf_counter()
        res = sweep(fig1_scenario("dataset"), fig1_network, GRID)
        elapsed = time.perf_counter() - t0
        np.testing.assert_allclose(res.compression, expected, atol=1e-6)
        got = dict(zip(map(key, res.params), res.compression))
        for p, v in [(0.0, 0.914183), (1.70, 1.679429), (2.10, 1.503258)]:
            assert abs(got[p] - v) <= 1e-6
        assert all(abs(v) <= 1e-6 for p, v in got.items() if p >= 4.40)
        assert elapsed < 1.0

    def test_c03_continuous_finite_windows(self):
        """Continuous scenario is finite exactly on the golden windows and infinite elsewhere."""
        a, expected = golden("fig1g_continuous.csv")
        finite = dict(zip(map(key, a), expected))
        res = sweep(fig1_scenario("continuous"), fig1_network, GRID)
        mismatches, n_inf = 0, 0
        for p, c in zip(res.params, res.compression):
            if key(p) in finite:
                mismatches += not (math.isfinite(c) and abs(c - finite[key(p)]) <= 1e-6)
            else:
                n_inf += 1
                mismatches += not math.isinf(c)
        assert n_inf == 77
        assert mismatches == 0
        assert set(np.round(expected, 6)) == {0.721928, 0.970951, 0.468996, 0.0}

    def test_c04_decision_rule_values(self, fig2):
        """Threshold decisions on the band scenario give the stated 1 / 1 / 1 / 0 bits (<= 1e-9)."""
        scen, enc = fig2
        good = ib_decision(scen.joint, enc["f1_cont"], Threshold(level=0.5))
        bad = ib_decision(scen.joint, enc["f2_cont"], Threshold(level=0.5))
        assert abs(good.compression - 1) <= 1e-9 and abs(bad.compression - 1) <= 1e-9
        assert abs(good.precision - 1) <= 1e-9
        assert abs(bad.precision) <= 1e-9

    def test_c05_equivalent_encoders_tie_then_separate(self, fig2):
        """Raw cost ties the two encoder pairs (<= 1e-9); the robustness probe separates them."""
        scen, enc = fig2
        r1, r2 = ib_raw(scen.joint, enc["f1_disc"]), ib_raw(scen.joint, enc["f2_disc"])
        assert abs(r1.compression - r2.compression) <= 1e-9 and abs(r1.precision - r2.precision) <= 1e-9
        f3 = fig3_scenario()
        rI, rII = ib_raw(f3.scenario.joint, f3.f_I), ib_raw(f3.scenario.joint, f3.f_II)
        assert rI.compression == rII.compression
        assert abs(rI.precision - rII.precision) <= 1e-9

        noise = NoiseSpec("gaussian", 0.05)
        p1 = robustness_probe(scen, enc["f1_disc"], Threshold(level=0.5), noise, 100_000, 0)
        p2 = robustness_probe(scen, enc["f2_disc"], Threshold(level=0.5), noise, 100_000, 0)
        assert p2[0] - p1[0] > 3 * math.hypot(p1[1], p2[1])
        uni = NoiseSpec("uniform", 0.2)
        pI = robustness_probe(f3.scenario, f3.f_I, Threshold(level=f3.thresholds["f_I"]), uni, 100_000, 0)
        pII = robustness_probe(f3.scenario, f3.f_II, Threshold(level=f3.thresholds["f_II"]), uni, 100_000, 0)
        assert pI[0] - pII[0] > 3 * math.hypot(pI[1], pII[1])

    def test_c06_piecewise_constancy(self):
        """Raw-cost gradients are exactly 0 at 20 plateau probes; the noisy surrogate's are > 10 SE."""
        j = fig1_scenario("dataset").joint
        eps = 1e-3
        # plateau boundaries are where a data point meets a ramp end
        xs = np.array(FIG1_DATASET_RED + FIG1_DATASET_BLACK)
        edges = np.r_[xs, xs - 0.25]
        mids = np.round(np.arange(0.025, 4.4, 0.05), 6)
        # a weight change of eps moves a ramp end by up to (a + b) eps
        interior = [a for a in mids if np.min(np.abs(edges - a)) >= max(2 * eps, 2 * (a + 0.25) * eps)]
        probes = [interior[i] for i in np.linspace(0, len(interior) - 1, 20).round().astype(int)]
        assert len(set(probes)) == 20
        for a in probes:
            g = finite_diff_grad(lambda n: ib_raw(j, n), fig1_network(a), eps)
            np.testing.assert_array_equal(g, 0.0)
            gn, se = mc_noisy_grad(j, fig1_network(a), NoiseSpec("gaussian", 0.1), n=100_000, seed=0, eps=eps)
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(gn != 0, np.abs(gn) / se, 0.0)
            assert np.max(z) > 10, f"noisy gradient not significant at a={a}"

    def test_c07_dimension_illustration(self):
        """Square slopes are exactly 2; net output slope within 0.1 of 1; quantized MI grows >= 0.9 bit/doubling."""
        square = HybridMeasure([], [UniformPiece((0, 0), (1, 1), 1.0)])
        rep = dimension_slopes(square, [2 ** k for k in range(1, 11)])
        np.testing.assert_allclose(rep.shannon, 2.0, atol=1e-12)
        np.testing.assert_allclose(rep.renyi2, 2.0, atol=1e-12)

        rng = np.random.default_rng(0)
        hidden = Layer(rng.normal(size=(1, 8)), rng.normal(size=8), "leaky_relu:0.1")
        raw = Network([hidden, Layer(rng.normal(size=(8, 1)), [0.0])])
        y = raw(np.linspace(0, 1, 10_001)[:, None])[:, 0]
        lo, span = y.min(), y.max() - y.min()
        out = raw.layers[1]
        net = Network([hidden, Layer(out.weights / span, (out.biases - lo) / span)])
        unit = HybridMeasure([], [UniformPiece((0,), (1,), 1.0)])
        law = law_pushforward(as_scalar_pwl(net, 0, (0, 1)), unit.to_law())
        assert abs(dimension_slopes(law, [1024]).renyi2[0] - 1) < 0.1
        mi = [quantized_mi(unit, net, 2 ** k, 2 ** k) for k in range(4, 11)]
        assert np.all(np.diff(mi) >= 0.9)

    def test_c08_bound_chain(self):
        """Zero bound-chain violations, deterministic equality and Jensen over 1000 trials each (< 30 s)."""
        t0 = time.perf_counter()
        rng = np.random.default_rng(8)
        bad = 0
        for _ in range(1000):
            rep = precision_bound_report(*random_bound_trial(rng, True))
            bad += bool(rep.violations(1e-9))
            bad += not (rep.i_y_l >= rep.i_y_ytilde - 1e-9 >= rep.lower_bound - 2e-9)
            bad += abs(rep.cross_entropy_l - rep.cross_entropy_ytilde) > 1e-9
        for _ in range(1000):
            rep = precision_bound_report(*random_bound_trial(rng, False))
            bad += bool(rep.violations(1e-9))
            bad += rep.cross_entropy_l > rep.cross_entropy_ytilde + 1e-9
        assert bad == 0
        assert time.perf_counter() - t0 < 30

    def test_c09_robustness_probes(self, fig2):
        """Noise probes rank the robust encoders first by more than 3 pooled SE at n = 1e5."""
        f3 = fig3_scenario()
        uni = NoiseSpec("uniform", 0.2)
        pI = robustness_probe(f3.scenario, f3.f_I, Threshold(level=f3.thresholds["f_I"]), uni, 100_000, 1)
        pII = robustness_probe(f3.scenario, f3.f_II, Threshold(level=f3.thresholds["f_II"]), uni, 100_000, 1)
        assert pI[0] - pII[0] > 3 * math.hypot(pI[1], pII[1])
        scen, enc = fig2
        gauss = NoiseSpec("gaussian", 0.05)
        p1 = robustness_probe(scen, enc["f1_disc"], Threshold(level=0.5), gauss, 100_000, 1)
        p3 = robustness_probe(scen, enc["f3_disc"], Threshold(level=0.5), gauss, 100_000, 1)
        assert p3[0] - p1[0] > 3 * math.hypot(p1[1], p3[1])

    def test_c10_training_reaches_precision(self, fig2):
        """Noisy-bottleneck SGD reaches I(Y;Y_hat) >= 0.99 bits in 5000 steps, seed-reproducibly (< 60 s)."""
        scen, _ = fig2
        t0 = time.perf_counter()
        cfg = TrainConfig(steps=5000, lr=0.2, batch_size=32, seed=11)

        def run():
            X0 = sample(scen.joint, 2000, 11).X
            net = spread_init(X0, 4, "leaky_relu:0.1", NoiseSpec("uniform", 0.05), seed=11)
            return train_sgd(scen.joint, net, cfg)
        net, trace = run()
        elapsed = time.perf_counter() - t0
        r = mc_decision(scen.joint, net, Threshold(level=0.5), n=100_000, seed=0)
        assert r.precision >= 0.99
        net2, trace2 = run()
        np.testing.assert_array_equal(net.flat_params(), net2.flat_params())
        assert trace.loss == trace2.loss
        assert elapsed < 60

    def test_c11_gradient_correctness(self):
        """Analytic gradients match central differences (eps 1e-5, rel <= 1e-4) on 50 smooth nets."""
        rng = np.random.default_rng(11)
        smooth = ["tanh", "sigmoid", "softplus"]
        worst = 0.0
        for _ in range(50):
            widths = [int(w) for w in rng.integers(1, 5, size=rng.integers(2, 5))]
            acts = [smooth[i] for i in rng.integers(0, 3, size=len(widths) - 1)]
            acts.append("softmax" if widths[-1] > 1 and rng.random() < 0.5 else smooth[rng.integers(0, 3)])
            layers = [Layer(rng.normal(size=(a, b)), rng.normal(size=b), act)
                      for a, b, act in zip(widths[:-1], widths[1:], acts)]
            net = Network(layers)
            x, up = rng.normal(size=widths[0]), rng.normal(size=widths[-1])
            g = flatten_grads(grad_params(net, x, up))
            th = net.flat_params()
            fd = np.empty_like(th)
            for i in range(len(th)):
                tp, tm = th.copy(), th.copy()
                tp[i] += 1e-5
                tm[i] -= 1e-5
                fd[i] = (up @ net.with_flat_params(tp)(x) - up @ net.with_flat_params(tm)(x)) / 2e-5
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
        assert worst <= 1e-4
