import math

import numpy as np
import pytest

from iblab.dist import ClassConditional, HybridMeasure, LabeledJoint, PointMass, UniformPiece
from iblab.exceptions import AbsoluteContinuityViolation, NonProbabilisticOutput, StochasticLayer
from iblab.ibcost import (CSV_HEADER, Argmax, CostReport, CostSpec, Threshold, decision_table, divergences,
                          evaluate, format_info, ib_decision, ib_noisy, ib_probabilistic, ib_quantized, ib_raw,
                          precision_bound_report, random_bound_trial, two_class_head)
from iblab.info import GridQuantizer, binary_entropy
from iblab.net import Layer, Network, NoiseSpec
from iblab.scenarios import fig1_network, fig1_scenario, fig2_scenario


@pytest.fixture(scope="module")
def fig2():
    return fig2_scenario()


def two_points():
    """Label 0 at x=0, label 1 at x=1, priors 1/2."""
    return LabeledJoint([ClassConditional(0, 0.5, HybridMeasure([PointMass((0.0,), 1.0)])),
                         ClassConditional(1, 0.5, HybridMeasure([PointMass((1.0,), 1.0)]))])


def constant_net(c=0.3, n_inputs=1):
    return Network([Layer(np.zeros((n_inputs, 1)), [c])])


class TestFormatting:
    @pytest.mark.parametrize("v,s", [(math.inf, "inf"), (0.7219280948873623, "0.721928"), (-1e-9, "0.000000"),
                                     (2.0, "2.000000"), (None, "")])
    def test_format_info(self, v, s):
        assert format_info(v) == s

    def test_total_absorbs_infinity(self):
        r = CostReport("raw", 2.0, math.inf, 1.0)
        assert r.total == math.inf and not r.finite
        assert r.csv_row() == "raw,2.0,inf,1.000000,inf,,"

    def test_header_fields_match_row(self):
        assert len(CSV_HEADER.split(",")) == len(CostReport("raw", 2.0, 1.0, 0.5).csv_row().split(","))


class TestRaw:
    def test_fig1_discrete(self):
        r = ib_raw(fig1_scenario("discrete").joint, fig1_network(3.1))
        np.testing.assert_allclose(r.compression, 0.468996, atol=1e-6)
        assert r.total == pytest.approx(r.compression - 2 * r.precision)

    def test_fig1_continuous_infinite(self):
        r = ib_raw(fig1_scenario("continuous").joint, fig1_network(2.0))
        assert r.total == math.inf

    def test_constant(self):
        r = ib_raw(fig1_scenario("continuous").joint, constant_net())
        assert (r.compression, r.precision, r.total) == (0.0, 0.0, 0.0)

    def test_beta_must_exceed_one(self):
        with pytest.raises(ValueError):
            ib_raw(two_points(), constant_net(), beta=1.0)

    def test_stochastic_rejected(self):
        net = Network([Layer([[1.0]], [0.0], "identity", NoiseSpec("gaussian", 0.1))])
        with pytest.raises(StochasticLayer):
            ib_raw(two_points(), net)

    def test_vector_output_atomic(self):
        net = Network([Layer([[1.0, -1.0]], [0.0, 1.0])])
        r = ib_raw(two_points(), net)
        assert (r.compression, r.precision) == (1.0, 1.0)

    def test_hidden_layer(self):
        # the hidden pair keeps all four points apart; the clipped output merges three
        j = fig1_scenario("discrete").joint
        hidden = ib_raw(j, fig1_network(1.0), layer=1)
        p = np.array([0.2, 0.4, 0.3, 0.1])
        np.testing.assert_allclose(hidden.compression, -(p * np.log2(p)).sum(), atol=1e-12)
        np.testing.assert_allclose(ib_raw(j, fig1_network(1.0)).compression, binary_entropy(0.2), atol=1e-12)


class TestDecision:
    def test_fig2_f1_cont(self, fig2):
        scen, enc = fig2
        r = ib_decision(scen.joint, enc["f1_cont"], Threshold(level=0.5))
        np.testing.assert_allclose([r.compression, r.precision], [1.0, 1.0], atol=1e-9)

    def test_fig2_f2_cont(self, fig2):
        scen, enc = fig2
        r = ib_decision(scen.joint, enc["f2_cont"], Threshold(level=0.5))
        np.testing.assert_allclose([r.compression, r.precision], [1.0, 0.0], atol=1e-9)

    def test_single_label_rule(self, fig2):
        scen, enc = fig2
        r = ib_decision(scen.joint, enc["f1_cont"], Threshold(level=10.0))
        assert (r.compression, r.precision) == (0.0, 0.0)

    def test_argmax_table(self):
        net = Network([Layer([[1.0, -1.0]], [0.0, 0.5])])
        j = fig1_scenario("continuous").joint
        P = decision_table(j, net, Argmax())
        # output 0 wins where x > 0.25; class 0 mass below 0.25 is 0.2 * 0.25 / 0.6
        np.testing.assert_allclose(P[0], [0.6 - 0.05, 0.05], atol=1e-12)
        np.testing.assert_allclose(P[1], [0.4, 0.0], atol=1e-12)

    def test_argmax_ties_lowest(self):
        assert Argmax()(np.array([[1.0, 1.0, 0.0]]))[0] == 0


class TestProbabilistic:
    def test_binary_channel(self):
        net = two_class_head(Network([Layer([[0.6]], [0.2])]))
        r = ib_probabilistic(two_points(), net)
        oracle = 1 - binary_entropy(0.2)
        np.testing.assert_allclose(r.precision, oracle, atol=1e-12)
        np.testing.assert_allclose(r.precision, 0.278072, atol=1e-6)
        # X determines Y here, so both terms coincide
        np.testing.assert_allclose(r.compression, oracle, atol=1e-12)

    def test_constant_probability(self):
        net = Network([Layer([[0.0, 0.0]], [1.0, 0.0])])
        r = ib_probabilistic(two_points(), net)
        assert (r.compression, r.precision) == (0.0, 0.0)

    def test_continuous_box_expectation(self):
        # q(x) = x on U[0,1] for label 1, q = 0 for label 0 at x=0
        j = LabeledJoint([ClassConditional(0, 0.5, HybridMeasure([PointMass((0.0,), 1.0)])),
                          ClassConditional(1, 0.5, HybridMeasure([], [UniformPiece((0,), (1,), 1.0)]))])
        r = ib_probabilistic(j, two_class_head(Network([Layer([[1.0]], [0.0])])))
        # E q = 1/4; E H_b(q) over U[0,1] for label 1 is 1/(2 ln 2)
        comp = binary_entropy(0.25) - 0.5 / (2 * math.log(2))
        prec = binary_entropy(0.25) - 0.5 * binary_entropy(0.5)
        np.testing.assert_allclose([r.compression, r.precision], [comp, prec], atol=1e-9)

    def test_non_probabilistic(self):
        with pytest.raises(NonProbabilisticOutput):
            ib_probabilistic(two_points(), Network([Layer([[1.0, 1.0]], [0.0, 0.0])]))

    def test_softmax_output(self):
        net = Network([Layer([[2.0, -2.0]], [0.0, 0.0], "softmax")])
        r = ib_probabilistic(two_points(), net)
        assert 0 < r.precision <= r.compression + 1e-12 <= 1 + 1e-12


class TestQuantized:
    def test_fig2_precision_ranking(self, fig2):
        scen, enc = fig2
        p1 = ib_quantized(scen.joint, enc["f1_disc"]).precision
        p2 = ib_quantized(scen.joint, enc["f2_disc"]).precision
        np.testing.assert_allclose(p1, 1.0, atol=1e-12)
        assert p1 > p2

    def test_fig2_compression_ranking(self, fig2):
        scen, enc = fig2
        c1 = ib_quantized(scen.joint, enc["f1_cont"], ql=GridQuantizer(4)).compression
        c3 = ib_quantized(scen.joint, enc["f3_cont"], ql=GridQuantizer(4)).compression
        np.testing.assert_allclose([c1, c3], [2.0, 1.0], atol=1e-12)
        assert c1 > c3

    def test_single_bin(self, fig2):
        scen, enc = fig2
        r = ib_quantized(scen.joint, enc["f1_cont"], ql=GridQuantizer(1, origin=-1.0))
        assert r.compression == 0.0

    def test_quantized_input(self):
        j = fig1_scenario("continuous").joint
        r = ib_quantized(j, Network([Layer([[1.0]], [0.0])]), qx=1, ql=1)
        # identical quantizers on identity: I = H(Q(X)) over cells {0, 1, 2, 3, 4}
        p = np.array([0.2, 0.2, 0.2, 0.3, 0.1])
        np.testing.assert_allclose(r.compression, -(p * np.log2(p)).sum(), atol=1e-12)


class TestNoisy:
    def test_small_noise_limit_exact(self):
        j = fig1_scenario("discrete").joint
        net = fig1_network(2.0)
        raw = ib_raw(j, net)
        r = ib_noisy(j, net, NoiseSpec("uniform", 1e-3), method="exact")
        np.testing.assert_allclose([r.compression, r.precision], [raw.compression, raw.precision], atol=1e-12)

    def test_small_noise_limit_mc(self):
        j = fig1_scenario("discrete").joint
        net = fig1_network(2.0)
        raw = ib_raw(j, net)
        r = ib_noisy(j, net, NoiseSpec("gaussian", 1e-4), n_mc=20_000, seed=3, method="mc")
        assert abs(r.compression - raw.compression) <= 3 * r.comp_se
        assert abs(r.precision - raw.precision) <= 3 * r.prec_se

    def test_constant_zero(self, fig2):
        scen, _ = fig2
        r = ib_noisy(scen.joint, constant_net(0.4, 2), NoiseSpec("gaussian", 0.1))
        assert r.compression == 0.0 and r.precision == 0.0

    def test_mc_reproducible(self):
        j = fig1_scenario("discrete").joint
        a = ib_noisy(j, fig1_network(1.0), NoiseSpec("gaussian", 0.1), n_mc=2000, seed=9, method="mc")
        b = ib_noisy(j, fig1_network(1.0), NoiseSpec("gaussian", 0.1), n_mc=2000, seed=9, method="mc")
        assert a == b

    def test_mc_agrees_with_exact(self):
        j = fig1_scenario("discrete").joint
        net = fig1_network(1.6)
        noise = NoiseSpec("gaussian", 0.1)
        ex = ib_noisy(j, net, noise, method="exact")
        mc = ib_noisy(j, net, noise, n_mc=50_000, seed=1, method="mc")
        assert abs(mc.compression - ex.compression) < 4 * mc.comp_se
        assert abs(mc.precision - ex.precision) < 4 * mc.prec_se

    def test_fig2_precision_ranking(self, fig2):
        scen, enc = fig2
        noise = NoiseSpec("uniform", 0.05)
        p1 = ib_noisy(scen.joint, enc["f1_cont"], noise).precision
        p2 = ib_noisy(scen.joint, enc["f2_cont"], noise).precision
        assert p1 > p2

    def test_requires_continuous_noise(self):
        with pytest.raises(ValueError):
            ib_noisy(two_points(), constant_net(), NoiseSpec())


class TestEvaluate:
    def test_dispatch(self):
        j = fig1_scenario("discrete").joint
        net = fig1_network(2.0)
        assert evaluate(j, net, CostSpec("raw")) == ib_raw(j, net)
        assert evaluate(j, net, CostSpec("decision")) == ib_decision(j, net)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            CostSpec("bogus")


class TestDivergences:
    def test_equal(self):
        kl, ce = divergences([0.3, 0.7], [0.3, 0.7])
        assert kl == 0.0
        np.testing.assert_allclose(ce, binary_entropy(0.3), atol=1e-15)

    def test_deterministic_vs_fair(self):
        np.testing.assert_allclose(divergences([1.0, 0.0], [0.5, 0.5]), [1.0, 1.0])

    def test_formula(self):
        kl, _ = divergences([0.75, 0.25], [0.5, 0.5])
        np.testing.assert_allclose(kl, 0.75 * math.log2(1.5) + 0.25 * math.log2(0.5), atol=1e-15)
        np.testing.assert_allclose(kl, 0.188722, atol=1e-6)

    def test_absolute_continuity(self):
        with pytest.raises(AbsoluteContinuityViolation):
            divergences([0.5, 0.5], [1.0, 0.0])


class TestBoundReport:
    def test_true_posterior_is_tight(self):
        P = np.array([[0.3, 0.1, 0.05], [0.05, 0.2, 0.3]])
        dec = np.array([0, 1, 1])
        P_YT = P @ np.eye(2)[dec]
        q = (P_YT / P_YT.sum(axis=0)).T
        r = precision_bound_report(P, dec, q)
        np.testing.assert_allclose(r.lower_bound, r.i_y_ytilde, atol=1e-12)
        assert r.violations() == []

    def test_deterministic_equality(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            r = precision_bound_report(*random_bound_trial(rng, True))
            np.testing.assert_allclose(r.cross_entropy_l, r.cross_entropy_ytilde, atol=1e-12)

    def test_stochastic_brute_force(self):
        # enumerate (y, l, t) outcomes directly
        rng = np.random.default_rng(1)
        P, D, q = random_bound_trial(rng, False)
        r = precision_bound_report(P, D, q)
        ce_l = ce_t = 0.0
        for y in range(P.shape[0]):
            for l in range(P.shape[1]):
                ce_l -= P[y, l] * math.log2(sum(D[l, t] * q[t, y] for t in range(q.shape[0])))
                for t in range(q.shape[0]):
                    ce_t -= P[y, l] * D[l, t] * math.log2(q[t, y])
        np.testing.assert_allclose([r.cross_entropy_l, r.cross_entropy_ytilde], [ce_l, ce_t], atol=1e-12)
        assert r.cross_entropy_l <= r.cross_entropy_ytilde + 1e-12
        assert r.i_y_l >= r.i_y_ytilde - 1e-12

    def test_stochastic_decoder_can_break_middle_link(self):
        d = 1e-9
        P = np.diag([0.5, 0.5])
        D = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
        q = np.array([[1 - d, d], [0.5, 0.5], [d, 1 - d]])
        r = precision_bound_report(P, D, q)
        np.testing.assert_allclose(r.i_y_ytilde, 0.5, atol=1e-12)
        np.testing.assert_allclose(r.lower_bound, 1 - math.log2(4 / 3), atol=1e-8)
        assert r.i_y_ytilde < r.lower_bound
        assert r.violations() == []

    def test_q_must_be_positive(self):
        with pytest.raises(AbsoluteContinuityViolation):
            precision_bound_report(np.diag([0.5, 0.5]), np.array([0, 1]), np.eye(2))
