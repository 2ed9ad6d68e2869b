import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from iblab.dist import HybridMeasure, PointMass, UniformPiece
from iblab.info import Pmf, entropy, mi_discrete, mi_input_representation, quantize_measure, renyi2
from iblab.net import Layer, Network, as_scalar_pwl, law_pushforward, pushforward
from iblab.scenarios import FIG1_PIECES, fig1_network

SETTINGS = settings(max_examples=60, deadline=None)

weights = st.lists(st.floats(0.01, 1.0), min_size=1, max_size=12)


def normalize(w):
    w = np.asarray(w, dtype=float)
    return w / w.sum()


@st.composite
def joint_tables(draw):
    """Random P(Y, L) as (priors, conditionals) over a shared atom set."""
    ny = draw(st.integers(2, 4))
    nl = draw(st.integers(1, 6))
    P = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=ny * nl, max_size=ny * nl))).reshape(ny, nl)
    P[:, 0] += 1e-3
    return P / P.sum()


def as_mi_joint(P, atoms=None):
    atoms = np.arange(P.shape[1], dtype=float) if atoms is None else np.asarray(atoms, dtype=float)
    out = []
    for k, row in enumerate(P):
        prior = row.sum()
        out.append((k, prior, Pmf(row / prior, atoms[:, None])))
    return out


def h(v):
    v = v[v > 0]
    return entropy(v / v.sum())


@st.composite
def interval_measures(draw):
    """Disjoint uniform pieces and points on [0, 5]."""
    n = draw(st.integers(1, 4))
    cuts = sorted(draw(st.lists(st.floats(0, 5), min_size=2 * n, max_size=2 * n, unique=True)))
    pieces = [UniformPiece((a,), (b,), 1.0) for a, b in zip(cuts[::2], cuts[1::2]) if b - a > 1e-3]
    pts = draw(st.lists(st.floats(0, 5), min_size=0 if pieces else 1, max_size=3))
    ms = normalize(draw(st.lists(st.floats(0.05, 1), min_size=len(pieces) + len(pts),
                                 max_size=len(pieces) + len(pts))))
    pieces = [UniformPiece(p.lo, p.hi, m) for p, m in zip(pieces, ms[:len(pieces)])]
    points = [PointMass((x,), m) for x, m in zip(pts, ms[len(pieces):])]
    return HybridMeasure(points, pieces)


class TestEntropyProperties:
    @SETTINGS
    @given(weights)
    def test_renyi_below_shannon(self, w):
        p = normalize(w)
        assert renyi2(p) <= entropy(p) + 1e-12

    @SETTINGS
    @given(st.integers(1, 64))
    def test_uniform_equality(self, n):
        p = np.full(n, 1.0 / n)
        assert math.isclose(renyi2(p), entropy(p), abs_tol=1e-12)
        assert math.isclose(entropy(p), math.log2(n), abs_tol=1e-12)

    @SETTINGS
    @given(weights)
    def test_entropy_bounds(self, w):
        p = normalize(w)
        assert -1e-12 <= entropy(p) <= math.log2(len(p)) + 1e-12


class TestMutualInformationProperties:
    @SETTINGS
    @given(joint_tables())
    def test_bounded_by_marginal_entropies(self, P):
        i = mi_discrete(as_mi_joint(P))
        assert -1e-12 <= i <= min(h(P.sum(1)), h(P.sum(0))) + 1e-12

    @SETTINGS
    @given(joint_tables(), st.randoms(use_true_random=False))
    def test_bijection_invariance(self, P, rnd):
        atoms = rnd.sample(range(1000), P.shape[1])
        assert math.isclose(mi_discrete(as_mi_joint(P)), mi_discrete(as_mi_joint(P, atoms)), abs_tol=1e-12)

    @SETTINGS
    @given(joint_tables(), st.data())
    def test_data_processing(self, P, data):
        kappa = data.draw(st.lists(st.integers(0, 2), min_size=P.shape[1], max_size=P.shape[1]))
        coarse = np.zeros((P.shape[0], 3))
        for l, c in enumerate(kappa):
            coarse[:, c] += P[:, l]
        assert mi_discrete(as_mi_joint(coarse)) <= mi_discrete(as_mi_joint(P)) + 1e-12

    @SETTINGS
    @given(weights, weights)
    def test_disjoint_supports_reach_label_entropy(self, w0, w1):
        p0, p1 = normalize(w0), normalize(w1)
        j = [(0, 0.3, Pmf(p0, np.arange(len(p0))[:, None])),
             (1, 0.7, Pmf(p1, 100 + np.arange(len(p1))[:, None]))]
        assert math.isclose(mi_discrete(j), entropy([0.3, 0.7]), abs_tol=1e-12)


class TestQuantizationProperties:
    @SETTINGS
    @given(interval_measures(), st.integers(1, 40))
    def test_masses_sum_to_one(self, mu, m):
        assert math.isclose(quantize_measure(mu, m).probs.sum(), 1.0, abs_tol=1e-12)

    @SETTINGS
    @given(interval_measures(), st.integers(1, 20), st.integers(2, 5))
    def test_refinement_never_decreases_entropy(self, mu, m, k):
        assert entropy(quantize_measure(mu, m * k)) >= entropy(quantize_measure(mu, m)) - 1e-12


class TestPushforwardProperties:
    @SETTINGS
    @given(interval_measures(), st.floats(-1, 6))
    def test_mass_conserved(self, mu, a):
        f = as_scalar_pwl(fig1_network(a), 0, (0, 5))
        assert math.isclose(pushforward(f, mu).total_mass, 1.0, abs_tol=1e-12)

    @SETTINGS
    @given(st.floats(-1, 6))
    def test_infinite_iff_ramp_meets_piece(self, a):
        mu = HybridMeasure([], [UniformPiece((lo,), (hi,), m) for lo, hi, m in FIG1_PIECES])
        f = as_scalar_pwl(fig1_network(a), 0, (0, 5))
        ramp = (a, a + 0.25)
        overlaps = any(min(hi, ramp[1]) - max(lo, ramp[0]) > 1e-12 for lo, hi, _ in FIG1_PIECES)
        assert math.isinf(mi_input_representation(mu, f)) == overlaps

    @SETTINGS
    @given(st.lists(st.floats(-1e-200, 1e-200), min_size=2, max_size=2), st.floats(-1, 1))
    def test_tiny_slopes_keep_mass(self, w, b):
        net = Network([Layer([[w[0]]], [b], "relu"), Layer([[w[1]]], [0.0])])
        f = as_scalar_pwl(net, 0, (0, 1))
        law = law_pushforward(f, HybridMeasure([], [UniformPiece((0,), (1,), 1.0)]).to_law())
        assert math.isclose(law.total_mass, 1.0, abs_tol=1e-12)

    # weights resolvable at the 1e-12 knot tolerance
    resolvable = st.one_of(st.just(0.0), st.floats(1e-3, 3), st.floats(-3, -1e-3))

    @SETTINGS
    @given(st.lists(resolvable, min_size=4, max_size=4), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
    def test_cdf_matches_forward(self, w, b):
        net = Network([Layer([w[:2]], b[:2], "leaky_relu:0.3"), Layer([[w[2]], [w[3]]], b[2:], "identity")])
        f = as_scalar_pwl(net, 0, (0, 1))
        law = law_pushforward(f, HybridMeasure([], [UniformPiece((0,), (1,), 1.0)]).to_law())
        x = (np.arange(4000) + 0.5) / 4000
        y = net(x[:, None])[:, 0]
        for level in np.quantile(y, [0.2, 0.5, 0.8]):
            assert abs(law.mass_above(level) - np.mean(y > level)) < 2e-3
