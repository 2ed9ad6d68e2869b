"""Information-bottleneck cost functions and their remedied variants.

Every function returns a :class:`CostReport` holding the compression term
I(X;L), the precision term I(Y;L) and ``total = compression - beta *
precision``.  Infinite compression makes the total infinite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate

from .dist import HybridMeasure, LabeledJoint, ScalarLaw, marginal, sample
from .exceptions import (AbsoluteContinuityViolation, MultivariateDependence, NonProbabilisticOutput,
                         StochasticLayer)
from .info import (INF, GridQuantizer, ThresholdQuantizer, _as_quantizer, entropy,
                   law_entropy, mi_laws, mi_table, noise_entropy, noisy_density, noisy_entropy,
                   quantized_mi)
from .net import (Layer, Network, NoiseSpec, affine_partition, forward, output_law,
                  scalar_coordinate)

EXACT_COMPONENT_LIMIT = 10_000


def format_info(v: Optional[float]) -> str:
    """CSV text for an information value: ``inf`` or six decimals."""
    if v is None:
        return ""
    if math.isinf(v):
        return "inf"
    if abs(v) < 5e-7:
        v = 0.0
    return f"{v:.6f}"


@dataclass(frozen=True)
class CostReport:
    variant: str
    beta: float
    compression: float
    precision: float
    comp_se: Optional[float] = None
    prec_se: Optional[float] = None

    @property
    def total(self) -> float:
        if math.isinf(self.compression):
            return INF
        return self.compression - self.beta * self.precision

    @property
    def finite(self):
        return not math.isinf(self.compression)

    def csv_row(self) -> str:
        return ",".join([self.variant, repr(float(self.beta)), format_info(self.compression),
                         format_info(self.precision), format_info(self.total),
                         format_info(self.comp_se), format_info(self.prec_se)])


CSV_HEADER = "variant,beta,compression,precision,total,comp_se,prec_se"


def _check_beta(beta):
    if not beta > 1:
        raise ValueError(f"beta must exceed 1, got {beta}")


# --------------------------------------------------------------------------
# decision rules


@dataclass(frozen=True)
class Threshold:
    """``Y_hat = 1[output[coordinate] > level]``."""

    coordinate: int = 0
    level: float = 0.5

    def __post_init__(self):
        if not math.isfinite(self.level):
            raise ValueError("threshold level must be finite")

    n_labels = 2

    def __call__(self, out):
        out = np.atleast_2d(out)
        return (out[:, self.coordinate] > self.level).astype(int)


@dataclass(frozen=True)
class Argmax:
    """Index of the largest output; ties go to the lowest index."""

    def __call__(self, out):
        return np.argmax(np.atleast_2d(out), axis=1)


DecisionRule = Union[Threshold, Argmax]


def _select_output(net: Network, coordinate: int) -> Network:
    last = net.layers[-1]
    if last.activation.kind == "softmax":
        raise ValueError("cannot select a single coordinate of a softmax layer")
    if not 0 <= coordinate < net.n_outputs:
        raise ValueError(f"output coordinate {coordinate} out of range")
    sel = last.replace(weights=last.weights[:, [coordinate]], biases=last.biases[[coordinate]])
    return Network(net.layers[:-1] + (sel,))


def _encoder(net: Network, layer: Optional[int]) -> Network:
    return net if layer is None else net.truncated(layer)


def class_laws(joint: LabeledJoint, net: Network):
    return [output_law(net, c.conditional) for c in joint]


# --------------------------------------------------------------------------
# the raw functional


def ib_raw(joint: LabeledJoint, net: Network, beta: float = 2.0, layer: Optional[int] = None) -> CostReport:
    """I(X;L) - beta I(Y;L) for a deterministic encoder.

    The compression term is H(L) when L is atomic and infinite as soon as
    L has a continuous component.
    """
    _check_beta(beta)
    enc = _encoder(net, layer)
    if enc.stochastic:
        raise StochasticLayer("the raw functional needs a deterministic encoder")
    if enc.n_outputs == 1:
        laws = class_laws(joint, enc)
        marg = ScalarLaw()
        for w, law in zip(joint.priors, laws):
            marg = marg + law.scaled(w)
        return CostReport("raw", beta, law_entropy(marg), mi_laws(joint.priors, laws))
    if any(c.conditional.has_continuous for c in joint):
        raise MultivariateDependence("vector representations are supported for atomic inputs only")
    rows, cols, masses = [], [], []
    for k, c in enumerate(joint):
        out = forward(enc, c.conditional.point_locs).output
        rows.append(np.full(len(out), k))
        cols.append(np.round(out / 1e-9).astype(np.int64))
        masses.append(c.prior * c.conditional.point_masses)
    cols = np.vstack(cols)
    masses = np.concatenate(masses)
    _, ci = np.unique(cols, axis=0, return_inverse=True)
    P = np.zeros((len(joint), ci.max() + 1))
    np.add.at(P, (np.concatenate(rows), ci.ravel()), masses)
    return CostReport("raw", beta, entropy(P.sum(axis=0)), mi_table(P))


# --------------------------------------------------------------------------
# decision-rule variant


def _argmax_table(joint: LabeledJoint, net: Network):
    """P[y, i] = P(Y=y, argmax output = i), exact for scalar-coordinate nets."""
    K = net.n_outputs
    P = np.zeros((len(joint), K))
    for k, c in enumerate(joint):
        mu = c.conditional
        if len(mu.point_masses):
            idx = Argmax()(forward(net, mu.point_locs).output)
            np.add.at(P[k], idx, c.prior * mu.point_masses)
        if not mu.has_continuous:
            continue
        coord = scalar_coordinate(net)
        law = HybridMeasure.from_arrays(piece_lo=mu.piece_lo, piece_hi=mu.piece_hi,
                                        piece_masses=mu.piece_masses, normalized=False).to_law(coord)
        lo, hi = law.support()
        edges, A, C = affine_partition(net, coord, (lo, hi))
        for e0, e1, a, cc in zip(edges[:-1], edges[1:], A, C):
            cuts = [e0, e1]
            for i in range(K):
                for j in range(i + 1, K):
                    da = a[i] - a[j]
                    if da != 0:
                        r = -(cc[i] - cc[j]) / da
                        if e0 < r < e1:
                            cuts.append(r)
            cuts = sorted(cuts)
            for s0, s1 in zip(cuts[:-1], cuts[1:]):
                if s1 <= s0:
                    continue
                mid = 0.5 * (s0 + s1)
                i = int(np.argmax(a * mid + cc))
                P[k, i] += c.prior * law.interval_mass(s0, s1)
    return P


def decision_table(joint: LabeledJoint, net: Network, rule: DecisionRule) -> np.ndarray:
    """Joint table P[y, y_hat] under a fixed decision rule."""
    if net.stochastic:
        raise StochasticLayer("decision tables need a deterministic network")
    if isinstance(rule, Argmax):
        return _argmax_table(joint, net)
    scalar = _select_output(net, rule.coordinate) if net.n_outputs > 1 else net
    P = np.zeros((len(joint), 2))
    for k, (c, law) in enumerate(zip(joint, class_laws(joint, scalar))):
        above = law.mass_above(rule.level)
        P[k] = c.prior * np.array([law.total_mass - above, above])
    return P


def ib_decision(joint: LabeledJoint, net: Network, rule: DecisionRule = Threshold(),
                beta: float = 2.0, layer: Optional[int] = None) -> CostReport:
    """Both terms evaluated on the discrete decision ``rule(L)``."""
    _check_beta(beta)
    P = decision_table(joint, _encoder(net, layer), rule)
    P = np.clip(P, 0.0, None)
    return CostReport("decision", beta, entropy(P.sum(axis=0) / P.sum()), mi_table(P / P.sum()))


# --------------------------------------------------------------------------
# probabilistic-output variant


def two_class_head(net: Network) -> Network:
    """Read a scalar output ``q`` in [0, 1] as the probability vector (1-q, q)."""
    if net.n_outputs != 1:
        raise ValueError("two_class_head expects a scalar output")
    return Network(net.layers + (Layer([[-1.0, 1.0]], [1.0, 0.0], "identity"),))


PROB_TOL = 1e-9


def _prob_stats(out):
    """Stack [p_1..p_K, H(p)] per row, after validating the probability vectors."""
    out = np.atleast_2d(out)
    if np.any(out < -PROB_TOL) or np.any(np.abs(out.sum(axis=1) - 1) > PROB_TOL):
        raise NonProbabilisticOutput("network output is not a probability vector")
    p = np.clip(out, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log2(p), 0.0).sum(axis=1)
    return np.hstack([p, h[:, None]])


def _box_expectation(net: Network, lo, hi):
    """E[(p, H(p))] for X uniform on a box, by adaptive quadrature."""
    try:
        k = scalar_coordinate(net)
    except MultivariateDependence:
        k = None
    if k is not None:
        base = 0.5 * (np.asarray(lo) + np.asarray(hi))

        def fn(t):
            x = base.copy()
            x[k] = t
            return _prob_stats(forward(net, x).output)[0]
        val, _ = integrate.quad_vec(fn, lo[k], hi[k], epsabs=1e-11, epsrel=1e-10, limit=400)
        return val / (hi[k] - lo[k])
    if len(lo) > 2:
        raise MultivariateDependence("probabilistic variant supports at most 2-D boxes for multivariate nets")
    vol = float(np.prod(np.asarray(hi) - np.asarray(lo)))

    def inner(t0):
        def fn(t1):
            return _prob_stats(forward(net, np.array([t0, t1])).output)[0]
        return integrate.quad_vec(fn, lo[1], hi[1], epsabs=1e-11, epsrel=1e-10)[0]
    if len(lo) == 1:
        return integrate.quad_vec(lambda t: _prob_stats(forward(net, np.array([t])).output)[0],
                                  lo[0], hi[0], epsabs=1e-11, epsrel=1e-10)[0] / vol
    return integrate.quad_vec(inner, lo[0], hi[0], epsabs=1e-11, epsrel=1e-10)[0] / vol


def probabilistic_stats(joint: LabeledJoint, net: Network):
    """Per class: E[p(X) | Y=y] and E[H(p(X)) | Y=y]."""
    K = net.n_outputs
    means, cond_h = [], []
    for c in joint:
        mu = c.conditional
        acc = np.zeros(K + 1)
        if len(mu.point_masses):
            acc += mu.point_masses @ _prob_stats(forward(net, mu.point_locs).output)
        for lo, hi, m in zip(mu.piece_lo, mu.piece_hi, mu.piece_masses):
            acc += m * _box_expectation(net, lo, hi)
        means.append(acc[:K])
        cond_h.append(acc[K])
    return np.array(means), np.array(cond_h)


def ib_probabilistic(joint: LabeledJoint, net: Network, beta: float = 2.0,
                     layer: Optional[int] = None) -> CostReport:
    """Y_hat drawn from the output probability vector.

    I(X;Y_hat) = H(Y_hat) - E H(p(X)) and I(Y;Y_hat) = H(Y_hat) -
    sum_y P(y) H(E[p(X) | y]).  Outputs must already be probability vectors.
    """
    _check_beta(beta)
    enc = _encoder(net, layer)
    if enc.stochastic:
        raise StochasticLayer("probabilistic variant evaluates a deterministic map to probabilities")
    means, cond_h = probabilistic_stats(joint, enc)
    w = joint.priors
    p_hat = w @ means
    h_hat = entropy(p_hat / p_hat.sum())
    comp = h_hat - float(w @ cond_h)
    prec = h_hat - math.fsum(wi * entropy(m / m.sum()) for wi, m in zip(w, means))
    return CostReport("probabilistic", beta, max(comp, 0.0), max(prec, 0.0))


# --------------------------------------------------------------------------
# quantized variant


def ib_quantized(joint: LabeledJoint, net: Network, qx=None, ql=GridQuantizer(4),
                 ql_prime=ThresholdQuantizer(0.5), beta: float = 2.0,
                 layer: Optional[int] = None) -> CostReport:
    """I(Q_X(X); Q_L(L)) - beta I(Y; Q'_L(L)).

    ``qx=None`` leaves X unquantized, which for a deterministic encoder
    reduces the compression term to H(Q_L(L)).  ``ql_prime=None`` uses L
    itself for the precision term.
    """
    _check_beta(beta)
    enc = _encoder(net, layer)
    comp = quantized_mi(marginal(joint), enc, qx, ql)
    laws = class_laws(joint, enc)
    ql_prime = _as_quantizer(ql_prime)
    if ql_prime is None:
        prec = mi_laws(joint.priors, laws)
    else:
        rows, cols, masses = [], [], []
        for k, (w, law) in enumerate(zip(joint.priors, laws)):
            keys, m = ql_prime.quantize_law(law)
            rows.append(np.full(len(m), k))
            cols.append(keys)
            masses.append(w * m)
        keys, inv = np.unique(np.concatenate(cols), return_inverse=True)
        P = np.zeros((len(joint), len(keys)))
        np.add.at(P, (np.concatenate(rows), inv), np.concatenate(masses))
        prec = mi_table(P)
    return CostReport("quantized", beta, comp, prec)


# --------------------------------------------------------------------------
# noisy variant


def _marginal_law(joint, laws):
    marg = ScalarLaw()
    for w, law in zip(joint.priors, laws):
        marg = marg + law.scaled(w)
    return marg


def noisy_sample_terms(joint: LabeledJoint, net: Network, eta: NoiseSpec, eta_prime: NoiseSpec,
                       X, y, e, e_prime):
    """Per-sample compression and precision terms of the noisy functional.

    ``e`` and ``e_prime`` are realized noise values for the two terms.  The
    means of the returned arrays estimate I(X;L+eta) and I(Y;L+eta').
    """
    laws = class_laws(joint, net)
    marg = _marginal_law(joint, laws)
    L = forward(net, X).output[:, 0]
    g = noisy_density(marg, eta)
    comp = -np.log2(g(L + e)) - noise_entropy(eta)
    gp = noisy_density(marg, eta_prime)
    u = L + e_prime
    log_g = np.log2(gp(u))
    log_gy = np.empty_like(u)
    for label, law in zip(joint.labels, laws):
        rows = y == label
        log_gy[rows] = np.log2(noisy_density(law, eta_prime)(u[rows]))
    return comp, log_gy - log_g


def draw_noisy_inputs(joint: LabeledJoint, eta: NoiseSpec, eta_prime: NoiseSpec, n: int, seed: int):
    rng = np.random.default_rng(seed)
    data = sample(joint, n, int(rng.integers(2 ** 63)))
    return data.X, data.y, eta.draw(rng, n), eta_prime.draw(rng, n)


def ib_noisy(joint: LabeledJoint, net: Network, eta: NoiseSpec, eta_prime: Optional[NoiseSpec] = None,
             beta: float = 2.0, n_mc: int = 100_000, seed: Optional[int] = None, method: str = "auto",
             layer: Optional[int] = None) -> CostReport:
    """I(X;L+eta) - beta I(Y;L+eta') with independent additive noise.

    Densities of L+eta are closed-form mixtures.  ``method='exact'``
    integrates their entropies deterministically (standard errors 0);
    ``'mc'`` averages log-densities over ``n_mc`` seeded draws of (x, noise).
    ``'auto'`` is exact when the law of L has at most 10^4 atoms.
    """
    _check_beta(beta)
    eta_prime = eta if eta_prime is None else eta_prime
    if not (eta.active and eta_prime.active):
        raise ValueError("noise must be absolutely continuous (uniform or gaussian)")
    enc = _encoder(net, layer)
    if enc.stochastic:
        raise StochasticLayer("noise is added by the cost; pass the deterministic encoder")
    if enc.n_outputs != 1:
        raise MultivariateDependence("noisy variant is implemented for scalar representations")
    laws = class_laws(joint, enc)
    marg = _marginal_law(joint, laws)
    if method == "auto":
        method = "exact" if len(marg.atom_locs) <= EXACT_COMPONENT_LIMIT else "mc"
    if method == "exact":
        comp = noisy_entropy(marg, eta) - noise_entropy(eta)
        prec = noisy_entropy(marg, eta_prime) - math.fsum(
            w * noisy_entropy(law, eta_prime) for w, law in zip(joint.priors, laws))
        return CostReport("noisy", beta, max(comp, 0.0), max(prec, 0.0), 0.0, 0.0)
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if seed is None:
        raise ValueError("a seed is required for the Monte-Carlo estimate")
    X, y, e, ep = draw_noisy_inputs(joint, eta, eta_prime, n_mc, seed)
    comp, prec = noisy_sample_terms(joint, enc, eta, eta_prime, X, y, e, ep)
    n = len(comp)
    return CostReport("noisy", beta, float(comp.mean()), float(prec.mean()),
                      float(comp.std(ddof=1) / math.sqrt(n)), float(prec.std(ddof=1) / math.sqrt(n)))


# --------------------------------------------------------------------------
# unified entry point


@dataclass(frozen=True)
class CostSpec:
    variant: str = "raw"
    beta: float = 2.0
    layer: Optional[int] = None
    rule: DecisionRule = field(default_factory=Threshold)
    qx: object = None
    ql: object = field(default_factory=lambda: GridQuantizer(4))
    ql_prime: object = field(default_factory=lambda: ThresholdQuantizer(0.5))
    eta: NoiseSpec = field(default_factory=lambda: NoiseSpec("uniform", 0.05))
    eta_prime: Optional[NoiseSpec] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown cost variant {self.variant!r}")
        _check_beta(self.beta)


VARIANTS = ("raw", "decision", "probabilistic", "quantized", "noisy")


def evaluate(joint: LabeledJoint, net: Network, spec: CostSpec, seed: Optional[int] = None,
             n_mc: int = 100_000) -> CostReport:
    v = spec.variant
    if v == "raw":
        return ib_raw(joint, net, spec.beta, spec.layer)
    if v == "decision":
        return ib_decision(joint, net, spec.rule, spec.beta, spec.layer)
    if v == "probabilistic":
        return ib_probabilistic(joint, net, spec.beta, spec.layer)
    if v == "quantized":
        return ib_quantized(joint, net, spec.qx, spec.ql, spec.ql_prime, spec.beta, spec.layer)
    return ib_noisy(joint, net, spec.eta, spec.eta_prime, spec.beta, n_mc=n_mc, seed=seed, layer=spec.layer)


# --------------------------------------------------------------------------
# divergences and the variational precision bound


def divergences(p, q):
    """(KL divergence, cross-entropy) of ``p`` from ``q`` in bits."""
    p = np.asarray(getattr(p, "probs", p), dtype=float)
    q = np.asarray(getattr(q, "probs", q), dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must share their atoms")
    pos = p > 0
    if np.any(q[pos] <= 0):
        raise AbsoluteContinuityViolation("q vanishes where p is positive")
    kl = math.fsum((p[pos] * np.log2(p[pos] / q[pos])).tolist())
    ce = math.fsum((-p[pos] * np.log2(q[pos])).tolist())
    return max(kl, 0.0), ce


@dataclass(frozen=True)
class BoundReport:
    i_y_l: float
    i_y_ytilde: float
    h_y: float
    cross_entropy_l: float
    cross_entropy_ytilde: float
    deterministic: bool

    @property
    def lower_bound(self):
        """H(Y) - C(P_{Y|L} || Q_{Y|L})."""
        return self.h_y - self.cross_entropy_l

    @property
    def lower_bound_ytilde(self):
        """H(Y) - C(P_{Y|Ytilde} || Q_{Y|Ytilde})."""
        return self.h_y - self.cross_entropy_ytilde

    @property
    def jensen_gap(self):
        return self.cross_entropy_ytilde - self.cross_entropy_l

    def violations(self, slack: float = 1e-9):
        """Names of the inequalities that fail by more than ``slack``.

        The middle link I(Y;Ytilde) >= lower_bound is only guaranteed for
        deterministic decoders and is checked only for them.
        """
        out = []
        if self.i_y_l < self.i_y_ytilde - slack:
            out.append("processing")
        if self.i_y_l < self.lower_bound - slack:
            out.append("variational_l")
        if self.i_y_ytilde < self.lower_bound_ytilde - slack:
            out.append("variational_ytilde")
        if self.jensen_gap < -slack:
            out.append("jensen")
        if self.deterministic:
            if self.i_y_ytilde < self.lower_bound - slack:
                out.append("chain")
            if abs(self.jensen_gap) > slack:
                out.append("equality")
        return out


def precision_bound_report(P_YL, decoder, q_rule) -> BoundReport:
    """Exact terms of the cross-entropy bound on I(Y;L).

    Parameters
    ----------
    P_YL : array (|Y|, |L|)
        Joint pmf of label and representation.
    decoder : array (|L|, |Ytilde|) or int array (|L|,)
        Row-stochastic P(Ytilde | L), or the decoded index per L atom.
    q_rule : array (|Ytilde|, |Y|)
        Strictly positive row-stochastic Q(Y | Ytilde).
    """
    P = np.asarray(P_YL, dtype=float)
    q = np.asarray(q_rule, dtype=float)
    D = np.asarray(decoder)
    deterministic = D.ndim == 1
    if deterministic:
        D = np.eye(q.shape[0])[D.astype(int)]
    D = D.astype(float)
    if np.any(q <= 0):
        raise AbsoluteContinuityViolation("q_rule must be strictly positive")
    P_YT = P @ D
    Q_YL = D @ q  # (|L|, |Y|): average of Q(y | ytilde) over P(ytilde | l)
    ce_l = math.fsum((-P[P > 0] * np.log2(Q_YL.T[P > 0])).tolist())
    ce_t = math.fsum((-P_YT[P_YT > 0] * np.log2(q.T[P_YT > 0])).tolist())
    return BoundReport(mi_table(P), mi_table(P_YT), entropy(P.sum(axis=1)), ce_l, ce_t, deterministic)


def random_bound_trial(rng, deterministic: bool, max_size: int = 5):
    """Random finite (P_YL, decoder, q_rule) triple for bound checks."""
    ny, nl, nt = rng.integers(2, max_size + 1, size=3)
    P = rng.dirichlet(np.ones(ny * nl)).reshape(ny, nl)
    dec = rng.integers(0, nt, size=nl) if deterministic else rng.dirichlet(np.ones(nt), size=nl)
    q = rng.dirichlet(np.ones(ny), size=nt)
    q = np.clip(q, 1e-6, None)
    q /= q.sum(axis=1, keepdims=True)
    return P, dec, q
