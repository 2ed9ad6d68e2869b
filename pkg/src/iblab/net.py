"""Small feed-forward networks and their exact piecewise-linear analysis.

Layer ``i`` maps ``L_i`` to ``L_{i+1} = act(W_i^T L_i + b_{i+1}) + noise``;
weights are stored as ``(width_in, width_out)`` matrices so that a batch of
row vectors propagates as ``L @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import expit, softmax

from .dist import HybridMeasure, ScalarLaw, box_projection_law, edge_tol
from .exceptions import (MultivariateDependence, NonDifferentiable, ScenarioFormatError,
                         SmoothActivation, StochasticLayer, SupportOutsideDomain)

PWL_KINDS = ("identity", "relu", "leaky_relu", "step")
SMOOTH_KINDS = ("sigmoid", "tanh", "softplus", "softmax")


@dataclass(frozen=True)
class Activation:
    kind: str = "identity"
    slope: float = 0.01  # leaky_relu only

    def __post_init__(self):
        if self.kind not in PWL_KINDS + SMOOTH_KINDS:
            raise ValueError(f"unknown activation {self.kind!r}")
        if self.kind == "leaky_relu" and not 0 < self.slope < 1:
            raise ValueError("leaky_relu slope must lie in (0, 1)")

    @classmethod
    def parse(cls, token: str) -> "Activation":
        if isinstance(token, Activation):
            return token
        kind, _, arg = token.partition(":")
        return cls(kind, float(arg)) if arg else cls(kind)

    def __str__(self):
        return f"leaky_relu:{self.slope!r}" if self.kind == "leaky_relu" else self.kind

    @property
    def piecewise_linear(self):
        return self.kind in PWL_KINDS

    def __call__(self, z):
        k = self.kind
        if k == "identity":
            return z
        if k == "relu":
            return np.maximum(z, 0.0)
        if k == "leaky_relu":
            return np.where(z > 0, z, self.slope * z)
        if k == "step":
            return (z > 0).astype(float)
        if k == "sigmoid":
            return expit(z)
        if k == "tanh":
            return np.tanh(z)
        if k == "softplus":
            return np.logaddexp(0.0, z)
        return softmax(z, axis=-1)

    def backprop(self, z, out, grad):
        """Gradient w.r.t. the pre-activation ``z`` given ``grad`` w.r.t. output."""
        k = self.kind
        if k == "identity":
            return grad
        if k == "relu":
            # subgradient 0 at the kink
            return grad * (z > 0)
        if k == "leaky_relu":
            return grad * np.where(z > 0, 1.0, self.slope)
        if k == "step":
            raise NonDifferentiable("step activation has no useful gradient")
        if k == "sigmoid":
            return grad * out * (1 - out)
        if k == "tanh":
            return grad * (1 - out ** 2)
        if k == "softplus":
            return grad * expit(z)
        return out * (grad - np.sum(grad * out, axis=-1, keepdims=True))


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise on a layer's post-activation output.

    ``uniform`` has the given total width and is centred at zero;
    ``gaussian`` takes the standard deviation.
    """

    family: str = "none"
    param: float = 0.0

    def __post_init__(self):
        if self.family not in ("none", "uniform", "gaussian"):
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.family != "none" and not self.param > 0:
            raise ValueError("noise parameter must be positive")

    @property
    def active(self):
        return self.family != "none"

    def draw(self, rng, shape):
        if self.family == "uniform":
            return rng.uniform(-self.param / 2, self.param / 2, size=shape)
        if self.family == "gaussian":
            return rng.normal(0.0, self.param, size=shape)
        return np.zeros(shape)


NO_NOISE = NoiseSpec()


class Layer:
    def __init__(self, weights, biases, activation="identity", noise: NoiseSpec = NO_NOISE):
        W = np.array(weights, dtype=float, ndmin=2)
        b = np.array(biases, dtype=float).ravel()
        if W.shape[1] != len(b):
            raise ValueError(f"weights {W.shape} incompatible with {len(b)} biases")
        W.setflags(write=False)
        b.setflags(write=False)
        self.weights, self.biases = W, b
        self.activation = Activation.parse(activation)
        self.noise = noise

    @property
    def n_in(self):
        return self.weights.shape[0]

    @property
    def n_out(self):
        return self.weights.shape[1]

    def replace(self, **kw):
        args = dict(weights=self.weights, biases=self.biases, activation=self.activation, noise=self.noise)
        args.update(kw)
        return Layer(**args)

    def __repr__(self):
        return f"Layer({self.n_in}->{self.n_out}, {self.activation}, noise={self.noise.family})"


class Network:
    """Ordered stack of layers; treated as immutable."""

    def __init__(self, layers: Sequence[Layer]):
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer widths {a.n_out} and {b.n_in} do not chain")
        self.layers = tuple(layers)

    @property
    def n_inputs(self):
        return self.layers[0].n_in

    @property
    def n_outputs(self):
        return self.layers[-1].n_out

    @property
    def stochastic(self):
        return any(l.noise.active for l in self.layers)

    def truncated(self, layer: int) -> "Network":
        """Encoder of L_layer (the first ``layer`` layers)."""
        if not 1 <= layer <= len(self.layers):
            raise ValueError(f"layer index {layer} out of range")
        return Network(self.layers[:layer])

    def without_noise(self) -> "Network":
        return Network([l.replace(noise=NO_NOISE) for l in self.layers])

    def flat_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weights.ravel(), l.biases]) for l in self.layers])

    def with_flat_params(self, theta) -> "Network":
        theta = np.asarray(theta, dtype=float)
        layers, pos = [], 0
        for l in self.layers:
            nw = l.weights.size
            W = theta[pos:pos + nw].reshape(l.weights.shape)
            b = theta[pos + nw:pos + nw + l.n_out]
            pos += nw + l.n_out
            layers.append(l.replace(weights=W, biases=b))
        if pos != len(theta):
            raise ValueError("parameter vector has the wrong length")
        return Network(layers)

    def __call__(self, x, seed=None):
        return forward(self, x, seed).output

    def __repr__(self):
        return f"Network({', '.join(map(repr, self.layers))})"


@dataclass
class LayerTrace:
    """Per-layer values for one input (or a batch of inputs, row-wise)."""

    outputs: list
    pre_activations: list
    noise: list = field(default_factory=list)

    @property
    def output(self):
        return self.outputs[-1]


def forward(net: Network, x, seed: Optional[int] = None, rng=None) -> LayerTrace:
    """Propagate ``x`` (shape ``(N,)`` or ``(n, N)``) through ``net``.

    A seed (or generator) is required iff some layer is noisy.  Noise is drawn
    afresh per call, layer by layer.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    L = x[None, :] if single else x
    if L.shape[1] != net.n_inputs:
        raise ValueError(f"input width {L.shape[1]} does not match network input {net.n_inputs}")
    if net.stochastic and rng is None:
        if seed is None:
            raise ValueError("a seed is required for a stochastic network")
        rng = np.random.default_rng(seed)
    outs, pres, noises = [L], [], []
    for layer in net.layers:
        z = L @ layer.weights + layer.biases
        L = layer.activation(z)
        eps = layer.noise.draw(rng, L.shape) if layer.noise.active else None
        if eps is not None:
            L = L + eps
        pres.append(z)
        noises.append(eps)
        outs.append(L)
    if single:
        outs = [o[0] for o in outs]
        pres = [p[0] for p in pres]
        noises = [None if e is None else e[0] for e in noises]
    return LayerTrace(outs, pres, noises)


def backward(net: Network, trace: LayerTrace, upstream):
    """Gradients of ``sum(upstream * output)`` w.r.t. every weight and bias.

    Noise enters additively after the activation, so the realised draws in
    ``trace`` carry the pathwise (reparameterised) gradient.  Returns a list
    of ``(dW, db)`` pairs summed over the batch.
    """
    g = np.atleast_2d(np.asarray(upstream, dtype=float))
    grads = []
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        z = np.atleast_2d(trace.pre_activations[i])
        eps = trace.noise[i]
        out = np.atleast_2d(trace.outputs[i + 1] if eps is None else trace.outputs[i + 1] - eps)
        dz = layer.activation.backprop(z, out, g)
        inp = np.atleast_2d(trace.outputs[i])
        grads.append((inp.T @ dz, dz.sum(axis=0)))
        g = dz @ layer.weights.T
    return grads[::-1]


def grad_params(net: Network, x, upstream, seed: Optional[int] = None):
    """Pathwise gradient of <upstream, output> for one input (or a batch)."""
    if any(l.activation.kind == "step" for l in net.layers):
        raise NonDifferentiable("network contains a step activation")
    trace = forward(net, x, seed)
    return backward(net, trace, upstream)


def flatten_grads(grads) -> np.ndarray:
    return np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])


# --------------------------------------------------------------------------
# exact piecewise-linear analysis


class PiecewiseLinear:
    """Scalar piecewise-affine function on a closed interval.

    Segment ``j`` covers ``[edges[j], edges[j+1])`` (the last one is closed)
    with value ``slopes[j] * x + intercepts[j]``.  At interior edges the value
    is the one the generating network produces there, which matters only
    where a step activation makes the function jump.
    """

    def __init__(self, edges, slopes, intercepts, break_values=None):
        self.edges = np.asarray(edges, dtype=float)
        self.slopes = np.asarray(slopes, dtype=float)
        self.intercepts = np.asarray(intercepts, dtype=float)
        if len(self.edges) != len(self.slopes) + 1 or len(self.slopes) != len(self.intercepts):
            raise ValueError("edges must outnumber segments by one")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if break_values is None:
            inner = self.edges[1:-1]
            break_values = self.slopes[1:] * inner + self.intercepts[1:]
        self.break_values = np.asarray(break_values, dtype=float)

    @property
    def domain(self):
        return float(self.edges[0]), float(self.edges[-1])

    @property
    def breakpoints(self):
        return self.edges[1:-1]

    @property
    def n_segments(self):
        return len(self.slopes)

    @property
    def jumps(self):
        """Boolean flag per interior breakpoint: left and right limits differ."""
        x = self.breakpoints
        left = self.slopes[:-1] * x + self.intercepts[:-1]
        right = self.slopes[1:] * x + self.intercepts[1:]
        return np.abs(left - right) > 1e-12 * np.maximum(1.0, np.abs(left))

    def segment_index(self, x):
        idx = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(idx, 0, self.n_segments - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any((x < lo - edge_tol(lo)) | (x > hi + edge_tol(hi))):
            raise SupportOutsideDomain(f"evaluation outside domain [{lo}, {hi}]")
        idx = self.segment_index(x)
        val = self.slopes[idx] * x + self.intercepts[idx]
        inner = self.breakpoints
        if len(inner):
            pos = np.searchsorted(inner, x)
            pos_c = np.clip(pos, 0, len(inner) - 1)
            on_break = inner[pos_c] == x
            val = np.where(on_break, self.break_values[pos_c], val)
        return val

    def __repr__(self):
        return f"PiecewiseLinear(segments={self.n_segments}, domain={self.domain})"


def scalar_coordinate(net: Network) -> int:
    """The single input coordinate the network reads (0 for constant nets)."""
    rows = np.flatnonzero(np.any(net.layers[0].weights != 0, axis=1))
    if len(rows) > 1:
        raise MultivariateDependence(f"network reads input coordinates {rows.tolist()}")
    return int(rows[0]) if len(rows) else 0


def _check_exact(net: Network):
    for layer in net.layers:
        if layer.noise.active:
            raise StochasticLayer("exact analysis needs a deterministic network")
        if not layer.activation.piecewise_linear:
            raise SmoothActivation(f"activation {layer.activation.kind} is not piecewise linear")


def affine_partition(net: Network, coordinate: int, domain):
    """Split ``domain`` so that every output unit is affine in ``x[coordinate]``.

    Returns ``(edges, slopes, intercepts)`` with ``slopes``/``intercepts`` of
    shape ``(n_intervals, n_outputs)``.
    """
    _check_exact(net)
    if scalar_coordinate(net) != coordinate and np.any(net.layers[0].weights != 0):
        raise MultivariateDependence(f"network does not depend on coordinate {coordinate} alone")
    lo, hi = map(float, domain)
    if not hi > lo:
        raise ValueError("domain must have positive length")
    unit = np.zeros(net.n_inputs)
    unit[coordinate] = 1.0
    intervals = [(lo, hi, unit, np.zeros(net.n_inputs))]
    for layer in net.layers:
        W, b, act = layer.weights, layer.biases, layer.activation
        nxt = []
        for e0, e1, A, C in intervals:
            a = A @ W
            c = C @ W + b
            cuts = []
            if act.kind != "identity":
                nz = a != 0
                with np.errstate(over="ignore"):
                    # overflowing roots are +-inf and fall outside every interval
                    roots = -c[nz] / a[nz]
                cuts = sorted(r for r in roots if e0 + edge_tol(e0) < r < e1 - edge_tol(e1))
            pts = [e0]
            for r in cuts:
                if r - pts[-1] > edge_tol(r):
                    pts.append(r)
            pts.append(e1)
            for s0, s1 in zip(pts[:-1], pts[1:]):
                z_mid = a * (0.5 * (s0 + s1)) + c
                if act.kind == "identity":
                    a2, c2 = a, c
                elif act.kind == "relu":
                    on = z_mid > 0
                    a2, c2 = np.where(on, a, 0.0), np.where(on, c, 0.0)
                elif act.kind == "leaky_relu":
                    f = np.where(z_mid > 0, 1.0, act.slope)
                    a2, c2 = a * f, c * f
                else:
                    a2, c2 = np.zeros_like(a), (z_mid > 0).astype(float)
                nxt.append((s0, s1, a2, c2))
        intervals = nxt
    edges = np.array([iv[0] for iv in intervals] + [intervals[-1][1]])
    slopes = np.array([iv[2] for iv in intervals])
    intercepts = np.array([iv[3] for iv in intervals])
    return edges, slopes, intercepts


def as_scalar_pwl(net: Network, input_coordinate: int, domain) -> PiecewiseLinear:
    """Exact piecewise-linear form of a scalar-output network along one input."""
    if net.n_outputs != 1:
        raise ValueError("as_scalar_pwl needs a single output unit")
    edges, slopes, intercepts = affine_partition(net, input_coordinate, domain)
    slopes, intercepts = slopes[:, 0], intercepts[:, 0]
    keep = [0]
    for j in range(1, len(slopes)):
        i = keep[-1]
        scale = max(1.0, abs(intercepts[i]), abs(slopes[i]))
        if abs(slopes[j] - slopes[i]) > 1e-12 * scale or abs(intercepts[j] - intercepts[i]) > 1e-12 * scale:
            keep.append(j)
    new_edges = np.append(edges[keep], edges[-1])
    inner = new_edges[1:-1]
    probe = np.zeros((len(inner), net.n_inputs))
    probe[:, input_coordinate] = inner
    break_values = forward(net, probe).output[:, 0] if len(inner) else np.empty(0)
    return PiecewiseLinear(new_edges, slopes[keep], intercepts[keep], break_values)


def law_pushforward(f: PiecewiseLinear, law: ScalarLaw) -> ScalarLaw:
    """Exact law of ``f(L)``.

    Point masses move to ``f(location)``; densities are split at breakpoints,
    flat sub-segments collapse to atoms and sloped ones are affinely
    transported.
    """
    lo, hi = f.domain
    if len(law.atom_locs) or law.segments:
        s_lo, s_hi = law.support()
        if s_lo < lo - edge_tol(lo) or s_hi > hi + edge_tol(hi):
            raise SupportOutsideDomain(f"support [{s_lo}, {s_hi}] not inside [{lo}, {hi}]")
    atoms = list(zip(f(law.atom_locs), law.atom_masses)) if len(law.atom_locs) else []
    segs = []
    inner = f.breakpoints
    for a, b, p in law.segments:
        pts = [a] + [e for e in inner if a + edge_tol(a) < e < b - edge_tol(b)] + [b]
        for s0, s1 in zip(pts[:-1], pts[1:]):
            j = int(f.segment_index(0.5 * (s0 + s1)))
            s, c = f.slopes[j], f.intercepts[j]
            u0, u1 = sorted((s * s0 + c, s * s1 + c))
            # an image narrower than the knot tolerance is a point at this resolution
            if s == 0.0 or u1 - u0 <= edge_tol(u0):
                anti = p.integ()
                atoms.append((0.5 * (u0 + u1), float(anti(s1) - anti(s0))))
                continue
            q = p(Polynomial([-c / s, 1.0 / s])) / abs(s)
            segs.append((u0, u1, q))
    return ScalarLaw(atoms, segs)


def pushforward(f: PiecewiseLinear, mu: HybridMeasure) -> HybridMeasure:
    """Exact pushforward of a 1-D hybrid measure (result stays hybrid)."""
    if mu.dim != 1:
        raise ValueError("pushforward needs a one-dimensional measure")
    return law_pushforward(f, mu.to_law()).to_hybrid(normalized=False)


def activation_pwl(act: Activation, domain) -> PiecewiseLinear:
    unit = Network([Layer([[1.0]], [0.0], act)])
    return as_scalar_pwl(unit, 0, domain)


def output_law(net: Network, mu: HybridMeasure) -> ScalarLaw:
    """Exact law of the scalar output of a deterministic ``net`` under ``mu``.

    Point masses go through :func:`forward` (any activation).  Uniform boxes
    need either a network that reads a single input coordinate or a single
    affine unit followed by a piecewise-linear activation.
    """
    if net.stochastic:
        raise StochasticLayer("exact output law needs a deterministic network")
    if net.n_outputs != 1:
        raise ValueError("output law needs a single output unit")
    law = ScalarLaw()
    if len(mu.point_masses):
        vals = forward(net, mu.point_locs).output[:, 0]
        law = ScalarLaw(zip(vals, mu.point_masses))
    if not mu.has_continuous:
        return law
    _check_exact(net)
    try:
        k = scalar_coordinate(net)
    except MultivariateDependence:
        if len(net.layers) != 1:
            raise
        layer = net.layers[0]
        w, b = layer.weights[:, 0], layer.biases[0]
        z = ScalarLaw()
        for lo, hi, m in zip(mu.piece_lo, mu.piece_hi, mu.piece_masses):
            z = z + box_projection_law(lo, hi, w, b, m)
        return law + law_pushforward(activation_pwl(layer.activation, z.support()), z)
    cont = HybridMeasure.from_arrays(piece_lo=mu.piece_lo, piece_hi=mu.piece_hi,
                                     piece_masses=mu.piece_masses, normalized=False).to_law(k)
    f = as_scalar_pwl(net, k, cont.support())
    return law + law_pushforward(f, cont)


def pwl_network(knots, coordinate: int = 0, n_inputs: int = 1) -> Network:
    """ReLU network interpolating ``knots`` linearly, constant outside them."""
    xs = np.array([k[0] for k in knots], dtype=float)
    ys = np.array([k[1] for k in knots], dtype=float)
    if np.any(np.diff(xs) <= 0):
        raise ValueError("knot locations must be strictly increasing")
    slopes = np.diff(ys) / np.diff(xs)
    delta = np.diff(np.concatenate([[0.0], slopes, [0.0]]))
    W0 = np.zeros((n_inputs, len(xs)))
    W0[coordinate] = 1.0
    hidden = Layer(W0, -xs, "relu")
    out = Layer(delta[:, None], [ys[0]], "identity")
    return Network([hidden, out])


# --------------------------------------------------------------------------
# text serialisation


def format_network(net: Network) -> str:
    lines = []
    for l in net.layers:
        nums = " ".join(repr(float(v)) for v in np.concatenate([l.weights.ravel(), l.biases]))
        lines.append(f"layer {l.activation} {l.noise.family} {l.noise.param!r} {l.n_in} {l.n_out} {nums}")
    return "\n".join(lines) + "\n"


def parse_network(text: str) -> Network:
    layers = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] != "layer":
                raise ValueError(f"unknown record {tok[0]!r}")
            act = Activation.parse(tok[1])
            noise = NoiseSpec(tok[2], float(tok[3])) if tok[2] != "none" else NO_NOISE
            rows, cols = int(tok[4]), int(tok[5])
            vals = [float(t) for t in tok[6:]]
            if len(vals) != rows * cols + cols:
                raise ValueError(f"expected {rows * cols + cols} numbers, got {len(vals)}")
            W = np.array(vals[:rows * cols]).reshape(rows, cols)
            layers.append(Layer(W, vals[rows * cols:], act, noise))
        except (ValueError, IndexError) as exc:
            raise ScenarioFormatError(str(exc), lineno) from None
    try:
        return Network(layers)
    except ValueError as exc:
        raise ScenarioFormatError(str(exc)) from None
