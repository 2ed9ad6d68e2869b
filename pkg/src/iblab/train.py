"""Gradient diagnostics, Monte-Carlo costs and SGD training of stochastic nets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from .dist import Dataset, LabeledJoint, sample
from .exceptions import Diverged, InfiniteCost, NonDifferentiable, StochasticLayer
from .ibcost import (CostReport, CostSpec, Threshold, draw_noisy_inputs, ib_noisy,
                     noisy_sample_terms, _prob_stats)
from .info import entropy, mi_table
from .net import Layer, Network, NoiseSpec, backward, flatten_grads, forward

DIVERGENCE_LIMIT = 1e6


def _cost_value(c) -> float:
    return float(c.total if isinstance(c, CostReport) else c)


def finite_diff_grad(costfn: Callable[[Network], object], net: Network, eps: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of ``costfn`` over the flat parameters.

    ``costfn`` returns a number or a :class:`CostReport` (its total is used).
    Any infinite probe raises :class:`InfiniteCost`.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    theta = net.flat_params()
    grad = np.empty_like(theta)
    for i in range(len(theta)):
        vals = []
        for sign in (1.0, -1.0):
            t = theta.copy()
            t[i] += sign * eps
            v = _cost_value(costfn(net.with_flat_params(t)))
            if not math.isfinite(v):
                raise InfiniteCost(f"cost is infinite at probe of parameter {i}")
            vals.append(v)
        grad[i] = (vals[0] - vals[1]) / (2 * eps)
    return grad


def mc_noisy_grad(joint: LabeledJoint, net: Network, eta: NoiseSpec, eta_prime: Optional[NoiseSpec] = None,
                  beta: float = 2.0, n: int = 100_000, seed: int = 0, eps: float = 1e-3):
    """Finite-difference gradient of the Monte-Carlo noisy cost with standard errors.

    The same inputs and noise draws are reused at every probe, so each
    sample contributes one differenced term and the spread of those terms
    gives the standard error.
    """
    eta_prime = eta if eta_prime is None else eta_prime
    X, y, e, ep = draw_noisy_inputs(joint, eta, eta_prime, n, seed)
    theta = net.flat_params()
    grad, se = np.empty_like(theta), np.empty_like(theta)
    for i in range(len(theta)):
        per = []
        for sign in (1.0, -1.0):
            t = theta.copy()
            t[i] += sign * eps
            comp, prec = noisy_sample_terms(joint, net.with_flat_params(t), eta, eta_prime, X, y, e, ep)
            per.append(comp - beta * prec)
        d = (per[0] - per[1]) / (2 * eps)
        grad[i] = d.mean()
        se[i] = d.std(ddof=1) / math.sqrt(n)
    return grad, se


def _split_noise(net: Network):
    """Deterministic encoder plus the noise on its output layer."""
    noisy = [i for i, l in enumerate(net.layers) if l.noise.active]
    if not noisy:
        return net, None
    if noisy != [len(net.layers) - 1]:
        raise StochasticLayer("Monte-Carlo noisy cost needs noise on the representation layer only")
    return net.without_noise(), net.layers[-1].noise


def mc_decision(joint: LabeledJoint, net: Network, rule=Threshold(), n: int = 100_000, seed: int = 0,
                n_inner: int = 16, beta: float = 2.0) -> CostReport:
    """Plug-in Monte-Carlo decision cost for a (possibly stochastic) network.

    The precision term is the plug-in I(Y;Y_hat) of the sampled table.  The
    compression term uses ``n_inner`` noise draws per input to estimate
    P(Y_hat | x); it is exact for deterministic networks.
    """
    rng = np.random.default_rng(seed)
    m = max(1, n // n_inner) if net.stochastic else n
    reps = n_inner if net.stochastic else 1
    data = sample(joint, m, int(rng.integers(2 ** 63)))
    X = np.repeat(data.X, reps, axis=0)
    pred = rule(forward(net, X, rng=rng).output).reshape(m, reps)
    labels = np.searchsorted(joint.labels, data.y)
    K = max(2, int(pred.max()) + 1)
    P = np.zeros((len(joint), K))
    np.add.at(P, (np.repeat(labels, reps), pred.ravel()), 1.0)
    P /= P.sum()
    freq = np.stack([(pred == k).mean(axis=1) for k in range(K)], axis=1)
    h_cond = np.mean([entropy(f) for f in freq])
    comp = max(float(entropy(P.sum(axis=0)) - h_cond), 0.0)
    return CostReport("decision-mc", beta, comp, mi_table(P))


def mc_cost(joint: LabeledJoint, net: Network, spec: CostSpec, n: int = 100_000, seed: int = 0) -> CostReport:
    """Monte-Carlo estimate of a noisy or probabilistic cost with standard errors.

    For ``noisy`` the noise of the network's last layer (if any) is used as
    both eta and eta'; otherwise ``spec.eta``/``spec.eta_prime`` are added
    to the deterministic output.
    """
    if n < 100:
        raise ValueError("n must be at least 100")
    if spec.variant == "noisy":
        enc, eta = _split_noise(net)
        eta_p = eta
        if eta is None:
            eta, eta_p = spec.eta, spec.eta_prime or spec.eta
        return ib_noisy(joint, enc, eta, eta_p, spec.beta, n_mc=n, seed=seed, method="mc")
    if spec.variant == "probabilistic":
        if net.stochastic:
            raise StochasticLayer("probabilistic Monte-Carlo cost evaluates a deterministic network")
        rng = np.random.default_rng(seed)
        data = sample(joint, n, int(rng.integers(2 ** 63)))
        stats = _prob_stats(forward(net, data.X).output)
        K = net.n_outputs
        p_hat = stats[:, :K].mean(axis=0)
        h_hat = entropy(p_hat / p_hat.sum())
        h_cond = stats[:, K]
        comp = h_hat - h_cond.mean()
        prec_terms = []
        for label in joint.labels:
            rows = data.y == label
            pm = stats[rows, :K].mean(axis=0)
            prec_terms.append(rows.mean() * entropy(pm / pm.sum()))
        prec = h_hat - math.fsum(prec_terms)
        return CostReport("probabilistic", spec.beta, comp, prec,
                          float(h_cond.std(ddof=1) / math.sqrt(n)), None)
    raise ValueError("mc_cost supports the noisy and probabilistic variants")


# --------------------------------------------------------------------------
# SGD on the cross-entropy surrogate


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings; none of the defaults are tuned beyond working on small scenarios."""

    steps: int = 5000
    lr: float = 0.5
    batch_size: int = 64
    n_noise: int = 1
    seed: int = 0
    cost: Union[str, CostSpec] = "cross_entropy"
    eval_every: int = 0
    eval_n: int = 20_000

    def __post_init__(self):
        for name in ("steps", "batch_size", "n_noise"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.cost != "cross_entropy":
            raise ValueError("only the cross-entropy surrogate is differentiable here")


@dataclass
class TrainTrace:
    loss: List[float] = field(default_factory=list)
    evals: List[tuple] = field(default_factory=list)  # (step, CostReport)

    def csv_lines(self):
        from .ibcost import format_info
        lines = ["step,loss,compression,precision,total"]
        ev = dict(self.evals)
        for step, loss in enumerate(self.loss, start=1):
            r = ev.get(step)
            tail = ",,," if r is None else (
                f",{format_info(r.compression)},{format_info(r.precision)},{format_info(r.total)}")
            lines.append(f"{step},{loss:.6f}" + tail)
        return lines


def _class_probs(out, labels_idx):
    """q(y | x) for the realised labels from a sigmoid scalar or a softmax vector."""
    if out.shape[1] == 1:
        p1 = out[:, 0]
        return np.where(labels_idx == 1, p1, 1 - p1)
    return out[np.arange(len(out)), labels_idx]


def cross_entropy_step(net: Network, X, labels_idx, rng):
    """Loss (bits) and flat pathwise gradient of the mean cross-entropy."""
    trace = forward(net, X, rng=rng)
    out = np.atleast_2d(trace.output)
    z = np.atleast_2d(trace.pre_activations[-1])
    # loss from the logits so that saturated outputs still report their true size
    if out.shape[1] == 1:
        nll = np.logaddexp(0.0, np.where(labels_idx == 1, -z[:, 0], z[:, 0]))
    else:
        nll = np.logaddexp.reduce(z, axis=1) - z[np.arange(len(z)), labels_idx]
    loss = float(nll.mean() / math.log(2))
    q = np.clip(_class_probs(out, labels_idx), 1e-300, None)
    up = np.zeros_like(out)
    scale = -1.0 / (len(X) * math.log(2))
    if out.shape[1] == 1:
        up[:, 0] = np.where(labels_idx == 1, scale / q, -scale / q)
    else:
        up[np.arange(len(X)), labels_idx] = scale / q
    return loss, flatten_grads(backward(net, trace, up))


def _check_trainable(net: Network):
    if any(l.activation.kind == "step" for l in net.layers):
        raise NonDifferentiable("network contains a step activation")
    last = net.layers[-1]
    if last.noise.active:
        raise ValueError("the output layer must be noiseless to define class probabilities")
    if last.n_out == 1 and last.activation.kind != "sigmoid":
        raise ValueError("scalar outputs must use a sigmoid activation")
    if last.n_out > 1 and last.activation.kind != "softmax":
        raise ValueError("vector outputs must use a softmax activation")


def train_sgd(data: Union[LabeledJoint, Dataset], net: Network, cfg: TrainConfig,
              rule=Threshold()):
    """Plain fixed-rate SGD on the cross-entropy surrogate.

    Minibatches are fresh draws from a joint or seeded uniform draws (with
    replacement) from a dataset.  Each input is repeated ``n_noise`` times
    with independent noise.  Returns the trained network and its trace.
    """
    _check_trainable(net)
    rng = np.random.default_rng(cfg.seed)
    if isinstance(data, LabeledJoint):
        labels = np.array(data.labels)
        draw = lambda: sample(data, cfg.batch_size, int(rng.integers(2 ** 63)))
        joint = data
    else:
        labels = np.unique(data.y)
        idx_all = np.arange(len(data))

        def draw():
            idx = rng.choice(idx_all, size=cfg.batch_size)
            return Dataset(data.X[idx], data.y[idx])
        joint = None
    if net.n_outputs == 1 and len(labels) != 2:
        raise ValueError("a scalar sigmoid output needs exactly two labels")
    theta = net.flat_params()
    trace = TrainTrace()
    for step in range(1, cfg.steps + 1):
        batch = draw()
        X = np.repeat(batch.X, cfg.n_noise, axis=0)
        yi = np.repeat(np.searchsorted(labels, batch.y), cfg.n_noise)
        loss, g = cross_entropy_step(net, X, yi, rng)
        if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT or not np.all(np.isfinite(g)):
            raise Diverged(f"loss {loss} at step {step}")
        trace.loss.append(loss)
        if cfg.lr:
            theta = theta - cfg.lr * g
            net = net.with_flat_params(theta)
        if cfg.eval_every and joint is not None and step % cfg.eval_every == 0:
            trace.evals.append((step, mc_decision(joint, net, rule, cfg.eval_n, cfg.seed + step)))
    return net, trace


def spread_init(X, hidden: int = 4, activation="leaky_relu:0.1", noise: NoiseSpec = NoiseSpec(),
                seed: int = 0, scale: float = 3.0) -> Network:
    """One-hidden-layer sigmoid classifier with data-spread kinks.

    Hidden units read the highest-variance input coordinate, with kinks at
    evenly spaced sample quantiles, alternating orientation and slope
    ``scale / std``.  Output weights are standard normal.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    rng = np.random.default_rng(seed)
    sd = X.std(axis=0)
    k = int(np.argmax(sd))
    kinks = np.quantile(X[:, k], (np.arange(hidden) + 0.5) / hidden)
    sign = np.where(np.arange(hidden) % 2, -1.0, 1.0)
    W0 = np.zeros((X.shape[1], hidden))
    W0[k] = sign * scale / max(sd[k], 1e-12)
    hid = Layer(W0, -W0[k] * kinks, activation, noise)
    out = Layer(rng.normal(0.0, 1.0, (hidden, 1)), [0.0], "sigmoid")
    return Network([hid, out])
