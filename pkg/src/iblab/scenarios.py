"""Built-in scenarios, the parameter sweep and the robustness probe."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .dist import ClassConditional, HybridMeasure, LabeledJoint, PointMass, UniformPiece, sample
from .ibcost import CostSpec, Threshold, evaluate
from .net import Layer, Network, NoiseSpec, forward, pwl_network

RED, BLACK = 0, 1


@dataclass(frozen=True)
class Scenario:
    name: str
    joint: LabeledJoint
    coordinate: int = 0
    doc: str = ""

    def __post_init__(self):
        if not 0 <= self.coordinate < self.joint.dim:
            raise ValueError("scalar coordinate outside the feature dimension")


def _two_class_points(red, black, masses=None):
    red, black = list(red), list(black)
    if masses is None:
        masses = [1.0] * (len(red) + len(black))
    mr, mb = masses[:len(red)], masses[len(red):]
    pr, pb = sum(mr), sum(mb)
    tot = pr + pb
    return LabeledJoint([
        ClassConditional(RED, pr / tot, HybridMeasure([PointMass((x,), m / pr) for x, m in zip(red, mr)])),
        ClassConditional(BLACK, pb / tot, HybridMeasure([PointMass((x,), m / pb) for x, m in zip(black, mb)])),
    ])


FIG1_POINTS = (0.3, 1.7, 3.1, 4.5)
FIG1_MASSES = (0.2, 0.4, 0.3, 0.1)
FIG1_DATASET_RED = (0.1, 0.15, 0.2, 0.5, 1.7, 1.8, 1.85, 1.9, 2.2, 2.3)
FIG1_DATASET_BLACK = (3.0, 3.1, 3.15, 3.3, 4.2, 4.3, 4.35, 4.4)
FIG1_PIECES = ((0.0, 1.0, 0.2), (1.5, 2.5, 0.4), (3.0, 3.5, 0.3), (4.0, 4.75, 0.1))


def fig1_scenario(kind: str = "discrete") -> Scenario:
    """One-dimensional two-class scenarios on [0, 5].

    ``discrete``: four weighted points; ``dataset``: eighteen equally
    weighted samples; ``continuous``: uniform intervals carrying the same
    masses as the discrete points.  Label 0 owns the two leftmost groups.
    """
    if kind == "discrete":
        joint = _two_class_points(FIG1_POINTS[:2], FIG1_POINTS[2:], list(FIG1_MASSES))
    elif kind == "dataset":
        joint = _two_class_points(FIG1_DATASET_RED, FIG1_DATASET_BLACK)
    elif kind == "continuous":
        red, black = FIG1_PIECES[:2], FIG1_PIECES[2:]
        pr, pb = sum(p[2] for p in red), sum(p[2] for p in black)
        joint = LabeledJoint([
            ClassConditional(RED, pr, HybridMeasure([], [UniformPiece((a,), (b,), m / pr) for a, b, m in red])),
            ClassConditional(BLACK, pb, HybridMeasure([], [UniformPiece((a,), (b,), m / pb) for a, b, m in black])),
        ])
    else:
        raise ValueError(f"unknown fig1 kind {kind!r}")
    return Scenario(f"fig1-{kind}", joint, 0, fig1_scenario.__doc__)


def fig1_network(a: float, b: float = 0.25, coordinate: int = 0, n_inputs: int = 1) -> Network:
    """relu(x - a) - relu(x - a - b) = clip(x - a, 0, b), reading ``x[coordinate]``."""
    if not b > 0:
        raise ValueError("ramp width b must be positive")
    W = np.zeros((n_inputs, 2))
    W[coordinate] = 1.0
    hidden = Layer(W, [-a, -a - b], "relu")
    return Network([hidden, Layer([[1.0], [-1.0]], [0.0], "identity")])


def grid_values(lo: float, hi: float, step: float) -> np.ndarray:
    if not step > 0 or hi < lo:
        raise ValueError("grid needs step > 0 and hi >= lo")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


@dataclass
class SweepResult:
    params: np.ndarray
    reports: list

    def __len__(self):
        return len(self.reports)

    @property
    def compression(self):
        return np.array([r.compression for r in self.reports])

    @property
    def precision(self):
        return np.array([r.precision for r in self.reports])

    @property
    def total(self):
        return np.array([r.total for r in self.reports])

    def rows(self):
        return list(zip(self.params, self.reports))


def sweep(scenario: Scenario, family: Callable[[float], Network], grid, spec: CostSpec = CostSpec(),
          seed: Optional[int] = None) -> SweepResult:
    """Evaluate ``spec`` for ``family(p)`` at every grid value ``p``.

    ``grid`` is ``(lo, hi, step)`` or an explicit increasing sequence.
    """
    params = grid_values(*grid) if len(grid) == 3 and not isinstance(grid, np.ndarray) else np.asarray(grid, float)
    if len(params) == 0:
        raise ValueError("empty grid")
    if np.any(np.diff(params) <= 0):
        raise ValueError("grid values must be strictly increasing")
    reports = [evaluate(scenario.joint, family(float(p)), spec, seed=seed) for p in params]
    return SweepResult(params, reports)


# --------------------------------------------------------------------------
# two-dimensional band scenario

FIG2_BANDS = ((1.0, 1.9), (2.5, 3.6), (4.2, 4.8), (5.9, 7.1))
FIG2_LABELS = (RED, BLACK, RED, BLACK)
FIG2_X2 = (0.0, 2.0)

FIG2_KNOTS = {
    "f1_disc": [(1.9, .2), (2.5, .6), (3.6, .6), (4.2, .4), (4.8, .4), (5.9, .8)],
    "f2_disc": [(1.9, .2), (2.5, .4), (3.6, .4), (4.2, .6), (4.8, .6), (5.9, .8)],
    # as f1_disc on the bands, with 0.01-wide ramps to the wrong side just outside them
    "f3_disc": [(0.99, .9), (1.0, .2), (1.9, .2), (1.91, .9), (2.49, .1), (2.5, .6), (3.6, .6),
                (3.61, .1), (4.19, .9), (4.2, .4), (4.8, .4), (4.81, .9), (5.89, .1), (5.9, .8),
                (7.1, .8), (7.11, .1)],
    "f1_cont": [(1.0, 0), (1.9, .25), (2.5, .5), (3.6, .75), (4.2, .25), (4.8, .5), (5.9, .75), (7.1, 1)],
    "f2_cont": [(1.0, 0), (1.9, .25), (2.5, .25), (3.6, .5), (4.2, .5), (4.8, .75), (5.9, .75), (7.1, 1)],
    "f3_cont": [(1.0, 0), (1.9, .125), (2.5, .75), (3.6, .875), (4.2, .125), (4.8, .25), (5.9, .875),
                (7.1, 1)],
}


def fig2_scenario():
    """Four X1-bands of probability 1/4, alternating labels; X2 is uninformative.

    Returns the scenario and a dict of scalar encoders that read X1 only.
    """
    classes = []
    for label in (RED, BLACK):
        bands = [b for b, l in zip(FIG2_BANDS, FIG2_LABELS) if l == label]
        pieces = [UniformPiece((lo, FIG2_X2[0]), (hi, FIG2_X2[1]), 1.0 / len(bands)) for lo, hi in bands]
        classes.append(ClassConditional(label, 0.5, HybridMeasure([], pieces)))
    scen = Scenario("fig2", LabeledJoint(classes), 0, fig2_scenario.__doc__)
    encoders = {name: pwl_network(knots, coordinate=0, n_inputs=2) for name, knots in FIG2_KNOTS.items()}
    return scen, encoders


# --------------------------------------------------------------------------
# robustness scenario

FIG3_EPS = 1e-10
FIG3_PROBE = (0.05, 0.45)


@dataclass(frozen=True)
class Fig3:
    scenario: Scenario
    f_I: Network
    f_II: Network
    thresholds: Dict[str, float] = field(default_factory=dict)
    probe: tuple = FIG3_PROBE


def fig3_scenario(eps: float = FIG3_EPS) -> Fig3:
    """Thin horizontal (label 0) and vertical (label 1) strips in the unit square.

    ``f_I = relu(x1 + x2)`` and ``f_II = relu(x2)``.  The strips overlap
    under ``f_I`` on an interval of length ``eps``, which costs O(eps) bits
    of precision; the default width keeps that below 1e-9.
    """
    if not 0 < eps < 0.5:
        raise ValueError("strip width must lie in (0, 0.5)")
    joint = LabeledJoint([
        ClassConditional(0, 0.5, HybridMeasure([], [UniformPiece((0.0, 0.0), (0.5, eps), 1.0)])),
        ClassConditional(1, 0.5, HybridMeasure([], [UniformPiece((0.0, 0.5), (eps, 1.0), 1.0)])),
    ])
    f_I = Network([Layer([[1.0], [1.0]], [0.0], "relu")])
    f_II = Network([Layer([[0.0], [1.0]], [0.0], "relu")])
    return Fig3(Scenario("fig3", joint, 1, fig3_scenario.__doc__), f_I, f_II,
                {"f_I": 0.5, "f_II": 0.25, "f_II_alt": 0.375})


# --------------------------------------------------------------------------


def robustness_probe(scenario: Scenario, encoder: Network, rule=Threshold(), noise: NoiseSpec = NoiseSpec(),
                     n: int = 100_000, seed: int = 0):
    """Monte-Carlo misclassification rate of ``rule(encoder(X + noise))``.

    Returns ``(rate, standard_error)``.  Noise is drawn independently per
    input coordinate.
    """
    if n < 1000:
        raise ValueError("n must be at least 1000")
    rng = np.random.default_rng(seed)
    data = sample(scenario.joint, n, int(rng.integers(2 ** 63)))
    X = data.X + (noise.draw(rng, data.X.shape) if noise.active else 0.0)
    pred = rule(forward(encoder, X, rng=rng).output)
    wrong = (pred != data.y).astype(float)
    rate = float(wrong.mean())
    return rate, float(math.sqrt(max(rate * (1 - rate), 0.0) / n))


SCENARIOS = {
    "fig1-discrete": lambda: fig1_scenario("discrete"),
    "fig1-dataset": lambda: fig1_scenario("dataset"),
    "fig1-continuous": lambda: fig1_scenario("continuous"),
    "fig2": lambda: fig2_scenario()[0],
    "fig3": lambda: fig3_scenario().scenario,
}
