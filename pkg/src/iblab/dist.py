"""Exact hybrid discrete/continuous distributions of features and labels.

A :class:`HybridMeasure` is a finite mixture of point masses and uniform
densities on axis-aligned boxes.  A :class:`LabeledJoint` couples class
priors with one conditional measure per label.  One-dimensional
distributions that arise *inside* a network (where uniform densities may be
reshaped into polynomial ones) are carried by :class:`ScalarLaw`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .exceptions import ScenarioFormatError

MASS_TOL = 1e-12
# atoms closer than this are the same atom
MERGE_TOL = 1e-9
# segment endpoints closer than EDGE_TOL * max(1, |x|) coincide
EDGE_TOL = 1e-12
MAX_EXACT_DIM = 4


def edge_tol(x):
    return EDGE_TOL * max(1.0, abs(x))


@dataclass(frozen=True)
class PointMass:
    location: tuple
    mass: float

    def __post_init__(self):
        loc = tuple(float(v) for v in np.atleast_1d(self.location))
        object.__setattr__(self, "location", loc)
        if not all(math.isfinite(v) for v in loc):
            raise ValueError(f"non-finite point location {loc}")
        if not self.mass > 0:
            raise ValueError(f"point mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class UniformPiece:
    lo: tuple
    hi: tuple
    mass: float

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise ValueError("box bounds differ in dimension")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"box must have positive volume, got {lo} .. {hi}")
        if not all(math.isfinite(v) for v in lo + hi):
            raise ValueError("box bounds must be finite")
        if not self.mass > 0:
            raise ValueError(f"piece mass must be positive, got {self.mass}")

    @property
    def box(self):
        return list(zip(self.lo, self.hi))


def _merge_points(locs, masses):
    """Sum the masses of coincident locations (coordinates within MERGE_TOL)."""
    if len(masses) == 0:
        return locs, masses
    if locs.shape[1] == 1:
        order = np.argsort(locs[:, 0], kind="stable")
        locs, masses = locs[order], masses[order]
        new_group = np.empty(len(masses), dtype=bool)
        new_group[0] = True
        new_group[1:] = np.diff(locs[:, 0]) > MERGE_TOL
        starts = np.flatnonzero(new_group)
        return locs[starts], np.add.reduceat(masses, starts)
    keys = np.round(locs / MERGE_TOL).astype(np.int64) if np.abs(locs).max() < 1e9 else np.round(locs, 9)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    merged = np.zeros(len(first))
    np.add.at(merged, inverse.ravel(), masses)
    return locs[first], merged


class HybridMeasure:
    """Mixture of point masses and uniform box densities on R^N.

    Parameters
    ----------
    points : sequence of PointMass
    pieces : sequence of UniformPiece
    normalized : bool
        If True (default) the total mass must be 1 within ``MASS_TOL``.

    Coincident point masses are merged.  Boxes must be pairwise
    interior-disjoint; overlapping boxes are rejected, never split.
    """

    def __init__(self, points: Sequence[PointMass] = (), pieces: Sequence[UniformPiece] = (),
                 normalized: bool = True):
        points, pieces = list(points), list(pieces)
        dims = {len(p.location) for p in points} | {len(p.lo) for p in pieces}
        if not dims:
            raise ValueError("a measure needs at least one point or piece")
        if len(dims) > 1:
            raise ValueError(f"mixed dimensions {sorted(dims)}")
        self.dim = dims.pop()
        locs = np.array([p.location for p in points], dtype=float).reshape(-1, self.dim)
        pm = np.array([p.mass for p in points], dtype=float)
        self.point_locs, self.point_masses = _merge_points(locs, pm)
        self.piece_lo = np.array([p.lo for p in pieces], dtype=float).reshape(-1, self.dim)
        self.piece_hi = np.array([p.hi for p in pieces], dtype=float).reshape(-1, self.dim)
        self.piece_masses = np.array([p.mass for p in pieces], dtype=float)
        self._check_disjoint()
        if normalized and abs(self.total_mass - 1.0) > MASS_TOL:
            raise ValueError(f"total mass {self.total_mass!r} differs from 1")

    @classmethod
    def from_arrays(cls, point_locs=None, point_masses=None, piece_lo=None, piece_hi=None,
                    piece_masses=None, normalized=True):
        points = []
        if point_masses is not None and len(point_masses):
            locs = np.asarray(point_locs, dtype=float)
            locs = locs.reshape(len(point_masses), -1)
            points = [PointMass(tuple(l), float(m)) for l, m in zip(locs, point_masses)]
        pieces = []
        if piece_masses is not None and len(piece_masses):
            lo = np.asarray(piece_lo, dtype=float).reshape(len(piece_masses), -1)
            hi = np.asarray(piece_hi, dtype=float).reshape(len(piece_masses), -1)
            pieces = [UniformPiece(tuple(a), tuple(b), float(m))
                      for a, b, m in zip(lo, hi, piece_masses)]
        return cls(points, pieces, normalized=normalized)

    def _check_disjoint(self):
        k = len(self.piece_masses)
        if k < 2:
            return
        lo, hi = self.piece_lo, self.piece_hi
        overlap = np.minimum(hi[:, None, :], hi[None, :, :]) - np.maximum(lo[:, None, :], lo[None, :, :])
        scale = np.maximum(1.0, np.maximum(np.abs(lo[:, None, :]), np.abs(lo[None, :, :])))
        inner = np.all(overlap > EDGE_TOL * scale, axis=2)
        np.fill_diagonal(inner, False)
        if inner.any():
            i, j = np.argwhere(inner)[0]
            raise ValueError(f"uniform pieces {i} and {j} overlap")

    @property
    def points(self):
        return tuple(PointMass(tuple(l), float(m)) for l, m in zip(self.point_locs, self.point_masses))

    @property
    def pieces(self):
        return tuple(UniformPiece(tuple(a), tuple(b), float(m))
                     for a, b, m in zip(self.piece_lo, self.piece_hi, self.piece_masses))

    @property
    def total_mass(self):
        return float(self.point_masses.sum() + self.piece_masses.sum())

    @property
    def has_continuous(self):
        return len(self.piece_masses) > 0

    def bounds(self):
        """Axis-aligned bounding box of the support as ``(lo, hi)`` arrays."""
        lo = np.vstack([self.point_locs, self.piece_lo]).min(axis=0)
        hi = np.vstack([self.point_locs, self.piece_hi]).max(axis=0)
        return lo, hi

    def scaled(self, factor: float) -> "HybridMeasure":
        return HybridMeasure.from_arrays(self.point_locs, self.point_masses * factor,
                                         self.piece_lo, self.piece_hi, self.piece_masses * factor,
                                         normalized=False)

    def to_law(self, coordinate: int = 0) -> "ScalarLaw":
        """Marginal law of one coordinate (boxes project to uniform intervals)."""
        atoms = zip(self.point_locs[:, coordinate], self.point_masses)
        segs = [(a, b, Polynomial([m / (b - a)]))
                for a, b, m in zip(self.piece_lo[:, coordinate], self.piece_hi[:, coordinate],
                                   self.piece_masses)]
        return ScalarLaw(atoms, segs)

    def __repr__(self):
        return (f"HybridMeasure(dim={self.dim}, points={len(self.point_masses)}, "
                f"pieces={len(self.piece_masses)})")


def _mixture(measures: Iterable[HybridMeasure], weights: Iterable[float], normalized=True):
    points, pieces = [], []
    for mu, w in zip(measures, weights):
        points += [PointMass(p.location, p.mass * w) for p in mu.points]
        pieces += [UniformPiece(p.lo, p.hi, p.mass * w) for p in mu.pieces]
    return HybridMeasure(points, pieces, normalized=normalized)


@dataclass(frozen=True)
class ClassConditional:
    label: int
    prior: float
    conditional: HybridMeasure


class LabeledJoint:
    """Joint law of (X, Y): class priors and per-class conditional measures."""

    def __init__(self, classes: Iterable):
        classes = [c if isinstance(c, ClassConditional) else ClassConditional(int(c[0]), float(c[1]), c[2])
                   for c in classes]
        if not classes:
            raise ValueError("joint needs at least one class")
        labels = [c.label for c in classes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels {labels}")
        if any(not 0 < c.prior <= 1 + MASS_TOL for c in classes):
            raise ValueError("priors must lie in (0, 1]")
        total = sum(c.prior for c in classes)
        if abs(total - 1) > MASS_TOL:
            raise ValueError(f"priors sum to {total!r}, not 1")
        for c in classes:
            if abs(c.conditional.total_mass - 1) > MASS_TOL:
                raise ValueError(f"conditional of label {c.label} has mass {c.conditional.total_mass!r}")
        dims = {c.conditional.dim for c in classes}
        if len(dims) != 1:
            raise ValueError("class conditionals differ in dimension")
        self.dim = dims.pop()
        self.classes = tuple(sorted(classes, key=lambda c: c.label))

    @property
    def labels(self):
        return tuple(c.label for c in self.classes)

    @property
    def priors(self):
        return np.array([c.prior for c in self.classes])

    def __iter__(self) -> Iterator[ClassConditional]:
        return iter(self.classes)

    def __len__(self):
        return len(self.classes)

    def label_entropy(self):
        p = self.priors
        return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True)
class Dataset:
    """Finite sample of (feature vector, label) pairs, stored column-wise."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y).astype(int).ravel()
        if len(X) == 0 or len(X) != len(y):
            raise ValueError("dataset must be non-empty with one label per sample")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        return cls(np.array([np.atleast_1d(x) for x, _ in samples], dtype=float),
                   np.array([lab for _, lab in samples]))

    def __len__(self):
        return len(self.y)

    def __iter__(self):
        return zip(self.X, self.y)


def marginal(joint: LabeledJoint) -> HybridMeasure:
    """Prior-weighted mixture of the class conditionals."""
    return _mixture([c.conditional for c in joint], [c.prior for c in joint])


def sample(joint: LabeledJoint, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. pairs; class by prior, then component, then location."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    cls_idx = rng.choice(len(joint), size=n, p=joint.priors / joint.priors.sum())
    X = np.empty((n, joint.dim))
    y = np.empty(n, dtype=int)
    for k, c in enumerate(joint.classes):
        rows = np.flatnonzero(cls_idx == k)
        if len(rows) == 0:
            continue
        mu = c.conditional
        weights = np.concatenate([mu.point_masses, mu.piece_masses])
        comp = rng.choice(len(weights), size=len(rows), p=weights / weights.sum())
        n_pts = len(mu.point_masses)
        is_pt = comp < n_pts
        X[rows[is_pt]] = mu.point_locs[comp[is_pt]]
        box = comp[~is_pt] - n_pts
        u = rng.random((len(box), joint.dim))
        X[rows[~is_pt]] = mu.piece_lo[box] + u * (mu.piece_hi[box] - mu.piece_lo[box])
        y[rows] = c.label
    return Dataset(X, y)


def empirical_joint(data: Dataset) -> LabeledJoint:
    """Empirical law of a dataset; duplicate samples merge into heavier atoms."""
    n = len(data)
    classes = []
    for label in np.unique(data.y):
        Xc = data.X[data.y == label]
        prior = len(Xc) / n
        mu = HybridMeasure([PointMass(tuple(x), 1.0 / len(Xc)) for x in Xc])
        classes.append(ClassConditional(int(label), prior, mu))
    return LabeledJoint(classes)


# --------------------------------------------------------------------------
# one-dimensional laws with piecewise-polynomial densities


def _poly_mass(poly: Polynomial, lo: float, hi: float) -> float:
    anti = poly.integ()
    return float(anti(hi) - anti(lo))


class ScalarLaw:
    """Finite measure on the real line: atoms plus piecewise-polynomial density.

    Segments are kept canonical: sorted, pairwise disjoint, each carrying the
    summed density of everything that was placed on it.  The total mass is
    not forced to 1 so that sub-measures (single classes, single cells) can
    be represented.
    """

    def __init__(self, atoms: Iterable = (), segments: Iterable = ()):
        atoms = list(atoms)
        if atoms:
            locs = np.array([[float(a)] for a, _ in atoms])
            masses = np.array([float(m) for _, m in atoms])
            keep = masses > 0
            locs, masses = _merge_points(locs[keep], masses[keep])
            self.atom_locs, self.atom_masses = locs[:, 0], masses
        else:
            self.atom_locs, self.atom_masses = np.empty(0), np.empty(0)
        self.segments = self._canonical([(float(a), float(b), p if isinstance(p, Polynomial) else Polynomial(p))
                                         for a, b, p in segments])

    @staticmethod
    def _canonical(segs):
        segs = [s for s in segs if s[1] - s[0] > 0]
        if not segs:
            return ()
        cuts = sorted({x for a, b, _ in segs for x in (a, b)})
        snapped = [cuts[0]]
        for x in cuts[1:]:
            if x - snapped[-1] > edge_tol(x):
                snapped.append(x)
        # fold each input segment onto the snapped grid
        out = []
        for lo, hi in zip(snapped[:-1], snapped[1:]):
            mid = 0.5 * (lo + hi)
            polys = [p for a, b, p in segs if a - edge_tol(a) <= lo and hi <= b + edge_tol(b) and a < mid < b]
            if polys:
                total = polys[0]
                for p in polys[1:]:
                    total = total + p
                out.append((lo, hi, total))
        return tuple(out)

    @property
    def atom_mass(self):
        return float(self.atom_masses.sum())

    @property
    def continuous_mass(self):
        return float(sum(_poly_mass(p, a, b) for a, b, p in self.segments))

    @property
    def total_mass(self):
        return self.atom_mass + self.continuous_mass

    @property
    def has_continuous(self):
        return len(self.segments) > 0

    def knots(self):
        return sorted({x for a, b, _ in self.segments for x in (a, b)})

    def support(self):
        xs = list(self.atom_locs) + self.knots()
        return min(xs), max(xs)

    def scaled(self, factor):
        return ScalarLaw(zip(self.atom_locs, self.atom_masses * factor),
                         [(a, b, p * factor) for a, b, p in self.segments])

    def __add__(self, other: "ScalarLaw") -> "ScalarLaw":
        atoms = list(zip(self.atom_locs, self.atom_masses)) + list(zip(other.atom_locs, other.atom_masses))
        return ScalarLaw(atoms, list(self.segments) + list(other.segments))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b, p in self.segments:
            inside = (x >= a) & (x < b)
            out[inside] += p(x[inside])
        return out

    def cdf(self, x):
        """P(L <= x), vectorised over ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for loc, m in zip(self.atom_locs, self.atom_masses):
            out += m * (x >= loc)
        for a, b, p in self.segments:
            anti = p.integ()
            base = anti(a)
            xc = np.clip(x, a, b)
            out += anti(xc) - base
        return out

    def mass_above(self, level: float) -> float:
        """P(L > level)."""
        return float(self.total_mass - self.cdf(np.array([level]))[0])

    def interval_mass(self, lo: float, hi: float) -> float:
        """P(lo <= L < hi)."""
        atoms = self.atom_masses[(self.atom_locs >= lo) & (self.atom_locs < hi)].sum()
        cont = 0.0
        for a, b, p in self.segments:
            l, h = max(a, lo), min(b, hi)
            if h > l:
                cont += _poly_mass(p, l, h)
        return float(atoms + cont)

    def to_hybrid(self, normalized=True) -> HybridMeasure:
        """Convert to a 1-D HybridMeasure; densities must be piecewise constant."""
        pieces = []
        for a, b, p in self.segments:
            coef = p.coef
            scale = max(abs(coef[0]), 1e-300)
            if len(coef) > 1 and np.max(np.abs(coef[1:])) * max(abs(a), abs(b), 1.0) > 1e-9 * scale:
                raise ValueError("density is not piecewise constant")
            m = _poly_mass(p, a, b)
            if m > 0:
                pieces.append(UniformPiece((a,), (b,), m))
        points = [PointMass((x,), m) for x, m in zip(self.atom_locs, self.atom_masses)]
        return HybridMeasure(points, pieces, normalized=normalized)

    def __repr__(self):
        return f"ScalarLaw(atoms={len(self.atom_masses)}, segments={len(self.segments)})"


def box_projection_law(lo, hi, weights, bias, mass) -> ScalarLaw:
    """Law of ``weights . X + bias`` for X uniform on the box ``[lo, hi]``.

    The sum of independent uniforms has a spline density; it is assembled
    from the inclusion-exclusion form of the box/half-space volume.
    """
    lo, hi, w = (np.asarray(v, dtype=float) for v in (lo, hi, weights))
    active = w != 0
    shift = float(bias) + float(np.sum(np.minimum(w * lo, w * hi)))
    widths = np.abs(w[active]) * (hi[active] - lo[active])
    n = len(widths)
    if n == 0:
        return ScalarLaw([(shift, mass)])
    norm = mass / (math.factorial(n - 1) * float(np.prod(widths)))
    corners = []
    for r in range(n + 1):
        for subset in itertools.combinations(range(n), r):
            corners.append((float(sum(widths[list(subset)])), (-1) ** r))
    knots = sorted({c for c, _ in corners})
    snapped = [knots[0]]
    for k in knots[1:]:
        if k - snapped[-1] > edge_tol(k):
            snapped.append(k)
    segs = []
    for a, b in zip(snapped[:-1], snapped[1:]):
        poly = Polynomial([0.0])
        for c, sign in corners:
            if c <= a + edge_tol(a):
                poly = poly + sign * Polynomial([-c, 1.0]) ** (n - 1)
        segs.append((a + shift, b + shift, poly(Polynomial([-shift, 1.0])) * norm))
    return ScalarLaw((), segs)


# --------------------------------------------------------------------------
# scenario text format


def parse_scenario(text: str) -> LabeledJoint:
    """Parse ``point``/``box`` records into a LabeledJoint.

    Masses are joint masses P(X in component, Y = label); priors are their
    per-label sums.
    """
    dim = None
    per_label: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        try:
            nums = [float(t) for t in tok[1:-1]]
            label = int(tok[-1])
        except (ValueError, IndexError):
            raise ScenarioFormatError(f"cannot parse record {raw!r}", lineno) from None
        if kind == "point":
            rec_dim = len(nums) - 1
        elif kind == "box":
            if (len(nums) - 1) % 2:
                raise ScenarioFormatError("box record needs lo/hi pairs", lineno)
            rec_dim = (len(nums) - 1) // 2
        else:
            raise ScenarioFormatError(f"unknown record type {kind!r}", lineno)
        if rec_dim < 1:
            raise ScenarioFormatError("record has no coordinates", lineno)
        if dim is None:
            dim = rec_dim
        elif rec_dim != dim:
            raise ScenarioFormatError(f"record dimension {rec_dim} differs from {dim}", lineno)
        mass = nums[0]
        try:
            if kind == "point":
                rec = PointMass(tuple(nums[1:]), mass)
            else:
                rec = UniformPiece(tuple(nums[1::2]), tuple(nums[2::2]), mass)
        except ValueError as exc:
            raise ScenarioFormatError(str(exc), lineno) from None
        per_label.setdefault(label, []).append(rec)
    if dim is None:
        raise ScenarioFormatError("no records found")
    total = sum(r.mass for recs in per_label.values() for r in recs)
    if abs(total - 1) > 1e-9:
        raise ScenarioFormatError(f"masses sum to {total!r}, not 1")
    classes = []
    for label, recs in sorted(per_label.items()):
        prior = sum(r.mass for r in recs) / total
        pts = [PointMass(r.location, r.mass / (prior * total)) for r in recs if isinstance(r, PointMass)]
        pcs = [UniformPiece(r.lo, r.hi, r.mass / (prior * total)) for r in recs if isinstance(r, UniformPiece)]
        try:
            mu = HybridMeasure(pts, pcs)
        except ValueError as exc:
            raise ScenarioFormatError(str(exc)) from None
        classes.append(ClassConditional(label, prior, mu))
    return LabeledJoint(classes)


def read_scenario(path) -> LabeledJoint:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def format_scenario(joint: LabeledJoint) -> str:
    lines = []
    for c in joint:
        for p in c.conditional.points:
            coords = " ".join(repr(v) for v in p.location)
            lines.append(f"point {c.prior * p.mass!r} {coords} {c.label}")
        for p in c.conditional.pieces:
            coords = " ".join(f"{a!r} {b!r}" for a, b in zip(p.lo, p.hi))
            lines.append(f"box {c.prior * p.mass!r} {coords} {c.label}")
    return "\n".join(lines) + "\n"
