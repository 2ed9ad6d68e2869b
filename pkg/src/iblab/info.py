"""Entropies and mutual information over exact measures.

All logarithms are base 2.  Mutual information is returned as a float;
``math.inf`` stands for the infinite value that appears whenever a
deterministic representation has a continuous component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .dist import MERGE_TOL, HybridMeasure, ScalarLaw
from .exceptions import StochasticLayer, UnboundedSupport
from .net import Network, NoiseSpec, law_pushforward, output_law

INF = math.inf


def _fsum_xlogx(p):
    """Exactly rounded sum of -p log2 p (order independent)."""
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return math.fsum((-p * np.log2(p)).tolist())


@dataclass(frozen=True)
class Pmf:
    """Probability mass function over hashable atoms.

    ``atoms`` is an ``(n, d)`` array of atom coordinates (or integer cell
    indices); ``probs`` are the matching probabilities.
    """

    probs: np.ndarray
    atoms: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        atoms = self.atoms
        if atoms is None:
            atoms = np.arange(len(p))[:, None]
        atoms = np.asarray(atoms)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if len(atoms) != len(p):
            raise ValueError("one atom per probability required")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        keep = p > 0
        p, atoms = p[keep], atoms[keep]
        if abs(p.sum() - 1) > 1e-12 * max(1, len(p)):
            raise ValueError(f"probabilities sum to {p.sum()!r}")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "atoms", atoms)

    def __len__(self):
        return len(self.probs)


def _as_probs(p):
    return p.probs if isinstance(p, Pmf) else Pmf(p).probs


def entropy(p) -> float:
    """Shannon entropy in bits."""
    return max(_fsum_xlogx(_as_probs(p)), 0.0)


def renyi2(p) -> float:
    """Second-order Renyi (collision) entropy in bits."""
    q = _as_probs(p)
    return max(-math.log2(math.fsum((q * q).tolist())), 0.0)


def binary_entropy(p: float) -> float:
    return _fsum_xlogx([p, 1 - p])


# --------------------------------------------------------------------------
# quantizers


@dataclass(frozen=True)
class GridQuantizer:
    """``x -> floor(m (x - origin))``: cubes of side ``1/m``."""

    m: int
    origin: float = 0.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("resolution m must be a positive integer")

    def cell(self, x):
        # rounding guards against 0.7 * 10 = 7.000000000000001 style drift
        return np.floor(np.round(self.m * (np.asarray(x, dtype=float) - self.origin), 9)).astype(np.int64)

    def edge(self, z):
        return self.origin + np.asarray(z, dtype=float) / self.m

    def quantize_law(self, law: ScalarLaw):
        keys, masses = [], []
        if len(law.atom_locs):
            keys.append(self.cell(law.atom_locs))
            masses.append(law.atom_masses)
        if law.segments:
            cont = ScalarLaw((), law.segments)
            lo, hi = cont.support()
            z = np.arange(self.cell(lo), self.cell(hi) + 1)
            cdf = cont.cdf(self.edge(np.append(z, z[-1] + 1)))
            dm = np.diff(cdf)
            # cdf round-off would otherwise leave ~1e-16 masses in empty cells
            dm[np.abs(dm) < 1e-14 * cont.total_mass] = 0.0
            keys.append(z)
            masses.append(dm)
        return _collect(np.concatenate(keys), np.concatenate(masses))


@dataclass(frozen=True)
class ThresholdQuantizer:
    """Two bins: ``x <= level`` (0) and ``x > level`` (1)."""

    level: float = 0.5

    def cell(self, x):
        return (np.asarray(x, dtype=float) > self.level).astype(np.int64)

    def quantize_law(self, law: ScalarLaw):
        above = law.mass_above(self.level)
        return _collect(np.array([0, 1]), np.array([law.total_mass - above, above]))


QuantizerSpec = GridQuantizer


def _collect(keys, masses):
    keys = np.asarray(keys)
    masses = np.asarray(masses, dtype=float)
    keep = masses > 0
    keys, masses = keys[keep], masses[keep]
    if keys.ndim == 1:
        uniq, inv = np.unique(keys, return_inverse=True)
    else:
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    return uniq, np.bincount(inv.ravel(), weights=masses, minlength=len(uniq))


def _as_quantizer(q):
    if q is None or isinstance(q, (GridQuantizer, ThresholdQuantizer)):
        return q
    return GridQuantizer(int(q))


def _split_boxes(lo, hi, masses, q: GridQuantizer):
    """Cut boxes along the grid of ``q``; returns cell keys and sub-boxes."""
    keys, sub_lo, sub_hi, sub_m = [], [], [], []
    for a, b, m in zip(lo, hi, masses):
        axes_z, axes_lo, axes_hi, axes_f = [], [], [], []
        for aj, bj in zip(a, b):
            z = np.arange(q.cell(aj), q.cell(bj) + 1)
            l = np.maximum(q.edge(z), aj)
            h = np.minimum(q.edge(z + 1), bj)
            ok = h > l
            axes_z.append(z[ok])
            axes_lo.append(l[ok])
            axes_hi.append(h[ok])
            axes_f.append((h[ok] - l[ok]) / (bj - aj))
        grids = [np.meshgrid(*v, indexing="ij") for v in (axes_z, axes_lo, axes_hi, axes_f)]
        flat = [np.stack([g.ravel() for g in grid], axis=1) for grid in grids]
        keys.append(flat[0])
        sub_lo.append(flat[1])
        sub_hi.append(flat[2])
        sub_m.append(m * np.prod(flat[3], axis=1))
    return keys, sub_lo, sub_hi, sub_m


def quantize_measure(mu, q) -> Pmf:
    """Exact pmf of the grid-quantized variable.

    ``mu`` may be a :class:`HybridMeasure` (box/cube intersection volumes)
    or a one-dimensional :class:`ScalarLaw`.
    """
    q = _as_quantizer(q)
    if isinstance(mu, ScalarLaw):
        keys, masses = q.quantize_law(mu)
        return Pmf(masses / masses.sum(), keys)
    lo, hi = mu.bounds()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnboundedSupport("quantization needs bounded support")
    keys = [q.cell(mu.point_locs)] if len(mu.point_masses) else []
    masses = [mu.point_masses] if len(mu.point_masses) else []
    if mu.has_continuous:
        k, _, _, m = _split_boxes(mu.piece_lo, mu.piece_hi, mu.piece_masses, q)
        keys += k
        masses += m
    uniq, p = _collect(np.vstack(keys), np.concatenate(masses))
    return Pmf(p / p.sum(), uniq)


@dataclass(frozen=True)
class DimensionReport:
    rows: tuple  # (m, shannon_slope, renyi2_slope)

    @property
    def m(self):
        return np.array([r[0] for r in self.rows])

    @property
    def shannon(self):
        return np.array([r[1] for r in self.rows])

    @property
    def renyi2(self):
        return np.array([r[2] for r in self.rows])


def dimension_slopes(mu, m_list: Sequence[int]) -> DimensionReport:
    """Quantized entropies divided by ``log2 m`` for each resolution."""
    m_list = [int(m) for m in m_list]
    if any(m < 2 for m in m_list):
        raise ValueError("resolutions must be >= 2 (log m must be positive)")
    if any(b <= a for a, b in zip(m_list[:-1], m_list[1:])):
        raise ValueError("m_list must be increasing")
    rows = []
    for m in m_list:
        p = quantize_measure(mu, m)
        rows.append((m, entropy(p) / math.log2(m), renyi2(p) / math.log2(m)))
    return DimensionReport(tuple(rows))


# --------------------------------------------------------------------------
# mutual information


def mi_table(P) -> float:
    """I(A;B) in bits from a joint probability table ``P[a, b]``."""
    P = np.asarray(P, dtype=float)
    pa = P.sum(axis=1, keepdims=True)
    pb = P.sum(axis=0, keepdims=True)
    nz = P > 0
    terms = P[nz] * np.log2(P[nz] / (pa @ pb)[nz])
    return max(math.fsum(terms.tolist()), 0.0)


def _mi_sparse(rows, cols, masses) -> float:
    """I(A;B) from a sparse joint table given as parallel arrays."""
    masses = np.asarray(masses, dtype=float)
    keep = masses > 0
    rows, cols, masses = rows[keep], cols[keep], masses[keep]
    _, ri = np.unique(rows, axis=0, return_inverse=True) if np.ndim(rows) > 1 else np.unique(rows, return_inverse=True)
    _, ci = np.unique(cols, axis=0, return_inverse=True) if np.ndim(cols) > 1 else np.unique(cols, return_inverse=True)
    ri, ci = ri.ravel(), ci.ravel()
    pa = np.bincount(ri, weights=masses)
    pb = np.bincount(ci, weights=masses)
    terms = masses * np.log2(masses / (pa[ri] * pb[ci]))
    return max(math.fsum(terms.tolist()), 0.0)


def mi_discrete(joint) -> float:
    """I(Y;L) from ``[(label, prior, Pmf over L-atoms), ...]``."""
    rows, cols, masses = [], [], []
    for k, (_, prior, pmf) in enumerate(joint):
        rows.append(np.full(len(pmf), k))
        cols.append(np.asarray(pmf.atoms, dtype=float).reshape(len(pmf), -1))
        masses.append(prior * pmf.probs)
    cols = np.vstack(cols)
    merged = np.round(cols / MERGE_TOL) if np.abs(cols).max() < 1e6 else cols
    return _mi_sparse(np.concatenate(rows), merged, np.concatenate(masses))


def _is_constant(p: Polynomial, a, b):
    c = p.coef
    return len(c) == 1 or np.max(np.abs(c[1:])) * max(abs(a), abs(b), 1.0) <= 1e-12 * max(abs(c[0]), 1e-300)


def mi_laws(priors, laws: Sequence[ScalarLaw]) -> float:
    """I(Y;L) for class-conditional 1-D laws (atoms and densities).

    Atomic and absolutely continuous parts are mutually singular, so their
    contributions add.  Piecewise-constant densities are integrated exactly;
    other polynomial pieces by adaptive quadrature.
    """
    priors = np.asarray(priors, dtype=float)
    rows, cols, masses = [], [], []
    for k, (w, law) in enumerate(zip(priors, laws)):
        rows.append(np.full(len(law.atom_locs), k))
        cols.append(law.atom_locs)
        masses.append(w * law.atom_masses)
    terms = []
    if sum(len(c) for c in cols):
        locs = np.concatenate(cols)
        order = np.argsort(locs, kind="stable")
        group = np.cumsum(np.r_[True, np.diff(locs[order]) > MERGE_TOL])
        key = np.empty(len(locs), dtype=np.int64)
        key[order] = group
        r = np.concatenate(rows)
        m = np.concatenate(masses)
        pl = np.bincount(key, weights=m)
        keep = m > 0
        terms += (m[keep] * np.log2(m[keep] / (priors[r[keep]] * pl[key[keep]]))).tolist()
    knots = sorted({x for law in laws for x in law.knots()})
    for a, b in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (a + b)
        polys = []
        for k, law in enumerate(laws):
            for s0, s1, p in law.segments:
                if s0 <= mid < s1:
                    polys.append((k, p * priors[k]))
        if not polys:
            continue
        if all(_is_constant(p, a, b) for _, p in polys):
            g = np.array([p.coef[0] for _, p in polys])
            tot = g.sum()
            pr = priors[[k for k, _ in polys]]
            nz = g > 0
            terms += ((b - a) * g[nz] * np.log2(g[nz] / (pr[nz] * tot))).tolist()
            continue

        def integrand(u, polys=polys):
            g = np.array([p(u) for _, p in polys])
            tot = g.sum()
            out = 0.0
            for (k, _), gk in zip(polys, g):
                if gk > 0:
                    out += gk * math.log2(gk / (priors[k] * tot))
            return out

        val, _ = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-10, limit=200)
        terms.append(val)
    return max(math.fsum(terms), 0.0)


def law_entropy(law: ScalarLaw) -> float:
    """H(L) for an atomic law, ``inf`` when a continuous component exists."""
    if law.has_continuous:
        return INF
    return entropy(law.atom_masses / law.atom_masses.sum())


def mi_input_representation(mu_X, f, coordinate: int = 0) -> float:
    """I(X; f(X)) for deterministic ``f``: H(f(X)) or ``inf``.

    ``f`` is a :class:`PiecewiseLinear` acting on input coordinate
    ``coordinate`` or a deterministic :class:`Network`.
    """
    if isinstance(f, Network):
        law = output_law(f, mu_X)
    else:
        law = law_pushforward(f, mu_X.to_law(coordinate) if isinstance(mu_X, HybridMeasure) else mu_X)
    return law_entropy(law)


# --------------------------------------------------------------------------
# quantized mutual information


def _law_fn(f, mu: HybridMeasure, coordinate: int):
    """Callable mapping a sub-measure (as arrays) to the law of f on it."""
    if isinstance(f, Network):
        if f.stochastic:
            raise StochasticLayer("quantized MI needs a deterministic encoder")

        def fn(pl, pm, blo, bhi, bm):
            sub = HybridMeasure.from_arrays(pl, pm, blo, bhi, bm, normalized=False)
            return output_law(f, sub)
        return fn

    def fn(pl, pm, blo, bhi, bm):
        atoms = list(zip(pl[:, coordinate], pm)) if len(pm) else []
        segs = [(a[coordinate], b[coordinate], Polynomial([m / (b[coordinate] - a[coordinate])]))
                for a, b, m in zip(blo, bhi, bm)]
        return law_pushforward(f, ScalarLaw(atoms, segs))
    return fn


def quantized_joint(mu: HybridMeasure, f, qx, ql, coordinate: int = 0):
    """Sparse joint table of (Q_X(X), Q_L(f(X))) as ``(x_keys, l_keys, masses)``.

    ``qx=None`` keeps X unquantized; this is only allowed when the table is
    used for ``H(Q_L(L))``.
    """
    qx, ql = _as_quantizer(qx), _as_quantizer(ql)
    fn = _law_fn(f, mu, coordinate)
    cells: dict = {}
    empty = np.empty((0, mu.dim))
    if len(mu.point_masses):
        keys = qx.cell(mu.point_locs) if qx is not None else np.zeros_like(mu.point_locs, dtype=np.int64)
        for key, loc, m in zip(map(tuple, keys), mu.point_locs, mu.point_masses):
            cells.setdefault(key, [[], [], [], [], []])
            cells[key][0].append(loc)
            cells[key][1].append(m)
    if mu.has_continuous:
        if qx is None:
            parts = ([np.zeros_like(mu.piece_lo, dtype=np.int64)], [mu.piece_lo], [mu.piece_hi], [mu.piece_masses])
        else:
            parts = _split_boxes(mu.piece_lo, mu.piece_hi, mu.piece_masses, qx)
        for keys, lo, hi, ms in zip(*parts):
            for key, a, b, m in zip(map(tuple, keys), lo, hi, ms):
                cells.setdefault(key, [[], [], [], [], []])
                cells[key][2].append(a)
                cells[key][3].append(b)
                cells[key][4].append(m)
    xs, ls, ms = [], [], []
    for i, (key, (pl, pm, blo, bhi, bm)) in enumerate(sorted(cells.items())):
        law = fn(np.array(pl).reshape(-1, mu.dim) if pl else empty, np.array(pm),
                 np.array(blo).reshape(-1, mu.dim) if blo else empty,
                 np.array(bhi).reshape(-1, mu.dim) if bhi else empty, np.array(bm))
        if ql is None:
            if law.has_continuous:
                return None
            lk, lm = law.atom_locs, law.atom_masses
            lk = np.round(lk / MERGE_TOL).astype(np.int64)
        else:
            lk, lm = ql.quantize_law(law)
        xs.append(np.full(len(lm), i))
        ls.append(np.asarray(lk))
        ms.append(lm)
    return np.concatenate(xs), np.concatenate(ls), np.concatenate(ms)


def quantized_mi(mu: HybridMeasure, f, qx, ql, coordinate: int = 0) -> float:
    """I(Q_X(X); Q_L(f(X))); with ``qx=None`` this is H(Q_L(f(X)))."""
    table = quantized_joint(mu, f, qx, ql, coordinate)
    if table is None:
        return INF
    xs, ls, ms = table
    if _as_quantizer(qx) is None:
        _, p = _collect(ls, ms)
        return entropy(p / p.sum())
    return _mi_sparse(xs, ls, ms)


# --------------------------------------------------------------------------
# entropies of noise-perturbed representations

GH_NODES, GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(24)
GH_WEIGHTS = GH_WEIGHTS / GH_WEIGHTS.sum()


def noise_entropy(noise: NoiseSpec) -> float:
    """Differential entropy of the noise in bits."""
    if noise.family == "uniform":
        return math.log2(noise.param)
    if noise.family == "gaussian":
        return 0.5 * math.log2(2 * math.pi * math.e * noise.param ** 2)
    raise ValueError("noise entropy needs an absolutely continuous family")


def _discretized_atoms(law: ScalarLaw, sigma: float):
    """Atoms of ``law`` plus Gauss-Legendre atoms standing in for densities.

    Node spacing is kept well below ``sigma`` so that the Gaussian mixture
    matches the smoothed density closely.
    """
    locs, masses = [law.atom_locs], [law.atom_masses]
    for a, b, p in law.segments:
        n = int(min(4000, max(16, math.ceil(6 * (b - a) / sigma))))
        x, w = np.polynomial.legendre.leggauss(n)
        u = 0.5 * (b - a) * x + 0.5 * (a + b)
        locs.append(u)
        masses.append(0.5 * (b - a) * w * p(u))
    return np.concatenate(locs), np.concatenate(masses)


def _gauss_mixture_density(u, locs, masses, sigma, chunk=2048):
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    c = 1.0 / (sigma * math.sqrt(2 * math.pi))
    flat = u.ravel()
    res = out.ravel()
    for s in range(0, len(flat), chunk):
        d = (flat[s:s + chunk, None] - locs[None, :]) / sigma
        res[s:s + chunk] = c * (np.exp(-0.5 * d * d) @ masses)
    return res.reshape(u.shape)


def noisy_density(law: ScalarLaw, noise: NoiseSpec):
    """Density of ``L + noise`` as a vectorised callable."""
    if noise.family == "uniform":
        w = noise.param

        def g(u):
            u = np.asarray(u, dtype=float)
            return (law.cdf(u + w / 2) - law.cdf(u - w / 2)) / w
        return g
    if noise.family == "gaussian":
        locs, masses = _discretized_atoms(law, noise.param)
        return lambda u: _gauss_mixture_density(u, locs, masses, noise.param)
    raise ValueError("noisy density needs an absolutely continuous family")


def noisy_entropy(law: ScalarLaw, noise: NoiseSpec) -> float:
    """Differential entropy h(L + noise) in bits (law normalized to mass 1).

    Uniform noise on an atomic law gives a piecewise-constant density whose
    entropy is summed exactly; densities are integrated piece by piece.
    Gaussian noise uses a Gauss-Hermite rule per mixture component.
    """
    total = law.total_mass
    law = law.scaled(1.0 / total)
    if noise.family == "uniform":
        w = noise.param
        g = noisy_density(law, noise)
        cuts = np.unique(np.concatenate([law.atom_locs - w / 2, law.atom_locs + w / 2,
                                         np.array(law.knots()) - w / 2, np.array(law.knots()) + w / 2]))
        a, b = cuts[:-1], cuts[1:]
        if not law.has_continuous:
            gm = g(0.5 * (a + b))
            nz = gm > 0
            return -math.fsum(((b - a)[nz] * gm[nz] * np.log2(gm[nz])).tolist())
        terms = []
        for lo, hi in zip(a, b):
            def integrand(u):
                v = g(np.array([u]))[0]
                return -v * math.log2(v) if v > 0 else 0.0
            terms.append(integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-10, limit=200)[0])
        return math.fsum(terms)
    if noise.family == "gaussian":
        sigma = noise.param
        locs, masses = _discretized_atoms(law, sigma)
        keep = masses > 0
        locs, masses = locs[keep], masses[keep]
        u = locs[:, None] + sigma * GH_NODES[None, :]
        g = _gauss_mixture_density(u, locs, masses, sigma)
        return -float(masses @ (np.log2(g) @ GH_WEIGHTS))
    raise ValueError("noisy entropy needs an absolutely continuous family")
