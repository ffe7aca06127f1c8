"""Chain definitions, explicit sparse kernels, and distribution evolution.

Four step rules are supported, all parameterized by a total map f and a
nonzero additive offset gamma:

* ``lazy_hold``      stay put w.p. 1/2, else move to f(x) +/- gamma (1/4 each)
* ``noise_zero``     always move, to f(x) + e with e uniform on {-gamma, 0, gamma}
* ``pure_additive``  move to x +/- gamma (no map applied); the slow baseline
* ``non_lazy``       move to f(x) +/- gamma (1/2 each)

Kernels carry exact rational row probabilities; distribution evolution runs
either exactly (fractions) or in double precision backed by a cached sparse
matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .field import MapSpec, PrimeField, TotalMap, build_total_map, map_descriptor, parse_map

VARIANTS = ("lazy_hold", "noise_zero", "pure_additive", "non_lazy")

_HALF = Fraction(1, 2)
_QUARTER = Fraction(1, 4)
_THIRD = Fraction(1, 3)


class ModeMismatch(ValueError):
    """Exact-mode output was requested from a float-mode distribution."""


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """A fully resolved chain: field, step variant, offset, and map table."""

    ctx: PrimeField
    variant: str
    gamma: int
    fmap: TotalMap | None

    @property
    def p(self) -> int:
        return self.ctx.p


def make_chain(ctx: PrimeField, variant: str, gamma: int,
               map_spec: MapSpec | None = None) -> ChainSpec:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if gamma % ctx.p == 0:
        raise ValueError(f"gamma={gamma} vanishes mod {ctx.p}")
    fmap = None
    if variant != "pure_additive":
        if map_spec is None:
            raise ValueError(f"variant {variant!r} needs a map")
        fmap = build_total_map(map_spec, ctx)
    return ChainSpec(ctx, variant, gamma % ctx.p, fmap)


def step_branches(spec: ChainSpec, x: int) -> list[tuple[int, Fraction]]:
    """Unmerged transition branches from state x (used by kernels and sampling)."""
    p, g = spec.p, spec.gamma
    if spec.variant == "pure_additive":
        return [((x + g) % p, _HALF), ((x - g) % p, _HALF)]
    fx = int(spec.fmap.table[x])
    if spec.variant == "lazy_hold":
        return [(x, _HALF), ((fx + g) % p, _QUARTER), ((fx - g) % p, _QUARTER)]
    if spec.variant == "noise_zero":
        return [((fx - g) % p, _THIRD), (fx, _THIRD), ((fx + g) % p, _THIRD)]
    return [((fx + g) % p, _HALF), ((fx - g) % p, _HALF)]


def jump_targets(spec: ChainSpec, x: int) -> list[int]:
    """Positive-probability targets from x, excluding the lazy hold branch."""
    branches = step_branches(spec, x)
    if spec.variant == "lazy_hold":
        branches = branches[1:]
    return [t for t, _ in branches]


class TransitionKernel:
    """Row-sparse stochastic matrix with exact rational entries.

    ``labels`` maps row indices back to original field elements when the
    kernel is a restriction to a subset of states; it is None for kernels
    on all of Z/p.
    """

    def __init__(self, rows: Sequence[Sequence[tuple[int, Fraction]]],
                 labels: Sequence[int] | None = None):
        merged = []
        for i, row in enumerate(rows):
            acc: dict[int, Fraction] = {}
            for t, pr in row:
                acc[t] = acc.get(t, Fraction(0)) + Fraction(pr)
            if sum(acc.values()) != 1:
                raise ValueError(f"row {i} does not sum to 1")
            merged.append(tuple(sorted(acc.items())))
        self.rows: tuple[tuple[tuple[int, Fraction], ...], ...] = tuple(merged)
        self.n = len(self.rows)
        self.labels = tuple(labels) if labels is not None else None
        self._csr = None
        self._adj = None

    def csr(self) -> csr_matrix:
        """Float sparse form, cached."""
        if self._csr is None:
            r, c, v = [], [], []
            for i, row in enumerate(self.rows):
                for t, pr in row:
                    r.append(i)
                    c.append(t)
                    v.append(float(pr))
            self._csr = csr_matrix((v, (r, c)), shape=(self.n, self.n))
        return self._csr

    def adjacency(self) -> csr_matrix:
        """Boolean sparse form of the positive-probability digraph, cached."""
        if self._adj is None:
            r, c = [], []
            for i, row in enumerate(self.rows):
                for t, _ in row:
                    r.append(i)
                    c.append(t)
            data = np.ones(len(r), dtype=np.int8)
            self._adj = csr_matrix((data, (r, c)), shape=(self.n, self.n))
        return self._adj

    def column_sums(self) -> list[Fraction]:
        sums = [Fraction(0)] * self.n
        for row in self.rows:
            for t, pr in row:
                sums[t] += pr
        return sums

    def edge_count(self, subset: Iterable[int], complement: bool = False) -> int:
        """Number of non-loop edges from ``subset`` to its complement (or back)."""
        inside = np.zeros(self.n, dtype=bool)
        inside[list(subset)] = True
        count = 0
        for x in range(self.n):
            for t, _ in self.rows[x]:
                if t == x:
                    continue
                if (inside[x] and not inside[t]) if not complement else (not inside[x] and inside[t]):
                    count += 1
        return count

    def restrict(self, states: Iterable[int]) -> "TransitionKernel":
        """Kernel on a closed subset of states, reindexed to 0..m-1.

        Raises if any kept row has probability mass leaving ``states``: the
        restriction is only meaningful for unions of closed (recurrent)
        classes, where no renormalization is needed.
        """
        kept = sorted(set(states))
        index = {s: i for i, s in enumerate(kept)}
        rows = []
        for s in kept:
            new_row = []
            for t, pr in self.rows[s]:
                if t not in index:
                    raise ValueError(f"state {s} has escaping mass to {t}; subset not closed")
                new_row.append((index[t], pr))
            rows.append(new_row)
        orig = self.labels if self.labels is not None else range(self.n)
        labels = [orig[s] for s in kept]
        return TransitionKernel(rows, labels=labels)

    def lazy(self) -> "TransitionKernel":
        """The half-speed kernel (I + P)/2."""
        rows = []
        for x, row in enumerate(self.rows):
            new_row = [(t, pr * _HALF) for t, pr in row]
            new_row.append((x, _HALF))
            rows.append(new_row)
        return TransitionKernel(rows, labels=self.labels)


def build_kernel(spec: ChainSpec) -> TransitionKernel:
    return TransitionKernel([step_branches(spec, x) for x in range(spec.p)])


# --- distributions ------------------------------------------------------------

_FLOAT_SUM_TOL = 1e-9


class Distribution:
    """A probability vector, exact (fractions) or float-backed."""

    __slots__ = ("weights", "mode")

    def __init__(self, weights, mode: str | None = None):
        if mode is None:
            mode = "float" if isinstance(weights, np.ndarray) else "exact"
        if mode == "exact":
            w = tuple(Fraction(v) for v in weights)
            if any(v < 0 for v in w):
                raise ValueError("negative weight")
            if sum(w) != 1:
                raise ValueError("exact weights must sum to exactly 1")
            self.weights: tuple[Fraction, ...] | np.ndarray = w
        elif mode == "float":
            w = np.asarray(weights, dtype=np.float64)
            if (w < 0).any():
                raise ValueError("negative weight")
            if abs(w.sum() - 1.0) > _FLOAT_SUM_TOL:
                raise ValueError(f"float weights sum to {w.sum()}, outside tolerance")
            self.weights = w / w.sum()
        else:
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, i: int):
        return self.weights[i]

    def support(self) -> list[int]:
        return [i for i, w in enumerate(self.weights) if w > 0]

    def to_float(self) -> "Distribution":
        if self.mode == "float":
            return self
        return Distribution(np.array([float(w) for w in self.weights]), mode="float")

    @staticmethod
    def point_mass(n: int, x: int) -> "Distribution":
        w = [Fraction(0)] * n
        w[x] = Fraction(1)
        return Distribution(w, mode="exact")

    @staticmethod
    def uniform(n: int) -> "Distribution":
        return Distribution([Fraction(1, n)] * n, mode="exact")


def step_distribution(kernel: TransitionKernel, dist: Distribution,
                      require_exact: bool = False) -> Distribution:
    """One application of the kernel: dist -> dist . P."""
    if len(dist) != kernel.n:
        raise ValueError("distribution length does not match kernel")
    if dist.mode == "exact":
        out = [Fraction(0)] * kernel.n
        for x, w in enumerate(dist.weights):
            if w == 0:
                continue
            for t, pr in kernel.rows[x]:
                out[t] += w * pr
        return Distribution(out, mode="exact")
    if require_exact:
        raise ModeMismatch("exact stepping requested on a float-mode distribution")
    out = dist.weights @ kernel.csr()
    return Distribution(out, mode="float")


def evolve(kernel: TransitionKernel, dist: Distribution, steps: int) -> Distribution:
    for _ in range(steps):
        dist = step_distribution(kernel, dist)
    return dist


def tv_distance(a: Distribution, b: Distribution):
    """Total-variation distance (1/2) * sum |a_i - b_i|; exact when both are exact."""
    if len(a) != len(b):
        raise ValueError("length mismatch")
    if a.mode == "exact" and b.mode == "exact":
        return sum(abs(x - y) for x, y in zip(a.weights, b.weights)) / 2
    av = a.weights if a.mode == "float" else a.to_float().weights
    bv = b.weights if b.mode == "float" else b.to_float().weights
    return float(np.abs(av - bv).sum() / 2)


# --- trajectory sampling --------------------------------------------------------

_BRANCH_COUNT = {"lazy_hold": 4, "noise_zero": 3, "pure_additive": 2, "non_lazy": 2}


def sample_path(spec: ChainSpec, x0: int, n: int, seed: int) -> list[int]:
    """Length n+1 trajectory from x0, reproducible bit-for-bit from the seed.

    Randomness comes from a counter-based Philox generator keyed by the
    64-bit seed, so identical seeds give identical paths across platforms.
    """
    p, g = spec.p, spec.gamma
    rng = np.random.Generator(np.random.Philox(key=seed))
    draws = rng.integers(0, _BRANCH_COUNT[spec.variant], size=n)
    path = [x0 % p]
    x = x0 % p
    if spec.variant == "pure_additive":
        for u in draws:
            x = (x + g) % p if u == 0 else (x - g) % p
            path.append(x)
        return path
    table = spec.fmap.table
    if spec.variant == "lazy_hold":
        for u in draws:
            if u >= 2:
                x = (int(table[x]) + (g if u == 2 else -g)) % p
            path.append(x)
    elif spec.variant == "noise_zero":
        for u in draws:
            x = (int(table[x]) + (int(u) - 1) * g) % p
            path.append(x)
    else:
        for u in draws:
            x = (int(table[x]) + (g if u == 0 else -g)) % p
            path.append(x)
    return path


def write_path_csv(path: Sequence[int], dest) -> None:
    """Write a sampled trajectory as (step, state) rows."""
    close = False
    if isinstance(dest, (str, bytes)):
        dest = open(dest, "w", newline="")
        close = True
    try:
        w = csv.writer(dest)
        w.writerow(["step", "state"])
        for i, s in enumerate(path):
            w.writerow([i, s])
    finally:
        if close:
            dest.close()


# --- descriptor strings ----------------------------------------------------------
#
# Grammar: chain:<variant>;map=<map-descriptor>;gamma=<g>;p=<p>
# The map descriptor may itself contain ';' (rational maps), so segments that
# are not gamma=/p= assignments are folded back into the map text.


def parse_chain(text: str) -> ChainSpec:
    body = text.strip()
    if body.startswith("chain:"):
        body = body[len("chain:"):]
    segments = body.split(";")
    variant = segments[0].strip()
    map_parts: list[str] = []
    gamma = None
    p = None
    for seg in segments[1:]:
        if seg.startswith("gamma="):
            gamma = int(seg[len("gamma="):])
        elif seg.startswith("p="):
            p = int(seg[len("p="):])
        elif seg.startswith("map="):
            map_parts = [seg[len("map="):]]
        elif map_parts:
            map_parts.append(seg)
        else:
            raise ValueError(f"unexpected chain segment {seg!r}")
    if gamma is None or p is None:
        raise ValueError("chain descriptor needs gamma= and p=")
    ctx = PrimeField(p)
    map_spec = parse_map(";".join(map_parts)) if map_parts else None
    return make_chain(ctx, variant, gamma, map_spec)


def chain_descriptor(spec: ChainSpec) -> str:
    parts = [f"chain:{spec.variant}"]
    if spec.fmap is not None:
        parts.append("map=" + map_descriptor(spec.fmap.provenance))
    parts.append(f"gamma={spec.gamma}")
    parts.append(f"p={spec.p}")
    return ";".join(parts)
