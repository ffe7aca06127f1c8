"""Recurrent structure, exact stationary laws, and mixing-time measurement.

The non-bijective square-and-add chain x -> x^2 +/- gamma is the interesting
case here: its stationary distribution lives on a proper subset of Z/p, is
given in closed form by preimage counts when p = 3 (mod 4), and for
p = 1 (mod 4) the size of its support is the subject of a quartic-root
limit experiment.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .chains import (
    ChainSpec,
    Distribution,
    TransitionKernel,
    build_kernel,
    make_chain,
    step_distribution,
    tv_distance,
)
from .field import PrimeField, SquareSpec


class NonUniqueRecurrentClass(ValueError):
    """The kernel has zero or several recurrent classes where one was required."""


class WrongResidueClass(ValueError):
    """The closed-form stationary law only applies when p = 3 (mod 4)."""


class BudgetExceeded(RuntimeError):
    """Mixing-time search ran past its step cap."""

    def __init__(self, message: str, trajectory: list | None = None):
        super().__init__(message)
        self.trajectory = trajectory or []


# --- recurrent structure -----------------------------------------------------


@dataclass(frozen=True)
class RecurrentStructure:
    """Strongly connected components of a kernel, flagged by recurrence.

    A component is recurrent exactly when no positive-probability edge
    leaves it; such components carry all stationary mass.
    """

    classes: tuple[tuple[int, ...], ...]
    class_of: tuple[int, ...]
    recurrent: tuple[bool, ...]

    def recurrent_classes(self) -> list[tuple[int, ...]]:
        return [c for c, r in zip(self.classes, self.recurrent) if r]

    def support(self) -> list[int]:
        out: list[int] = []
        for c in self.recurrent_classes():
            out.extend(c)
        return sorted(out)

    def is_transient(self, x: int) -> bool:
        return not self.recurrent[self.class_of[x]]


def recurrent_classes(kernel: TransitionKernel) -> RecurrentStructure:
    """Condense the positive-probability digraph into SCCs and flag the sinks."""
    adj = kernel.adjacency()
    n_comp, raw = connected_components(adj, directed=True, connection="strong")
    # relabel components by their smallest member so output is deterministic
    first = {}
    for x, c in enumerate(raw):
        if c not in first:
            first[c] = x
    order = sorted(first, key=first.get)
    remap = {c: i for i, c in enumerate(order)}
    class_of = tuple(remap[c] for c in raw)
    members: list[list[int]] = [[] for _ in range(n_comp)]
    for x, c in enumerate(class_of):
        members[c].append(x)
    escapes = [False] * n_comp
    for x in range(kernel.n):
        cx = class_of[x]
        for t, _ in kernel.rows[x]:
            if class_of[t] != cx:
                escapes[cx] = True
    return RecurrentStructure(
        classes=tuple(tuple(m) for m in members),
        class_of=class_of,
        recurrent=tuple(not e for e in escapes),
    )


# --- stationary distributions --------------------------------------------------

EXACT_SOLVE_LIMIT = 2000


def stationary_exact(kernel: TransitionKernel, exact_limit: int = EXACT_SOLVE_LIMIT) -> Distribution:
    """The unique stationary distribution of a kernel with one recurrent class.

    For kernels up to ``exact_limit`` states the result is exact: a double
    precision linear solve proposes the answer, rational reconstruction
    turns it into fractions, and the fixed-point identity pi.P = pi is then
    verified term by term in exact arithmetic (falling back to exact
    Gaussian elimination if reconstruction fails).  Larger kernels use
    float power iteration and return a float-mode distribution.
    """
    struct = recurrent_classes(kernel)
    recs = struct.recurrent_classes()
    if len(recs) != 1:
        raise NonUniqueRecurrentClass(f"kernel has {len(recs)} recurrent classes")
    states = list(recs[0])
    sub = kernel.restrict(states)
    if kernel.n > exact_limit:
        pi_sub = _power_iteration(sub)
        out = np.zeros(kernel.n)
        out[states] = pi_sub
        return Distribution(out, mode="float")
    pi_sub = _solve_exact(sub)
    out = [Fraction(0)] * kernel.n
    for s, w in zip(states, pi_sub):
        out[s] = w
    return Distribution(out, mode="exact")


def _solve_exact(kernel: TransitionKernel) -> list[Fraction]:
    """Exact stationary vector of an irreducible kernel."""
    m = kernel.n
    if m == 1:
        return [Fraction(1)]
    A = np.zeros((m, m))
    for s, row in enumerate(kernel.rows):
        for t, pr in row:
            A[t, s] += float(pr)
    A -= np.eye(m)
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    x = np.linalg.solve(A, b)
    for cap in (4 * m, 8 * m * m, 10**6, 10**12):
        cand = [Fraction(v).limit_denominator(cap) for v in x]
        if sum(cand) == 1 and _is_stationary(kernel, cand):
            return cand
    return _gauss_exact(kernel)


def _is_stationary(kernel: TransitionKernel, pi: Sequence[Fraction]) -> bool:
    acc = [Fraction(0)] * kernel.n
    for s, row in enumerate(kernel.rows):
        w = pi[s]
        if w == 0:
            continue
        for t, pr in row:
            acc[t] += w * pr
    return acc == list(pi)


def _gauss_exact(kernel: TransitionKernel) -> list[Fraction]:
    """Dense fraction Gaussian elimination on (P^T - I) with a normalization row."""
    m = kernel.n
    A = [[Fraction(0)] * (m + 1) for _ in range(m)]
    for s, row in enumerate(kernel.rows):
        for t, pr in row:
            A[t][s] += pr
    for i in range(m):
        A[i][i] -= 1
    A[m - 1] = [Fraction(1)] * m + [Fraction(1)]
    for col in range(m):
        piv = next(r for r in range(col, m) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        inv = 1 / A[col][col]
        A[col] = [v * inv for v in A[col]]
        for r in range(m):
            if r != col and A[r][col] != 0:
                f = A[r][col]
                A[r] = [v - f * w for v, w in zip(A[r], A[col])]
    return [A[i][m] for i in range(m)]


def _power_iteration(kernel: TransitionKernel, tol: float = 1e-13,
                     max_iter: int = 10**6) -> np.ndarray:
    # iterate on the lazified matrix so periodic classes still converge;
    # (I + P)/2 has the same stationary vector as P
    P = kernel.csr()
    v = np.full(kernel.n, 1.0 / kernel.n)
    for _ in range(max_iter):
        nxt = 0.5 * (v + v @ P)
        nxt /= nxt.sum()
        if np.abs(nxt @ P - nxt).sum() <= tol:
            return nxt
        v = nxt
    raise RuntimeError(f"power iteration did not reach {tol} in {max_iter} steps")


def square_stationary_formula(ctx: PrimeField, gamma: int) -> Distribution:
    """Closed-form stationary law of x -> x^2 +/- gamma for p = 3 (mod 4).

    pi(a) = (#{b : b^2 + gamma = a} + #{b : b^2 - gamma = a}) / (2p); each b
    contributes two solutions, so the numerators total exactly 2p.
    """
    p = ctx.p
    if p % 4 != 3:
        raise WrongResidueClass(f"p={p} is 1 mod 4; the preimage-count law is unproven there")
    if gamma % p == 0:
        raise ValueError("gamma must be nonzero mod p")
    b = np.arange(p, dtype=np.int64)
    counts = np.bincount((b * b + gamma) % p, minlength=p) + np.bincount(
        (b * b - gamma) % p, minlength=p
    )
    return Distribution([Fraction(int(c), 2 * p) for c in counts], mode="exact")


def square_add_chain(ctx: PrimeField, gamma: int, lazy: bool = False) -> ChainSpec:
    """The square-and-add chain, optionally in its lazy-hold form."""
    return make_chain(ctx, "lazy_hold" if lazy else "non_lazy", gamma, SquareSpec())


# --- period ---------------------------------------------------------------------


def period(kernel: TransitionKernel, states: Iterable[int]) -> int:
    """gcd of cycle lengths through a base state of a strongly connected class."""
    inside = set(states)
    base = min(inside)
    level = {base: 0}
    dq = deque([base])
    g = 0
    while dq:
        u = dq.popleft()
        for v, _ in kernel.rows[u]:
            if v not in inside:
                continue
            if v not in level:
                level[v] = level[u] + 1
                dq.append(v)
            else:
                g = math.gcd(g, level[u] + 1 - level[v])
    # a strongly connected class always closes at least one cycle
    for u in level:
        for v, _ in kernel.rows[u]:
            if v in inside:
                g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g)


# --- mixing time ------------------------------------------------------------------


@dataclass(frozen=True)
class MixingReport:
    epsilon: float
    t_mix: int
    start_states_used: tuple[int, ...]
    tv_trajectory: tuple[float, ...]


def resolve_starts(policy, p: int, gamma: int, seed: int = 0) -> list[int]:
    """Start-state policies for the worst-start total variation.

    ``"all"`` enumerates every state (the true sup, O(p^2 . steps) work);
    ``"sampled"`` uses {0, 1, gamma^-1, p-1} plus 16 seeded draws; ``"auto"``
    picks ``"all"`` for p <= 2000 and ``"sampled"`` above.
    """
    if policy == "auto":
        policy = "all" if p <= 2000 else "sampled"
    if policy == "all":
        return list(range(p))
    if policy == "sampled":
        rng = np.random.Generator(np.random.Philox(key=seed))
        picks = {0, 1, pow(gamma, p - 2, p), p - 1}
        picks.update(int(v) for v in rng.integers(0, p, size=16))
        return sorted(picks)
    return sorted(set(int(s) for s in policy))


def tv_profile(kernel: TransitionKernel, target: Distribution, steps: int,
               starts: Sequence[int]) -> list[float]:
    """Worst-start TV distance to ``target`` after 0..steps kernel applications."""
    P = kernel.csr()
    D = np.zeros((len(starts), kernel.n))
    for i, s in enumerate(starts):
        D[i, s] = 1.0
    t = target.to_float().weights
    out = []
    for _ in range(steps + 1):
        out.append(float(0.5 * np.abs(D - t).sum(axis=1).max()))
        D = D @ P
        D /= D.sum(axis=1, keepdims=True)
    return out


def mixing_time(spec: ChainSpec, target: Distribution, epsilon: float,
                starts="auto", budget: int | None = None, seed: int = 0,
                kernel: TransitionKernel | None = None) -> MixingReport:
    """Smallest n with worst-start TV(n) <= epsilon, by distribution evolution.

    ``target`` must actually be stationary for the kernel; this is asserted
    exactly for exact-mode targets and to 1e-9 for float-mode ones.
    """
    if kernel is None:
        kernel = build_kernel(spec)
    _assert_stationary(kernel, target)
    start_list = resolve_starts(starts, kernel.n, spec.gamma, seed)
    cap = budget if budget is not None else max(10_000, 20 * kernel.n)

    P = kernel.csr()
    D = np.zeros((len(start_list), kernel.n))
    for i, s in enumerate(start_list):
        D[i, s] = 1.0
    t = target.to_float().weights
    traj: list[float] = []
    t_mix = None
    for n in range(cap + 1):
        tv = float(0.5 * np.abs(D - t).sum(axis=1).max())
        if traj and tv > traj[-1] + 1e-9:
            raise AssertionError(f"worst-start TV increased at step {n}: {traj[-1]} -> {tv}")
        traj.append(tv)
        if tv <= epsilon:
            t_mix = n
            break
        D = D @ P
        D /= D.sum(axis=1, keepdims=True)
    if t_mix is None:
        raise BudgetExceeded(f"TV still {traj[-1]:.4f} > {epsilon} after {cap} steps", traj)
    return MixingReport(epsilon, t_mix, tuple(start_list), tuple(traj))


def _assert_stationary(kernel: TransitionKernel, target: Distribution) -> None:
    if target.mode == "exact":
        after = step_distribution(kernel, target)
        if after.weights != target.weights:
            raise ValueError("target is not exactly stationary for the kernel")
    else:
        drift = tv_distance(step_distribution(kernel, target), target)
        if drift > 1e-9:
            raise ValueError(f"target drifts by {drift} under the kernel")


# --- support-fraction experiment ----------------------------------------------------


def support_fraction(ctx: PrimeField, gamma: int) -> tuple[Fraction, RecurrentStructure]:
    """|supp pi| / p for the square-and-add chain.

    The support of any stationary distribution is a union of recurrent
    classes, and every state of a recurrent class carries positive mass, so
    the fraction is computed from the class structure alone.  Uniqueness of
    the class is NOT assumed: callers should inspect the returned structure
    (multiple classes are data, not an error).
    """
    spec = square_add_chain(ctx, gamma)
    struct = recurrent_classes(build_kernel(spec))
    total = sum(len(c) for c in struct.recurrent_classes())
    return Fraction(total, ctx.p), struct


@dataclass(frozen=True)
class ConjectureReport:
    """Quartic root, the limiting support fraction it implies, and observations."""

    alpha: float
    limit: float
    fractions: tuple[tuple[int, float], ...] = field(default_factory=tuple)

    def residual(self) -> float:
        a = self.alpha
        return abs(a**4 + 2 * a**2 - 4 * a + 1)


def conjectured_limit(fractions: Sequence[tuple[int, float]] = ()) -> ConjectureReport:
    """Smallest positive root of x^4 + 2x^2 - 4x + 1 and 1 - (1+root)^2 / 4.

    The quartic is +1 at x=0 and negative at x=0.3, so bisection on
    (0, 0.5) brackets the smallest positive root; iteration continues until
    the residual drops below 1e-12.
    """
    q = lambda x: x**4 + 2 * x**2 - 4 * x + 1
    lo, hi = 0.0, 0.5
    assert q(lo) > 0 > q(hi / 2 + 0.05)
    for _ in range(200):
        mid = (lo + hi) / 2
        if q(lo) * q(mid) <= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15 and abs(q((lo + hi) / 2)) <= 1e-12:
            break
    alpha = (lo + hi) / 2
    assert abs(q(alpha)) <= 1e-12
    return ConjectureReport(alpha, 1 - (1 + alpha) ** 2 / 4, tuple(fractions))


def max_log_inv_mass(pi: Distribution) -> float:
    """max over the support of log(1 / pi(x)), as used by conductance bounds."""
    vals = [float(w) for w in pi.weights if w > 0]
    return max(math.log(1.0 / v) for v in vals)
