"""Prime-field arithmetic, rational maps, and total map tables.

Everything downstream works with a ``TotalMap``: a fully materialized
function on Z/p represented as a length-p lookup table, together with a
record of how it was constructed (rational map plus pole values, squaring,
a linear map, or the inverse-shift composition g(x) = f(f^-1(x) + gamma)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

# Witness set valid for all n < 3.3e24, far beyond machine-word moduli.
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for machine-word sized integers."""
    if n < 2:
        return False
    for q in _MR_WITNESSES:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def primes_in_range(lo: int, hi: int, residue_mod4: int | None = None) -> list[int]:
    """Primes in [lo, hi], optionally filtered to p = residue (mod 4)."""
    out = []
    for n in range(max(lo, 2), hi + 1):
        if is_prime(n) and (residue_mod4 is None or n % 4 == residue_mod4):
            out.append(n)
    return out


class PrimeField:
    """The ambient field Z/p for an odd prime p."""

    __slots__ = ("p",)

    def __init__(self, p: int):
        if not is_prime(p):
            raise ValueError(f"modulus {p} is not prime")
        if p == 2:
            raise ValueError("modulus must be odd")
        self.p = p

    def inv(self, x: int) -> int:
        if x % self.p == 0:
            raise ZeroDivisionError(f"0 has no inverse mod {self.p}")
        return pow(x, self.p - 2, self.p)

    def __eq__(self, other) -> bool:
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self) -> int:
        return hash(("PrimeField", self.p))

    def __repr__(self) -> str:
        return f"PrimeField({self.p})"


# --- polynomials over Z/p (coefficient lists, low degree first) -------------


def poly_normalize(coeffs: Sequence[int], p: int) -> tuple[int, ...]:
    """Reduce coefficients mod p and strip trailing zeros."""
    c = [int(a) % p for a in coeffs]
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


def poly_degree(coeffs: Sequence[int]) -> int:
    """Degree of a normalized coefficient list; the zero polynomial has degree -1."""
    return len(coeffs) - 1


def poly_eval(coeffs: Sequence[int], x: int, p: int) -> int:
    acc = 0
    for a in reversed(coeffs):
        acc = (acc * x + a) % p
    return acc


def poly_divmod(num, den, p: int):
    """Quotient and remainder of num / den in Z/p[x]."""
    num = list(num)
    dn = poly_degree(den)
    if dn < 0:
        raise ZeroDivisionError("division by zero polynomial")
    inv_lead = pow(den[-1], p - 2, p)
    quo = [0] * max(len(num) - dn, 0)
    for i in range(len(num) - 1, dn - 1, -1):
        c = num[i] * inv_lead % p
        quo[i - dn] = c
        if c:
            for j, b in enumerate(den):
                num[i - dn + j] = (num[i - dn + j] - c * b) % p
    return poly_normalize(quo, p), poly_normalize(num, p)


def poly_gcd(a, b, p: int) -> tuple[int, ...]:
    """Monic gcd in Z/p[x]."""
    a, b = poly_normalize(a, p), poly_normalize(b, p)
    while b:
        _, r = poly_divmod(a, b, p)
        a, b = b, r
    if a:
        inv_lead = pow(a[-1], p - 2, p)
        a = tuple(c * inv_lead % p for c in a)
    return a


# --- rational maps -----------------------------------------------------------


class _PoleMarker:
    """Sentinel returned when a rational map is evaluated at a zero of its denominator."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "POLE"


POLE = _PoleMarker()


class MissingPoleAssignment(ValueError):
    """A root of the denominator has no assigned value."""


class NotABijection(ValueError):
    """An operation required a permutation table but the map is not one."""


@dataclass(frozen=True)
class RationalMap:
    """P(x)/Q(x) over Z/p, coefficients low degree first.

    Instances built through :func:`rational_map` are validated (degree
    bounds, coprimality, and non-linearity on points); direct construction
    skips validation and is intended for probing and tests.
    """

    numerator: tuple[int, ...]
    denominator: tuple[int, ...]
    degree_bound: int


def rational_map(ctx: PrimeField, numerator: Sequence[int], denominator: Sequence[int],
                 degree_bound: int | None = None) -> RationalMap:
    """Validated constructor for :class:`RationalMap`.

    Rejects maps whose reduced numerator/denominator exceed the degree
    bound, share a nonconstant factor, or act as a constant or degree-1
    function on the points of Z/p (the pointwise check matters: a cube can
    collapse to the identity on a small field even though its formal degree
    is 3).
    """
    p = ctx.p
    num = poly_normalize(numerator, p)
    den = poly_normalize(denominator, p)
    if not den:
        raise ValueError("denominator is the zero polynomial")
    d = degree_bound if degree_bound is not None else max(poly_degree(num), poly_degree(den), 1)
    if poly_degree(num) > d or poly_degree(den) > d:
        raise ValueError(f"degree exceeds bound {d}")
    g = poly_gcd(num, den, p)
    if poly_degree(g) > 0:
        raise ValueError("numerator and denominator share a nonconstant factor")
    rmap = RationalMap(num, den, d)
    if _linear_on_points(rmap, ctx):
        raise ValueError("map is constant or linear on the points of Z/p")
    return rmap


def eval_rational(rmap: RationalMap, ctx: PrimeField, x: int):
    """P(x) * Q(x)^-1 mod p, or ``POLE`` when Q(x) = 0."""
    p = ctx.p
    q = poly_eval(rmap.denominator, x, p)
    if q == 0:
        return POLE
    return poly_eval(rmap.numerator, x, p) * pow(q, p - 2, p) % p


def pole_set(rmap: RationalMap, ctx: PrimeField) -> frozenset[int]:
    """Roots of the denominator in Z/p."""
    p = ctx.p
    return frozenset(x for x in range(p) if poly_eval(rmap.denominator, x, p) == 0)


def _linear_on_points(rmap: RationalMap, ctx: PrimeField) -> bool:
    """True when the map agrees with a single line a*x + b at every non-pole point."""
    p = ctx.p
    pts = []
    for x in range(p):
        v = eval_rational(rmap, ctx, x)
        if v is not POLE:
            pts.append((x, v))
        if len(pts) == 2:
            break
    if len(pts) < 2:
        raise ValueError("fewer than two non-pole points; map is degenerate")
    (x0, y0), (x1, y1) = pts
    a = (y1 - y0) * pow(x1 - x0, p - 2, p) % p
    b = (y0 - a * x0) % p
    for x in range(p):
        if poly_eval(rmap.denominator, x, p) == 0:
            continue
        if eval_rational(rmap, ctx, x) != (a * x + b) % p:
            return False
    return True


@dataclass(frozen=True)
class ClassReport:
    """Result of classifying an extended rational map."""

    is_bijection: bool
    is_linear_or_constant: bool
    is_nonlinear_bijection: bool


def classify_map(rmap: RationalMap, ctx: PrimeField,
                 pole_values: Mapping[int, int] | None = None) -> ClassReport:
    """Classify the total extension of ``rmap`` given values at its poles.

    The extension is admissible for the jump chains ("nonlinear bijection")
    exactly when it permutes Z/p and the underlying rational function is
    neither constant nor linear on points.
    """
    table = extend_table(rmap, ctx, pole_values or {})
    seen = np.zeros(ctx.p, dtype=bool)
    seen[table] = True
    is_bij = bool(seen.all())
    lin = _linear_on_points(rmap, ctx)
    return ClassReport(is_bij, lin, is_bij and not lin)


def extend_table(rmap: RationalMap, ctx: PrimeField,
                 pole_values: Mapping[int, int]) -> np.ndarray:
    """Length-p table of the map extended over its poles by ``pole_values``."""
    p = ctx.p
    table = np.empty(p, dtype=np.int64)
    for x in range(p):
        v = eval_rational(rmap, ctx, x)
        if v is POLE:
            if x not in pole_values:
                raise MissingPoleAssignment(f"no value assigned at pole x={x}")
            table[x] = pole_values[x] % p
        else:
            table[x] = v
    return table


# --- total maps and their provenance ----------------------------------------


@dataclass(frozen=True)
class RationalSpec:
    """A rational map together with explicit values at its poles.

    The conventional extension sends every pole to 0, mirroring the usual
    completion of 1/x; pass ``pole_values`` to override.
    """

    rmap: RationalMap
    pole_values: tuple[tuple[int, int], ...] = ()

    def pole_dict(self) -> dict[int, int]:
        return dict(self.pole_values)


@dataclass(frozen=True)
class SquareSpec:
    """f(x) = x^2."""


@dataclass(frozen=True)
class LinearSpec:
    """f(x) = a*x."""

    a: int


@dataclass(frozen=True)
class ConjugateShiftSpec:
    """g(x) = f(f^-1(x) + gamma) for a bijective base map f."""

    base: "RationalSpec"
    gamma: int


MapSpec = Union[RationalSpec, SquareSpec, LinearSpec, ConjugateShiftSpec]


@dataclass(frozen=True, eq=False)
class TotalMap:
    """A total function on Z/p as a lookup table plus its construction recipe."""

    table: np.ndarray
    provenance: MapSpec
    poles: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        self.table.setflags(write=False)

    @property
    def p(self) -> int:
        return len(self.table)

    @property
    def is_permutation(self) -> bool:
        seen = np.zeros(self.p, dtype=bool)
        seen[self.table] = True
        return bool(seen.all())

    def inverse_table(self) -> np.ndarray:
        if not self.is_permutation:
            raise NotABijection("map table is not a permutation")
        inv = np.empty(self.p, dtype=np.int64)
        inv[self.table] = np.arange(self.p, dtype=np.int64)
        return inv

    def __call__(self, x: int) -> int:
        return int(self.table[x % self.p])


def build_total_map(spec: MapSpec, ctx: PrimeField) -> TotalMap:
    """Materialize the length-p table for a map descriptor."""
    p = ctx.p
    x = np.arange(p, dtype=np.int64)
    if isinstance(spec, SquareSpec):
        return TotalMap(x * x % p, spec)
    if isinstance(spec, LinearSpec):
        return TotalMap(spec.a % p * x % p, spec)
    if isinstance(spec, RationalSpec):
        poles = pole_set(spec.rmap, ctx)
        assigned = dict.fromkeys(poles, 0)
        assigned.update(spec.pole_dict())
        table = extend_table(spec.rmap, ctx, assigned)
        return TotalMap(table, spec, poles=poles)
    if isinstance(spec, ConjugateShiftSpec):
        base = build_total_map(spec.base, ctx)
        if not base.is_permutation:
            raise NotABijection("conjugate-shift base map must be a bijection")
        inv = base.inverse_table()
        table = base.table[(inv + spec.gamma) % p]
        return TotalMap(table.astype(np.int64), spec)
    raise TypeError(f"unknown map spec {spec!r}")


def inverse_map_spec() -> RationalSpec:
    """x -> 1/x extended by 0 -> 0."""
    return RationalSpec(RationalMap((1,), (0, 1), 1), ((0, 0),))


def cube_map_spec() -> RationalSpec:
    """x -> x^3 (a bijection only when gcd(3, p-1) = 1)."""
    return RationalSpec(RationalMap((0, 0, 0, 1), (1,), 3))


# --- descriptor strings -------------------------------------------------------
#
# Grammar:  square | inverse | cube | linear:a=<a>
#         | rational:P=<c0,c1,...>;Q=<c0,c1,...>[;poles=<x:v,...>]


def parse_map(text: str) -> MapSpec:
    """Parse a map descriptor string."""
    text = text.strip()
    if text == "square":
        return SquareSpec()
    if text == "inverse":
        return inverse_map_spec()
    if text == "cube":
        return cube_map_spec()
    if text.startswith("linear:"):
        body = text[len("linear:"):]
        if not body.startswith("a="):
            raise ValueError(f"bad linear descriptor {text!r}")
        return LinearSpec(int(body[2:]))
    if text.startswith("rational:"):
        num = den = None
        poles: tuple[tuple[int, int], ...] = ()
        for part in text[len("rational:"):].split(";"):
            key, _, val = part.partition("=")
            if key == "P":
                num = tuple(int(c) for c in val.split(","))
            elif key == "Q":
                den = tuple(int(c) for c in val.split(","))
            elif key == "poles":
                poles = tuple(
                    (int(a), int(b))
                    for a, b in (item.split(":") for item in val.split(",") if item)
                )
            else:
                raise ValueError(f"unknown rational field {key!r}")
        if num is None or den is None:
            raise ValueError("rational descriptor needs both P= and Q=")
        return RationalSpec(RationalMap(num, den, max(len(num), len(den)) - 1), poles)
    raise ValueError(f"unknown map descriptor {text!r}")


def map_descriptor(spec: MapSpec) -> str:
    """Inverse of :func:`parse_map` (canonical form)."""
    if isinstance(spec, SquareSpec):
        return "square"
    if isinstance(spec, LinearSpec):
        return f"linear:a={spec.a}"
    if isinstance(spec, RationalSpec):
        if spec == inverse_map_spec():
            return "inverse"
        if spec == cube_map_spec():
            return "cube"
        parts = [
            "rational:P=" + ",".join(str(c) for c in spec.rmap.numerator),
            "Q=" + ",".join(str(c) for c in spec.rmap.denominator),
        ]
        if spec.pole_values:
            parts.append("poles=" + ",".join(f"{a}:{b}" for a, b in spec.pole_values))
        return ";".join(parts)
    if isinstance(spec, ConjugateShiftSpec):
        return f"conjugate(gamma={spec.gamma}) of " + map_descriptor(spec.base)
    raise TypeError(f"unknown map spec {spec!r}")
