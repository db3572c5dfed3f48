"""Circle arithmetic, rotation orbits and continued fractions.

Angles live on the circle R/Z and are represented by floats in [0, 1).
Orbit points ``tau_n = n * omega mod 1`` are computed one-shot with an
error-free split of the product, so their absolute error stays at a few
ulp of 1 regardless of n (no accumulated additions).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import CapExceeded, DegenerateExpansion, NoFit, PrecisionExhausted

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

_SPLIT = 2.0**26
_VELTKAMP = 134217729.0  # 2**27 + 1


def wrap(x):
    """Reduce mod 1 into [0, 1) (guards the ``-tiny % 1 == 1.0`` rounding case)."""
    r = np.mod(x, 1.0)
    if np.ndim(r) == 0:
        r = float(r)
        return 0.0 if r >= 1.0 else r
    r[r >= 1.0] = 0.0
    return r


@dataclass(frozen=True, order=True)
class Angle:
    """A point of the circle, normalised to [0, 1)."""

    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", wrap(float(self.value)))

    def __float__(self):
        return self.value

    def __add__(self, other):
        return Angle(self.value + float(other))

    def __sub__(self, other):
        return Angle(self.value - float(other))

    def dist(self, other) -> float:
        return float(circle_dist(self.value, float(other)))


def _veltkamp(x):
    c = _VELTKAMP * x
    hi = c - (c - x)
    return hi, x - hi


def frac_mul(n, omega: float):
    """``n * omega mod 1`` for integer ``n`` (scalar or array), without cancellation loss.

    ``omega`` is split into two 26-bit halves and ``n`` into two 26-bit digits,
    so every partial product is exact; only the final sum of four fractions
    rounds.  Valid for ``|n| < 2**52``.
    """
    n_arr = np.asarray(n, dtype=np.int64)
    sign = np.sign(n_arr)
    m = np.abs(n_arr)
    nh = (m >> 26).astype(np.float64)
    nl = (m & ((1 << 26) - 1)).astype(np.float64)
    w_hi, w_lo = _veltkamp(float(omega))
    parts = (
        np.mod(nh * _SPLIT * w_hi, 1.0),
        np.mod(nh * _SPLIT * w_lo, 1.0),
        np.mod(nl * w_hi, 1.0),
        np.mod(nl * w_lo, 1.0),
    )
    r = wrap(parts[0] + parts[1] + parts[2] + parts[3])
    r = np.where(sign < 0, wrap(1.0 - r), r)
    if np.ndim(n) == 0:
        return float(r)
    return r


def circle_dist(x, y):
    """Wraparound distance on R/Z, in [0, 1/2]. Vectorised."""
    d = np.abs(signed_displacement(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)))
    if np.ndim(d) == 0:
        return float(d)
    return d


def signed_displacement(x):
    """Representative of ``x`` in [-1/2, 1/2).

    Values already in range are returned unchanged, so tiny displacements
    keep their full relative precision.
    """
    x = np.asarray(x, dtype=np.float64)
    w = wrap(x)
    r = np.where((x >= -0.5) & (x < 0.5), x, np.where(w < 0.5, w, w - 1.0))
    if np.ndim(r) == 0:
        return float(r)
    return r


def rotation_orbit(omega: float, n: int) -> np.ndarray:
    """tau_0 ... tau_n with tau_k = k * omega mod 1."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return frac_mul(np.arange(n + 1), omega)


def min_return_distance(omega: float, m: int) -> float:
    """min over 1 <= n <= m-1 of d(tau_n, 0); +inf when the range is empty."""
    if m < 2:
        return math.inf
    return float(np.min(circle_dist(frac_mul(np.arange(1, m), omega), 0.0)))


# ---------------------------------------------------------------------------
# continued fractions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuedFraction:
    """Truncated expansion [0; a_1, ..., a_K] with convergent data.

    ``denominators`` holds q_0..q_K (q_0 = 1, q_1 = a_1), ``numerators`` the
    matching p_0..p_K, and ``returns`` the signed closest returns
    sigma_n = q_n * omega - p_n for n = 0..K-2.  Signs alternate with n,
    sigma_0 = omega and |sigma_n| is the distance of tau_{q_n} from 0 for
    n >= 1.  All integers are exact; sigma is rounded once from an exact
    rational.
    """

    omega: float
    coeffs: tuple
    denominators: tuple
    numerators: tuple
    returns: tuple
    exact: Fraction = field(repr=False, compare=False)

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[int], omega: Fraction | float | None = None):
        """Build from coefficients.  ``omega`` defaults to the value of the finite fraction."""
        coeffs = tuple(int(a) for a in coeffs)
        if not coeffs:
            raise ValueError("need at least one coefficient")
        if any(a < 1 for a in coeffs):
            raise ValueError("coefficients must be positive integers")
        p_prev, p = 1, 0
        q_prev, q = 0, 1
        ps, qs = [p], [q]
        for a in coeffs:
            p_prev, p = p, a * p + p_prev
            q_prev, q = q, a * q + q_prev
            ps.append(p)
            qs.append(q)
        exact = Fraction(p, q) if omega is None else Fraction(omega)
        sig = tuple(float(qs[i] * exact - ps[i]) for i in range(max(0, len(coeffs) - 1)))
        return cls(
            omega=float(exact),
            coeffs=coeffs,
            denominators=tuple(qs),
            numerators=tuple(ps),
            returns=sig,
            exact=exact,
        )

    @property
    def depth(self) -> int:
        return len(self.coeffs)

    def convergent(self, n: int) -> Fraction:
        return Fraction(self.numerators[n], self.denominators[n])

    def recurrence_holds(self) -> bool:
        """q_0 = 1, q_1 = a_1, q_{n+1} = a_{n+1} q_n + q_{n-1}, in exact integers."""
        q, a = self.denominators, self.coeffs
        if q[0] != 1 or q[1] != a[0]:
            return False
        return all(q[n + 1] == a[n] * q[n] + q[n - 1] for n in range(1, len(a)))

    def return_bounds_hold(self) -> bool:
        """1/q_{n+2} <= |sigma_n| <= 1/q_{n+1} wherever both neighbours exist."""
        q = self.denominators
        for n, s in enumerate(self.returns):
            if n + 2 >= len(q):
                break
            lo, hi = 1.0 / q[n + 2], 1.0 / q[n + 1]
            if not (lo * (1 - 1e-12) <= abs(s) <= hi * (1 + 1e-12)):
                return False
        return True


def cf_expand(omega: float, k: int) -> ContinuedFraction:
    """First ``k`` continued-fraction coefficients of ``omega`` in (0, 1).

    The expansion is of the exact binary value of ``omega``; it agrees with the
    intended irrational only while q_n**2 stays well below 1/eps.
    """
    if not 0.0 < omega < 1.0:
        raise ValueError("omega must lie in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")
    x = Fraction(omega)
    coeffs = []
    for i in range(k):
        if x == 0:
            raise DegenerateExpansion(f"expansion of {omega!r} terminates after {i} terms")
        x = 1 / x
        a = math.floor(x)
        coeffs.append(a)
        x -= a
    return ContinuedFraction.from_coeffs(coeffs, omega=Fraction(omega))


def build_omega_from_coeffs(coeffs: Sequence[int], strict: bool = True) -> float:
    """Value of [0; a_1, a_2, ...] rounded to a float.

    With ``strict`` a coefficient whose influence on the value is below double
    resolution raises PrecisionExhausted instead of being silently absorbed.
    """
    cf = ContinuedFraction.from_coeffs(coeffs)
    if strict and len(coeffs) > 1:
        q_before = cf.denominators[-2]
        if float(q_before) ** 2 > 2.0**52:
            raise PrecisionExhausted(
                f"q_{len(coeffs) - 1} = {q_before} is past double resolution; "
                "later coefficients cannot affect the value"
            )
    return cf.omega


# ---------------------------------------------------------------------------
# diophantine constants
# ---------------------------------------------------------------------------

D_LADDER = tuple(round(1.0 + 0.1 * i, 10) for i in range(21))


@dataclass(frozen=True)
class DiophantineEstimate:
    """d(tau_n, 0) >= c * n**(-d) for every 1 <= n <= horizon."""

    c: float
    d: float
    horizon: int
    omega: float

    def verify(self) -> bool:
        n = np.arange(1, self.horizon + 1)
        dist = circle_dist(frac_mul(n, self.omega), 0.0)
        return bool(np.all(dist >= self.c * n.astype(np.float64) ** (-self.d)))


def diophantine_fit(
    omega: float, N: int, ladder: Sequence[float] = D_LADDER, c_floor: float = 0.1
) -> DiophantineEstimate:
    """Smallest exponent d on ``ladder`` whose optimal constant c reaches ``c_floor``.

    c(d) = min over 1..N of d(tau_n, 0) * n**d, which makes the bound tight
    at its minimiser and therefore exhaustively valid on 1..N.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    n = np.arange(1, N + 1)
    dist = circle_dist(frac_mul(n, omega), 0.0)
    logn = np.log(n.astype(np.float64))
    with np.errstate(divide="ignore"):
        logdist = np.log(dist)
    best = None
    for d in sorted(ladder):
        c = float(np.exp(np.min(logdist + d * logn)))
        # rounding margin so the float inequality holds at the minimiser
        c *= 1.0 - 1e-12
        best = (c, d)
        if c > 0 and c >= c_floor:
            est = DiophantineEstimate(c=c, d=float(d), horizon=N, omega=omega)
            if not est.verify():  # pragma: no cover - guarded by construction
                raise NoFit("fitted bound failed re-verification")
            return est
    raise NoFit(f"no d in ladder reaches c >= {c_floor} up to N={N} (last: c={best[0]:.3g}, d={best[1]})")


def first_entry_time(
    omega: float, center: float, radius: float, cap: int = 10**7, rtol: float = 1e-9
) -> int:
    """Least n >= 1 with d(tau_n, center) <= radius (relative slack ``rtol``)."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    center = float(center)
    limit = radius * (1.0 + rtol)
    chunk = 1 << 16
    start = 1
    while start <= cap:
        stop = min(cap, start + chunk - 1)
        n = np.arange(start, stop + 1)
        hit = np.nonzero(circle_dist(frac_mul(n, omega), center) <= limit)[0]
        if hit.size:
            return int(n[hit[0]])
        start = stop + 1
    raise CapExceeded(f"no entry into B({center}, {radius}) before n = {cap}")
