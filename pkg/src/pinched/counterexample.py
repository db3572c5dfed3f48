"""A pinched system whose upper bounding graph has an isolated point.

The rotation number has rapidly growing continued-fraction coefficients
(sum of 1/a_n finite).  Around 0 the circle is tiled by a ladder of
intervals built from the signed closest returns sigma_n; the forcing
function g is constant a**(-q_n) on the n-th rung and ramps linearly between
rungs.  With f(x) = min{1, a x} the graph satisfies phi+(0) = 1 while
phi+ <= 1/a on a punctured neighbourhood of 0.

Levels like 3**(-q_n) underflow for moderate n, so g and the fibre orbits
are evaluated in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .circle_rotation import ContinuedFraction, frac_mul, signed_displacement, wrap
from .errors import DepthInsufficient, LadderInconsistent, VariantPreconditionFailed
from .systems import PinchedSystem

# ---------------------------------------------------------------------------
# coefficient rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoeffRule:
    """a_n = rule(n) for n >= 1, with an upper bound on sum_{i > n} 1/a_i."""

    name: str
    param: float = 0.0

    def coeff(self, n: int) -> int:
        if n < 1:
            raise ValueError("coefficients are indexed from 1")
        if self.name == "square":
            return n * n
        if self.name == "pow2":
            return 2**n
        if self.name == "constant":
            return int(self.param)
        raise ValueError(f"unknown rule {self.name!r}")

    def coeffs(self, k: int) -> list:
        return [self.coeff(n) for n in range(1, k + 1)]

    def tail_bound(self, n: int) -> float:
        """Upper bound on sum_{i > n} 1/a_i (inf if the series diverges)."""
        if self.name == "square":
            return 1.0 / n if n >= 1 else math.inf  # sum_{i>n} 1/i^2 < 1/n
        if self.name == "pow2":
            return 2.0**-n
        return math.inf

    def as_dict(self):
        return {"name": self.name, "param": self.param}


SQUARE = CoeffRule("square")
POW2 = CoeffRule("pow2")


def golden_rule() -> CoeffRule:
    return CoeffRule("constant", 1)


def rule_from_name(name: str, param: float = 0.0) -> CoeffRule:
    """``square``, ``pow2``, ``golden`` or ``constant:k``."""
    if name == "golden":
        return golden_rule()
    if name.startswith("constant:"):
        name, param = "constant", float(name.split(":", 1)[1])
    rule = CoeffRule(name, param)
    rule.coeff(1)
    return rule


# ---------------------------------------------------------------------------
# spec, n1 and the interval ladder
# ---------------------------------------------------------------------------

# extra coefficients beyond depth_K so that sigma_{K+2} is available
_EXTRA = 4
# angles in [0, 1) carry absolute error ~eps; plateaus are extended outward by
# this much so that a point on a rung edge is never pushed onto the steep ramp
EDGE_GUARD = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class CounterexampleSpec:
    coeff_rule: CoeffRule = SQUARE
    base_a: float = 3.0
    depth_K: int = 25

    def __post_init__(self):
        if not self.base_a > 2:
            raise ValueError("base_a must exceed 2")
        if self.depth_K < 3:
            raise ValueError("depth_K must be >= 3")

    @property
    def cf(self) -> ContinuedFraction:
        return ContinuedFraction.from_coeffs(self.coeff_rule.coeffs(self.depth_K + _EXTRA))

    @property
    def omega(self) -> float:
        return self.cf.omega

    @property
    def n1(self) -> int:
        return choose_n1(self.cf, self.coeff_rule, self.depth_K)

    def as_dict(self):
        return {"coeff_rule": self.coeff_rule.as_dict(), "base_a": self.base_a,
                "depth_K": self.depth_K, "n1": self.n1, "omega": self.omega}


def exact_returns(cf: ContinuedFraction) -> list:
    """sigma_n = q_n * omega - p_n as exact fractions of the (rational) expansion value."""
    return [cf.denominators[i] * cf.exact - cf.numerators[i] for i in range(len(cf.denominators))]


def choose_n1(cf: ContinuedFraction, rule: CoeffRule, depth: Optional[int] = None) -> int:
    """Smallest n1 with sum_{i >= n1} q_i/q_{i+1} < 1/2 and sigma_{n1} > 0.

    The sum is exact up to ``depth`` and bounded beyond it by
    sum_{i > depth} 1/a_i, since q_i/q_{i+1} <= 1/a_{i+1}.
    """
    depth = len(cf.coeffs) if depth is None else depth
    q = cf.denominators
    tail = rule.tail_bound(depth)
    if not math.isfinite(tail):
        raise DepthInsufficient(f"sum of 1/a_i diverges for rule {rule.name!r}; no n1 exists")
    sig = exact_returns(cf)
    suffix = Fraction(0)
    sums = {}
    for i in range(depth - 1, -1, -1):
        suffix += Fraction(q[i], q[i + 1])
        sums[i] = suffix
    for n1 in range(depth - 1):
        if float(sums[n1]) + tail < 0.5 and sig[n1] > 0 and n1 + 2 <= depth:
            return n1
    raise DepthInsufficient(f"no n1 <= {depth - 2} meets the summability condition")


@dataclass(frozen=True)
class Rung:
    """Rung n of the ladder on one side of 0, in radial coordinates r = |theta|.

    The rung covers [inner, outer] = [|sigma_{n+2}|, |sigma_n|]; g is constant
    on the plateau [inner, outer - inner] and ramps linearly to the next
    level outward on [outer - inner, outer].
    """

    n: int
    side: int  # -1 left of 0, +1 right
    outer: Fraction
    inner: Fraction
    log_level: float
    log_outer_level: float

    @property
    def plateau(self) -> tuple:
        return (self.inner, self.outer - self.inner)

    def interval(self) -> tuple:
        """I_n' as a signed interval."""
        lo, hi = sorted((self.side * self.inner, self.side * self.outer))
        return lo, hi

    def core(self) -> tuple:
        """I_n as a signed interval."""
        lo, hi = sorted((self.side * self.inner, self.side * (self.outer - self.inner)))
        return lo, hi


def build_intervals(cf: ContinuedFraction, n1: int, K: int, base_a: float = 3.0) -> list:
    """Rungs n1..K.  Even n - n1 lie left of 0, odd n - n1 to the right."""
    if K < n1 + 2:
        raise ValueError("need K >= n1 + 2")
    sig = exact_returns(cf)
    if len(sig) < K + 3:
        raise ValueError("expansion too short for the requested depth")
    if not sig[n1] > 0:
        raise LadderInconsistent("sigma_{n1} must lie to the right of 0")
    log_a = math.log(base_a)
    q = cf.denominators
    rungs = []
    for n in range(n1, K + 1):
        side = -1 if (n - n1) % 2 == 0 else 1
        outer, inner = abs(sig[n]), abs(sig[n + 2])
        if not (sig[n] > 0) == (side == -1):
            raise LadderInconsistent(f"sigma_{n} has the wrong sign for its side")
        if not outer >= 2 * inner:
            raise LadderInconsistent(f"rung {n}: plateau would be empty")
        level = -q[n] * log_a
        outer_level = 0.0 if n - 2 < n1 else -q[n - 2] * log_a
        rungs.append(Rung(n, side, outer, inner, level, outer_level))
    _check_ladder(rungs, sig, n1)
    return rungs


def _check_ladder(rungs, sig, n1):
    for side in (-1, 1):
        rs = [r for r in rungs if r.side == side]
        for a, b in zip(rs, rs[1:]):
            if a.inner != b.outer:
                raise LadderInconsistent(f"rungs {a.n} and {b.n} do not meet")
    lo = min(r.interval()[0] for r in rungs)
    hi = max(r.interval()[1] for r in rungs)
    if lo != -sig[n1] or hi != -sig[n1 + 1]:
        raise LadderInconsistent("ladder union does not span [-sigma_{n1}, -sigma_{n1+1}]")


def ladder_span(rungs) -> tuple:
    """The interval I = [-sigma_{n1}, -sigma_{n1+1}] as exact fractions."""
    return min(r.interval()[0] for r in rungs), max(r.interval()[1] for r in rungs)


# ---------------------------------------------------------------------------
# the forcing function g
# ---------------------------------------------------------------------------


@dataclass
class GFunction:
    """Ladder function: 1 outside I, a**(-q_n) on I_n, linear ramps in between, 0 at 0.

    Below the deepest rung on each side g stays at that rung's level (the
    truncation plateau), except g(0) = 0.  Each plateau extends EDGE_GUARD
    (capped at a quarter of the ramp) into its ramp.
    """

    rungs: list
    base_a: float
    _sides: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for side in (-1, 1):
            rs = sorted((r for r in self.rungs if r.side == side), key=lambda r: r.n)
            self._sides[side] = (
                np.array([float(r.outer) for r in rs]),
                np.array([float(r.inner) for r in rs]),
                np.array([r.log_level for r in rs]),
                np.array([r.log_outer_level for r in rs]),
            )

    def log_g(self, theta) -> np.ndarray:
        s = signed_displacement(np.asarray(theta, dtype=np.float64))
        s = np.atleast_1d(s)
        r = np.abs(s)
        out = np.zeros_like(r)
        for side in (-1, 1):
            outer, inner, lev, olev = self._sides[side]
            sel = (np.sign(s) == side)
            if not sel.any():
                continue
            rr = r[sel]
            res = np.zeros_like(rr)
            # rung index k: outer[k+1] <= r < outer[k]  (outer descending)
            k = np.searchsorted(-outer, -rr, side="right") - 1
            inside = (k >= 0)
            kk = np.clip(k, 0, len(outer) - 1)
            guard = np.minimum(EDGE_GUARD, 0.25 * inner[kk])
            ramp_start = outer[kk] - inner[kk] + guard
            in_ramp = inside & (rr > ramp_start)
            t = np.where(in_ramp, (rr - ramp_start) / (inner[kk] - guard), 0.0)
            with np.errstate(divide="ignore"):
                ramp_val = np.logaddexp(np.log1p(-t) + lev[kk], np.log(t) + olev[kk])
            res = np.where(in_ramp, ramp_val, np.where(inside, lev[kk], 0.0))
            # truncation plateau below the deepest rung
            res = np.where(rr < inner[-1], lev[-1], res)
            out[sel] = res
        out[r == 0] = -np.inf
        return out if np.ndim(theta) else float(out[0])

    def __call__(self, theta):
        with np.errstate(under="ignore"):
            return np.exp(self.log_g(theta))

    def integral_log(self) -> float:
        """Exact integral of log g over the circle (plateaus, linear ramps, truncation plateaus)."""
        total = 0.0
        for side in (-1, 1):
            outer, inner, lev, olev = self._sides[side]
            guard = np.minimum(EDGE_GUARD, 0.25 * inner)
            total += float(np.sum((outer - 2 * inner + guard) * lev))
            d = lev - olev  # < 0
            # int_0^1 log((1-t) g1 + t g2) dt = log g2 - 1 - r log r / (1 - r),  r = g1/g2
            r = np.exp(d)
            total += float(np.sum((inner - guard) * (olev - 1.0 - r * d / -np.expm1(d))))
            total += float(inner[-1] * lev[-1])
        return total

    def integral_log_quadrature(self, per_piece: int = 2000) -> float:
        """Midpoint quadrature aligned with the ladder pieces (cross-check of ``integral_log``)."""
        total = 0.0
        u = (np.arange(per_piece) + 0.5) / per_piece
        for side in (-1, 1):
            outer, inner, lev, olev = self._sides[side]
            for o, i_ in zip(outer, inner):
                edge = o - i_ + min(EDGE_GUARD, 0.25 * i_)
                for lo, hi in ((i_, edge), (edge, o)):
                    total += float(np.mean(self.log_g(side * (lo + (hi - lo) * u)))) * (hi - lo)
            lo, hi = 0.0, inner[-1]
            total += float(np.mean(self.log_g(side * (lo + (hi - lo) * u)))) * (hi - lo)
        return total

    def table(self, grid_n: int = 4001, span: float = 1.5) -> tuple:
        """(theta, g(theta)) on a uniform signed grid over ``span`` times the ladder."""
        lo, hi = (float(v) for v in ladder_span(self.rungs))
        c, w = 0.5 * (lo + hi), 0.5 * (hi - lo) * span
        s = np.linspace(c - w, c + w, grid_n)
        return s, self(wrap(s))


def build_g(spec: CounterexampleSpec) -> GFunction:
    rungs = build_intervals(spec.cf, spec.n1, spec.depth_K, spec.base_a)
    return GFunction(rungs, spec.base_a)


def counterexample_system(spec: CounterexampleSpec, g: Optional[GFunction] = None) -> PinchedSystem:
    """T(theta, x) = (theta + omega, g(theta) min{1, a x}) on [0, 1]."""
    g = g or build_g(spec)
    a = spec.base_a

    def fibre(theta, x):
        return g(theta) * np.minimum(1.0, a * np.asarray(x, dtype=np.float64))

    def dx(theta, x, side="right"):
        probe = np.asarray(x, dtype=np.float64) + (1e-14 if side == "right" else -1e-14)
        return np.where(probe < 1.0 / a, a * g(theta), 0.0)

    return PinchedSystem(omega=spec.omega, L=1.0, fibre=fibre, deriv_x=dx, kind="counterexample",
                         name="counterexample", params={"a": a, "alpha": a}, x_kinks=(1.0 / a,))


# ---------------------------------------------------------------------------
# log-space orbits
# ---------------------------------------------------------------------------


def log_min_ax(a: float) -> Callable:
    log_a = math.log(a)
    return lambda lx: np.minimum(0.0, log_a + lx)


def log_boundary_values(g: GFunction, omega: float, log_f: Callable, n: int, offsets, shifts=0,
                        log_L: float = 0.0) -> np.ndarray:
    """log phi_n at offsets + shifts * omega for T = g(theta) f(x), computed in log space."""
    offsets = np.asarray(offsets, dtype=np.float64)
    shifts = np.asarray(shifts, dtype=np.int64)
    lx = np.full(np.broadcast(offsets, shifts).shape, float(log_L))
    for i in range(n, 0, -1):
        theta = signed_displacement(offsets + frac_mul(shifts - i, omega))
        lx = g.log_g(theta) + log_f(lx)
    return lx


# ---------------------------------------------------------------------------
# claims
# ---------------------------------------------------------------------------


@dataclass
class Claim1Report:
    n_max: int
    phi: np.ndarray
    deficit_log: np.ndarray  # -log_a prod g(tau_{-j}), j = 1..n
    tau_minus1_outside: bool

    @property
    def all_one(self) -> bool:
        return bool(np.all(self.phi == 1.0))

    @property
    def diagnostic_ok(self) -> bool:
        n = np.arange(1, self.n_max + 1)
        return bool(np.all(self.deficit_log <= n / 2))

    @property
    def passed(self) -> bool:
        return self.all_one and self.diagnostic_ok

    def as_dict(self):
        return {"n_max": self.n_max, "all_one": self.all_one, "min_phi": float(np.min(self.phi)),
                "max_deficit_ratio": float(np.max(self.deficit_log / np.arange(1, self.n_max + 1))),
                "diagnostic_ok": self.diagnostic_ok, "tau_minus1_outside_I": self.tau_minus1_outside,
                "passed": self.passed}


def verify_claim1(spec: CounterexampleSpec, n_max: int = 500, g: Optional[GFunction] = None) -> Claim1Report:
    """phi_n(0) for n = 1..n_max, each from its own backward orbit, all at once.

    The map applied i steps back from 0 sits over tau_{-i} for every n >= i,
    so the n orbits advance together.
    """
    g = g or build_g(spec)
    log_f = log_min_ax(spec.base_a)
    n = np.arange(1, n_max + 1)
    lx = np.zeros(n_max)
    lg = g.log_g(frac_mul(-n, spec.omega))
    for i in range(n_max, 0, -1):
        active = n >= i
        lx[active] = lg[i - 1] + log_f(lx[active])
    with np.errstate(under="ignore"):
        phi = np.exp(lx)
    deficit = -np.cumsum(lg) / math.log(spec.base_a)
    lo, hi = ladder_span(g.rungs)
    t1 = signed_displacement(-spec.omega)
    return Claim1Report(n_max, phi, deficit, not (float(lo) <= t1 <= float(hi)))


@dataclass
class Claim2Report:
    """phi_{n_iter} <= 1/a near 0, in the literal and in the proven form.

    ``max_on_I`` is taken over a uniform grid on the ladder span I minus 0.
    The rung mechanism bounds phi_{q_n} on [sigma_{n+2}, sigma_n], the q_n-th
    image of the part of I between I_n and 0; these images tile the mirror
    interval [sigma_{n1+1}, sigma_{n1}], which is where the bound is proven.
    ``max_on_mirror`` skips the points inside ``certified_radius``: the
    rungs reached within n_iter steps do not control them yet.
    """

    n_iter: int
    bound: float
    max_on_I: float
    argmax_on_I: float
    max_on_mirror: float
    max_on_mirror_full: float
    excluded: int
    mechanism: list  # (n, q_n, interval, max phi_{q_n})
    certified_radius: tuple  # (left, right)
    tol: float = 1e-10

    @property
    def literal_passed(self) -> bool:
        return self.max_on_I <= self.bound + self.tol

    @property
    def passed(self) -> bool:
        return self.max_on_mirror <= self.bound + self.tol and all(m[3] <= self.bound + self.tol for m in self.mechanism)

    def as_dict(self):
        return {"n_iter": self.n_iter, "bound": self.bound, "max_on_I": self.max_on_I,
                "argmax_on_I": self.argmax_on_I, "literal_passed": self.literal_passed,
                "max_on_mirror": self.max_on_mirror, "max_on_mirror_full": self.max_on_mirror_full,
                "excluded_near_0": self.excluded,
                "mechanism": [{"n": n, "q_n": q, "interval": list(iv), "max_phi": v} for n, q, iv, v in self.mechanism],
                "certified_radius": list(self.certified_radius), "passed": self.passed}


def _certified_radius(spec, rungs, n_iter):
    """Radii (left, right) beyond which some rung with q_n <= n_iter bounds phi_{n_iter}.

    [sigma_{n+2}, sigma_n] is reached after q_n steps; it lies right of 0 for
    even n - n1 and left of 0 for odd.
    """
    q = spec.cf.denominators
    sig = exact_returns(spec.cf)
    right = left = None
    for r in rungs:
        if q[r.n] > n_iter:
            continue
        if (r.n - spec.n1) % 2 == 0:
            right = float(abs(sig[r.n + 2]))
        else:
            left = float(abs(sig[r.n + 2]))
    return left, right


def _outside_radius(s, radius):
    left, right = radius
    return ((s > 0) & (s >= right)) | ((s < 0) & (-s >= left))


def verify_claim2(spec: CounterexampleSpec, n_iter: int = 500, grid_n: int = 20001,
                  g: Optional[GFunction] = None) -> Claim2Report:
    g = g or build_g(spec)
    log_f = log_min_ax(spec.base_a)
    sig = exact_returns(spec.cf)
    q = spec.cf.denominators
    n1 = spec.n1
    radius = _certified_radius(spec, g.rungs, n_iter)
    if None in radius:
        raise DepthInsufficient("n_iter too small: no rung on one side is reached")

    def phi(s, steps):
        return np.exp(log_boundary_values(g, spec.omega, log_f, steps, wrap(s)))

    lo, hi = ladder_span(g.rungs)
    s = np.linspace(float(lo), float(hi), grid_n)
    s = s[s != 0]
    v = phi(s, n_iter)
    k = int(np.argmax(v))
    on_I, at_I = float(v[k]), float(s[k])

    s = np.linspace(float(sig[n1 + 1]), float(sig[n1]), grid_n)
    s = s[s != 0]
    v = phi(s, n_iter)
    keep = _outside_radius(s, radius)
    on_mirror, full = float(np.max(v[keep])), float(np.max(v))

    mech = []
    for r in g.rungs:
        if q[r.n] > n_iter:
            continue
        a_end, b_end = sorted((sig[r.n + 2], sig[r.n]))
        s = np.linspace(float(a_end), float(b_end), grid_n)
        s = s[s != 0]
        mech.append((r.n, q[r.n], (float(a_end), float(b_end)), float(np.max(phi(s, q[r.n])))))
    return Claim2Report(n_iter, 1.0 / spec.base_a, on_I, at_I, on_mirror, full, int(np.sum(~keep)),
                        mech, radius)


def isolated_point_certificate(c1: Claim1Report, c2: Claim2Report) -> dict:
    """(0, 1) is isolated in the closure when phi+(0) = 1 and phi+ <= 1/a < 1 nearby."""
    sup_near = c2.max_on_mirror
    return {
        "neighbourhood": "mirror interval [sigma_{n1+1}, sigma_{n1}] minus the certified radius",
        "certified_radius": list(c2.certified_radius),
        "phi_plus_at_0": float(c1.phi[-1]),
        "sup_punctured_neighbourhood": sup_near,
        "bound": c2.bound,
        "gap": float(c1.phi[-1]) - sup_near,
        "isolated": bool(c1.passed and c2.passed and sup_near < 1.0),
    }


# ---------------------------------------------------------------------------
# smooth variant
# ---------------------------------------------------------------------------


def default_ftilde(a: float, cap: float = 0.9) -> Callable:
    """a x on [0, 1/a], then 1 + cap tanh(a (x - 1/a) / cap): C^1, strictly increasing, below 1 + cap."""

    def f(x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x <= 1.0 / a, a * x, 1.0 + cap * np.tanh(a * (x - 1.0 / a) / cap))

    return f


@dataclass
class VariantReport:
    phi0_min: float
    region_max: float
    bound: float
    n_iter: int
    certified_radius: tuple
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.phi0_min >= 1.0 - self.tol and self.region_max <= self.bound + self.tol

    def as_dict(self):
        return {"phi0_min": self.phi0_min, "region_max": self.region_max, "bound": self.bound,
                "n_iter": self.n_iter, "certified_radius": list(self.certified_radius), "passed": self.passed}


def check_ftilde(ftilde: Callable, a: float, grid_n: int = 200_001) -> None:
    """Raise VariantPreconditionFailed naming the first violated clause."""
    x = np.linspace(0.0, 2.0, grid_n)
    y = ftilde(x)
    low = x <= 1.0 / a
    if np.max(np.abs(y[low] - np.minimum(1.0, a * x[low]))) > 1e-12:
        raise VariantPreconditionFailed("agree", "ftilde must equal min{1, a x} on [0, 1/a]")
    if np.any(np.diff(y) <= 0):
        raise VariantPreconditionFailed("increasing", "ftilde must be strictly increasing on [0, 2]")
    if float(ftilde(2.0)) > 2.0 or np.min(y) < 0:
        raise VariantPreconditionFailed("range", "ftilde must map [0, 2] into [0, 2]")


def smooth_variant(spec: CounterexampleSpec, ftilde: Optional[Callable] = None, n_iter: int = 500,
                   grid_n: int = 20001, g: Optional[GFunction] = None):
    """T~(theta, x) = (theta + omega, g(theta) ftilde(x)) on [0, 2], with its report."""
    a = spec.base_a
    ftilde = ftilde or default_ftilde(a)
    check_ftilde(ftilde, a)
    g = g or build_g(spec)
    log_a = math.log(a)

    def log_f(lx):
        with np.errstate(divide="ignore", under="ignore"):
            return np.where(lx <= -log_a, log_a + lx, np.log(ftilde(np.exp(np.maximum(lx, -log_a)))))

    def fibre(theta, x):
        return g(theta) * ftilde(x)

    sys = PinchedSystem(omega=spec.omega, L=2.0, fibre=fibre, kind="counterexample",
                        name="counterexample-smooth", params={"a": a})
    log_L = math.log(2.0)
    phi0 = np.exp(log_boundary_values(g, spec.omega, log_f, n_iter, 0.0, log_L=log_L))
    sig = exact_returns(spec.cf)
    n1 = spec.n1
    r_left, r_right = _certified_radius(spec, g.rungs, n_iter)
    s = np.linspace(float(sig[n1 + 1]), float(sig[n1]), grid_n)
    s = s[_outside_radius(s, (r_left, r_right))]
    region = float(np.exp(np.max(log_boundary_values(g, spec.omega, log_f, n_iter, wrap(s), log_L=log_L))))
    return sys, VariantReport(float(phi0), region, 2.0 / a, n_iter, (r_left, r_right))
