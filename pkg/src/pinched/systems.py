"""Pinched skew products (theta, x) -> (theta + omega, T_theta(x)).

Fibre maps are vectorised callables ``fibre(theta, x)`` on numpy arrays.
Built-in families: the product family alpha * g(theta) * f(x) (optionally in
the rescaled form alpha_1 * g(theta) * f(alpha_2 * x)), the piecewise-linear
reference system, tabulated systems, and arbitrary closures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .circle_rotation import GOLDEN, circle_dist, signed_displacement, wrap
from .errors import NotDifferentiable, OutOfRange

KINDS = ("fg_family", "reference", "counterexample", "custom")
_KINK_TOL = 1e-14
_RANGE_TOL = 1e-12
# one-sided derivatives are read off just beside the evaluation point
_PROBE = 1e-14


@dataclass(frozen=True, eq=False)
class PinchedSystem:
    """A quasiperiodically forced monotone interval map on T^1 x [0, L].

    ``deriv_x`` / ``deriv_theta`` take ``(theta, x, side)`` with side in
    {"left", "right"}; at smooth points the side is ignored.  ``x_kinks`` and
    ``theta_kinks`` list the points where the respective derivative only
    exists one-sidedly.
    """

    omega: float
    L: float
    fibre: Callable
    pinch_point: float = 0.0
    deriv_x: Optional[Callable] = None
    deriv_theta: Optional[Callable] = None
    kind: str = "custom"
    name: str = "custom"
    params: dict = field(default_factory=dict)
    x_kinks: tuple = ()
    theta_kinks: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if not self.L > 0:
            raise ValueError("L must be positive")

    def raw(self, theta, x):
        """Unclamped fibre values."""
        return self.fibre(np.asarray(theta, dtype=np.float64), np.asarray(x, dtype=np.float64))

    def __call__(self, theta, x):
        return np.clip(self.raw(theta, x), 0.0, self.L)

    def with_omega(self, omega: float) -> "PinchedSystem":
        return PinchedSystem(**{**self.__dict__, "omega": omega})


# ---------------------------------------------------------------------------
# product family alpha * g(theta) * f(x)
# ---------------------------------------------------------------------------


def abs_sin(theta0: float = 0.0):
    """g(theta) = |sin(pi (theta - theta0))| and its one-sided derivative."""

    def g(theta):
        return np.abs(np.sin(np.pi * (theta - theta0)))

    def dg(theta, side="right"):
        s = signed_displacement(np.asarray(theta) - theta0)
        probe = s + (_PROBE if side == "right" else -_PROBE)
        return np.sign(probe) * np.pi * np.cos(np.pi * s)

    return g, dg


def tanh_f():
    return np.tanh, lambda x: 1.0 / np.cosh(x) ** 2


@dataclass(frozen=True, eq=False)
class FgFamilySpec:
    """Parameters of alpha * g(theta) * f(x).

    ``g`` may expose ``integral_log()`` (exact integral of log g); quadrature
    routines use it instead of sampling when present.
    """

    alpha: float
    f: Callable
    g: Callable
    f_deriv0: float
    L: Optional[float] = None
    f_deriv: Optional[Callable] = None
    g_deriv: Optional[Callable] = None
    pinch_point: float = 0.0
    name: str = "fg"
    f_sup: float = 1.0
    g_sup: float = 1.0

    def system(self, omega: float = GOLDEN, split: Optional[tuple] = None, kind="fg_family"):
        """The system itself, or its rescaled form alpha_1 g f(alpha_2 x) when ``split`` is given."""
        if split is None:
            outer, inner = self.alpha, 1.0
        else:
            outer, inner = map(float, split)
            if not math.isclose(outer * inner, self.alpha, rel_tol=1e-12):
                raise ValueError(f"split {split} does not multiply to alpha={self.alpha}")
        L = self.L if (self.L is not None and split is None) else outer * self.f_sup * self.g_sup
        return fg_system(
            outer, self.f, self.g, omega=omega, L=L, inner_scale=inner, f_deriv=self.f_deriv,
            g_deriv=self.g_deriv, pinch_point=self.pinch_point, name=self.name, kind=kind,
        )


def fg_system(
    alpha, f, g, omega=GOLDEN, L=None, inner_scale=1.0, f_deriv=None, g_deriv=None,
    pinch_point=0.0, name="fg", kind="fg_family",
) -> PinchedSystem:
    """T_theta(x) = alpha * g(theta) * f(inner_scale * x)."""
    alpha = float(alpha)
    s = float(inner_scale)
    L = alpha if L is None else float(L)

    def fibre(theta, x):
        return alpha * g(theta) * f(s * x)

    dx = dth = None
    if f_deriv is not None:
        def dx(theta, x, side="right"):
            return alpha * s * g(theta) * f_deriv(s * x)
    if g_deriv is not None:
        def dth(theta, x, side="right"):
            return alpha * g_deriv(theta, side) * f(s * x)
    return PinchedSystem(
        omega=omega, L=L, fibre=fibre, pinch_point=pinch_point, deriv_x=dx, deriv_theta=dth,
        kind=kind, name=name,
        params={"alpha": alpha * s, "alpha_outer": alpha, "alpha_inner": s},
        theta_kinks=(pinch_point,) if g_deriv is not None else (),
    )


def tanh_spec(alpha: float, L: Optional[float] = None) -> FgFamilySpec:
    g, dg = abs_sin()
    f, df = tanh_f()
    return FgFamilySpec(alpha=alpha, f=f, g=g, f_deriv0=1.0, L=L, f_deriv=df, g_deriv=dg, name="tanh")


def tanh_family(alpha: float, omega: float = GOLDEN, split: Optional[tuple] = None) -> PinchedSystem:
    """alpha |sin(pi theta)| tanh(x) on [0, alpha], or alpha_1 |sin| tanh(alpha_2 x) on [0, alpha_1]."""
    return tanh_spec(alpha).system(omega, split=split)


# ---------------------------------------------------------------------------
# reference system min{1, a x} * min{1, (2/b) d(theta, 0)}
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSpec:
    a: float
    b: float

    def __post_init__(self):
        if not self.a > 2:
            raise ValueError("reference system needs a > 2")
        if not self.b > 0:
            raise ValueError("reference system needs b > 0")


def reference_eval(ref: ReferenceSpec, theta, x):
    x = np.asarray(x, dtype=np.float64)
    out = np.minimum(1.0, ref.a * x) * np.minimum(1.0, (2.0 / ref.b) * circle_dist(theta, 0.0))
    return float(out) if np.ndim(out) == 0 else out


def reference_system(ref: ReferenceSpec, omega: float = GOLDEN, L: float = 1.0) -> PinchedSystem:
    a, b = ref.a, ref.b

    def fibre(theta, x):
        return reference_eval(ref, theta, x)

    def dx(theta, x, side="right"):
        theta_part = np.minimum(1.0, (2.0 / b) * circle_dist(theta, 0.0))
        probe = np.asarray(x, dtype=np.float64) + (_PROBE if side == "right" else -_PROBE)
        return np.where(probe < 1.0 / a, a * theta_part, 0.0)

    def dth(theta, x, side="right"):
        probe = signed_displacement(theta) + (_PROBE if side == "right" else -_PROBE)
        ramp = np.abs(probe) < b / 2
        return np.where(ramp, np.minimum(1.0, a * np.asarray(x)) * (2.0 / b) * np.sign(probe), 0.0)

    return PinchedSystem(
        omega=omega, L=float(L), fibre=fibre, pinch_point=0.0, deriv_x=dx, deriv_theta=dth,
        kind="reference", name="reference", params={"a": a, "b": b, "alpha": a},
        x_kinks=(1.0 / a,), theta_kinks=(0.0, b / 2, 1.0 - b / 2),
    )


# ---------------------------------------------------------------------------
# custom and tabulated systems
# ---------------------------------------------------------------------------


def custom_system(fibre, omega=GOLDEN, L=1.0, pinch_point=0.0, deriv_x=None, deriv_theta=None,
                  name="custom", kind="custom", **params) -> PinchedSystem:
    return PinchedSystem(omega=omega, L=L, fibre=fibre, pinch_point=pinch_point, deriv_x=deriv_x,
                         deriv_theta=deriv_theta, kind=kind, name=name, params=params)


def tabulated_system(table, L, omega=GOLDEN, pinch_point=0.0, name="tabulated") -> PinchedSystem:
    """Bilinear interpolation of ``table[i, j] = T(i / n_theta, j * L / (n_x - 1))``, periodic in theta."""
    table = np.asarray(table, dtype=np.float64)
    n_th, n_x = table.shape
    if np.any(np.diff(table, axis=1) < 0):
        raise ValueError("tabulated fibre maps must be non-decreasing in x")
    ext = np.vstack([table, table[:1]])

    def fibre(theta, x):
        u = wrap(np.asarray(theta, dtype=np.float64)) * n_th
        i = np.minimum(np.floor(u).astype(int), n_th - 1)
        tu = u - i
        v = np.clip(np.asarray(x, dtype=np.float64) / L, 0.0, 1.0) * (n_x - 1)
        j = np.minimum(np.floor(v).astype(int), n_x - 2)
        tv = v - j
        lo = ext[i, j] * (1 - tv) + ext[i, j + 1] * tv
        hi = ext[i + 1, j] * (1 - tv) + ext[i + 1, j + 1] * tv
        return lo * (1 - tu) + hi * tu

    sys = PinchedSystem(omega=omega, L=float(L), fibre=fibre, pinch_point=pinch_point, kind="custom",
                        name=name)
    # convex combinations of monotone rows stay monotone; re-check on a refined grid anyway
    rep = check_structure(sys, max(2 * n_th, 16))
    if rep.monotonicity > _RANGE_TOL:
        raise ValueError("interpolated table lost monotonicity")
    return sys


# ---------------------------------------------------------------------------
# evaluation and derivatives
# ---------------------------------------------------------------------------


def eval_fibre(sys: PinchedSystem, theta, x, return_clamp: bool = False):
    """T_theta(x) clamped into [0, L]; optionally also the clamping magnitude."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < -_RANGE_TOL) or np.any(x > sys.L * (1 + _RANGE_TOL)):
        raise OutOfRange(f"x outside [0, {sys.L}]")
    raw = sys.raw(theta, np.clip(x, 0.0, sys.L))
    val = np.clip(raw, 0.0, sys.L)
    if np.ndim(val) == 0:
        val = float(val)
    if return_clamp:
        return val, float(np.max(np.abs(raw - val)))
    return val


def _near_kink(v, kinks, periodic):
    for k in kinks:
        d = circle_dist(v, k) if periodic else abs(v - k)
        if d < _KINK_TOL:
            return True
    return False


def _fd_x(sys, theta, x, h):
    x = np.asarray(x, dtype=np.float64)
    f = sys.raw
    central = (f(theta, x + h) - f(theta, x - h)) / (2 * h)
    fwd = (-3 * f(theta, x) + 4 * f(theta, x + h) - f(theta, x + 2 * h)) / (2 * h)
    bwd = (3 * f(theta, x) - 4 * f(theta, x - h) + f(theta, x - 2 * h)) / (2 * h)
    return np.where(x - h < 0, fwd, np.where(x + h > sys.L, bwd, central))


def deriv_x_values(sys: PinchedSystem, theta, x, side: str = "right", h: float = 1e-5):
    """Vectorised dT/dx; closed form when available, else O(h^2) finite differences."""
    if sys.deriv_x is not None:
        return np.broadcast_to(sys.deriv_x(theta, x, side), np.broadcast(theta, x).shape).astype(float)
    step = h * np.maximum(1.0, np.abs(np.asarray(x, dtype=np.float64)))
    return _fd_x(sys, theta, x, step)


def deriv_theta_values(sys: PinchedSystem, theta, x, side: str = "right", h: float = 1e-6):
    if sys.deriv_theta is not None:
        return np.broadcast_to(sys.deriv_theta(theta, x, side), np.broadcast(theta, x).shape).astype(float)
    theta = np.asarray(theta, dtype=np.float64)
    return (sys.raw(theta + h, x) - sys.raw(theta - h, x)) / (2 * h)


def fibre_deriv_x(sys: PinchedSystem, theta, x, side: Optional[str] = None, h: float = 1e-5) -> float:
    """dT_theta/dx at a point; at a kink ``side`` must be "left" or "right"."""
    if not -_RANGE_TOL <= x <= sys.L * (1 + _RANGE_TOL):
        raise OutOfRange(f"x={x} outside [0, {sys.L}]")
    if side is None:
        if _near_kink(float(x), sys.x_kinks, periodic=False):
            raise NotDifferentiable(f"dT/dx has a kink at x={x}; request side='left' or 'right'")
        side = "right"
    return float(deriv_x_values(sys, float(theta), float(x), side, h))


def fibre_deriv_theta(sys: PinchedSystem, theta, x, side: Optional[str] = None, h: float = 1e-6) -> float:
    if side is None:
        if _near_kink(float(theta), sys.theta_kinks, periodic=True):
            raise NotDifferentiable(f"dT/dtheta has a kink at theta={theta}")
        side = "right"
    return float(deriv_theta_values(sys, float(theta), float(x), side, h))


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StructureReport:
    zero_line: float
    pinching: float
    monotonicity: float
    range_excess: float
    tol: float = _RANGE_TOL

    @property
    def passed(self) -> bool:
        return max(self.zero_line, self.pinching, self.monotonicity, self.range_excess) <= self.tol

    def as_dict(self):
        return {"zero_line": self.zero_line, "pinching": self.pinching,
                "monotonicity": self.monotonicity, "range_excess": self.range_excess,
                "passed": self.passed}


def check_structure(sys: PinchedSystem, grid_n: int = 512) -> StructureReport:
    """Maximal violations of the 0-line, pinching, monotonicity and range requirements."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    th = np.arange(grid_n) / grid_n
    xs = np.linspace(0.0, sys.L, grid_n)
    zero = float(np.max(np.abs(sys.raw(th, np.zeros_like(th)))))
    pinch = float(np.max(np.abs(sys.raw(np.full_like(xs, sys.pinch_point), xs))))
    TH, X = np.meshgrid(th, xs, indexing="ij")
    vals = sys.raw(TH, X)
    mono = float(max(0.0, np.max(vals[:, :-1] - vals[:, 1:])))
    excess = float(max(0.0, np.max(-vals), np.max(vals - sys.L)))
    return StructureReport(zero, pinch, mono, excess)


@dataclass(frozen=True)
class DominationReport:
    margin: float
    theta: float
    x: float
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tol

    def as_dict(self):
        return {"margin": self.margin, "theta": self.theta, "x": self.x, "passed": self.passed}


def _refined(base, kinks, lo, hi, periodic):
    pts = [base]
    offs = 10.0 ** -np.arange(2, 10)
    for k in kinks:
        cand = np.concatenate([[k], k - offs, k + offs])
        pts.append(wrap(cand) if periodic else cand)
    out = np.unique(np.concatenate(pts))
    return out[(out >= lo) & (out <= hi)]


def dominates(sys_a: PinchedSystem, sys_b: PinchedSystem, grid_theta: int = 2048, grid_x: int = 512) -> DominationReport:
    """Worst margin of T^A - T^B over a product grid on T^1 x [0, L_A].

    Grids are refined geometrically around the kinks of both systems and
    around both pinch points.
    """
    th = _refined(np.arange(grid_theta) / grid_theta,
                  set(sys_a.theta_kinks) | set(sys_b.theta_kinks) | {sys_a.pinch_point, sys_b.pinch_point},
                  0.0, 1.0, periodic=True)
    xs = _refined(np.linspace(0.0, sys_a.L, grid_x), set(sys_a.x_kinks) | set(sys_b.x_kinks),
                  0.0, sys_a.L, periodic=False)
    TH, X = np.meshgrid(th, xs, indexing="ij")
    diff = sys_a.raw(TH, X) - sys_b.raw(TH, X)
    k = int(np.argmin(diff))
    i, j = np.unravel_index(k, diff.shape)
    return DominationReport(float(diff[i, j]), float(th[i]), float(xs[j]))
