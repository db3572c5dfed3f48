"""Lyapunov exponents, the SNA criterion and the checker for the standing assumptions.

The checker estimates the global constants of a system (expansion bound
alpha, theta-Lipschitz bound beta, contraction exponent gamma), derives the
auxiliary constants m, a, b from them and the diophantine fit of the rotation
number, and tests domination by the piecewise-linear reference system.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .boundary import GraphSample, boundary_values
from .circle_rotation import GOLDEN, DiophantineEstimate, diophantine_fit, min_return_distance, wrap
from .errors import DivergentIntegral, LogGNotIntegrable, NoContraction, NonInvariantGraph
from .systems import (
    FgFamilySpec,
    PinchedSystem,
    ReferenceSpec,
    _refined,
    check_structure,
    deriv_theta_values,
    deriv_x_values,
    dominates,
    reference_system,
    tanh_spec,
)

CONDITION_IDS = ("exp_contr", "beta_bound", "m_choice", "a_bound", "b_bound", "reference_domination", "diophantine")


# ---------------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LyapunovResult:
    value: float
    quadrature_n: int
    singular_correction: bool
    stability: float = math.nan
    invariance_residual: float = math.nan
    singular_cells: int = 0


def graph_at(sys: PinchedSystem, phi: GraphSample, theta, shift: int = 0) -> np.ndarray:
    """phi evaluated at theta + shift * omega.

    Boundary lines (``phi.n`` set) are re-evaluated exactly by their backward
    orbit; anything else is interpolated periodically from its grid.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if phi.n is not None:
        return boundary_values(sys, phi.n, theta, shift)
    pts = wrap(theta + shift * sys.omega) if shift else theta
    return np.interp(pts, phi.theta, phi.values, period=1.0)


def _log_mean(dt: np.ndarray):
    """Midpoint mean of log(dt) on a uniform grid, with isolated zeros handled.

    A cell whose value is not positive is treated as containing a simple zero
    of DT: DT ~ K |t| with K read off the neighbouring cells, whose exact
    cell integral is h (log(K h / 2) - 1).
    """
    N = len(dt)
    h = 1.0 / N
    with np.errstate(divide="ignore", invalid="ignore"):
        logv = np.log(dt)
    bad = ~np.isfinite(logv)
    if not bad.any():
        return float(np.mean(logv)), 0
    idx = np.nonzero(bad)[0]
    left, right = bad[(idx - 1) % N], bad[(idx + 1) % N]
    if np.any(left | right):
        raise DivergentIntegral("adjacent cells with vanishing derivative; the integral diverges to -inf")
    K = 0.5 * (dt[(idx - 1) % N] + dt[(idx + 1) % N]) / h
    corr = h * (np.log(K * h / 2) - 1.0)
    regular = logv[~bad] * h
    if np.sum(np.abs(corr)) > np.sum(np.abs(regular)):
        raise DivergentIntegral("singular correction exceeds the finite part of the integral")
    return float(np.sum(regular) + np.sum(corr)), int(idx.size)


def _lyapunov_once(sys, phi, N):
    theta = (np.arange(N) + 0.5) / N
    x = graph_at(sys, phi, theta)
    dt = deriv_x_values(sys, theta, x)
    value, n_bad = _log_mean(np.asarray(dt, dtype=np.float64))
    return value, n_bad, theta, x


def lyapunov_on_graph(
    sys: PinchedSystem, phi: GraphSample, quad_n: Optional[int] = None, invariance_tol: float = 1e-6,
) -> LyapunovResult:
    """Midpoint quadrature of log DT_theta(phi(theta)).

    Invariance is measured as the mean one-step residual
    |T_theta(phi(theta)) - phi(theta + omega)| over the quadrature points.
    """
    N = phi.grid_n if quad_n is None else int(quad_n)
    if N < 10:
        raise ValueError("quad_n must be >= 10")
    value, n_bad, theta, x = _lyapunov_once(sys, phi, N)
    image = sys(theta, x)
    residual = float(np.mean(np.abs(image - graph_at(sys, phi, theta, shift=1))))
    if not residual < invariance_tol:
        raise NonInvariantGraph(f"mean one-step residual {residual:.3g} >= {invariance_tol:g}")
    value2, n_bad2, _, _ = _lyapunov_once(sys, phi, 2 * N)
    return LyapunovResult(value, N, bool(n_bad or n_bad2), abs(value2 - value), residual, n_bad)


def zero_graph(sys: PinchedSystem, grid_n: int = 16) -> GraphSample:
    return GraphSample(np.zeros(grid_n), sys.L, None, sys.name, meta={"omega": sys.omega})


def reference_lambda0(a: float, b: float) -> float:
    """Closed form of lambda(0) for the reference system: log a - b (needs b <= 1)."""
    return math.log(a) - b


# ---------------------------------------------------------------------------
# SNA criterion
# ---------------------------------------------------------------------------


class SnaResult(NamedTuple):
    lambda0: float
    exists_sna: bool
    integral_log_g: float


# lambda(0) at or below this counts as the threshold itself
SNA_THRESHOLD_TOL = 1e-9


def integral_log(g: Callable, quad_n: int, center: float = 0.0) -> float:
    """Integral of log g over the circle by midpoint sums at N, 2N, 4N plus extrapolation.

    Midpoints are offset from ``center`` (the zero of g) by half a cell, so g
    is never evaluated at its zero.
    """
    if hasattr(g, "integral_log"):
        return float(g.integral_log())
    sums = []
    for N in (quad_n, 2 * quad_n, 4 * quad_n):
        theta = wrap(center + (np.arange(N) + 0.5) / N)
        with np.errstate(divide="ignore"):
            sums.append(float(np.mean(np.log(g(theta)))))
    if not all(math.isfinite(s) for s in sums):
        raise LogGNotIntegrable("log g is -inf at a quadrature node")
    d1, d2 = sums[1] - sums[0], sums[2] - sums[1]
    if abs(d1) < 1e-15:
        return sums[2]
    if abs(d2) > 0.75 * abs(d1):
        raise LogGNotIntegrable(f"quadrature refinement does not settle (differences {d1:.3g}, {d2:.3g})")
    r = d2 / d1
    return sums[2] + d2 * r / (1.0 - r)


def sna_criterion(fg: FgFamilySpec, quad_n: int = 10**6) -> SnaResult:
    """lambda(0) = log f'(0) + log alpha + int log g, and whether it is positive."""
    if not fg.f_deriv0 > 0:
        raise ValueError("f'(0) must be positive")
    ig = integral_log(fg.g, quad_n, fg.pinch_point)
    lam = math.log(fg.f_deriv0) + math.log(fg.alpha) + ig
    return SnaResult(lam, lam > SNA_THRESHOLD_TOL, ig)


# ---------------------------------------------------------------------------
# global constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GlobalConstants:
    alpha: float
    beta: float
    gamma: float
    alpha_at: tuple = ()
    beta_at: tuple = ()
    contraction_sup: float = math.nan
    contraction_at: tuple = ()

    def __iter__(self):
        return iter((self.alpha, self.beta, self.gamma))


def _sup_both_sides(fn, th, xs):
    TH, X = np.meshgrid(th, xs, indexing="ij")
    vals = np.maximum(np.abs(fn(TH, X, "right")), np.abs(fn(TH, X, "left")))
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    return float(vals[i, j]), float(th[i]), float(xs[j])


def _sup_refined(fn, th, xs, x_lo, x_hi, n_local=65):
    """Grid sup followed by one refinement pass on a local grid around the maximiser."""
    best, t0, x0 = _sup_both_sides(fn, th, xs)
    dth = 2.0 / len(th)
    dx = 2.0 * (x_hi - x_lo) / max(len(xs) - 1, 1)
    th2 = wrap(np.linspace(t0 - dth, t0 + dth, n_local))
    xs2 = np.clip(np.linspace(x0 - dx, x0 + dx, n_local), x_lo, x_hi)
    best2, t2, x2 = _sup_both_sides(fn, th2, xs2)
    return (best2, t2, x2) if best2 > best else (best, t0, x0)


def estimate_global_constants(
    sys: PinchedSystem, grid: tuple = (1024, 1024), strict: bool = True,
) -> GlobalConstants:
    """alpha = sup DT, beta = sup |dT/dtheta|, gamma from sup DT over x >= 1.

    gamma = -log_alpha(sup_{x >= 1} DT), so that DT <= alpha**(-gamma) there.
    A region with DT identically 0 (or no x >= 1 at all) gives gamma = inf.
    Without contraction (sup >= 1) ``strict`` raises NoContraction; otherwise
    the non-positive gamma is returned as computed.
    """
    n_th, n_x = grid
    kinks_th = set(sys.theta_kinks) | {sys.pinch_point}
    th = _refined(np.arange(2 * n_th) / (2 * n_th), kinks_th, 0.0, 1.0, periodic=True)
    xs = _refined(np.linspace(0.0, sys.L, n_x), set(sys.x_kinks), 0.0, sys.L, periodic=False)

    def dx(t, x, side):
        return deriv_x_values(sys, t, x, side)

    def dth(t, x, side):
        return deriv_theta_values(sys, t, x, side)

    alpha, a_t, a_x = _sup_refined(dx, th, xs, 0.0, sys.L)
    beta, b_t, b_x = _sup_refined(dth, th, xs, 0.0, sys.L)
    if sys.L < 1.0:
        return GlobalConstants(alpha, beta, math.inf, (a_t, a_x), (b_t, b_x), 0.0, ())
    xs1 = xs[xs >= 1.0]
    if xs1.size < 2:
        xs1 = np.linspace(1.0, sys.L, max(2, n_x // 4)) if sys.L > 1.0 else np.array([1.0])
    sup1, c_t, c_x = _sup_refined(dx, th, xs1, 1.0, sys.L)
    if sup1 >= 1.0 and strict:
        raise NoContraction(f"DT = {sup1:.4g} >= 1 at (theta, x) = ({c_t:.6g}, {c_x:.6g}) with x >= 1")
    if sup1 == 0.0:
        gamma = math.inf
    elif alpha > 1.0:
        gamma = -math.log(sup1) / math.log(alpha)
    else:
        gamma = math.nan
    return GlobalConstants(alpha, beta, gamma, (a_t, a_x), (b_t, b_x), sup1, (c_t, c_x))


# ---------------------------------------------------------------------------
# condition checker
# ---------------------------------------------------------------------------


def choose_m(gamma: float) -> int:
    """Smallest integer m with m > 4 + 4/gamma (strict, so the decay rate is positive)."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if math.isinf(gamma):
        return 5
    return math.floor(4.0 + 4.0 / gamma) + 1


def lambda_decay(gamma: float, m: int) -> float:
    if math.isinf(gamma):
        return math.inf
    return gamma * (1 - 4 / m) - 4 / m


@dataclass(frozen=True)
class ConditionResult:
    passed: bool
    margin: float
    witness: Optional[tuple] = None


@dataclass
class ConditionReport:
    alpha: float
    beta: float
    gamma: float
    m: int
    a: float
    b: float
    c: float
    d: float
    lambda_decay: float
    per_condition: dict
    omega: float = GOLDEN
    system: str = ""

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.per_condition.values()) and self.lambda_decay > 0

    def failures(self) -> list:
        return [k for k, r in self.per_condition.items() if not r.passed]

    def as_dict(self) -> dict:
        return {
            "system": self.system,
            "omega": _num(self.omega),
            "alpha": _num(self.alpha),
            "beta": _num(self.beta),
            "gamma": _num(self.gamma),
            "m": self.m,
            "a": _num(self.a),
            "b": _num(self.b),
            "c": _num(self.c),
            "d": _num(self.d),
            "lambda_decay": _num(self.lambda_decay),
            "passed": self.passed,
            "per_condition": {
                k: {
                    "passed": r.passed,
                    "margin": _num(r.margin),
                    "witness": None if r.witness is None else [_num(w) for w in r.witness],
                }
                for k, r in self.per_condition.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _num(v):
    """JSON-safe float: non-finite values become strings."""
    if isinstance(v, (bool, int)) or v is None:
        return v
    v = float(v)
    if math.isfinite(v):
        return v
    return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")


def check_conditions(
    sys: PinchedSystem,
    est: DiophantineEstimate,
    overrides: Optional[dict] = None,
    grid: tuple = (1024, 1024),
    domination_grid: tuple = (2048, 512),
) -> ConditionReport:
    """Evaluate the standing assumptions for ``sys``; the report carries every failure.

    ``overrides`` may fix any of alpha, beta, gamma, m, a, b instead of the
    computed values.
    """
    ov = dict(overrides or {})
    if {"alpha", "beta", "gamma"} <= ov.keys():
        consts = GlobalConstants(ov["alpha"], ov["beta"], ov["gamma"])
    else:
        try:
            consts = estimate_global_constants(sys, grid)
        except NoContraction:
            consts = GlobalConstants(math.nan, math.nan, -math.inf)
    alpha = float(ov.get("alpha", consts.alpha))
    beta = float(ov.get("beta", consts.beta))
    gamma = float(ov.get("gamma", consts.gamma))
    res = {}

    exp_ok = alpha > 2 and gamma > 0
    res["exp_contr"] = ConditionResult(
        exp_ok, min(alpha - 2, gamma) if not math.isnan(alpha) else -math.inf, consts.contraction_at or None
    )
    res["beta_bound"] = ConditionResult(math.isfinite(beta), beta, consts.beta_at or None)

    if gamma > 0:
        m = int(ov.get("m", choose_m(gamma)))
        m_floor = 4 + 4 / gamma if math.isfinite(gamma) else 4.0
    else:
        m, m_floor = 5, math.inf
    lam = lambda_decay(gamma, m) if gamma > 0 else -math.inf
    res["m_choice"] = ConditionResult(m > m_floor and lam > 0, m - m_floor)

    c, d = est.c, est.d
    a_min = (m + 1) ** d
    a = float(ov.get("a", max(a_min, math.nextafter(2.0, 3.0))))
    res["a_bound"] = ConditionResult(a >= a_min and a > 2, a - a_min)

    returns_min = min_return_distance(sys.omega, m)
    b_max = min(c, returns_min)
    b = float(ov.get("b", b_max))
    res["b_bound"] = ConditionResult(0 < b <= b_max, b_max - b)

    if a > 2 and b > 0:
        dom = dominates(sys, reference_system(ReferenceSpec(a, b), sys.omega), *domination_grid)
        res["reference_domination"] = ConditionResult(dom.passed, dom.margin, (dom.theta, dom.x))
    else:
        res["reference_domination"] = ConditionResult(False, -math.inf)

    dio_ok = math.isclose(est.omega, sys.omega, rel_tol=0, abs_tol=1e-15) and est.verify()
    res["diophantine"] = ConditionResult(dio_ok, c)

    return ConditionReport(alpha, beta, gamma, m, a, b, c, d, lam, res, sys.omega, sys.name)


# ---------------------------------------------------------------------------
# alpha_0 search
# ---------------------------------------------------------------------------

DEFAULT_OUTER = (2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0)


@dataclass
class Alpha0Result:
    alpha0: Optional[float]
    split: Optional[tuple]
    report: Optional[ConditionReport]
    evaluated: dict = field(default_factory=dict)
    diagnostic: str = ""

    @property
    def found(self) -> bool:
        return self.alpha0 is not None


def _passes_some_split(spec: FgFamilySpec, est, outers, grid):
    best = None
    for outer in outers:
        inner = spec.alpha / outer
        if inner < 1.0:
            continue
        sys = spec.system(est.omega, split=(outer, inner))
        rep = check_conditions(sys, est, grid=grid)
        if rep.passed:
            return (outer, inner), rep
        if best is None:
            best = ((outer, inner), rep)
    return None, (best[1] if best else None)


def find_alpha0(
    family: Callable[[float], FgFamilySpec] = tanh_spec,
    est: Optional[DiophantineEstimate] = None,
    alpha_range: tuple = (8.0, 256.0),
    steps: int = 21,
    outers: Sequence[float] = DEFAULT_OUTER,
    grid: tuple = (512, 512),
) -> Alpha0Result:
    """Smallest alpha on a geometric grid for which some split alpha = a1 * a2 passes.

    The grid is bisected, which presumes that passing is monotone in alpha;
    the bisection invariant (lower end fails, upper end passes) is checked
    at every step and reported in ``evaluated``.
    """
    est = est or diophantine_fit(GOLDEN, 10_000)
    probe = family(alpha_range[1]).system(est.omega)
    if not check_structure(probe).passed:
        return Alpha0Result(None, None, None, diagnostic="family violates the 0-line/pinching structure")
    grid_alpha = np.geomspace(alpha_range[0], alpha_range[1], steps)
    cache = {}

    def status(i):
        if i not in cache:
            cache[i] = _passes_some_split(family(float(grid_alpha[i])), est, outers, grid)
        return cache[i]

    if status(steps - 1)[0] is None:
        return Alpha0Result(None, None, status(steps - 1)[1], _evaluated(grid_alpha, cache),
                            "no split passes at the top of the range")
    if status(0)[0] is not None:
        split, rep = status(0)
        return Alpha0Result(float(grid_alpha[0]), split, rep, _evaluated(grid_alpha, cache),
                            "passes at the bottom of the range")
    lo, hi = 0, steps - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if status(mid)[0] is None:
            lo = mid
        else:
            hi = mid
    split, rep = status(hi)
    return Alpha0Result(float(grid_alpha[hi]), split, rep, _evaluated(grid_alpha, cache))


def _evaluated(grid_alpha, cache):
    return {float(grid_alpha[i]): (None if s is None else list(s)) for i, (s, _) in sorted(cache.items())}


def family_monotone(family: Callable[[float], FgFamilySpec], alphas: Sequence[float], grid_n: int = 256) -> bool:
    """Larger alpha dominates smaller alpha pointwise on a sample grid (common fibre [0, L_min])."""
    th = (np.arange(grid_n) + 0.5) / grid_n
    prev = None
    for a in sorted(alphas):
        sys = family(a).system()
        if prev is not None:
            xs = np.linspace(0.0, min(prev.L, sys.L), grid_n)
            TH, X = np.meshgrid(th, xs, indexing="ij")
            if np.any(sys.raw(TH, X) < prev.raw(TH, X) - 1e-12):
                return False
        prev = sys
    return True


# ---------------------------------------------------------------------------
# the worked example
# ---------------------------------------------------------------------------

WORKED_SPLIT = (4.0, 8.0)
WORKED_A = 8.0


def worked_example_report(grid: tuple = (1024, 1024)) -> dict:
    """The tanh example with split (4, 8) on the golden rotation.

    Reproduces the individual published comparisons and sets the checker's
    own figures beside them.
    """
    omega = GOLDEN
    spec = tanh_spec(WORKED_SPLIT[0] * WORKED_SPLIT[1])
    sys = spec.system(omega, split=WORKED_SPLIT)
    est = diophantine_fit(omega, 10_000)
    b_published = omega**3
    b_direct = min_return_distance(omega, 5)

    th = np.linspace(0.0, 1.0, 200_001)
    ramp = np.minimum(1.0, (2.0 / b_published) * np.minimum(th, 1.0 - th))
    sin_margin = 3 * np.abs(np.sin(np.pi * th)) - ramp
    interior = (th > 1e-9) & (th < 1 - 1e-9)

    consts = estimate_global_constants(sys, grid)
    dom_pub = dominates(sys, reference_system(ReferenceSpec(WORKED_A, b_published), omega))
    dom_dir = dominates(sys, reference_system(ReferenceSpec(WORKED_A, b_direct), omega))
    report = check_conditions(sys, est, grid=grid)
    report_pub = check_conditions(sys, est, overrides={"m": 5, "a": WORKED_A, "b": b_published}, grid=grid)

    return {
        "system": "4 |sin(pi theta)| tanh(8 x), golden rotation",
        "published_comparisons": {
            "tanh_slope_bound_2e-16_below_32^-4": bool(2 * math.exp(-16) < 32.0**-4),
            "three_sin_above_ramp_off_zero": bool(np.all(sin_margin[interior] > 0)),
            "three_sin_min_margin": _num(float(np.min(sin_margin))),
            "four_thirds_tanh1_above_1": bool(4 / 3 * math.tanh(1.0) > 1),
            "reference_domination_a8_b_omega3": dom_pub.passed,
            "reference_domination_a8_b_omega3_margin": _num(dom_pub.margin),
            "alpha0": 32.0,
        },
        "checker": {
            "alpha": _num(consts.alpha),
            "beta": _num(consts.beta),
            "gamma": _num(consts.gamma),
            "contraction_sup": _num(consts.contraction_sup),
            "gamma_above_4": bool(consts.gamma > 4),
            "m": report.m,
            "b_published_omega3": _num(b_published),
            "b_direct_min_return_m5": _num(b_direct),
            "b_direct_is_omega4": bool(math.isclose(b_direct, omega**4, rel_tol=1e-12)),
            "reference_domination_a8_b_direct": dom_dir.passed,
            "reference_domination_a8_b_direct_margin": _num(dom_dir.margin),
            "diophantine_c": _num(est.c),
            "diophantine_d": _num(est.d),
        },
        "conditions_computed": report.as_dict(),
        "conditions_published_constants": report_pub.as_dict(),
    }
