"""Iterated upper boundary lines and the upper bounding graph.

phi_n(theta) = T_{theta-omega} o ... o T_{theta-n*omega}(L) is evaluated per
grid point by running the n-step orbit forward from the fibre over
theta - n*omega.  No interpolation between grid points is involved, so every
value is exact up to floating point and the sequence is pointwise
non-increasing in n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .circle_rotation import circle_dist, frac_mul, min_return_distance, signed_displacement, wrap
from .errors import GridTooCoarse, NotConverged
from .systems import PinchedSystem


@dataclass
class GraphSample:
    """Values of a function T^1 -> [0, L] at theta_k = (k + offset) / N."""

    values: np.ndarray
    L: float
    n: Optional[int] = None
    system: str = ""
    offset: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def grid_n(self) -> int:
        return len(self.values)

    @property
    def theta(self) -> np.ndarray:
        return (np.arange(self.grid_n) + self.offset) / self.grid_n


def boundary_values(sys: PinchedSystem, n: int, offsets, shifts=0) -> np.ndarray:
    """phi_n at the points offsets + shifts * omega.

    ``shifts`` (integer, scalar or array) lets callers place points exactly on
    the rotation orbit: the fibre reached after going back i steps is
    offsets + (shifts - i) * omega, computed without cancellation, so the
    pinched fibre is hit exactly when offsets + (shifts - i) * omega == theta_0.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    offsets = np.asarray(offsets, dtype=np.float64)
    shifts = np.asarray(shifts, dtype=np.int64)
    x = np.full(np.broadcast(offsets, shifts).shape, float(sys.L))
    for i in range(n, 0, -1):
        # representative in [-1/2, 1/2): tiny negative angles keep their precision
        theta = signed_displacement(offsets + frac_mul(shifts - i, sys.omega))
        x = sys(theta, x)
    return x


def boundary_line(sys: PinchedSystem, n: int, grid_n: int, offset: float = 0.0) -> GraphSample:
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    theta = (np.arange(grid_n) + offset) / grid_n
    return GraphSample(boundary_values(sys, n, theta), sys.L, n, sys.name, offset, meta={"omega": sys.omega})


def boundary_sequence(sys: PinchedSystem, n_max: int, grid_n: int, offset: float = 0.0) -> list:
    """phi_0 ... phi_{n_max}, each by its own backward-anchored orbit."""
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    return [boundary_line(sys, n, grid_n, offset) for n in range(n_max + 1)]


# ---------------------------------------------------------------------------
# peak intervals J^n_j
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeakParams:
    a: float
    b: float
    m: int
    omega: float

    def half_width(self, n: float) -> float:
        return 0.5 * self.b * self.a ** (-n / self.m)


@dataclass(frozen=True)
class PeakInterval:
    n: int
    j: int
    center: float
    half_width: float

    @property
    def width(self) -> float:
        return 2.0 * self.half_width

    def contains(self, theta) -> np.ndarray:
        return circle_dist(theta, self.center) < self.half_width


def peak_intervals(params: PeakParams, n: int, j_max: int, j_min: int = 1) -> list:
    """J^n_j for j = j_min..j_max: open intervals of width b a^(-n/m) around tau_j."""
    if params.a <= 1 or params.b <= 0 or params.m < 1:
        raise ValueError("need a > 1, b > 0, m >= 1")
    hw = params.half_width(n)
    js = np.arange(j_min, j_max + 1)
    centers = frac_mul(js, params.omega) if js.size else []
    return [PeakInterval(n, int(j), float(c), hw) for j, c in zip(js, centers)]


def peak_mask(grid_n: int, offset: float, params: PeakParams, n_res: float, j_lo: int, j_hi: int) -> np.ndarray:
    """Boolean mask of uniform-grid points inside the union of J^{n_res}_j, j_lo <= j <= j_hi."""
    mask = np.zeros(grid_n, dtype=bool)
    if j_hi < j_lo:
        return mask
    hw = params.half_width(n_res)
    if hw >= 0.5:
        mask[:] = True
        return mask
    centers = frac_mul(np.arange(j_lo, j_hi + 1), params.omega)
    span = int(math.ceil(hw * grid_n)) + 2
    rel = np.arange(-span, span + 1)
    for c in centers:
        k0 = int(math.floor(c * grid_n - offset))
        idx = np.mod(k0 + rel, grid_n)
        th = (idx + offset) / grid_n
        mask[idx[circle_dist(th, c) < hw]] = True
    return mask


def default_peak_params(sys: PinchedSystem, m: int = 5) -> PeakParams:
    """Peak geometry used when the caller has no fitted constants.

    a is the largest fibre slope at the 0-line (the steepening rate of new
    peaks), b the closest return up to time m-1.
    """
    th = np.arange(4096) / 4096
    from .systems import deriv_x_values

    slope = float(np.max(deriv_x_values(sys, th, np.zeros_like(th))))
    return PeakParams(a=max(slope, 2.0 + 1e-9), b=min_return_distance(sys.omega, m), m=m, omega=sys.omega)


def upper_bounding_graph(
    sys: PinchedSystem,
    grid_n: int,
    n_max: int,
    tol: float,
    peaks: Optional[PeakParams] = None,
    offset: float = 0.0,
    strict: bool = False,
    l1_tol: Optional[float] = None,
) -> GraphSample:
    """Iterate phi_n until the sup difference off the current peak union drops below ``tol``.

    With ``l1_tol`` the mean difference over the whole grid (peaks included)
    must also drop below it, which is what invariance-based consumers such as
    Lyapunov quadrature need.

    The returned sample carries ``meta`` with ``converged``, ``restricted_diff``,
    ``unrestricted_diff``, ``iterations`` and the peak parameters used.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    peaks = peaks or default_peak_params(sys)
    theta = (np.arange(grid_n) + offset) / grid_n
    prev = np.full(grid_n, float(sys.L))
    history = []
    converged = False
    for n in range(1, n_max + 1):
        cur = boundary_values(sys, n, theta)
        diff = np.abs(prev - cur)
        off_peak = ~peak_mask(grid_n, offset, peaks, n - 1, 1, n)
        restricted = float(np.max(diff[off_peak])) if off_peak.any() else math.inf
        unrestricted = float(np.max(diff))
        mean_diff = float(np.mean(diff))
        history.append((n, restricted, unrestricted))
        prev = cur
        if restricted < tol and (l1_tol is None or mean_diff < l1_tol):
            converged = True
            break
    graph = GraphSample(prev, sys.L, n, sys.name, offset, meta={
        "omega": sys.omega,
        "converged": converged,
        "iterations": n,
        "restricted_diff": history[-1][1],
        "unrestricted_diff": history[-1][2],
        "mean_diff": mean_diff,
        "tol": tol,
        "l1_tol": l1_tol,
        "peaks": {"a": peaks.a, "b": peaks.b, "m": peaks.m},
        "history": history,
    })
    if strict and not converged:
        raise NotConverged(f"no off-peak convergence to {tol} within {n_max} iterations", graph)
    return graph


# ---------------------------------------------------------------------------
# slope and decay bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeReport:
    n: int
    observed: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.observed <= self.bound


def max_slope(phi: GraphSample) -> float:
    v = phi.values
    return float(np.max(np.abs(np.roll(v, -1) - v)) * phi.grid_n)


def slope_check(phi: GraphSample, beta: float, alpha: float, n: Optional[int] = None) -> SlopeReport:
    """Largest finite-difference slope of phi_n against beta * alpha**n.

    By the mean value theorem a difference quotient never exceeds the
    Lipschitz constant, so the grid estimate is a valid lower bound on it.
    """
    n = phi.n if n is None else n
    return SlopeReport(n, max_slope(phi), beta * alpha**n)


def slope_growth_rate(seq: Sequence[GraphSample], n_min: int = 1) -> float:
    """Least-squares slope of log(max slope of phi_n) against n."""
    pts = [(p.n, max_slope(p)) for p in seq if p.n is not None and p.n >= n_min]
    pts = [(n, s) for n, s in pts if s > 0]
    if len(pts) < 2:
        raise ValueError("need at least two lines with positive slope")
    n, s = np.array(pts, dtype=float).T
    return float(np.polyfit(n, np.log(s), 1)[0])


@dataclass(frozen=True)
class DecayParams:
    a: float
    b: float
    m: int
    alpha: float
    gamma: float
    L: float
    q: int = 1

    @property
    def lambda_decay(self) -> float:
        return self.gamma * (1 - 4 / self.m) - 4 / self.m


@dataclass(frozen=True)
class DecayRow:
    n: int
    observed: float
    bound: float
    vacuous: bool
    tested: bool = True

    @property
    def passed(self) -> bool:
        return not self.tested or self.vacuous or self.observed <= self.bound


@dataclass
class DecayReport:
    params: DecayParams
    rows: list
    atol: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def tested_rows(self) -> list:
        return [r for r in self.rows if r.tested]

    def empirical_rate(self) -> float:
        """Least-squares slope of log(observed) against n over all measured rows.

        Rows whose difference is exactly zero have converged to floating-point
        resolution; if fewer than two positive rows remain and some row is
        zero, the decay outran the arithmetic and the rate is -inf.
        """
        measured = [r for r in self.rows if not r.vacuous]
        pts = [(r.n, r.observed) for r in measured if r.observed > 0]
        if len(pts) < 2:
            if any(r.observed == 0 for r in measured):
                return -math.inf
            raise ValueError("not enough resolved rows for a rate")
        n, v = np.array(pts, dtype=float).T
        return float(np.polyfit(n, np.log(v), 1)[0])

    def predicted_rate(self) -> float:
        """-lambda * log(alpha): the log-decay per step implied by the bound."""
        return -self.params.lambda_decay * math.log(self.params.alpha)


def difference_decay_check(seq: Sequence[GraphSample], params: DecayParams, atol: float = 0.0) -> DecayReport:
    """Off-peak sup of |phi_n - phi_{n-1}| against L * alpha**(-(n-1) * lambda).

    The bound is tested for n with q <= (n-1)/m, on theta outside the union of
    J^{n-1}_j over q <= j <= n.  Smaller n are measured (with the same
    exclusion) for the rate regression only.  ``atol`` is an absolute
    allowance for floating-point resolution of the graph values.
    """
    pk = PeakParams(params.a, params.b, params.m, _omega_of(seq))
    lam = params.lambda_decay
    rows = []
    for prev, cur in zip(seq[:-1], seq[1:]):
        n = cur.n
        tested = params.q <= (n - 1) / params.m
        inside = peak_mask(cur.grid_n, cur.offset, pk, n - 1, params.q, n)
        bound = params.L * params.alpha ** (-(n - 1) * lam) + atol
        if inside.all():
            rows.append(DecayRow(n, 0.0, bound, True, tested))
            continue
        obs = float(np.max(np.abs(cur.values - prev.values)[~inside]))
        rows.append(DecayRow(n, obs, bound, False, tested))
    return DecayReport(params, rows, atol)


def _omega_of(seq):
    for p in seq:
        if "omega" in p.meta:
            return p.meta["omega"]
    raise ValueError("graph samples carry no rotation number; set meta['omega']")


# ---------------------------------------------------------------------------
# density probe
# ---------------------------------------------------------------------------


@dataclass
class DensityProbeReport:
    samples: int
    hits: int
    delta: float
    epsilon: float
    miss_locations: list
    seed: int = 0
    orbit_hits: int = 0

    @property
    def hit_fraction(self) -> float:
        return self.hits / self.samples if self.samples else float("nan")

    def as_dict(self):
        return {
            "samples": self.samples, "hits": self.hits,
            "hit_fraction": None if self.samples == 0 else self.hit_fraction,
            "orbit_hits": self.orbit_hits,
            "delta": self.delta, "epsilon": self.epsilon, "seed": self.seed,
            "miss_locations": [[t, x] for t, x in self.miss_locations],
        }


def _dip_witness(sys, theta, x, delta, epsilon, depth, settle, ladder=400, rounds=6):
    """Search the dips at orbit points tau_j near ``theta`` for a graph point within eps of x.

    phi_n(tau_j + h) is continuous in h, vanishes at h = 0 and is evaluated
    with the pinch step seeing the exact angle h, so offsets far below the grid
    spacing are resolved.  Candidate witnesses are confirmed with ``settle``
    further backward steps.  Returns (theta', value) or None.
    """
    js = np.arange(1, depth + 1)
    taus = frac_mul(js, sys.omega)
    dist = circle_dist(taus, theta)
    for j in js[dist < delta]:
        room = delta - float(dist[j - 1])
        n = int(j) + settle
        for side in (1.0, -1.0):
            lo, hi = math.log10(room) - 1e-9, -300.0
            for _ in range(rounds):
                u = np.linspace(lo, hi, ladder)
                h = side * 10.0**u
                vals = boundary_values(sys, n, h, int(j))
                close = np.nonzero(np.abs(vals - x) < epsilon)[0]
                if close.size:
                    k = close[0]
                    check = boundary_values(sys, n + settle, h[k], int(j))
                    if abs(float(check) - x) < epsilon:
                        return float(wrap(taus[j - 1] + h[k])), float(check)
                    break
                above = vals > x
                cross = np.nonzero(above[:-1] != above[1:])[0]
                if not cross.size:
                    break
                lo, hi = u[cross[0]], u[cross[0] + 1]
    return None


def density_probe(
    sys: PinchedSystem, phi_plus: GraphSample, n_samples: int, delta: float, epsilon: float, seed: int,
    depth: int = 400, settle: int = 60, max_attempts: int = 10_000,
) -> DensityProbeReport:
    """Sample points under the graph and test whether each box meets it.

    A sample (theta, x) has theta on the grid and 3 eps <= x <= phi(theta) - 3 eps;
    it is a hit when some point theta' with d(theta', theta) < delta has
    |phi(theta') - x| < eps.  Candidate points theta' are the grid points and,
    failing those, points snapped onto the orbit tau_1..tau_depth at which the
    thin dips of the graph are resolved.  Sample i draws from its own stream
    seeded by (seed, i).
    """
    if delta <= 0 or epsilon <= 0:
        raise ValueError("delta and epsilon must be positive")
    N = phi_plus.grid_n
    if delta * N < 10:
        raise GridTooCoarse(f"delta * grid_n = {delta * N:.3g} < 10")
    v = phi_plus.values
    theta = phi_plus.theta
    admissible = np.nonzero(v >= 6 * epsilon)[0]
    if admissible.size == 0:
        return DensityProbeReport(0, 0, delta, epsilon, [], seed)
    half = int(math.ceil(delta * N))
    rel = np.arange(-half, half + 1)
    hits, misses, snapped = 0, [], 0
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        for _ in range(max_attempts):
            k = int(rng.integers(N))
            x = float(rng.uniform(0.0, phi_plus.L))
            if 3 * epsilon <= x <= v[k] - 3 * epsilon:
                break
        else:
            continue
        idx = np.mod(k + rel, N)
        near = circle_dist(theta[idx], theta[k]) < delta
        if np.any(np.abs(v[idx[near]] - x) < epsilon):
            hits += 1
        elif _dip_witness(sys, float(theta[k]), x, delta, epsilon, depth, settle) is not None:
            hits += 1
            snapped += 1
        else:
            misses.append((float(theta[k]), x))
    return DensityProbeReport(hits + len(misses), hits, delta, epsilon, misses, seed, snapped)
