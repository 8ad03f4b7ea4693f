"""Log-kernel needle and its Simpson-quadrature rationalization.

The kernel is

    G(z) = (b^2/2) * log((b - z) / (b*N^{-2} - z)),   principal branch,

real and positive on the negative real axis, with G(0) = b^2 * log(N).
Splitting [b*N^{-2}, b] into the N-1 subintervals [b/k^2, b/(k-1)^2] and
applying Simpson's rule to 1/(t - z) on each yields a rational map F
with simple real poles at the quadrature nodes.  F is the "needle": the
map z + F(z) grows a thin spike from the image of the left half-plane.

Note on signs: F(z) = sum_k gamma_k / (m_k - z) with quadrature weights
gamma_k > 0.  In the package-wide coeff/(z - pole) convention the stored
coefficients are therefore -gamma_k; `nodes_weights` exposes the
positive weights for the checks that quote them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BranchCut, GridTooCoarse
from .ratmap import GUARD_SCALE, RationalMap

# Generous default A-budget for the measured-constant inequalities; the
# kernel's true constants are O(1) and callers may tighten per property.
DEFAULT_A_BUDGET = 10.0


@dataclass(frozen=True)
class NeedleParams:
    """Kernel parameters: height scale b and node-count parameter n."""

    b: float
    n: int
    eps: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.b < 1.0):
            raise ValueError(f"b must be in (0,1), got {self.b}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not (0.0 < self.eps < 1.0 / 3.0):
            raise ValueError(f"eps must be in (0, 1/3), got {self.eps}")

    @property
    def inner(self) -> float:
        """Left endpoint b*n^{-2} of the kernel segment."""
        return self.b / self.n**2

    @property
    def log_n(self) -> float:
        """Desk-scale substitute s = log n for the paper's 1/b^2."""
        return math.log(self.n)

    @property
    def g0(self) -> float:
        """Kernel tip value G(0) = b^2 log n."""
        return self.b**2 * self.log_n


def _segment_distance(z, lo: float, hi: float):
    """Distance from points z to the real segment [lo, hi]."""
    zz = np.asarray(z, dtype=complex)
    x = zz.real
    y = zz.imag
    dx = np.maximum(np.maximum(lo - x, x - hi), 0.0)
    return np.hypot(dx, y)


def eval_G(params: NeedleParams, z, check_guard: bool = True):
    """Evaluate the log kernel; principal branch of the quotient."""
    zz = np.asarray(z, dtype=complex)
    if check_guard:
        guard = GUARD_SCALE * (1.0 + params.b)
        if np.any(_segment_distance(zz, params.inner, params.b) < guard):
            raise BranchCut("z on the kernel segment within guard distance")
    val = 0.5 * params.b**2 * np.log((params.b - zz) / (params.inner - zz))
    return complex(val) if np.isscalar(z) else val


def deriv_G(params: NeedleParams, z, check_guard: bool = True):
    """Closed-form kernel derivative (b^2/2)[1/(w0-z) - 1/(b-z)]."""
    zz = np.asarray(z, dtype=complex)
    if check_guard:
        guard = GUARD_SCALE * (1.0 + params.b)
        if np.any(_segment_distance(zz, params.inner, params.b) < guard):
            raise BranchCut("z on the kernel segment within guard distance")
    val = 0.5 * params.b**2 * (1.0 / (params.inner - zz) - 1.0 / (params.b - zz))
    return complex(val) if np.isscalar(z) else val


# -- Simpson rule ------------------------------------------------------


def simpson_segment(f_lo, f_mid, f_hi, alpha: float, beta: float):
    """Simpson value ((beta-alpha)/6)(f_lo + 4 f_mid + f_hi)."""
    if not alpha < beta:
        raise ValueError("need alpha < beta")
    return (beta - alpha) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)


def simpson_error_bound(alpha: float, beta: float, f4max: float) -> float:
    """Classical Simpson bound (beta-alpha)^5/2880 * max|f''''|."""
    if not alpha < beta:
        raise ValueError("need alpha < beta")
    if f4max < 0:
        raise ValueError("f4max must be >= 0")
    return (beta - alpha) ** 5 / 2880.0 * f4max


# -- needle construction ----------------------------------------------


def _subintervals(params: NeedleParams):
    """Subinterval endpoints [b/k^2, b/(k-1)^2] for k = 2..n, vectorized."""
    k = np.arange(2, params.n + 1, dtype=float)
    lo = params.b / k**2
    hi = params.b / (k - 1.0) ** 2
    return lo, hi


def build_needle(params: NeedleParams) -> RationalMap:
    """Simpson rationalization of the kernel as a RationalMap.

    Poles are the quadrature nodes (endpoints and midpoints of the
    subintervals, all in (0, b]); shared endpoint nodes of adjacent
    subintervals are merged.  Stored coefficients are the negated
    positive weights (see module docstring).
    """
    nodes, weights = build_needle_arrays(params)
    return RationalMap.from_arrays(0.0, 0.0, -weights.astype(complex), nodes.astype(complex))


def build_needle_arrays(params: NeedleParams):
    """Quadrature (nodes, weights) arrays of build_needle, without the map."""
    b = params.b
    n = params.n
    lo, hi = _subintervals(params)
    base = b**2 / 12.0 * (hi - lo)
    j = np.arange(1, n + 1, dtype=float)
    endpoints = b / j**2
    end_weights = np.zeros(n)
    end_weights[:-1] += base
    end_weights[1:] += base
    midpoints = 0.5 * (lo + hi)
    nodes = np.empty(2 * n - 1)
    weights = np.empty(2 * n - 1)
    nodes[0::2] = endpoints
    weights[0::2] = end_weights
    nodes[1::2] = midpoints
    weights[1::2] = 4.0 * base
    return nodes, weights


def nodes_weights(needle: RationalMap):
    """Positive quadrature weights and nodes of a built needle."""
    nodes = np.array([t.pole.real for t in needle.terms])
    weights = np.array([-t.coeff.real for t in needle.terms])
    return nodes, weights


def simpson_budget(params: NeedleParams, z, deriv: bool = False):
    """Summed per-subinterval Simpson error bounds for |G - F| at z.

    Uses f(t) = 1/(t-z) (or 1/(t-z)^2 for the derivative), whose fourth
    derivative is bounded by 24/d^5 (resp. 120/d^6) with d the distance
    from z to the subinterval.  The budget is computed, never assumed.
    """
    lo, hi = _subintervals(params)
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    x = zz.real[:, None]
    y = zz.imag[:, None]
    dx = np.maximum(np.maximum(lo[None, :] - x, x - hi[None, :]), 0.0)
    dist = np.hypot(dx, y)
    if np.any(dist == 0):
        raise BranchCut("budget requested on the kernel segment")
    length = (hi - lo)[None, :]
    power = 6 if deriv else 5
    f4 = (120.0 if deriv else 24.0) / dist**power
    per_seg = length**5 / 2880.0 * f4
    total = 0.5 * params.b**2 * per_seg.sum(axis=1)
    return float(total[0]) if np.isscalar(z) else total


# -- verification ------------------------------------------------------


@dataclass
class NeedleReport:
    """Measured constants per property label and pass/fail vs a budget."""

    measured: dict[str, float]
    grid_spec: str
    budget: float
    passes: dict[str, bool] = field(default_factory=dict)
    details: dict[str, float] = field(default_factory=dict)

    def all_pass(self) -> bool:
        return all(self.passes.values())


def default_grid(params: NeedleParams, points: int = 256):
    """Default verification grid: three rings per the design defaults.

    Left half-circle of radius b, imaginary segment [-4i, 4i], and the
    full circle |z| = 2b.  Returns (left-plane points, all points).
    """
    b = params.b
    th = np.linspace(0.5 * math.pi, 1.5 * math.pi, points)
    ring_b = b * np.exp(1j * th)
    t = np.linspace(-4.0, 4.0, points)
    imag_axis = 1j * t
    th2 = np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)
    ring_2b = 2.0 * b * np.exp(1j * th2)
    all_pts = np.concatenate([ring_b, imag_axis, ring_2b])
    left = all_pts[all_pts.real <= 1e-15]
    return left, all_pts


def verify_needle(
    needle: RationalMap,
    params: NeedleParams,
    grid=None,
    budget: float = DEFAULT_A_BUDGET,
    eps: float | None = None,
) -> NeedleReport:
    """Measure the smallest constants making properties (a)-(f) hold.

    Property (d) is verified against the desk-scale height G(0) =
    b^2 log n rather than the paper-coupled unit height, and property
    (f) uses s = log n in place of 1/b^2 (reported as "scaled-(f)").
    """
    b = params.b
    if eps is None:
        eps = params.eps
    if grid is None:
        left, all_pts = default_grid(params)
    else:
        left, all_pts = grid
    if len(left) < 64 or len(all_pts) < 64:
        raise GridTooCoarse(f"need >= 64 points per region, got {len(left)}/{len(all_pts)}")

    g0 = params.g0
    F = needle.eval(left)
    Fp = needle.deriv(left)
    measured: dict[str, float] = {}
    details: dict[str, float] = {}

    # (a) |F| + |F'| <= A b outside D(0, b)
    far = np.abs(left) >= b - 1e-12
    if far.any():
        measured["a"] = float(np.max(np.abs(F[far]) + np.abs(Fp[far])) / b)
    else:
        measured["a"] = 0.0

    # (b) Re F >= -A b^2 and Re F' >= -A b on the left half-plane
    measured["b_val"] = float(max(0.0, -np.min(F.real)) / b**2)
    measured["b_deriv"] = float(max(0.0, -np.min(Fp.real)) / b)

    # (c) |Im F| <= A b
    measured["c"] = float(np.max(np.abs(F.imag)) / b)

    # (d) tip height vs kernel height, and Re F <= G(0) + A b^2
    f_at_0 = needle.eval(0.0)
    measured["d_tip"] = float(abs(f_at_0 - g0) / b**2)
    measured["d_max"] = float(max(0.0, np.max(F.real) - g0) / b**2)
    details["g0"] = g0
    details["f_at_0"] = float(f_at_0.real)

    # (e) sum of weights and nodes
    nodes, weights = nodes_weights(needle)
    measured["e"] = float((weights.sum() + nodes.sum()) / b)
    details["sum_nodes"] = float(nodes.sum())
    details["sum_weights"] = float(weights.sum())

    # (f) desk-scaled tip behaviour at delta = n^{-2(1-t eps)}
    s = params.log_n
    f_resid = 0.0
    align_resid = 0.0
    gamma = np.linspace(0.5 * math.pi + 1e-3, 1.5 * math.pi - 1e-3, 64)
    for t in (1.0, 2.0, 3.0):
        delta = math.exp(-2.0 * (1.0 - t * eps) * s)
        pts = delta * np.exp(1j * gamma)
        vals = needle.eval(pts)
        target = (1.0 - t * eps) * g0
        f_resid = max(f_resid, float(np.max(np.abs(vals.real - target)) / (b**2 * g0)))
        dvals = needle.deriv(pts)
        align = np.abs(2.0 * delta / b**2 * dvals + np.exp(-1j * gamma))
        align_resid = max(align_resid, float(np.max(align) / b))
    measured["f_val"] = f_resid
    measured["f_align"] = align_resid

    # quadrature fidelity |G - F|, |G' - F'| against the computed budget
    G = eval_G(params, all_pts)
    Fa = needle.eval(all_pts)
    diff = np.abs(G - Fa)
    bud = simpson_budget(params, all_pts)
    details["max_gf"] = float(diff.max())
    details["max_gf_over_budget"] = float(np.max(diff / bud))
    Gp = deriv_G(params, all_pts)
    Fpa = needle.deriv(all_pts)
    dbud = simpson_budget(params, all_pts, deriv=True)
    details["max_gf_deriv_over_budget"] = float(np.max(np.abs(Gp - Fpa) / dbud))

    passes = {key: val <= budget for key, val in measured.items()}
    passes["quadrature"] = details["max_gf_over_budget"] <= 1.0
    passes["quadrature_deriv"] = details["max_gf_deriv_over_budget"] <= 1.0
    return NeedleReport(
        measured=measured,
        grid_spec=f"rings={len(all_pts)} left={len(left)} scaled-(f) s=log n",
        budget=budget,
        passes=passes,
        details=details,
    )
