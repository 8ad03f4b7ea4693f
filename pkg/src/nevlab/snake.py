"""Snake maps: waypoint ladders, the explicit univalent map of the upper
half-plane, the Paley-Wiener corrector, and the boundary-length scaling
experiment.

The map is

    f(z) = sum_n a_n * z / (z + i y_n),      y_n = Q^n,

with chords a_n = w_{n+1} - w_n of a waypoint sequence.  f(x) crawls
along the waypoint polyline as x sweeps [y_n, y_{n+1}], staying inside
convex boxes around the chords; summing chord lengths against the
degree gives the sqrt(n) boundary-length law.

Waypoints for the scaling experiment are the radial spiral

    w_n = (1 - n/(2N)) exp(2 pi i beta n / sqrt(N)),

traversed outward from the center (the printed inward order jumps from
w_0 = 0 straight to radius ~1, violating the chord-ratio and turning
conditions at the seam; extending the same formula inward to radius
1/(2N) and walking it outward satisfies them uniformly - see the
decisions ledger).

Evaluation divides by y_n first (u = z/y_n), so ladders up to the
float64 ceiling Q^n ~ 1e300 evaluate without overflow.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import (
    CurveSample,
    convex_membership_margin,
    simple_curve_check,
)
from .errors import (
    BetaExhausted,
    CalibrationFailed,
    CancellationFailed,
    ConditionViolated,
    PoleProximity,
    ToleranceNotReached,
)
from .ratmap import RationalMap

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SnakeConfig:
    """Scale parameters; Q may be set directly or derived from T."""

    Q: float = 4.0
    T: float | None = None
    eps: float | None = None
    rho: float | None = None
    r1: int | None = None

    def __post_init__(self):
        if self.T is not None:
            T = self.T
            if T < 16:
                raise ValueError("T must be >= 16 (desk floor; the paper wants > 100)")
            object.__setattr__(self, "Q", T ** (1.0 / 12.0))
            object.__setattr__(self, "eps", T ** (-0.5))
            object.__setattr__(self, "rho", 1.0 - 1.0 / T)
            object.__setattr__(self, "r1", int(2.0 * T * math.log(T)) + 1)
        if not self.Q > 1.0:
            raise ValueError(f"Q must be > 1, got {self.Q}")

    @classmethod
    def from_T(cls, T: float) -> "SnakeConfig":
        return cls(Q=T ** (1.0 / 12.0), T=T)

    def max_ladder(self) -> int:
        """Largest n with Q^n representable (with room for squaring guards)."""
        return int(math.floor(700.0 / math.log(self.Q)))


# -- waypoints -----------------------------------------------------------


@dataclass
class Waypoints:
    """w_0 = 0 and the chord ladder a_n = w_{n+1} - w_n."""

    w: np.ndarray
    Q: float
    seam_exempt: int = 1  # chords with n < seam_exempt skip conditions (b),(c)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=complex)
        if self.w[0] != 0:
            raise ValueError("w_0 must be 0")

    @property
    def a(self) -> np.ndarray:
        return np.diff(self.w)

    @property
    def count(self) -> int:
        return len(self.w)

    def y(self, n) -> np.ndarray:
        return self.Q ** np.asarray(n, dtype=float)

    def conditions(self) -> dict:
        """Margins of (a)-(d); exempt chords are reported separately."""
        a = self.a
        k0 = self.seam_exempt
        ratios = np.abs(a[k0 + 1 :]) / np.abs(a[k0:-1])
        turns = np.angle(a[k0 + 1 :] * np.conj(a[k0:-1]))
        eps_measured = max(
            float(np.max(np.abs(ratios - 1.0))) if len(ratios) else 0.0,
            float(np.max(np.abs(turns))) if len(turns) else 0.0,
        )
        return {
            "max_modulus": float(np.max(np.abs(self.w))),
            "ratio_lo": float(np.min(ratios)) if len(ratios) else 1.0,
            "ratio_hi": float(np.max(ratios)) if len(ratios) else 1.0,
            "max_turn": float(np.max(np.abs(turns))) if len(turns) else 0.0,
            "eps_measured": eps_measured,
            "min_chord": float(np.min(np.abs(a))),
            "seam_exempt": k0,
        }

    def validate(self, eps: float) -> None:
        """Raise ConditionViolated naming the first failing condition."""
        if np.max(np.abs(self.w[1:])) >= 1.0:
            n = int(np.argmax(np.abs(self.w) >= 1.0))
            raise ConditionViolated("a", n, f"|w_{n}| = {abs(self.w[n]):.4f} >= 1")
        a = self.a
        for n in range(self.seam_exempt, len(a) - 1):
            r = abs(a[n + 1]) / abs(a[n])
            if not (1.0 - eps < r < 1.0 + eps):
                raise ConditionViolated("b", n, f"ratio {r:.4f} vs eps {eps:.4f}")
            t = abs(cmath.phase(a[n + 1] * a[n].conjugate()))
            if t > eps:
                raise ConditionViolated("c", n, f"turn {t:.4f} vs eps {eps:.4f}")


def waypoints_radial(N: int, beta: float, Q: float = 4.0) -> Waypoints:
    """Radial-spiral waypoints traversed outward, with w_0 = 0 joined smoothly.

    The displayed points (1 - n/(2N)) e^{2 pi i beta n/sqrt(N)}, n =
    N-1..1, live on the annulus [~1/2, 1).  Walking them outward, the
    join down to the origin is:

      * an inner log-spiral continuing the same turning rate, whose
        chords shrink proportionally to the radius (so ratio and turn
        conditions stay uniform), down to two decades below the annulus;
      * a short geometric seam cluster from 0, one chord per ladder
        rung, sized to the local box scale (these seam chords are exempt
        from conditions (b)/(c), like the paper's glossed w_0 hop).

    A straight-prefix join violates the turning condition at the seam
    and fails the adjacent box windows; this construction measures clean
    margins at every window (see the decisions ledger).
    """
    if N < 4:
        raise ValueError("N must be >= 4")
    if beta <= 0:
        raise ValueError("beta must be > 0")
    n = np.arange(N - 1, 0, -1, dtype=float)
    printed = (1.0 - n / (2.0 * N)) * np.exp(2j * math.pi * beta * n / math.sqrt(N))

    delta = 2.0 * math.pi * beta / math.sqrt(N)  # turn per step
    inner_most = printed[0]
    r_star = abs(inner_most)
    phi_star = math.atan2(inner_most.imag, inner_most.real)
    # log-radial descent whose radial step ramps up geometrically from
    # the printed chords' (mostly tangential) direction, so the junction
    # and the per-step turns stay at the spiral's own turning scale
    mu0 = (0.5 / N) / r_star
    mu_cap = max(2.0 * delta, mu0)
    rs = [r_star]
    phis = [phi_star]
    mu = mu0
    while rs[-1] > 0.02 * r_star:
        mu = min(mu * 1.35, mu_cap)
        rs.append(rs[-1] * math.exp(-mu))
        phis.append(phis[-1] + delta)
    spiral_in = (np.array(rs[1:]) * np.exp(1j * np.array(phis[1:])))[::-1]

    # geometric seam approaching the spiral's start with shrinking
    # chords q_k = p_in (1 - g^{-k}): the aligned-tail sums that enter
    # the semicircle checks (sum over m of chord_{j+m}/(1+Q^m)) then stay
    # well below one chord, which a growing cluster cannot achieve
    p_in = spiral_in[0]
    c_in = abs(p_in) * math.hypot(mu, delta)
    g = 1.4
    K = max(2, int(math.ceil(math.log(abs(p_in) / c_in) / math.log(g))) + 1)
    seam = p_in * (1.0 - g ** (-np.arange(1, K, dtype=float)))

    w = np.concatenate([[0.0], seam, spiral_in, printed])
    wp = Waypoints(w=w, Q=Q, seam_exempt=K)
    if len(w) - 1 > SnakeConfig(Q=Q).max_ladder():
        raise ValueError(
            f"ladder Q^{len(w) - 1} exceeds float64 range at Q={Q}; reduce N or Q"
        )
    cond = wp.conditions()
    # (c) fails structurally when the per-step turn outgrows the chord
    if cond["max_turn"] > 1.0:
        raise ConditionViolated("c", 0, f"max turn {cond['max_turn']:.3f} > 1; beta too large")
    return wp


def waypoints_from_path(
    gamma: Callable[[float], complex],
    beta_fn: Callable[[float], float],
    config: SnakeConfig,
    count: int,
    t_max: float | None = None,
) -> Waypoints:
    """Waypoint ladder along a unit-speed path via the b_n/r_n recursion.

    delta(x) is the running maximum of 1/beta + |(arg gamma')'|, computed
    by dense sampling; each step advances b by rho^{r_n}, and r increments
    whenever delta(b_n + T rho^{r_n}) T rho^{r_n} reaches 1.
    """
    if config.T is None:
        raise ValueError("waypoints_from_path needs a config built from T")
    T = config.T
    rho = config.rho
    r1 = config.r1
    h = 1e-6

    def arg_prime_rate(t):
        g1 = (gamma(t + h) - gamma(t - h)) / (2 * h)
        g1b = (gamma(t + 2 * h) - gamma(t)) / (2 * h)
        da = cmath.phase(g1b * g1.conjugate()) / h
        return abs(da)

    # running-max quadrature grid for delta
    horizon = t_max if t_max is not None else 4.0
    grid = np.linspace(0.0, horizon, 4096)
    vals = np.array([1.0 / beta_fn(t) + arg_prime_rate(max(t, 2 * h)) for t in grid])
    running = np.maximum.accumulate(vals)

    def delta(x):
        k = min(int(np.searchsorted(grid, x)), len(grid) - 1)
        return float(running[k])

    b = 0.0
    r = r1
    bs = [0.0]
    for _ in range(count - 1):
        b = b + rho**r
        bs.append(b)
        if b > horizon:
            raise ValueError("path horizon exceeded; supply a larger t_max")
        if not delta(b + T * rho**r) * T * rho**r < 1.0:
            r += 1
    w = np.array([gamma(t) for t in bs], dtype=complex)
    w[0] = 0.0
    wp = Waypoints(w=w, Q=config.Q, seam_exempt=1)
    wp.validate(eps=config.eps if config.eps is not None else T**-0.5)
    return wp


# -- boxes ----------------------------------------------------------------


def box_q(wp: Waypoints, n: int, sign: int) -> list[complex]:
    """Q^{+/-}_n = conv{w_n, w_{n+1}, w_n +/- 2i a_n, w_{n+1} +/- 2i a_n}."""
    a = wp.a[n]
    s = 2j * sign * a
    return [wp.w[n], wp.w[n + 1], wp.w[n + 1] + s, wp.w[n] + s]


def box_t(wp: Waypoints, n: int, sign: int) -> list[complex]:
    """T^{+/-}_n = conv{w_{n+1}, w_{n+1} +/- 2i a_n, w_{n+1} +/- 2i a_{n+1}}."""
    s = 2j * sign
    return [wp.w[n + 1], wp.w[n + 1] + s * wp.a[n], wp.w[n + 1] + s * wp.a[n + 1]]


def union_margin(points, polys) -> np.ndarray:
    """Max signed margin over a union of convex polygons."""
    pts = np.asarray(points, dtype=complex).ravel()
    best = np.full(pts.shape, -np.inf)
    for poly in polys:
        try:
            best = np.maximum(best, convex_membership_margin(pts, poly))
        except Exception:
            continue
    return best


# -- the map --------------------------------------------------------------


class SnakeMap:
    """f(z) = sum a_n z/(z + i Q^n), evaluated overflow-safely.

    The equal RationalMap representation (constant sum(a_n) plus simple
    poles at -i Q^n) is exposed for serialization and pole bookkeeping;
    direct evaluation uses u = z/Q^n so ladders near the float ceiling
    are fine.
    """

    def __init__(self, chords: np.ndarray, Q: float):
        self.a = np.asarray(chords, dtype=complex)
        self.Q = float(Q)
        self.y = self.Q ** np.arange(1, len(self.a) + 1, dtype=float)
        if not np.all(np.isfinite(self.y)):
            raise ValueError("pole ladder overflows float64")

    @property
    def degree(self) -> int:
        return len(self.a)

    def eval(self, z, check_guard: bool = True):
        # a_n u/(u + i) = a_n (1 - i/(u + i)): reciprocal-first, so no
        # intermediate overflows across the full ladder range
        scalar = np.isscalar(z)
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        r = 1.0 / (zz[None, :] / self.y[:, None] + 1j)
        if check_guard and np.any(np.abs(r) > 1e13):
            raise PoleProximity("z within guard of a snake pole")
        out = np.sum(self.a[:, None] * (1.0 - 1j * r), axis=0)
        return complex(out[0]) if scalar else out

    def deriv(self, z, check_guard: bool = True):
        # f'(z) = sum a_n i y_n/(z + i y_n)^2 = sum (a_n i / y_n) r^2
        scalar = np.isscalar(z)
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        r = 1.0 / (zz[None, :] / self.y[:, None] + 1j)
        if check_guard and np.any(np.abs(r) > 1e13):
            raise PoleProximity("z within guard of a snake pole")
        out = np.sum((1j * self.a / self.y)[:, None] * r * r, axis=0)
        return complex(out[0]) if scalar else out

    def ratmap(self) -> RationalMap:
        coeffs = -1j * self.a * self.y
        poles = -1j * self.y
        return RationalMap.from_arrays(complex(np.sum(self.a)), 0.0, coeffs, poles)


def build_f(wp: Waypoints) -> SnakeMap:
    """Every chord feeds the ladder: chord a_j gets the pole -i Q^{j+1}.

    Including the seam chord a_0 = w_1 - 0 makes the telescoping sum of
    early terms equal w_j exactly (w_0 = 0), which centers f on the
    chord boxes; a_0 is only exempt from the ratio/turn conditions.
    """
    return SnakeMap(wp.a, wp.Q)


# -- lemma verification ----------------------------------------------------


@dataclass
class BoxReport:
    """Margins of the window checks, normalized by the local chord.

    The near-zero fields record the printed near-origin statements,
    which fail strictly for any turning waypoint path (the chord tails
    push f to the + side and make Re(conj(a) f'(0+)) < 0); they are
    reported, never gated on, matching the ledger note.
    """

    membership_min: float
    deriv_sign_min: float
    neg_membership_min: float
    neg_deriv_sign_max: float
    semicircle_min: float
    near_zero_membership_min: float
    near_zero_sign_min: float
    monotone: bool
    first_failure: str
    windows: int
    x0_index: int

    def all_pass(self) -> bool:
        return (
            self.membership_min > -1e-9
            and self.deriv_sign_min > 0.0
            and self.neg_membership_min > -1e-9
            and self.neg_deriv_sign_max < 0.0
            and self.semicircle_min > -1e-9
            and self.monotone
        )


def verify_boxes(f: SnakeMap, wp: Waypoints, grid: int = 128) -> BoxReport:
    """Grid checks of the box membership and derivative-sign lemmas.

    Chord j (a_j = w_{j+1} - w_j) is paired with the pole -i Q^{j+1}, so
    the window x in [y_j, y_{j+1}] tests membership in Q^-_j u T^-_j u
    Q^-_{j+1}, the sign of Re(conj(a_j) f'(x)) holds on [y_j, y_{j+2}],
    the mirrored statements run on the negative axis, and f on the upper
    semicircle |z| = y_j lands in Q_j^+ u Q_j^-.  Margins are normalized
    by the local chord length.
    """
    K = f.degree
    mem_min = math.inf
    sign_min = math.inf
    neg_mem_min = math.inf
    neg_sign_max = -math.inf
    semi_min = math.inf
    first = ""
    window_ok = []
    for j in range(K - 1):
        x = np.geomspace(f.y[j], f.y[j + 1], grid)
        vals = f.eval(x)
        polys = [box_q(wp, j, -1), box_t(wp, j, -1), box_q(wp, j + 1, -1)]
        m = float((union_margin(vals, polys) / abs(wp.a[j])).min())
        mem_min = min(mem_min, m)
        ok = m > -1e-9
        if not ok and not first:
            first = f"membership window {j}"
        # Lemma 5: derivative direction on [y_j, y_{j+2}]
        if j + 2 <= K:
            hi = f.y[min(j + 2, K) - 1] if j + 2 > K - 1 else f.y[j + 2]
            x2 = np.geomspace(f.y[j], hi, grid)
            sgn = float(((np.conj(wp.a[j]) * f.deriv(x2)).real / abs(wp.a[j]) ** 2).min())
            sign_min = min(sign_min, sgn)
            ok = ok and sgn > 0
            if sgn <= 0 and not first:
                first = f"deriv sign window {j}"
        # mirrored negative-axis checks (as printed)
        valsn = f.eval(-x)
        polysn = [box_q(wp, j, +1), box_t(wp, j, +1), box_q(wp, j + 1, +1)]
        mn = float((union_margin(valsn, polysn) / abs(wp.a[j])).min())
        neg_mem_min = min(neg_mem_min, mn)
        if mn <= -1e-9 and not first:
            first = f"neg membership window {j}"
        if j + 2 <= K:
            sn = float(((np.conj(wp.a[j]) * f.deriv(-x2)).real / abs(wp.a[j]) ** 2).max())
            neg_sign_max = max(neg_sign_max, sn)
            if sn >= 0 and not first:
                first = f"neg deriv sign window {j}"
        # Lemma 6(e): the upper semicircle |z| = y_j
        th = np.linspace(0.0, math.pi, 64)
        valsc = f.eval(f.y[j] * np.exp(1j * th))
        mc = float(
            (
                np.maximum(
                    convex_membership_margin(valsc, box_q(wp, j, +1)),
                    convex_membership_margin(valsc, box_q(wp, j, -1)),
                )
                / abs(wp.a[j])
            ).min()
        )
        semi_min = min(semi_min, mc)
        if mc <= -1e-9 and not first:
            first = f"semicircle {j}"
        window_ok.append(ok)

    # the near-zero window 0 <= x <= y_0 of l3(c), as printed
    x = np.geomspace(f.y[0] * 1e-3, f.y[0], grid)
    m0 = union_margin(f.eval(x), [box_q(wp, 0, -1), box_t(wp, 0, -1), box_q(wp, 1, -1)])
    near_zero_mem = float(m0.min() / abs(wp.a[0]))
    s0 = (np.conj(wp.a[0]) * f.deriv(x)).real
    near_zero_sign = float(s0.min() / abs(wp.a[0]) ** 2)

    # monotone box progression along the positive axis
    xs = np.geomspace(f.y[0] * 1e-2, f.y[-1], 1024)
    vals = f.eval(xs)
    idx = np.zeros(len(xs), dtype=int)
    margins = np.full(len(xs), -np.inf)
    for j in range(K):
        marg = union_margin(vals, [box_q(wp, j, -1)])
        better = marg > margins
        idx[better] = j
        margins[better] = marg[better]
    monotone = bool(np.all(np.diff(idx) >= 0))
    if not monotone and not first:
        first = "box progression"
    # smallest window index from which all later windows pass
    x0_index = K - 1
    for j in range(len(window_ok) - 1, -1, -1):
        if window_ok[j]:
            x0_index = j
        else:
            break
    return BoxReport(
        membership_min=mem_min,
        deriv_sign_min=sign_min,
        neg_membership_min=neg_mem_min,
        neg_deriv_sign_max=neg_sign_max,
        semicircle_min=semi_min,
        near_zero_membership_min=near_zero_mem,
        near_zero_sign_min=near_zero_sign,
        monotone=monotone,
        first_failure=first,
        windows=K,
        x0_index=x0_index,
    )


def injectivity_separation(f: SnakeMap, wp: Waypoints, pairs: int = 48) -> dict:
    """Measured constant of |f(x)-f(y)| (1+|x|)^2 / |x-y| per window."""
    K = f.degree
    worst = math.inf
    for n in range(K - 2):
        x = np.geomspace(f.y[n], f.y[n + 2], pairs)
        vals = f.eval(x)
        dx = x[None, :] - x[:, None]
        dv = np.abs(vals[None, :] - vals[:, None])
        scale = (1.0 + np.abs(x))[:, None] ** 2
        mask = np.abs(dx) > 0
        c = np.where(mask, dv * scale / np.where(mask, np.abs(dx), 1.0), np.inf)
        worst = min(worst, float(c.min()))
    qpow = -math.log(worst, f.Q) if worst not in (0.0, math.inf) else math.nan
    return {"constant": worst, "q_power": qpow}


# -- Paley-Wiener corrector -------------------------------------------------


def _log_sin_half(z):
    """log sin(z/2), stable for large |Im z| (branch irrelevant under exp)."""
    zz = np.asarray(z, dtype=complex)
    w = 0.5 * zz
    out = np.empty(w.shape, dtype=complex)
    small = np.abs(w.imag) <= 40.0
    out[small] = np.log(np.sin(w[small]))
    big = ~small
    if big.any():
        wb = w[big]
        s = np.sign(wb.imag)
        # sin w ~ -s * e^{-i s w} / (2i) for |Im w| large
        out[big] = -1j * s * wb + np.log(-s / 2j)
    return out


def _cot_half(z):
    """(1/2) cot(z/2), stable for large |Im z|."""
    zz = np.asarray(z, dtype=complex)
    w = 0.5 * zz
    out = np.empty(w.shape, dtype=complex)
    small = np.abs(w.imag) <= 40.0
    out[small] = 0.5 / np.tan(w[small])
    big = ~small
    if big.any():
        out[big] = 0.5 * (-1j * np.sign(w[big].imag))
    return out


class PWCorrector:
    """F0 with F0(-i Q^n) = 1 for n <= M, built from the S and R products.

    S(z) = prod (1 - i z / Q^k) vanishes exactly on the node set; each
    interpolation term is R(z) * prod_{k != n}(1 - i z/Q^k) divided by
    its value at the node, evaluated as exp of a sum of logs (the node
    values reach e^{+-2 Q^n}, far beyond float range in linear space).
    The printed S-sign (+i z) puts the zeros on the wrong ray; the
    calibration selects the sign achieving the interpolation and records
    it.  R requires integer Q so its product poles cancel sine zeros.
    """

    def __init__(self, Q: float, M: int, sign: int = -1):
        if Q < 2:
            raise ValueError("Q must be >= 2")
        if abs(Q - round(Q)) > 1e-12:
            raise CalibrationFailed(
                f"R(z) is entire only for integer Q (sine zeros must cancel the "
                f"product poles); got Q = {Q}"
            )
        if M < 10:
            raise ValueError("truncation M must be >= 10")
        self.Q = float(Q)
        self.M = int(M)
        self.sign = sign
        self.k_s = self.M + int(math.ceil(40.0 / math.log10(Q)))
        self.k_r = self.M + 20
        self.qpow = self.Q ** np.arange(1, self.k_s + 1, dtype=float)
        self.rpow = self.Q ** np.arange(1, self.k_r + 1, dtype=float)
        # log(P_n * R(lambda_n)) per node, in log space
        self._log_norm = np.array(
            [self._log_pn(n) + self._log_R_at_node(n) for n in range(1, self.M + 1)]
        )

    # nodes lambda_n = sign * i Q^n; the calibrated sign is -1
    def node(self, n: int) -> complex:
        return self.sign * 1j * self.Q**n

    def _log_pn(self, n: int) -> complex:
        """log prod_{k != n} (1 - Q^{n-k}) (complex log; negatives allowed)."""
        k = np.arange(1, self.k_s + 1)
        vals = 1.0 - self.Q ** (np.minimum(n - k, 600.0))
        vals = vals[k != n]
        return complex(np.sum(np.log(vals.astype(complex))))

    def _log_R_at_node(self, n: int) -> complex:
        lam = self.node(n)
        # e^{i pi z/2}: log = i pi lam / 2 (= pi Q^n / 2 for sign -1)
        out = 0.5j * math.pi * lam
        out += complex(_log_sin_half(np.array([lam]))[0])
        out -= complex(np.sum(np.log(1.0 - lam**2 / (4.0 * math.pi**2 * self.rpow**2))))
        return out

    def _log_R(self, z: np.ndarray) -> np.ndarray:
        zz = np.asarray(z, dtype=complex)
        out = 0.5j * math.pi * zz + _log_sin_half(zz)
        c = 4.0 * math.pi**2 * self.rpow**2
        factors = 1.0 - zz[..., None] ** 2 / c
        # pair a near-cancelled sine zero with its product pole:
        # sin(z/2)/(1 - z^2/(2 pi Q^k)^2) has a removable point there
        tiny = np.abs(factors) < 1e-6
        if tiny.any():
            idx = np.argwhere(tiny)
            for flat in idx:
                i = tuple(flat[:-1])
                k = int(flat[-1])
                zk = zz[i] if i else complex(zz)
                root = 2.0 * math.pi * self.rpow[k]
                # sin(z/2) = +/- sin((z -/+ root)/2) since root/2 is a
                # multiple of pi for integer Q
                half_root = 0.5 * root
                parity = (-1.0) ** (int(round(half_root / math.pi)) % 2)
                delta = zk - root if abs(zk - root) < abs(zk + root) else zk + root
                pair = parity * np.sin(0.5 * delta) / (
                    (root**2 - zk**2) / root**2
                )
                # replace log sin + (-log factor_k) by log(pair)
                out[i] = out[i] - _log_sin_half(np.array([zk]))[0] + np.log(pair)
                factors_i = factors[i] if i else factors
                factors_i[k] = 1.0
        out -= np.sum(np.log(factors), axis=-1)
        return out

    def _log_R_deriv_part(self, z: np.ndarray) -> np.ndarray:
        """(log R)'(z) away from the removable points."""
        zz = np.asarray(z, dtype=complex)
        c = 4.0 * math.pi**2 * self.rpow**2
        prod_part = np.sum((2.0 * zz[..., None] / c) / (1.0 - zz[..., None] ** 2 / c), axis=-1)
        return 0.5j * math.pi + _cot_half(zz) + prod_part

    def eval(self, z):
        scalar = np.isscalar(z)
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        logr = self._log_R(zz)
        logfac = np.log(1.0 - self.sign * 1j * zz[:, None] / self.qpow[None, :])
        total = np.sum(logfac, axis=1)
        out = np.zeros(zz.shape, dtype=complex)
        for n in range(1, self.M + 1):
            expo = logr + total - logfac[:, n - 1] - self._log_norm[n - 1]
            keep = expo.real > -700.0
            if keep.any():
                out[keep] += np.exp(expo[keep])
        return complex(out[0]) if scalar else out

    def deriv(self, z):
        scalar = np.isscalar(z)
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        logr = self._log_R(zz)
        dlogr = self._log_R_deriv_part(zz)
        fac = 1.0 - self.sign * 1j * zz[:, None] / self.qpow[None, :]
        logfac = np.log(fac)
        dlogfac = (-self.sign * 1j / self.qpow[None, :]) / fac
        total = np.sum(logfac, axis=1)
        dtotal = np.sum(dlogfac, axis=1)
        out = np.zeros(zz.shape, dtype=complex)
        for n in range(1, self.M + 1):
            expo = logr + total - logfac[:, n - 1] - self._log_norm[n - 1]
            keep = expo.real > -700.0
            if keep.any():
                out[keep] += np.exp(expo[keep]) * (
                    dlogr[keep] + dtotal[keep] - dlogfac[keep, n - 1]
                )
        return complex(out[0]) if scalar else out

    def trunc_error_bound(self, z) -> float:
        """Tail bound of the dropped S-factors on the given points."""
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        zmax = float(np.max(np.abs(zz)))
        tail = zmax / self.Q**self.k_s * self.Q / (self.Q - 1.0)
        return tail

    def to_tree(self) -> dict:
        """Expression-tree skeleton (see the CompositeMap JSON schema)."""
        return {
            "kind": "mul",
            "children": [
                {"kind": "product_R", "Q": self.Q, "terms": self.k_r},
                {
                    "kind": "sum",
                    "children": [
                        {
                            "kind": "mul",
                            "children": [
                                {
                                    "kind": "product_S",
                                    "Q": self.Q,
                                    "terms": self.k_s,
                                    "sign": self.sign,
                                    "omit": n,
                                },
                                {
                                    "kind": "rational",
                                    "log_scale": [
                                        -self._log_norm[n - 1].real,
                                        -self._log_norm[n - 1].imag,
                                    ],
                                },
                            ],
                        }
                        for n in range(1, self.M + 1)
                    ],
                },
            ],
        }


def build_F0(Q: float = 4.0, truncation: int = 40) -> PWCorrector:
    """Auto-calibrated corrector: picks the sign achieving F0(-i Q^n) = 1."""
    last_err = None
    for sign in (-1, +1):
        f0 = PWCorrector(Q, truncation, sign=sign)
        nodes = np.array([-1j * Q**n for n in range(1, min(truncation, 6) + 1)])
        resid = np.max(np.abs(f0.eval(nodes) - 1.0))
        if resid < 1e-6:
            f0.calibration_residual = float(resid)
            return f0
        last_err = (sign, float(resid))
    raise CalibrationFailed(f"neither sign achieves F0(-iQ^n) = 1; last {last_err}")


class CompositeMap:
    """F = f * (1 - F0) with guard-disc deflation at the cancelled poles."""

    def __init__(self, f: SnakeMap, f0: PWCorrector):
        if abs(f.Q - f0.Q) > 1e-12:
            raise ValueError("f and F0 must share Q")
        self.f = f
        self.f0 = f0
        covered = min(f.degree, f0.M)
        nodes = np.array([-1j * f.Q**n for n in range(1, covered + 1)])
        resid = np.max(np.abs(f0.eval(nodes) - 1.0))
        if resid > 1e-6:
            raise CancellationFailed(
                f"|1 - F0| = {resid:.2e} at a covered pole (> 1e-6)"
            )
        self.covered = covered
        self.guard_radii = 1e-4 * f.Q ** np.arange(1, covered + 1, dtype=float)

    @property
    def degree(self) -> int:
        return self.f.degree

    def _raw(self, zz):
        return self.f.eval(zz, check_guard=False) * (1.0 - self.f0.eval(zz))

    def eval(self, z):
        scalar = np.isscalar(z)
        zz = np.atleast_1d(np.asarray(z, dtype=complex)).astype(complex).copy()
        out = np.empty(zz.shape, dtype=complex)
        handled = np.zeros(zz.shape, dtype=bool)
        for n in range(1, self.covered + 1):
            lam = -1j * self.f.Q**n
            r = self.guard_radii[n - 1]
            near = np.abs(zz - lam) < r
            if near.any():
                # linear interpolation across the guard disc through z
                for i in np.nonzero(near)[0]:
                    d = zz[i] - lam
                    u = d / abs(d) if d != 0 else 1.0
                    z1, z2 = lam - r * u, lam + r * u
                    v1, v2 = self._raw(np.array([z1, z2]))
                    t = (abs(d) / r + 1.0) / 2.0
                    out[i] = v1 + (v2 - v1) * t
                handled |= near
        rest = ~handled
        if rest.any():
            out[rest] = self._raw(zz[rest])
        return complex(out[0]) if scalar else out

    def deriv(self, z):
        scalar = np.isscalar(z)
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        out = self.f.deriv(zz, check_guard=False) * (1.0 - self.f0.eval(zz)) - self.f.eval(
            zz, check_guard=False
        ) * self.f0.deriv(zz)
        return complex(out[0]) if scalar else out

    def to_tree(self) -> dict:
        return {
            "kind": "mul",
            "children": [
                {"kind": "rational", "degree": self.f.degree, "Q": self.f.Q},
                {"kind": "one_minus", "children": [self.f0.to_tree()]},
            ],
        }


def build_F(f: SnakeMap, f0: PWCorrector) -> CompositeMap:
    return CompositeMap(f, f0)


# -- boundary length and the scaling experiment -----------------------------


def real_line_length(mp, tol: float = 1e-6) -> float:
    """integral over R of |f'(x)| dx for maps with a geometric pole ladder.

    Integrates in log|x| (each pole -i y_n occupies an O(1) window of
    log x, so adaptive panels resolve every rung even when the ladder
    spans hundreds of decades), plus a linear panel through 0 and an
    analytic bound on the dropped |x| > x_hi tails, which is added to
    the result so the reported length is not an undercount.
    """
    y = getattr(mp, "y", None)
    if y is None:
        raise ValueError("real_line_length expects a snake-type map")
    x_lo = float(y[0]) * 1e-3
    x_hi = float(y[-1]) * 1e4

    total = 0.0
    # central panel around the origin
    def speed(x):
        return abs(mp.deriv(x))

    fa, fm, fb = speed(-x_lo), speed(0.0), speed(x_lo)
    whole = 2 * x_lo / 6.0 * (fa + 4.0 * fm + fb)
    total += _adaptive(speed, -x_lo, x_lo, fa, fm, fb, whole, tol * x_lo, 0)

    # log-space panels on both rays, with knots at each pole decade
    for sign in (1.0, -1.0):

        def speed_log(v):
            x = sign * math.exp(v)
            return abs(mp.deriv(x)) * abs(x)

        knots = {math.log(x_lo), math.log(x_hi)}
        for yy in np.asarray(y, dtype=float):
            for off in (-2.0, -1.0, 0.0, 1.0, 2.0):
                vv = math.log(yy) + off
                if math.log(x_lo) < vv < math.log(x_hi):
                    knots.add(vv)
        ks = sorted(knots)
        span = ks[-1] - ks[0]
        for a, b in zip(ks[:-1], ks[1:]):
            if b - a < 1e-12:
                continue
            fa, fm, fb = speed_log(a), speed_log(0.5 * (a + b)), speed_log(b)
            whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
            total += _adaptive(speed_log, a, b, fa, fm, fb, whole, tol * (b - a) / span, 0)

    # analytic tail bound: |f'(x)| <= sum |a_n| y_n / x^2 for |x| >= x_hi
    tail = 2.0 * float(np.sum(np.abs(mp.a) * np.asarray(y))) / x_hi
    return total + tail


def _adaptive(fn, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = fn(lm), fn(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if abs(err) <= 15.0 * tol or depth >= 24:
        if depth >= 24 and abs(err) > 15.0 * tol:
            raise ToleranceNotReached("adaptive Simpson hit depth 24")
        return left + right + err / 15.0
    return _adaptive(fn, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) + _adaptive(
        fn, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1
    )


def sup_norm_real(mp, samples: int = 8192) -> float:
    """max |f| over R, sampled log-uniformly across the pole ladder."""
    y = np.asarray(mp.y, dtype=float)
    xs = np.geomspace(y[0] * 1e-4, y[-1] * 1e4, samples // 2)
    x = np.concatenate([-xs[::-1], [0.0], xs])
    return float(np.max(np.abs(mp.eval(x))))


def calibrate_beta(
    N: int, Q: float = 4.0, beta0: float = 0.5, max_halvings: int = 20
) -> tuple[float, BoxReport]:
    """Halve beta until the box lemmas and the simple-curve check pass."""
    beta = beta0
    last = None
    for _ in range(max_halvings + 1):
        try:
            wp = waypoints_radial(N, beta, Q)
            f = build_f(wp)
            rep = verify_boxes(f, wp, grid=64)
            if rep.all_pass():
                u = np.linspace(-0.49 * math.pi, 0.49 * math.pi, 2048)
                pts = f.eval(np.tan(u))
                if simple_curve_check(CurveSample(pts, closed=False)).simple:
                    return beta, rep
            last = rep.first_failure or "simple curve"
        except ConditionViolated as exc:
            last = str(exc)
        beta *= 0.5
    raise BetaExhausted(f"beta calibration failed after {max_halvings} halvings ({last})")


@dataclass
class ScalingRow:
    N: int
    degree: int
    ell: float
    sup: float
    ratio_vs_bound: float


@dataclass
class ScalingResult:
    beta: float
    rows: list[ScalingRow]
    slope: float
    chord_sums: dict[int, float]

    def table(self):
        return [
            (r.N, r.degree, r.ell, r.sup, r.ratio_vs_bound) for r in self.rows
        ]


def scaling_experiment(Ns, beta: float | None = None, Q: float = 4.0) -> ScalingResult:
    """Boundary length of the radial snake vs N; fits the growth exponent.

    beta is calibrated once at the smallest N and reused: the turning
    condition only relaxes as N grows, and a per-N beta would leak its
    own N-dependence into the fitted exponent.
    """
    Ns = sorted(int(n) for n in Ns)
    if Ns[0] < 16:
        raise ValueError("each N must be >= 16")
    if beta is None:
        beta, _ = calibrate_beta(Ns[0], Q)
    rows = []
    chord_sums = {}
    for N in Ns:
        wp = waypoints_radial(N, beta, Q)
        f = build_f(wp)
        ell = real_line_length(f, tol=1e-6)
        sup = sup_norm_real(f)
        bound = 6.0 * math.pi * math.sqrt(N)
        rows.append(ScalingRow(N, f.degree, ell, sup, (ell / sup) / bound))
        chord_sums[N] = float(np.sum(np.abs(wp.a[1:])))
    slope = float(
        np.polyfit(np.log([r.N for r in rows]), np.log([r.ell for r in rows]), 1)[0]
    )
    return ScalingResult(beta=beta, rows=rows, slope=slope, chord_sums=chord_sums)
