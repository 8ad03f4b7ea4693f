"""Rational maps with simple and double poles.

The shared carrier for every construction in the package: needles,
hedgehog maps, tree maps and the snake map are all finite sums

    f(z) = affine0 + affine1*z + sum_k coeff_k / (z - pole_k)^order_k

with order_k in {1, 2}.  Maps are immutable; poles are kept exactly as
constructed (no merging) so that later stages can audit which needle
contributed which pole.  `normalize` merges equal (pole, order) pairs.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidPole, ParseError, PoleProximity

try:  # pragma: no cover - environment probe
    from numba import config as _numba_config

    _numba_config.THREADING_LAYER = "workqueue"
    from numba import njit as _njit, prange as _prange

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover
    _HAVE_NUMBA = False

# Relative guard radius around poles: evaluating closer than this is an
# error, never a huge number (verification grids must not sample garbage).
GUARD_SCALE = 1e-13

# Cap on the npoints*nterms product per evaluation chunk (memory bound;
# only the numpy fallback path uses it).
_CHUNK_BUDGET = 1_000_000

# Magnitudes beyond this risk overflow in |d|^2; use safe division then.
_FAST_MAGNITUDE_CAP = 1e150


if _HAVE_NUMBA:

    @_njit(parallel=True, cache=True)
    def _cauchy_kernel(z, poles, coeffs, power, out, guard2, flags, check):
        """out += sum_k coeffs[k]/(z - poles[k])^power, flagging guard hits."""
        for i in _prange(len(z)):
            zr = z[i].real
            zi = z[i].imag
            ar = 0.0
            ai = 0.0
            bad = False
            for k in range(len(poles)):
                dr = zr - poles[k].real
                di = zi - poles[k].imag
                a2 = dr * dr + di * di
                if check and a2 < guard2[k]:
                    bad = True
                inv = 1.0 / a2
                rr = dr * inv
                ri = -di * inv
                if power == 2:
                    t = rr * rr - ri * ri
                    ri = 2.0 * rr * ri
                    rr = t
                elif power == 3:
                    r2r = rr * rr - ri * ri
                    r2i = 2.0 * rr * ri
                    t = r2r * rr - r2i * ri
                    ri = r2r * ri + r2i * rr
                    rr = t
                cr = coeffs[k].real
                ci = coeffs[k].imag
                ar += cr * rr - ci * ri
                ai += cr * ri + ci * rr
            out[i] += complex(ar, ai)
            if bad:
                flags[i] = True


def _require_finite(w: complex, what: str) -> complex:
    w = complex(w)
    if not (math.isfinite(w.real) and math.isfinite(w.imag)):
        raise ValueError(f"{what} must have finite components, got {w!r}")
    return w


@dataclass(frozen=True)
class PoleTerm:
    """One partial-fraction term coeff/(z - pole)^order, order in {1, 2}."""

    coeff: complex
    pole: complex
    order: int = 1

    def __post_init__(self):
        object.__setattr__(self, "coeff", _require_finite(self.coeff, "coeff"))
        object.__setattr__(self, "pole", _require_finite(self.pole, "pole"))
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")
        if self.coeff == 0:
            raise ValueError("coeff must be nonzero")


@dataclass(frozen=True)
class RationalMap:
    """Immutable rational map affine0 + affine1*z + sum of pole terms."""

    affine0: complex = 0.0
    affine1: complex = 0.0
    terms: tuple[PoleTerm, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "affine0", _require_finite(self.affine0, "affine0"))
        object.__setattr__(self, "affine1", _require_finite(self.affine1, "affine1"))
        object.__setattr__(self, "terms", tuple(self.terms))

    # -- cached term arrays for vectorized evaluation -----------------

    @classmethod
    def from_arrays(cls, affine0, affine1, coeffs, poles, orders=None) -> "RationalMap":
        """Bulk constructor; validates the arrays vectorized.

        Equivalent to building PoleTerm objects one by one, but the
        per-term checks are batched (needles reach ~10^5 terms).
        """
        coeffs = np.asarray(coeffs, dtype=complex)
        poles = np.asarray(poles, dtype=complex)
        if orders is None:
            orders = np.ones(len(coeffs), dtype=np.int64)
        else:
            orders = np.asarray(orders, dtype=np.int64)
        if not (np.all(np.isfinite(coeffs)) and np.all(np.isfinite(poles))):
            raise ValueError("coeffs and poles must be finite")
        if np.any(coeffs == 0):
            raise ValueError("coeff must be nonzero")
        if not np.all((orders == 1) | (orders == 2)):
            raise ValueError("order must be 1 or 2")
        terms = []
        for c, p, o in zip(coeffs.tolist(), poles.tolist(), orders.tolist()):
            t = object.__new__(PoleTerm)
            object.__setattr__(t, "coeff", c)
            object.__setattr__(t, "pole", p)
            object.__setattr__(t, "order", int(o))
            terms.append(t)
        return cls(affine0, affine1, tuple(terms))

    def _arrays(self):
        cached = self.__dict__.get("_term_arrays")
        if cached is None:
            coeffs = np.array([t.coeff for t in self.terms], dtype=complex)
            poles = np.array([t.pole for t in self.terms], dtype=complex)
            orders = np.array([t.order for t in self.terms], dtype=np.int64)
            guards = GUARD_SCALE * (1.0 + np.abs(poles))
            cached = (coeffs, poles, orders, guards)
            self.__dict__["_term_arrays"] = cached
        return cached

    @property
    def degree(self) -> int:
        """Number of poles counted with order."""
        return int(sum(t.order for t in self.terms))

    @property
    def poles(self) -> tuple[complex, ...]:
        return tuple(t.pole for t in self.terms)

    def distinct_poles(self) -> tuple[complex, ...]:
        seen: dict[complex, None] = {}
        for t in self.terms:
            seen.setdefault(t.pole)
        return tuple(seen)

    # -- evaluation ----------------------------------------------------

    def eval(self, z, check_guard: bool = True):
        """Evaluate the map at z (scalar or ndarray), guarding poles."""
        return self._sum(z, deriv=False, check_guard=check_guard)

    def deriv(self, z, check_guard: bool = True):
        """Closed-form derivative affine1 - sum order*coeff/(z-pole)^(order+1)."""
        return self._sum(z, deriv=True, check_guard=check_guard)

    def _sum(self, z, deriv: bool, check_guard: bool):
        scalar = np.isscalar(z) or (isinstance(z, np.ndarray) and z.ndim == 0)
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        shape = zz.shape
        flat = zz.ravel()
        out = np.full(flat.shape, self.affine1 if deriv else self.affine0, dtype=complex)
        if not deriv:
            out += self.affine1 * flat
        coeffs, poles, orders, guards = self._arrays()
        n = len(coeffs)
        if n:
            # |d|^2 reciprocals in the jit kernel overflow beyond ~1e150
            # magnitudes (the snake pole ladder reaches 1e300), where we
            # use numpy's overflow-safe complex division instead
            fast = (
                _HAVE_NUMBA
                and np.max(np.abs(poles.real) + np.abs(poles.imag)) < _FAST_MAGNITUDE_CAP
                and (
                    flat.size == 0
                    or np.max(np.abs(flat.real) + np.abs(flat.imag)) < _FAST_MAGNITUDE_CAP
                )
            )
            if fast:
                flags = np.zeros(flat.shape, dtype=np.bool_)
                guard2 = guards**2
                for order in (1, 2):
                    sel = orders == order
                    if not sel.any():
                        continue
                    if deriv:
                        _cauchy_kernel(
                            flat,
                            poles[sel],
                            -float(order) * coeffs[sel],
                            order + 1,
                            out,
                            guard2[sel],
                            flags,
                            check_guard,
                        )
                    else:
                        _cauchy_kernel(
                            flat, poles[sel], coeffs[sel], order, out, guard2[sel], flags, check_guard
                        )
                if check_guard and flags.any():
                    zbad = flat[np.argmax(flags)]
                    k = int(np.argmin(np.abs(zbad - poles)))
                    raise PoleProximity(
                        f"z={zbad} within guard radius of pole {poles[k]}"
                    )
            else:
                chunk = max(1, _CHUNK_BUDGET // max(1, flat.size))
                first = orders == 1
                for lo in range(0, n, chunk):
                    hi = min(n, lo + chunk)
                    d = flat[None, :] - poles[lo:hi, None]
                    if check_guard:
                        bad = np.abs(d) < guards[lo:hi, None]
                        if bad.any():
                            i, j = np.argwhere(bad)[0]
                            raise PoleProximity(
                                f"z={flat[j]} within guard radius of pole {poles[lo + i]}"
                            )
                    recip = 1.0 / d
                    f1 = first[lo:hi]
                    c = coeffs[lo:hi]
                    if deriv:
                        if f1.any():
                            out -= (recip[f1] ** 2).T @ c[f1]
                        if (~f1).any():
                            out -= 2.0 * ((recip[~f1] ** 3).T @ c[~f1])
                    else:
                        if f1.any():
                            out += recip[f1].T @ c[f1]
                        if (~f1).any():
                            out += (recip[~f1] ** 2).T @ c[~f1]
        out = out.reshape(shape)
        return complex(out[()]) if scalar else out

    def min_pole_distance(self, z) -> float:
        """Smallest |z - pole| over all poles (inf if there are none)."""
        if not self.terms:
            return math.inf
        _, poles, _, _ = self._arrays()
        zz = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
        best = math.inf
        chunk = max(1, _CHUNK_BUDGET // max(1, zz.size))
        for lo in range(0, len(poles), chunk):
            d = np.abs(zz[None, :] - poles[lo : lo + chunk, None])
            best = min(best, float(d.min()))
        return best


def identity_map() -> RationalMap:
    return RationalMap(0.0, 1.0, ())


def concat(maps: Iterable[RationalMap]) -> RationalMap:
    """Term-wise sum of maps (affine parts add, term lists concatenate)."""
    a0 = 0j
    a1 = 0j
    terms: list[PoleTerm] = []
    for m in maps:
        a0 += m.affine0
        a1 += m.affine1
        terms.extend(m.terms)
    return RationalMap(a0, a1, tuple(terms))


def scale(m: RationalMap, factor: complex) -> RationalMap:
    """Pointwise scalar multiple factor*m(z)."""
    factor = complex(factor)
    return RationalMap(
        factor * m.affine0,
        factor * m.affine1,
        tuple(PoleTerm(factor * t.coeff, t.pole, t.order) for t in m.terms),
    )


def normalize(m: RationalMap) -> RationalMap:
    """Merge terms with equal (pole, order), summing coefficients."""
    merged: dict[tuple[complex, int], complex] = {}
    for t in m.terms:
        key = (t.pole, t.order)
        merged[key] = merged.get(key, 0j) + t.coeff
    terms = tuple(
        PoleTerm(c, p, o) for (p, o), c in merged.items() if c != 0
    )
    return RationalMap(m.affine0, m.affine1, terms)


def precompose_rotation_shift(m: RationalMap, theta: float) -> RationalMap:
    """Return the map z -> m(z*e^{-i theta} - 1) as a RationalMap.

    Each pole p becomes (p+1)e^{i theta}; coefficients pick up the chain
    factor e^{i*order*theta}.  Requires Re(pole) > 0 for every pole (the
    half-plane needle convention), which puts all new poles outside the
    closed unit disc.
    """
    rot = cmath.exp(1j * theta)
    new_terms = []
    for t in m.terms:
        if t.pole.real <= 0:
            raise InvalidPole(f"pole {t.pole} has Re <= 0; cannot precompose")
        new_pole = (t.pole + 1.0) * rot
        if abs(new_pole) <= 1.0:
            raise InvalidPole(f"transformed pole {new_pole} inside closed unit disc")
        new_terms.append(PoleTerm(t.coeff * rot**t.order, new_pole, t.order))
    return RationalMap(
        m.affine0 - m.affine1,
        m.affine1 / rot,
        tuple(new_terms),
    )


def blaschke_deficit(m: RationalMap) -> float:
    """Sum of (|pole| - 1) over distinct poles, all outside the closed disc."""
    total = 0.0
    for p in m.distinct_poles():
        r = abs(p)
        if r <= 1.0:
            raise InvalidPole(f"pole {p} inside the closed unit disc")
        total += r - 1.0
    return total


# -- serialization -----------------------------------------------------
#
# JSON schema (field order fixed):
#   {"affine": [[re,im],[re,im]],
#    "terms": [{"coeff":[re,im], "pole":[re,im], "order":1|2}, ...]}
# Numbers serialize as shortest round-trip decimals (Python repr), so a
# serialize/deserialize/serialize cycle is byte-exact.


def _pair(w: complex) -> list[float]:
    return [w.real, w.imag]


def serialize(m: RationalMap) -> bytes:
    doc = {
        "affine": [_pair(m.affine0), _pair(m.affine1)],
        "terms": [
            {"coeff": _pair(t.coeff), "pole": _pair(t.pole), "order": t.order}
            for t in m.terms
        ],
    }
    return json.dumps(doc, separators=(",", ":")).encode("ascii")


def _complex_from(pair, what: str) -> complex:
    if not (isinstance(pair, list) and len(pair) == 2):
        raise ParseError(f"{what}: expected [re, im], got {pair!r}")
    try:
        return complex(float(pair[0]), float(pair[1]))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{what}: non-numeric entry: {exc}") from exc


def deserialize(data: bytes | str) -> RationalMap:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), line=exc.lineno, column=exc.colno) from exc
    if not isinstance(doc, dict) or "affine" not in doc or "terms" not in doc:
        raise ParseError("expected object with 'affine' and 'terms'")
    affine = doc["affine"]
    if not (isinstance(affine, list) and len(affine) == 2):
        raise ParseError("'affine' must be a list of two [re,im] pairs")
    a0 = _complex_from(affine[0], "affine0")
    a1 = _complex_from(affine[1], "affine1")
    terms = []
    for i, t in enumerate(doc["terms"]):
        if not isinstance(t, dict):
            raise ParseError(f"terms[{i}] is not an object")
        order = t.get("order")
        if order not in (1, 2):
            raise ParseError(f"terms[{i}].order must be 1 or 2, got {order!r}")
        terms.append(
            PoleTerm(
                _complex_from(t.get("coeff"), f"terms[{i}].coeff"),
                _complex_from(t.get("pole"), f"terms[{i}].pole"),
                order,
            )
        )
    return RationalMap(a0, a1, tuple(terms))
