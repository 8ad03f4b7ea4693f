"""Binary words and the self-similar H-tree segment system.

Each segment [z, z + zeta] spawns two perpendicular children of length
ratio lambda at its (1-eps)-point:

    psi_{w.1}: u -> z + (1-eps) zeta + i lambda zeta u
    psi_{w.0}: u -> z + (1-eps) zeta - i lambda zeta u

so psi_w(u) = z_w + zeta_w u for every word, and the similarity maps
compose exactly.  The closure of the union of all segments adds the set
of limit tip points, whose dimension is dialled through lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .analysis import box_count, convex_polygon_distance
from .errors import DepthTooLarge

Word = tuple[int, ...]

EMPTY: Word = ()

LAMBDA_CAP = 2.0 ** (-0.5) - 1e-6


def word_length(w: Word) -> int:
    return len(w)


def word_sign(w: Word) -> int:
    """sign(w) = |w| - sum of digits (the number of zeros)."""
    return len(w) - sum(w)


def parent(w: Word) -> Word:
    if not w:
        raise ValueError("the empty word has no parent")
    return w[:-1]


def words_up_to(depth: int) -> list[Word]:
    """All words of length <= depth, by length then lexicographic."""
    out: list[Word] = [EMPTY]
    level: list[Word] = [EMPTY]
    for _ in range(depth):
        level = [w + (d,) for w in level for d in (0, 1)]
        level.sort()
        out.extend(level)
    return out


@dataclass(frozen=True)
class Segment:
    """Closed segment [base, base + direction]."""

    base: complex
    direction: complex

    @property
    def tip(self) -> complex:
        return self.base + self.direction


@dataclass(frozen=True)
class HTreeConfig:
    eps: float = 0.01
    lam: float | None = None
    depth: int = 8

    def __post_init__(self):
        if not (0.0 < self.eps <= 0.2):
            raise ValueError(f"eps must be in (0, 0.2], got {self.eps}")
        lam = self.lam if self.lam is not None else 2.0 ** (-0.5) - self.eps
        if not (0.0 < lam <= LAMBDA_CAP):
            raise ValueError(f"lambda must be in (0, {LAMBDA_CAP}], got {lam}")
        object.__setattr__(self, "lam", lam)
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    @classmethod
    def from_beta(cls, beta: float, depth: int, eps: float = 0.01) -> "HTreeConfig":
        """Dimension dial: lambda = 2^{-1/beta}, clipped below 2^{-1/2}."""
        if not (1.0 <= beta <= 2.0):
            raise ValueError(f"beta must be in [1, 2], got {beta}")
        lam = min(2.0 ** (-1.0 / beta), LAMBDA_CAP)
        return cls(eps=eps, lam=lam, depth=depth)


@dataclass
class HTree:
    config: HTreeConfig
    segments: dict[Word, Segment]

    def segment(self, w: Word) -> Segment:
        return self.segments[w]

    def words(self, length: int | None = None) -> list[Word]:
        if length is None:
            return sorted(self.segments, key=lambda w: (len(w), w))
        return sorted(w for w in self.segments if len(w) == length)


def build_tree(config: HTreeConfig) -> HTree:
    """Segments for every word of length <= depth; the root is [0, 1]."""
    if config.depth > 24:
        raise DepthTooLarge(f"depth {config.depth} exceeds the cap of 24")
    lam = config.lam
    eps = config.eps
    segs: dict[Word, Segment] = {EMPTY: Segment(0.0 + 0.0j, 1.0 + 0.0j)}
    level = [EMPTY]
    for _ in range(config.depth):
        nxt = []
        for w in level:
            s = segs[w]
            base = s.base + (1.0 - eps) * s.direction
            segs[w + (1,)] = Segment(base, 1j * lam * s.direction)
            segs[w + (0,)] = Segment(base, -1j * lam * s.direction)
            nxt.extend((w + (0,), w + (1,)))
        level = nxt
    return HTree(config, segs)


def psi(tree: HTree, w: Word, u):
    """Similarity map psi_w(u) = z_w + zeta_w * u."""
    s = tree.segment(w)
    return s.base + s.direction * np.asarray(u, dtype=complex)


def neighborhood_rect(tree: HTree, w: Word) -> list[complex]:
    """Omega_w as a closed rectangle: psi_w of the fattened unit segment.

    The base rectangle is the eps/100-neighborhood of [0,1] with the
    semicircular ends replaced by a rectangle extension of the same
    radius (contains the round neighborhood within a factor sqrt(2)).
    """
    h = tree.config.eps / 100.0
    corners = [-h - 1j * h, (1.0 + h) - 1j * h, (1.0 + h) + 1j * h, -h + 1j * h]
    s = tree.segment(w)
    return [s.base + s.direction * c for c in corners]


@dataclass
class GeometryReport:
    min_separation_ratio: float
    max_separation_ratio: float
    diam_ratio_min: float
    diam_ratio_max: float
    pairs_checked: int
    worst_pair: tuple[Word, Word] | None
    sibling_note: str
    passed: bool


def _adjacent(w1: Word, w2: Word) -> bool:
    """Pairs whose segments share the crossing point by construction.

    Parent-child pairs (per the hypothesis of the separation estimate)
    and sibling pairs: both children start at the parent's (1-eps)-point,
    so their neighborhoods intersect and carry no separation information.
    """
    if len(w2) < len(w1):
        w1, w2 = w2, w1
    if len(w2) == len(w1) + 1 and w2[:-1] == w1:
        return True
    if len(w1) == len(w2) and len(w1) >= 1 and w1[:-1] == w2[:-1]:
        return True
    return False


def check_geometry(tree: HTree, max_depth: int | None = None) -> GeometryReport:
    """Measure diam(Omega_w)/lam^|w| and pairwise separation ratios."""
    if tree.config.depth < 2:
        raise ValueError("need depth >= 2")
    lam = tree.config.lam
    words = [w for w in tree.words() if max_depth is None or len(w) <= max_depth]
    rects = {w: neighborhood_rect(tree, w) for w in words}

    h = tree.config.eps / 100.0
    diam_base = math.hypot(1.0 + 2.0 * h, 2.0 * h)
    diam_ratios = [abs(tree.segment(w).direction) * diam_base / lam ** len(w) for w in words]

    min_ratio = math.inf
    max_ratio = 0.0
    worst = None
    pairs = 0
    for i, w1 in enumerate(words):
        for w2 in words[i + 1 :]:
            if _adjacent(w1, w2):
                continue
            d = convex_polygon_distance(rects[w1], rects[w2])
            ratio = d / lam ** min(len(w1), len(w2))
            pairs += 1
            if ratio < min_ratio:
                min_ratio = ratio
                worst = (w1, w2)
            max_ratio = max(max_ratio, ratio)
    return GeometryReport(
        min_separation_ratio=min_ratio,
        max_separation_ratio=max_ratio,
        diam_ratio_min=min(diam_ratios),
        diam_ratio_max=max(diam_ratios),
        pairs_checked=pairs,
        worst_pair=worst,
        sibling_note=(
            "sibling pairs excluded: both children start at the parent's "
            "(1-eps)-point, so sibling neighborhoods touch (distance 0)"
        ),
        passed=min_ratio > 0.0,
    )


def endpoint_sample(tree: HTree) -> np.ndarray:
    """Far endpoints of the deepest generation: 2^depth tip points."""
    if tree.config.depth < 1:
        raise ValueError("need depth >= 1")
    words = tree.words(tree.config.depth)
    return np.array([tree.segment(w).tip for w in words], dtype=complex)


def endpoint_dimension(tree: HTree, n_range=(2, 12), offsets: int = 8):
    """Box-count slope of the tip set (similarity-dimension estimate).

    Phase-averaged counts (offsets=8) damp the lattice artifact that a
    strictly self-similar set carries against a single dyadic grid.
    """
    return box_count(endpoint_sample(tree), n_range, offsets=offsets)
