"""Extended-target contour geometry.

The target boundary is a truncated Fourier series in the local direction
``u``::

    r(u) = [sum_q a_q cos(q u), sum_q b_q sin(q u)]

placed at ``p_o = d_o [sin(phi_o), cos(phi_o)]`` and rotated by the
orientation ``varphi`` (counter-clockwise).  Bearings are measured from the
``+y`` boresight towards ``+x``, i.e. ``phi = atan2(x, y)``, which makes
``p_o`` point exactly along ``phi_o``.

The part of the contour with a line of sight to the base station (at the
origin) is found by ray casting against a dense polyline, refined to the
exact silhouette points, and split into ``K`` subsections of equal local
angular width.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import NoVisibleContour, NonContiguousLoS

TWO_PI = 2.0 * math.pi
_J = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclasses.dataclass(frozen=True)
class ContourModel:
    """Truncated Fourier series contour with cosine (``m``) and sine (``n``) coefficients."""

    m: Tuple[float, ...]
    n: Tuple[float, ...]

    def __post_init__(self):
        m = tuple(float(v) for v in self.m)
        n = tuple(float(v) for v in self.n)
        if len(m) != len(n) or len(m) < 1:
            raise ValueError("m and n must be nonempty and of equal length")
        if not all(math.isfinite(v) for v in m + n):
            raise ValueError("contour coefficients must be finite")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)

    @property
    def Q(self) -> int:
        return len(self.m)

    @classmethod
    def circle(cls, radius: float = 1.0) -> "ContourModel":
        return cls((radius,), (radius,))


@dataclasses.dataclass(frozen=True)
class TargetPose:
    """Center range ``d_o`` (m), direction ``phi_o`` and orientation ``varphi`` (rad)."""

    d_o: float
    phi_o: float
    varphi: float = 0.0

    def __post_init__(self):
        if not self.d_o > 0:
            raise ValueError("d_o must be positive")
        if not -math.pi / 2 < self.phi_o < math.pi / 2:
            raise ValueError("phi_o must lie in (-pi/2, pi/2)")

    def replace(self, **changes) -> "TargetPose":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class LosSubsection:
    u_k: float
    l_k: float
    d_k: float
    phi_k: float
    r_k: Tuple[float, float]
    p_k: Tuple[float, float]
    u_start: float
    u_stop: float


@dataclasses.dataclass(frozen=True)
class LosPartition:
    """The ``K`` line-of-sight subsections and the local angular range they cover."""

    subsections: Tuple[LosSubsection, ...]
    u_lower: float
    u_upper: float

    @property
    def K(self) -> int:
        return len(self.subsections)

    @property
    def u(self) -> np.ndarray:
        return np.array([s.u_k for s in self.subsections])

    @property
    def l(self) -> np.ndarray:
        return np.array([s.l_k for s in self.subsections])

    @property
    def d(self) -> np.ndarray:
        return np.array([s.d_k for s in self.subsections])

    @property
    def phi(self) -> np.ndarray:
        return np.array([s.phi_k for s in self.subsections])

    @property
    def r(self) -> np.ndarray:
        return np.array([s.r_k for s in self.subsections]).reshape(-1, 2)

    @property
    def p(self) -> np.ndarray:
        return np.array([s.p_k for s in self.subsections]).reshape(-1, 2)

    @property
    def total_length(self) -> float:
        return float(self.l.sum())

    @classmethod
    def point_target(cls, pose: TargetPose, length: float = 1.0) -> "LosPartition":
        """Single subsection at the target center (the ``m = n = 0`` limit).

        A point has no perimeter, so the weight ``length`` is supplied
        explicitly.
        """
        p = center_position(pose)
        sub = LosSubsection(0.0, float(length), pose.d_o, pose.phi_o, (0.0, 0.0),
                            (float(p[0]), float(p[1])), 0.0, 0.0)
        return cls((sub,), 0.0, 0.0)


# ---------------------------------------------------------------------------
# Pointwise geometry
# ---------------------------------------------------------------------------

def _harmonics(Q: int, u):
    u = np.asarray(u, dtype=float)
    q = np.arange(1, Q + 1)
    return q, np.multiply.outer(u, q)


def contour_point(model: ContourModel, u) -> np.ndarray:
    """Local contour point ``r(u)``; vectorized over ``u`` (last axis has size 2)."""
    q, qu = _harmonics(model.Q, u)
    x = np.cos(qu) @ np.asarray(model.m)
    y = np.sin(qu) @ np.asarray(model.n)
    return np.stack([x, y], axis=-1)


def contour_derivative(model: ContourModel, u) -> np.ndarray:
    """``dr/du``."""
    q, qu = _harmonics(model.Q, u)
    x = -np.sin(qu) @ (q * np.asarray(model.m))
    y = np.cos(qu) @ (q * np.asarray(model.n))
    return np.stack([x, y], axis=-1)


def rotation(varphi: float) -> np.ndarray:
    """Counter-clockwise rotation by ``varphi``."""
    c, s = math.cos(varphi), math.sin(varphi)
    return np.array([[c, -s], [s, c]])


def center_position(pose: TargetPose) -> np.ndarray:
    return pose.d_o * np.array([math.sin(pose.phi_o), math.cos(pose.phi_o)])


def global_point(model: ContourModel, pose: TargetPose, u) -> np.ndarray:
    """``p(u) = p_o + V r(u)``."""
    return center_position(pose) + contour_point(model, u) @ rotation(pose.varphi).T


def global_derivative(model: ContourModel, pose: TargetPose, u) -> np.ndarray:
    return contour_derivative(model, u) @ rotation(pose.varphi).T


def bearing(p) -> np.ndarray:
    """Direction of a global point, measured from ``+y`` towards ``+x``."""
    p = np.asarray(p, dtype=float)
    return np.arctan2(p[..., 0], p[..., 1])


def relative_bearing(p, phi_ref: float) -> np.ndarray:
    """Bearing relative to ``phi_ref`` without wrap-around for points near it."""
    p = np.asarray(p, dtype=float)
    c, s = math.cos(phi_ref), math.sin(phi_ref)
    x = p[..., 0] * c - p[..., 1] * s
    y = p[..., 0] * s + p[..., 1] * c
    return np.arctan2(x, y)


def max_radius(model: ContourModel, samples: int = 4096) -> float:
    """``max_u |r(u)|`` from dense sampling followed by local refinement."""
    u = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    rad = np.linalg.norm(contour_point(model, u), axis=-1)
    i = int(np.argmax(rad))
    h = TWO_PI / samples
    lo, hi = u[i] - h, u[i] + h
    # golden-section search on the bracketing cell
    g = (math.sqrt(5.0) - 1.0) / 2.0
    f = lambda t: float(np.linalg.norm(contour_point(model, t)))
    a, b = lo, hi
    c1, c2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(c1), f(c2)
    for _ in range(60):
        if f1 > f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - g * (b - a)
            f1 = f(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + g * (b - a)
            f2 = f(c2)
    return max(float(rad[i]), f1, f2)


# ---------------------------------------------------------------------------
# Arc length
# ---------------------------------------------------------------------------

def adaptive_simpson(f, a: float, b: float, tol: float = 1e-12, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature of a scalar function on ``[a, b]``."""
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    # explicit stack to avoid Python recursion limits
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, max_depth)]
    while stack:
        a_, b_, fa_, fm_, fb_, whole_, tol_, depth = stack.pop()
        m_ = 0.5 * (a_ + b_)
        lm, rm = 0.5 * (a_ + m_), 0.5 * (m_ + b_)
        flm, frm = f(lm), f(rm)
        left = (m_ - a_) / 6.0 * (fa_ + 4.0 * flm + fm_)
        right = (b_ - m_) / 6.0 * (fm_ + 4.0 * frm + fb_)
        delta = left + right - whole_
        if depth <= 0 or abs(delta) <= 15.0 * tol_:
            total += left + right + delta / 15.0
        else:
            stack.append((a_, m_, fa_, flm, fm_, left, 0.5 * tol_, depth - 1))
            stack.append((m_, b_, fm_, frm, fb_, right, 0.5 * tol_, depth - 1))
    return total


def arc_length(model: ContourModel, u0: float, u1: float, tol: float = 1e-11) -> float:
    """Length of the contour between local directions ``u0 <= u1``."""
    speed = lambda t: float(np.hypot(*contour_derivative(model, t)))
    return adaptive_simpson(speed, u0, u1, tol=tol * max(1.0, abs(u1 - u0)))


# ---------------------------------------------------------------------------
# Line of sight
# ---------------------------------------------------------------------------

def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def visibility(model: ContourModel, pose: TargetPose, samples: int = 4096
               ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ray-cast visibility of ``samples`` equally spaced contour points.

    A sample is visible when the segment from the base station to it does
    not cross the contour polyline (segments touching the sample itself
    excluded) strictly before reaching it.

    Returns ``(u, points, visible)``.
    """
    u = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    pts = global_point(model, pose, u)
    N = samples
    q0 = pts
    q1 = np.roll(pts, -1, axis=0)
    beta = relative_bearing(pts, pose.phi_o)
    lo = np.minimum(beta, np.roll(beta, -1))
    hi = np.maximum(beta, np.roll(beta, -1))
    order = np.argsort(lo, kind="stable")
    lo_sorted = lo[order]
    width = float((hi - lo).max()) if N else 0.0
    # candidates for ray i: segments whose lower bearing lies in [beta_i - width, beta_i]
    start = np.searchsorted(lo_sorted, beta - width - 1e-15, side="left")
    stop = np.searchsorted(lo_sorted, beta + 1e-15, side="right")
    counts = stop - start
    total = int(counts.sum())
    visible = np.ones(N, dtype=bool)
    if total == 0:
        return u, pts, visible
    ray = np.repeat(np.arange(N), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    seg = order[np.repeat(start, counts) + offs]
    keep = (hi[seg] >= beta[ray] - 1e-15) & (seg != ray) & (seg != (ray - 1) % N)
    ray, seg = ray[keep], seg[keep]
    p = pts[ray]
    e = q1[seg] - q0[seg]
    den = _cross(p, e)
    ok = np.abs(den) > 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(q0[seg], e) / den
        s = _cross(q0[seg], p) / den
    hit = ok & (s >= 0.0) & (s <= 1.0) & (t > 0.0) & (t < 1.0 - 1e-9)
    visible[np.unique(ray[hit])] = False
    return u, pts, visible


def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Cyclic runs of True as ``(start, length)``, ordered by start index."""
    N = len(mask)
    if mask.all():
        return [(0, N)]
    if not mask.any():
        return []
    first_false = int(np.argmin(mask))
    rolled = np.roll(mask, -first_false)
    runs = []
    i = 0
    while i < N:
        if rolled[i]:
            j = i
            while j < N and rolled[j]:
                j += 1
            runs.append(((i + first_false) % N, j - i))
            i = j
        else:
            i += 1
    return sorted(runs)


def _ray_blocked(model, pose, u: float, pts: np.ndarray, u_grid: np.ndarray) -> bool:
    """Whether the contour point at ``u`` is hidden behind the sampled polyline."""
    p = global_point(model, pose, u)
    N = len(pts)
    h = u_grid[1] - u_grid[0]
    i = int(math.floor((u % TWO_PI) / h)) % N
    excl = {(i - 1) % N, i, (i + 1) % N}
    q0 = pts
    q1 = np.roll(pts, -1, axis=0)
    e = q1 - q0
    den = _cross(np.broadcast_to(p, e.shape), e)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(q0, e) / den
        s = _cross(q0, np.broadcast_to(p, e.shape)) / den
    hit = (np.abs(den) > 1e-300) & (s >= 0) & (s <= 1) & (t > 0) & (t < 1 - 1e-9)
    hit[list(excl)] = False
    return bool(hit.any())


def _refine_boundary(model, pose, u_vis: float, u_hid: float, pts, u_grid,
                     window: int = 4) -> float:
    """Locate the visibility transition between a visible and a hidden sample.

    A silhouette (tangent ray) within a few samples of the coarse transition
    is solved for exactly; the polyline predicate misplaces grazing rays by a
    sample or two.  Otherwise the transition is an occlusion edge and is
    bisected on the ray-casting predicate.
    """
    V = rotation(pose.varphi)

    def tangency(t):
        p = global_point(model, pose, t)
        dp = contour_derivative(model, t) @ V.T
        return float(_cross(p, dp))

    h = u_hid - u_vis
    grid = u_vis + h * np.arange(-window, window + 2)
    vals = [tangency(t) for t in grid]
    centre = u_vis + 0.5 * h
    best = None
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            root = a
        elif fa * fb < 0:
            root = brentq(tangency, min(a, b), max(a, b), xtol=1e-15, rtol=1e-15)
        else:
            continue
        if best is None or abs(root - centre) < abs(best - centre):
            best = root
    if best is not None:
        return float(best)
    a, b = u_vis, u_hid
    for _ in range(60):
        mid = 0.5 * (a + b)
        if _ray_blocked(model, pose, mid, pts, u_grid):
            b = mid
        else:
            a = mid
        if abs(b - a) < 1e-14:
            break
    return 0.5 * (a + b)


def los_range(model: ContourModel, pose: TargetPose, samples: int = 4096
              ) -> Tuple[float, float]:
    """``(u_lower, u_upper)`` of the largest contiguous visible arc.

    ``u_upper`` may exceed ``2 pi`` when the arc wraps around ``u = 0``.
    """
    if samples < 1000:
        raise ValueError("sampling density must be at least 1000 samples")
    u, pts, vis = visibility(model, pose, samples)
    runs = _runs(vis)
    if not runs:
        raise NoVisibleContour("no contour sample has a line of sight to the base station")
    if len(runs) > 1:
        warnings.warn(f"visible contour splits into {len(runs)} arcs; keeping the longest",
                      NonContiguousLoS, stacklevel=3)
    start, length = max(runs, key=lambda r: (r[1], -r[0]))
    N = samples
    h = TWO_PI / N
    if length == N:
        return 0.0, TWO_PI
    u_first = start * h
    u_last = (start + length - 1) * h
    lower = _refine_boundary(model, pose, u_first, u_first - h, pts, u)
    upper = _refine_boundary(model, pose, u_last, u_last + h, pts, u)
    lower = lower % TWO_PI
    span = (upper - lower) % TWO_PI
    if span == 0.0:
        span = TWO_PI
    return lower, lower + span


def compute_los_partition(model: ContourModel, pose: TargetPose, K: int,
                          samples: int = 4096) -> LosPartition:
    """Split the line-of-sight arc into ``K`` equal local-angle subsections."""
    if K < 1:
        raise ValueError("K must be at least 1")
    rmax = max_radius(model)
    if not pose.d_o > rmax:
        raise ValueError(f"d_o={pose.d_o} must exceed the contour radius {rmax:.6g}")
    lower, upper = los_range(model, pose, samples)
    return partition_range(model, pose, lower, upper, K)


def partition_range(model: ContourModel, pose: TargetPose, lower: float, upper: float,
                    K: int) -> LosPartition:
    """Subsections of ``[lower, upper]`` with midpoints as representative points."""
    du = (upper - lower) / K
    edges = lower + du * np.arange(K + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    r = contour_point(model, mids)
    p = global_point(model, pose, mids)
    d = np.linalg.norm(p, axis=-1)
    phi = bearing(p)
    subs = []
    for k in range(K):
        l_k = arc_length(model, float(edges[k]), float(edges[k + 1]))
        subs.append(LosSubsection(float(mids[k]), l_k, float(d[k]), float(phi[k]),
                                  (float(r[k, 0]), float(r[k, 1])),
                                  (float(p[k, 0]), float(p[k, 1])),
                                  float(edges[k]), float(edges[k + 1])))
    return LosPartition(tuple(subs), float(lower), float(upper))


# ---------------------------------------------------------------------------
# Pose Jacobians
# ---------------------------------------------------------------------------

EXACT = "exact"
APPROXIMATE = "approximate"


def pose_jacobians(partition: LosPartition, pose: TargetPose, mode: str = APPROXIMATE
                   ) -> Tuple[np.ndarray, np.ndarray]:
    """Derivatives of ``d_k`` (``mu``) and ``phi_k`` (``eta``) w.r.t. ``[d_o, phi_o, varphi]``.

    ``exact`` differentiates ``p_k = p_o + V r_k`` directly; ``approximate``
    keeps only the leading terms for a distant target, ``mu ~ [1, s, -s]``
    and ``eta ~ [0, 1, 0]`` with ``s = r^T V^T J p_o / d_o``.

    Returns two ``K x 3`` arrays.
    """
    r = partition.r
    V = rotation(pose.varphi)
    p_o = center_position(pose)
    d_o = pose.d_o
    Vr = r @ V.T
    w = Vr @ p_o                     # r^T V^T p_o
    v = Vr @ (_J @ p_o)              # r^T V^T J p_o
    K = partition.K
    if mode == APPROXIMATE:
        s = v / d_o
        mu = np.column_stack([np.ones(K), s, -s])
        eta = np.tile([0.0, 1.0, 0.0], (K, 1))
        return mu, eta
    if mode != EXACT:
        raise ValueError(f"unknown Jacobian mode {mode!r}")
    d = partition.d
    rr = np.einsum("ij,ij->i", r, r)
    mu = np.column_stack([(d_o ** 2 + w) / (d_o * d), -v / d, -v / d])
    eta = np.column_stack([v / (d_o * d ** 2), (d_o ** 2 + w) / d ** 2, -(w + rr) / d ** 2])
    return mu, eta


def subsection_range_bearing(model: ContourModel, pose: TargetPose, u_k) -> Tuple[np.ndarray, np.ndarray]:
    """``(d_k, phi_k)`` of the contour points at fixed local directions ``u_k``."""
    p = global_point(model, pose, np.asarray(u_k, dtype=float))
    return np.linalg.norm(p, axis=-1), bearing(p)
