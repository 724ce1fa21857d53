"""Billiard tables: boundary pieces, exact first hits, normals, strata.

A table is a model space plus boundary pieces.  Each piece carries a signed
gauge function, negative inside the domain, so the domain is the set where
every gauge is nonpositive.  Ball and half-space/cap pieces intersect rays
in closed form (quadratic, trigonometric, or exponential equations); radial
Fourier walls fall back to bracketing plus bisection.  Flat-torus tables
trace rays through periodic images window by window.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError, DegenerateStart, NotOnBoundary, Trapped
from .spaces import Euclidean, FlatTorus, HyperbolicBall, PhasePoint, Sphere, _dot, _mink_dot

__all__ = [
    "StratumLabel", "Stratum", "Tolerances", "Ball", "HalfSpaceOrCap",
    "RadialFourierCurve", "Table", "HitRecord", "first_boundary_hit",
    "inward_normal", "classify_boundary_point",
]

OUTER = "outer"
OBSTACLE = "obstacle"

# periodic-image offsets for torus window tracing
_STENCILS = {d: np.array(list(np.ndindex(*([3] * d))), dtype=float) - 1.0 for d in (2, 3)}


class StratumLabel(IntEnum):
    TRANSVERSAL_IN = 0    # interior of the inward locus
    TRANSVERSAL_OUT = 1   # interior of the outward locus
    TANGENT_CONVEX = 2    # tangency on a wall convex from inside; C(x) = x
    TANGENT_CONCAVE = 3   # tangency on a dispersing piece; discontinuity locus


@dataclass(frozen=True)
class Stratum:
    label: StratumLabel
    cos_in: float


@dataclass(frozen=True)
class Tolerances:
    hit_tol: float = 1e-10       # length units
    grazing_tol: float = 1e-7    # cosine units
    l_max: float | None = None   # None: 1e4 x diameter estimate


# ---------------------------------------------------------------------------
# Boundary pieces
# ---------------------------------------------------------------------------


class BoundaryPiece:
    side = OUTER

    def gauge(self, space, q):
        """Signed gauge, negative inside the domain."""
        raise NotImplementedError

    def inward_normal(self, space, q):
        """g-unit normal pointing into the domain."""
        raise NotImplementedError

    def ray_hit(self, space, q, v, s_lo, s_hi):
        """Smallest gauge-crossing arclength in (s_lo, s_hi], inf if none."""
        raise NotImplementedError

    def boundary_volume(self, space):
        raise NotImplementedError

    def sample_boundary(self, space, rng, count):
        raise NotImplementedError

    def boundary_param(self, space, q):
        """Angle-like boundary parameter (2d pieces only)."""
        raise NotImplementedError

    def point_at_param(self, space, alpha):
        raise NotImplementedError

    def extent(self, space):
        """Rough diameter of the piece, for length caps."""
        raise NotImplementedError


def _smallest_root(roots, valid, s_lo, s_hi):
    """Minimum of candidate root arrays within (s_lo, s_hi]; inf if none."""
    best = np.full(roots[0].shape, np.inf)
    for r, ok in zip(roots, valid):
        take = ok & (r > s_lo) & (r <= s_hi) & (r < best)
        best = np.where(take, r, best)
    return best


class Ball(BoundaryPiece):
    """Geodesic ball piece: outer wall (domain inside) or obstacle."""

    def __init__(self, center, radius, side=OUTER):
        if side not in (OUTER, OBSTACLE):
            raise ConfigError(f"unknown side {side!r}")
        if radius <= 0:
            raise ConfigError("ball radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.side = side
        self._sign = 1.0 if side == OUTER else -1.0

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius}, side={self.side!r})"

    # distance to center, chart-aware
    def _rho(self, space, q):
        if isinstance(space, FlatTorus):
            return np.linalg.norm(space.wrap_delta(q - self.center), axis=-1)
        return space.distance(q, self.center)

    def gauge(self, space, q):
        return self._sign * (self._rho(space, q) - self.radius)

    def _radial_unit(self, space, q):
        """g-unit tangent at q pointing away from the center."""
        if isinstance(space, FlatTorus):
            d = space.wrap_delta(q - self.center)
            return d / np.linalg.norm(d, axis=-1, keepdims=True)
        if isinstance(space, Euclidean):
            d = q - self.center
            return d / np.linalg.norm(d, axis=-1, keepdims=True)
        if isinstance(space, HyperbolicBall):
            x = space.to_hyperboloid(q)
            c = space.to_hyperboloid(self.center[None, :])[0]
            dist = np.arccosh(np.maximum(-_mink_dot(x, c), 1.0 + 1e-300))
            sh = np.sinh(np.maximum(dist, 1e-12))[..., None]
            t = (np.cosh(dist)[..., None] * x - c) / sh
            _, vr = space.from_hyperboloid(x, t)
            return space.unit(q, vr)
        if isinstance(space, Sphere):
            c = self.center
            ang = space.distance(q, c)
            sn = np.sin(np.maximum(ang, 1e-12))[..., None]
            t = (np.cos(ang)[..., None] * q - c) / sn
            return t / np.linalg.norm(t, axis=-1, keepdims=True)
        raise NotImplementedError(space.kind)

    def inward_normal(self, space, q):
        return -self._sign * self._radial_unit(space, q)

    def ray_hit(self, space, q, v, s_lo, s_hi):
        if isinstance(space, FlatTorus):
            raise RuntimeError("torus pieces are traced through window_hit")
        if isinstance(space, Euclidean):
            d = q - self.center
            b = _dot(d, v)
            c = _dot(d, d) - self.radius ** 2
            disc = b * b - c
            ok = disc >= 0.0
            sq = np.sqrt(np.maximum(disc, 0.0))
            return _smallest_root([-b - sq, -b + sq], [ok, ok], s_lo, s_hi)
        if isinstance(space, HyperbolicBall):
            x, u = space.to_hyperboloid(q, v)
            c = space.to_hyperboloid(self.center[None, :])[0]
            a = -_mink_dot(x, c)
            b = -_mink_dot(u, c)
            h = np.cosh(self.radius)
            aa, bb = a + b, a - b
            disc = h * h - aa * bb
            ok = disc >= 0.0
            sq = np.sqrt(np.maximum(disc, 0.0))
            small = np.abs(aa) < 1e-14
            denom = np.where(small, 1.0, aa)
            t1 = np.where(small, bb / (2.0 * h), (h - sq) / denom)
            t2 = np.where(small, np.inf, (h + sq) / denom)
            with np.errstate(invalid="ignore", divide="ignore"):
                r1 = np.where(ok & (t1 > 0), np.log(np.maximum(t1, 1e-300)), np.inf)
                r2 = np.where(ok & (t2 > 0), np.log(np.maximum(t2, 1e-300)), np.inf)
            return _smallest_root([r1, r2], [np.isfinite(r1), np.isfinite(r2)], s_lo, s_hi)
        if isinstance(space, Sphere):
            a = _dot(q, self.center)
            b = _dot(v, self.center)
            r = np.hypot(a, b)
            y = np.cos(self.radius) / np.maximum(r, 1e-300)
            ok = np.abs(y) <= 1.0
            phi = np.arctan2(b, a)
            delta = np.arccos(np.clip(y, -1.0, 1.0))
            two_pi = 2.0 * np.pi
            roots, valid = [], []
            for base in (phi - delta, phi + delta):
                k = np.ceil((s_lo - base) / two_pi)
                roots.append(base + two_pi * k)
                valid.append(ok)
            return _smallest_root(roots, valid, s_lo, min(s_hi, s_lo + two_pi))
        raise NotImplementedError(space.kind)

    def window_hit(self, space, q, v, s0, s1, s_lo):
        """Torus only: smallest root in (max(s0, s_lo), s1] over periodic images."""
        periods = space.periods
        mid = q + (0.5 * (s0 + s1)) * v
        base = np.round((mid - self.center) / periods)
        offs = _STENCILS[space.dim]
        c_img = self.center + (base[None, :, :] + offs[:, None, :]) * periods  # (K, N, d)
        d = q[None, :, :] - c_img
        b = np.sum(d * v[None, :, :], axis=-1)
        c = np.sum(d * d, axis=-1) - self.radius ** 2
        disc = b * b - c
        ok = disc >= 0.0
        sq = np.sqrt(np.maximum(disc, 0.0))
        lo = max(s0, s_lo)
        best = np.full(q.shape[0], np.inf)
        for root in (-b - sq, -b + sq):
            root = np.where(ok & (root > lo) & (root <= s1), root, np.inf)
            best = np.minimum(best, np.min(root, axis=0))
        return best

    def boundary_volume(self, space):
        r = self.radius
        if isinstance(space, (Euclidean, FlatTorus)):
            return 2.0 * np.pi * r if space.dim == 2 else 4.0 * np.pi * r * r
        if isinstance(space, HyperbolicBall):
            return 2.0 * np.pi * np.sinh(r) if space.dim == 2 else 4.0 * np.pi * np.sinh(r) ** 2
        if isinstance(space, Sphere):
            return 2.0 * np.pi * np.sin(r) if space.dim == 2 else 4.0 * np.pi * np.sin(r) ** 2
        raise NotImplementedError(space.kind)

    def domain_volume(self, space):
        """g-volume enclosed by the ball."""
        r = self.radius
        if isinstance(space, (Euclidean, FlatTorus)):
            return np.pi * r * r if space.dim == 2 else 4.0 / 3.0 * np.pi * r ** 3
        if isinstance(space, HyperbolicBall):
            if space.dim == 2:
                return 2.0 * np.pi * (np.cosh(r) - 1.0)
            return np.pi * (np.sinh(2.0 * r) - 2.0 * r)
        if isinstance(space, Sphere):
            if space.dim == 2:
                return 2.0 * np.pi * (1.0 - np.cos(r))
            return 2.0 * np.pi * (r - np.sin(r) * np.cos(r))
        raise NotImplementedError(space.kind)

    def sample_boundary(self, space, rng, count):
        if isinstance(space, (Euclidean, FlatTorus)):
            if space.dim == 2:
                ang = rng.uniform(0.0, 2.0 * np.pi, count)
                u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            else:
                u = rng.standard_normal((count, 3))
                u /= np.linalg.norm(u, axis=1, keepdims=True)
            pts = self.center + self.radius * u
            return space.wrap(pts) if isinstance(space, FlatTorus) else pts
        if isinstance(space, HyperbolicBall):
            u = rng.standard_normal((count, space.dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            c = np.broadcast_to(self.center, (count, space.dim))
            lam = space.conformal_factor(c)
            qb, _ = space.flow(c, u / lam[:, None], np.full(count, self.radius))
            return qb
        if isinstance(space, Sphere):
            u = rng.standard_normal((count, space.chart_dim))
            u -= _dot(u, np.broadcast_to(self.center, u.shape))[:, None] * self.center
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            c = np.broadcast_to(self.center, u.shape)
            qb, _ = space.flow(c, u, np.full(count, self.radius))
            return qb
        raise NotImplementedError(space.kind)

    # 2d boundary parametrization (angle about the center / pole)
    def _pole_frame(self, space):
        if isinstance(space, Sphere):
            c = self.center
            seed = np.eye(3)[np.argmin(np.abs(c))]
            e1 = seed - np.dot(seed, c) * c
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(c, e1)
            return e1, e2
        return None

    def boundary_param(self, space, q):
        if space.dim != 2:
            raise NotImplementedError("boundary_param is 2d only")
        if isinstance(space, FlatTorus):
            d = space.wrap_delta(q - self.center)
            return np.mod(np.arctan2(d[..., 1], d[..., 0]), 2.0 * np.pi)
        if isinstance(space, (Euclidean, HyperbolicBall)):
            if isinstance(space, HyperbolicBall) and np.linalg.norm(self.center) > 1e-12:
                raise NotImplementedError("parametrized hyperbolic balls must be centered")
            d = q - self.center
            return np.mod(np.arctan2(d[..., 1], d[..., 0]), 2.0 * np.pi)
        if isinstance(space, Sphere):
            e1, e2 = self._pole_frame(space)
            return np.mod(np.arctan2(_dot(q, e2), _dot(q, e1)), 2.0 * np.pi)
        raise NotImplementedError(space.kind)

    def point_at_param(self, space, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if space.dim != 2:
            raise NotImplementedError("point_at_param is 2d only")
        u = np.stack([np.cos(alpha), np.sin(alpha)], axis=-1)
        if isinstance(space, (Euclidean, FlatTorus)):
            pts = self.center + self.radius * u
            return space.wrap(pts) if isinstance(space, FlatTorus) else pts
        if isinstance(space, HyperbolicBall):
            if np.linalg.norm(self.center) > 1e-12:
                raise NotImplementedError("parametrized hyperbolic balls must be centered")
            return np.tanh(self.radius / 2.0) * u
        if isinstance(space, Sphere):
            e1, e2 = self._pole_frame(space)
            rim = np.cos(alpha)[..., None] * e1 + np.sin(alpha)[..., None] * e2
            return np.cos(self.radius) * self.center + np.sin(self.radius) * rim
        raise NotImplementedError(space.kind)

    def extent(self, space):
        if isinstance(space, HyperbolicBall):
            return 2.0 * self.radius
        if isinstance(space, Sphere):
            return min(2.0 * self.radius, np.pi)
        return 2.0 * self.radius


class HalfSpaceOrCap(BoundaryPiece):
    """Half-space (Euclidean / hyperbolic) or spherical cap piece.

    Euclidean pose: unit `normal` u and `offset` c, wall {<q,u> = c}, outer
    side keeps the domain in {<q,u> <= c}.  Sphere pose: `pole` and `angle`
    (delegates to a geodesic ball).  Hyperbolic pose: `minkowski_normal` w,
    a spacelike Minkowski-unit vector; the wall is the geodesic hyperplane
    {<X,w> = 0} and the outer side keeps {<X,w> <= 0}.
    """

    def __init__(self, side=OUTER, normal=None, offset=None, pole=None, angle=None,
                 minkowski_normal=None):
        if side not in (OUTER, OBSTACLE):
            raise ConfigError(f"unknown side {side!r}")
        self.side = side
        self._sign = 1.0 if side == OUTER else -1.0
        self._ball = None
        if pole is not None:
            self._ball = Ball(pole, angle, side=side)
            return
        if minkowski_normal is not None:
            w = np.asarray(minkowski_normal, dtype=float)
            self.w = w / np.sqrt(max(_mink_dot(w, w), 1e-300))
            self.normal = None
            return
        if normal is None or offset is None:
            raise ConfigError("half-space needs normal+offset, pole+angle, or minkowski_normal")
        nn = np.asarray(normal, dtype=float)
        self.normal = nn / np.linalg.norm(nn)
        self.offset = float(offset)
        self.w = None

    def _delegate(self, space):
        if isinstance(space, Sphere):
            if self._ball is None:
                raise ConfigError("sphere caps need pole and angle")
            return self._ball
        if self._ball is not None:
            raise ConfigError("pole/angle pose is for spheres only")
        return None

    def gauge(self, space, q):
        ball = self._delegate(space)
        if ball is not None:
            return ball.gauge(space, q)
        if isinstance(space, HyperbolicBall):
            x = space.to_hyperboloid(q)
            return self._sign * np.arcsinh(_mink_dot(x, self.w))
        if isinstance(space, Euclidean) and not isinstance(space, FlatTorus):
            return self._sign * (_dot(q, self.normal) - self.offset)
        raise ConfigError("half-space pieces are not defined on a torus")

    def inward_normal(self, space, q):
        ball = self._delegate(space)
        if ball is not None:
            return ball.inward_normal(space, q)
        if isinstance(space, HyperbolicBall):
            x = space.to_hyperboloid(q)
            grad = self.w + _mink_dot(x, self.w)[..., None] * x
            grad /= np.sqrt(np.maximum(_mink_dot(grad, grad), 1e-300))[..., None]
            _, vg = space.from_hyperboloid(x, -self._sign * grad)
            return space.unit(q, vg)
        out = np.broadcast_to(-self._sign * self.normal, q.shape)
        return out.copy()

    def ray_hit(self, space, q, v, s_lo, s_hi):
        ball = self._delegate(space)
        if ball is not None:
            return ball.ray_hit(space, q, v, s_lo, s_hi)
        if isinstance(space, HyperbolicBall):
            x, u = space.to_hyperboloid(q, v)
            a = _mink_dot(x, self.w)
            b = _mink_dot(u, self.w)
            # a cosh s + b sinh s = 0  =>  e^{2s} = (b - a) / (a + b)
            num, den = b - a, a + b
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = num / den
                s = 0.5 * np.log(ratio)
            ok = np.isfinite(s) & (ratio > 0)
            return _smallest_root([np.where(ok, s, np.inf)], [ok], s_lo, s_hi)
        denom = _dot(v, np.broadcast_to(self.normal, v.shape))
        with np.errstate(invalid="ignore", divide="ignore"):
            s = (self.offset - _dot(q, np.broadcast_to(self.normal, q.shape))) / denom
        ok = np.abs(denom) > 1e-300
        return _smallest_root([np.where(ok, s, np.inf)], [ok], s_lo, s_hi)

    def boundary_volume(self, space):
        ball = self._delegate(space)
        if ball is not None:
            return ball.boundary_volume(space)
        raise ConfigError("half-space pieces have unbounded boundary volume")

    def sample_boundary(self, space, rng, count):
        ball = self._delegate(space)
        if ball is not None:
            return ball.sample_boundary(space, rng, count)
        raise ConfigError("cannot sample an unbounded half-space wall")

    def boundary_param(self, space, q):
        ball = self._delegate(space)
        if ball is not None:
            return ball.boundary_param(space, q)
        raise NotImplementedError

    def point_at_param(self, space, alpha):
        ball = self._delegate(space)
        if ball is not None:
            return ball.point_at_param(space, alpha)
        raise NotImplementedError

    def extent(self, space):
        ball = self._delegate(space)
        if ball is not None:
            return ball.extent(space)
        return np.inf


class RadialFourierCurve(BoundaryPiece):
    """Planar wall r(theta) = a0 + sum a_k cos(k theta) + b_k sin(k theta).

    Euclidean n = 2 only.  Ray intersections use bracketing at a fixed step
    followed by bisection to hit tolerance.
    """

    def __init__(self, base_radius, cos_coeffs=(), sin_coeffs=(), side=OUTER):
        if side not in (OUTER, OBSTACLE):
            raise ConfigError(f"unknown side {side!r}")
        self.side = side
        self._sign = 1.0 if side == OUTER else -1.0
        self.base_radius = float(base_radius)
        self.cos_coeffs = np.asarray(cos_coeffs, dtype=float)
        self.sin_coeffs = np.asarray(sin_coeffs, dtype=float)
        grid = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
        rg = self.r_of(grid)
        if np.min(rg) <= 0:
            raise ConfigError("radial Fourier curve must have positive radius")
        self._r_min = float(np.min(rg))
        self._r_max = float(np.max(rg))
        speed = np.hypot(rg, self.dr_of(grid))
        self._perimeter = float(np.mean(speed) * 2.0 * np.pi)
        self._speed_max = float(np.max(speed)) * 1.0000001
        self._step = self._r_min / 256.0

    def _harmonics(self):
        kc = np.arange(1, self.cos_coeffs.size + 1)
        ks = np.arange(1, self.sin_coeffs.size + 1)
        return kc, ks

    def r_of(self, theta):
        theta = np.asarray(theta, dtype=float)
        kc, ks = self._harmonics()
        out = np.full(theta.shape, self.base_radius)
        if kc.size:
            out = out + np.sum(self.cos_coeffs * np.cos(np.multiply.outer(theta, kc)), axis=-1)
        if ks.size:
            out = out + np.sum(self.sin_coeffs * np.sin(np.multiply.outer(theta, ks)), axis=-1)
        return out

    def dr_of(self, theta):
        theta = np.asarray(theta, dtype=float)
        kc, ks = self._harmonics()
        out = np.zeros(theta.shape)
        if kc.size:
            out = out - np.sum(self.cos_coeffs * kc * np.sin(np.multiply.outer(theta, kc)), axis=-1)
        if ks.size:
            out = out + np.sum(self.sin_coeffs * ks * np.cos(np.multiply.outer(theta, ks)), axis=-1)
        return out

    def _check_space(self, space):
        if not (type(space) is Euclidean and space.dim == 2):
            raise ConfigError("radial Fourier walls require Euclidean n = 2")

    def gauge(self, space, q):
        self._check_space(space)
        theta = np.arctan2(q[..., 1], q[..., 0])
        return self._sign * (np.linalg.norm(q, axis=-1) - self.r_of(theta))

    def inward_normal(self, space, q):
        self._check_space(space)
        rho = np.linalg.norm(q, axis=-1)
        theta = np.arctan2(q[..., 1], q[..., 0])
        dr = self.dr_of(theta)
        # grad(|q| - r(theta)) in Cartesian coordinates
        grad = q / rho[..., None]
        perp = np.stack([-q[..., 1], q[..., 0]], axis=-1) / (rho * rho)[..., None]
        grad = grad - dr[..., None] * perp
        grad /= np.linalg.norm(grad, axis=-1, keepdims=True)
        return -self._sign * grad

    def ray_hit(self, space, q, v, s_lo, s_hi):
        self._check_space(space)
        n = q.shape[0]
        s_hi_arr = np.broadcast_to(np.asarray(s_hi, dtype=float), (n,)).astype(float)
        if self.side == OUTER:
            # from the closed domain the wall is reached within one diameter
            cap = np.minimum(s_hi_arr, 2.0 * self._r_max + 4.0 * self._step + s_lo)
        else:
            cap = s_hi_arr.copy()  # caller bounds by the outer wall
        s_hit = np.full(n, np.inf)
        idx = np.arange(n)
        s_prev = np.full(n, s_lo)
        g_prev = self.gauge(space, q + s_prev[:, None] * v)
        active = s_prev < cap
        lo = np.zeros(n)
        hi = np.zeros(n)
        found = np.zeros(n, dtype=bool)
        h = self._step
        while np.any(active):
            ai = idx[active]
            s_next = np.minimum(s_prev[ai] + h, cap[ai])
            g_next = self.gauge(space, q[ai] + s_next[:, None] * v[ai])
            crossed = (g_prev[ai] <= 0.0) != (g_next <= 0.0)
            ci = ai[crossed]
            lo[ci] = s_prev[ci]
            hi[ci] = s_next[crossed]
            found[ci] = True
            finished = crossed | (s_next >= cap[ai])
            s_prev[ai] = s_next
            g_prev[ai] = g_next
            active[ai[finished]] = False
        if np.any(found):
            fi = idx[found]
            flo, fhi = lo[fi], hi[fi]
            g_lo = self.gauge(space, q[fi] + flo[:, None] * v[fi])
            for _ in range(48):
                mid = 0.5 * (flo + fhi)
                g_mid = self.gauge(space, q[fi] + mid[:, None] * v[fi])
                same = (g_mid <= 0.0) == (g_lo <= 0.0)
                flo = np.where(same, mid, flo)
                g_lo = np.where(same, g_mid, g_lo)
                fhi = np.where(same, fhi, mid)
            s_hit[fi] = 0.5 * (flo + fhi)
        s_hit = np.where((s_hit > s_lo) & (s_hit <= s_hi_arr), s_hit, np.inf)
        return s_hit

    def boundary_volume(self, space):
        return self._perimeter

    def sample_boundary(self, space, rng, count):
        self._check_space(space)
        out = np.empty((count, 2))
        filled = 0
        while filled < count:
            m = 2 * (count - filled) + 16
            theta = rng.uniform(0.0, 2.0 * np.pi, m)
            accept = rng.uniform(0.0, self._speed_max, m) < np.hypot(self.r_of(theta), self.dr_of(theta))
            theta = theta[accept][: count - filled]
            r = self.r_of(theta)
            out[filled:filled + theta.size] = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
            filled += theta.size
        return out

    def boundary_param(self, space, q):
        return np.mod(np.arctan2(q[..., 1], q[..., 0]), 2.0 * np.pi)

    def point_at_param(self, space, alpha):
        alpha = np.asarray(alpha, dtype=float)
        r = self.r_of(alpha)
        return np.stack([r * np.cos(alpha), r * np.sin(alpha)], axis=-1)

    def domain_volume(self, space):
        grid = np.linspace(0.0, 2.0 * np.pi, 8192, endpoint=False)
        return float(np.mean(0.5 * self.r_of(grid) ** 2) * 2.0 * np.pi)

    def extent(self, space):
        return 2.0 * self._r_max


# ---------------------------------------------------------------------------
# Table
# ---------------------------------------------------------------------------


@dataclass
class HitBatch:
    """Vectorized first-hit result; trapped rows carry s = inf."""
    s: np.ndarray
    q: np.ndarray
    v: np.ndarray
    piece: np.ndarray
    cos_in: np.ndarray
    label: np.ndarray
    trapped: np.ndarray


@dataclass(frozen=True)
class HitRecord:
    s_hit: float
    z_hit: PhasePoint
    piece: int
    cos_in: float
    stratum: Stratum

    @property
    def q_hit(self):
        return self.z_hit.q


class Table:
    """A billiard domain: model space, boundary pieces, tolerances."""

    def __init__(self, space, pieces, tolerances=None, name="table", check=True):
        self.space = space
        self.pieces = tuple(pieces)
        self.tol = tolerances or Tolerances()
        self.name = name
        if not self.pieces:
            raise ConfigError("a table needs at least one boundary piece")
        if isinstance(space, FlatTorus):
            if any(p.side != OBSTACLE or not isinstance(p, Ball) for p in self.pieces):
                raise ConfigError("torus tables support ball obstacles only")
        else:
            if sum(p.side == OUTER for p in self.pieces) != 1:
                raise ConfigError("non-torus tables need exactly one outer wall")
        self._diameter = self._estimate_diameter()
        if not np.isfinite(self._diameter):
            raise ConfigError("table domain is unbounded")
        self.l_max = self.tol.l_max if self.tol.l_max else 1e4 * self._diameter
        if check:
            self._check_geometry()

    # -- construction checks ------------------------------------------------

    def _estimate_diameter(self):
        if isinstance(self.space, FlatTorus):
            return float(np.linalg.norm(self.space.periods))
        return float(max(p.extent(self.space) for p in self.pieces if p.side == OUTER))

    def _check_geometry(self):
        self._check_disjoint()
        self._check_gradients()
        self._check_connected()

    def _check_disjoint(self):
        space = self.space
        balls = [p for p in self.pieces if isinstance(p, Ball)]
        if isinstance(space, FlatTorus):
            for b in balls:
                if 2.0 * b.radius >= np.min(space.periods):
                    raise ConfigError("obstacle overlaps its own periodic images")
            for i, a in enumerate(balls):
                for b in balls[i + 1:]:
                    d = np.linalg.norm(space.wrap_delta(a.center - b.center))
                    if d <= a.radius + b.radius:
                        raise ConfigError("obstacles overlap (including periodic images)")
            return
        outer = next(p for p in self.pieces if p.side == OUTER)
        for p in self.pieces:
            if p.side != OBSTACLE:
                continue
            rng = np.random.default_rng(0)
            pts = p.sample_boundary(space, rng, 256)
            if np.any(outer.gauge(space, pts) >= -self.tol.hit_tol):
                raise ConfigError("obstacle touches the outer wall")
            for q in self.pieces:
                if q is p or q.side != OBSTACLE:
                    continue
                if np.any(q.gauge(space, pts) >= -self.tol.hit_tol):
                    raise ConfigError("obstacles overlap")

    def _check_gradients(self):
        rng = np.random.default_rng(1)
        for p in self.pieces:
            pts = p.sample_boundary(self.space, rng, 128)
            n = p.inward_normal(self.space, pts)
            if not np.all(np.isfinite(n)):
                raise ConfigError("vanishing boundary gradient detected")

    def _chart_box(self):
        """Chart bounding box [lo, hi] covering the domain (non-sphere/torus)."""
        space = self.space
        outer = next(p for p in self.pieces if p.side == OUTER)
        if isinstance(space, HyperbolicBall):
            if isinstance(outer, Ball):
                d0 = float(space.distance(outer.center, np.zeros(space.dim)))
                rad = np.tanh(min(d0 + outer.radius, 36.0) / 2.0)
            else:
                rad = 1.0 - 1e-9
            return -rad * np.ones(space.dim), rad * np.ones(space.dim)
        if isinstance(outer, Ball):
            return outer.center - outer.radius, outer.center + outer.radius
        if isinstance(outer, RadialFourierCurve):
            r = outer._r_max
            return -r * np.ones(2), r * np.ones(2)
        raise ConfigError("cannot bound the domain of this outer wall")

    def _interior_samples(self, rng, count):
        space = self.space
        out = np.empty((count, space.chart_dim))
        filled = 0
        tries = 0
        while filled < count:
            tries += 1
            if tries > 2000:
                raise ConfigError("could not sample the table interior")
            m = 4 * (count - filled) + 32
            if isinstance(space, FlatTorus):
                q = rng.uniform(0.0, 1.0, (m, space.dim)) * space.periods
            elif isinstance(space, Sphere):
                q = rng.standard_normal((m, space.chart_dim))
                q /= np.linalg.norm(q, axis=1, keepdims=True)
            else:
                lo, hi = self._chart_box()
                q = rng.uniform(0.0, 1.0, (m, space.dim)) * (hi - lo) + lo
                if isinstance(space, HyperbolicBall):
                    q = q[_dot(q, q) < 1.0 - 1e-9]
            if q.shape[0] == 0:
                continue
            keep = q[self.inside(q, tol=-1e-9)]
            take = keep[: count - filled]
            out[filled:filled + take.shape[0]] = take
            filled += take.shape[0]
        return out

    def _check_connected(self, count=120, neighbors=6, probes=24):
        rng = np.random.default_rng(2)
        pts = self._interior_samples(rng, count)
        if isinstance(self.space, FlatTorus):
            deltas = self.space.wrap_delta(pts[None, :, :] - pts[:, None, :])
        else:
            deltas = pts[None, :, :] - pts[:, None, :]
        dist = np.linalg.norm(deltas, axis=-1)
        order = np.argsort(dist, axis=1)
        parent = np.arange(count)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        t = np.linspace(0.02, 0.98, probes)[:, None]
        for i in range(count):
            for j in order[i, 1:neighbors + 1]:
                seg = pts[i][None, :] + t * deltas[i, j][None, :]
                if isinstance(self.space, Sphere):
                    seg = seg / np.linalg.norm(seg, axis=1, keepdims=True)
                elif isinstance(self.space, FlatTorus):
                    seg = self.space.wrap(seg)
                if np.all(self.inside(seg, tol=0.0)):
                    parent[find(i)] = find(j)
        roots = {find(i) for i in range(count)}
        if len(roots) > 1:
            raise ConfigError("table domain appears disconnected")

    # -- gauges and membership ----------------------------------------------

    def gauges(self, q):
        q = np.atleast_2d(q)
        return np.stack([p.gauge(self.space, q) for p in self.pieces], axis=0)

    def max_gauge(self, q):
        return np.max(self.gauges(q), axis=0)

    def inside(self, q, tol=None):
        tol = self.tol.hit_tol if tol is None else tol
        return self.max_gauge(q) <= tol

    def active_piece(self, q):
        """Index of the piece whose gauge vanishes at q; -1 if none."""
        g = self.gauges(np.atleast_2d(q))
        idx = np.argmax(g, axis=0)
        best = np.max(g, axis=0)
        return np.where(np.abs(best) <= self.tol.hit_tol, idx, -1)

    def inward_normal_at(self, q, piece_idx):
        q = np.atleast_2d(q)
        piece_idx = np.atleast_1d(piece_idx)
        out = np.empty_like(q)
        for k, piece in enumerate(self.pieces):
            mask = piece_idx == k
            if np.any(mask):
                out[mask] = piece.inward_normal(self.space, q[mask])
        return out

    # -- strata ---------------------------------------------------------------

    def _gauge_dds(self, q, v, piece_idx):
        """Second derivative of the active gauge along the geodesic."""
        h = 1e-4 * max(self._diameter, 1e-6)
        qp, _ = self.space.flow(q, v, np.full(q.shape[0], h))
        qm, _ = self.space.flow(q, v, np.full(q.shape[0], -h))
        out = np.empty(q.shape[0])
        for k, piece in enumerate(self.pieces):
            mask = piece_idx == k
            if np.any(mask):
                g0 = piece.gauge(self.space, q[mask])
                gp = piece.gauge(self.space, qp[mask])
                gm = piece.gauge(self.space, qm[mask])
                out[mask] = (gp - 2.0 * g0 + gm) / (h * h)
        return out

    def classify(self, q, v, piece_idx=None):
        """Stratum labels and incidence cosines for boundary phase points."""
        q = np.atleast_2d(q)
        v = np.atleast_2d(v)
        if piece_idx is None:
            piece_idx = self.active_piece(q)
        piece_idx = np.atleast_1d(piece_idx)
        if np.any(piece_idx < 0):
            raise NotOnBoundary("point is not on the table boundary")
        n = self.inward_normal_at(q, piece_idx)
        cos_in = self.space.metric_dot(q, v, n)
        gtol = self.tol.grazing_tol
        label = np.where(cos_in > gtol, int(StratumLabel.TRANSVERSAL_IN),
                         np.where(cos_in < -gtol, int(StratumLabel.TRANSVERSAL_OUT), -1))
        tangent = label < 0
        if np.any(tangent):
            dds = self._gauge_dds(q[tangent], v[tangent], piece_idx[tangent])
            label[tangent] = np.where(dds >= 0.0, int(StratumLabel.TANGENT_CONVEX),
                                      int(StratumLabel.TANGENT_CONCAVE))
        return label.astype(np.int8), cos_in

    # -- ray tracing -----------------------------------------------------------

    def first_hit(self, q, v):
        """Vectorized first boundary crossing along unit-speed geodesics."""
        q = np.atleast_2d(q)
        v = np.atleast_2d(v)
        n = q.shape[0]
        s_lo, s_hi = self.tol.hit_tol, self.l_max
        if isinstance(self.space, FlatTorus):
            best_s, best_piece = self._first_hit_torus(q, v, s_lo, s_hi)
        else:
            best_s = np.full(n, np.inf)
            best_piece = np.full(n, -1)
            ordered = sorted(enumerate(self.pieces),
                             key=lambda kp: isinstance(kp[1], RadialFourierCurve) and kp[1].side == OBSTACLE)
            for k, piece in ordered:
                if isinstance(piece, RadialFourierCurve) and piece.side == OBSTACLE:
                    cap = np.where(np.isfinite(best_s), best_s, s_hi)
                    s_k = piece.ray_hit(self.space, q, v, s_lo, cap)
                else:
                    s_k = piece.ray_hit(self.space, q, v, s_lo, s_hi)
                better = s_k < best_s
                best_s = np.where(better, s_k, best_s)
                best_piece = np.where(better, k, best_piece)
        trapped = ~np.isfinite(best_s)
        s_eff = np.where(trapped, 0.0, best_s)
        q_hit, v_hit = self.space.flow(q, v, s_eff)
        cos_in = np.zeros(n)
        label = np.full(n, -1, dtype=np.int8)
        ok = ~trapped
        if np.any(ok):
            lbl, ci = self.classify(q_hit[ok], v_hit[ok], best_piece[ok])
            cos_in[ok] = ci
            label[ok] = lbl
        return HitBatch(s=best_s, q=q_hit, v=v_hit, piece=best_piece,
                        cos_in=cos_in, label=label, trapped=trapped)

    def _first_hit_torus(self, q, v, s_lo, s_hi):
        n = q.shape[0]
        window = float(np.min(self.space.periods))
        best_s = np.full(n, np.inf)
        best_piece = np.full(n, -1)
        idx = np.arange(n)
        active = np.ones(n, dtype=bool)
        s0 = 0.0
        while np.any(active) and s0 < s_hi:
            s1 = min(s0 + window, s_hi)
            ai = idx[active]
            local_best = np.full(ai.size, np.inf)
            local_piece = np.full(ai.size, -1)
            for k, piece in enumerate(self.pieces):
                s_k = piece.window_hit(self.space, q[ai], v[ai], s0, s1, s_lo)
                better = s_k < local_best
                local_best = np.where(better, s_k, local_best)
                local_piece = np.where(better, k, local_piece)
            hit = np.isfinite(local_best)
            hit_idx = ai[hit]
            best_s[hit_idx] = local_best[hit]
            best_piece[hit_idx] = local_piece[hit]
            active[hit_idx] = False
            s0 = s1
        return best_s, best_piece

    def with_l_max(self, l_max):
        """Clone with a different length cap (geometry checks skipped)."""
        tol = Tolerances(self.tol.hit_tol, self.tol.grazing_tol, l_max)
        return Table(self.space, self.pieces, tol, name=self.name, check=False)

    def __repr__(self):
        return f"Table({self.name!r}, space={self.space.kind}, pieces={len(self.pieces)})"


# ---------------------------------------------------------------------------
# Scalar operations (single phase points)
# ---------------------------------------------------------------------------


def first_boundary_hit(table, z):
    """First boundary crossing of the geodesic through z.

    Raises DegenerateStart if z sits on the boundary pointing strictly
    outward, and Trapped if no crossing occurs within the length cap.
    """
    q = np.atleast_2d(z.q)
    v = np.atleast_2d(z.v)
    piece = table.active_piece(q)[0]
    if piece >= 0:
        _, cos_in = table.classify(q, v, np.asarray([piece]))
        if cos_in[0] < -table.tol.grazing_tol:
            raise DegenerateStart("boundary start with outward velocity")
    hit = table.first_hit(q, v)
    if hit.trapped[0]:
        raise Trapped(table.l_max)
    return HitRecord(
        s_hit=float(hit.s[0]),
        z_hit=PhasePoint(hit.q[0], hit.v[0]),
        piece=int(hit.piece[0]),
        cos_in=float(hit.cos_in[0]),
        stratum=Stratum(StratumLabel(int(hit.label[0])), float(hit.cos_in[0])),
    )


def inward_normal(table, q):
    """g-unit inward normal at a boundary position."""
    q2 = np.atleast_2d(np.asarray(q, dtype=float))
    piece = table.active_piece(q2)[0]
    if piece < 0:
        raise NotOnBoundary("point is not within hit tolerance of the boundary")
    return table.pieces[piece].inward_normal(table.space, q2)[0]


def classify_boundary_point(table, z):
    """Morse stratum of a boundary phase point."""
    q = np.atleast_2d(z.q)
    piece = table.active_piece(q)[0]
    if piece < 0:
        raise NotOnBoundary("point is not within hit tolerance of the boundary")
    label, cos_in = table.classify(q, np.atleast_2d(z.v), np.asarray([piece]))
    return Stratum(StratumLabel(int(label[0])), float(cos_in[0]))
