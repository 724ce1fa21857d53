"""Invariant boundary measure, its sampler, volumes, preservation tests.

The boundary measure has density cos(angle to the inward normal) against
the product of boundary area and direction measure, restricted to inward
hemispheres.  Its total mass is the volume of the trajectory space,
vol(B^{n-1}) * vol(boundary).  Sampling is exact: boundary points come from
per-piece area samplers and directions from lifting a uniform point of the
equatorial unit ball to the hemisphere.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSet, NotOnBoundary
from .spaces import FlatTorus, HyperbolicBall, Sphere

__all__ = [
    "Estimate", "WeightedSampleSet", "PhaseBox", "mu_theta_density",
    "sample_mu_theta", "trajectory_space_volume", "domain_volumes",
    "measure_preservation_test", "unit_ball_volume", "unit_sphere_volume",
    "random_phase_boxes", "boundary_rng",
]


def unit_ball_volume(k):
    """Euclidean volume of the unit ball B^k (B^0 is a point of volume 1)."""
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


def unit_sphere_volume(k):
    """Euclidean k-volume of the unit sphere S^k in R^{k+1}."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


# ---------------------------------------------------------------------------
# Mergeable Monte Carlo estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    """Mean, spread, and sample count of a Monte Carlo statistic.

    Internally carries the sum of squared deviations (m2), so merging two
    estimates pools mean and variance exactly (Chan's parallel update).
    """

    mean: float
    count: int
    m2: float = 0.0

    @property
    def stderr(self):
        if self.count < 2:
            return float("inf") if self.count else float("nan")
        return math.sqrt(self.m2 / (self.count - 1) / self.count)

    @property
    def variance(self):
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")

    @staticmethod
    def from_samples(x):
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return Estimate(mean=float("nan"), count=0, m2=0.0)
        mean = float(np.mean(x))
        return Estimate(mean=mean, count=int(x.size), m2=float(np.sum((x - mean) ** 2)))

    def merge(self, other):
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = (self.count * self.mean + other.count * other.mean) / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return Estimate(mean=mean, count=n, m2=m2)

    def scaled(self, factor):
        """Estimate of factor * X."""
        return Estimate(mean=self.mean * factor, count=self.count, m2=self.m2 * factor * factor)

    @staticmethod
    def merge_all(estimates):
        out = Estimate(mean=0.0, count=0, m2=0.0)
        for e in estimates:
            out = out.merge(e)
        return out


# ---------------------------------------------------------------------------
# Sampler
# ---------------------------------------------------------------------------


def boundary_rng(seed, stream=0):
    """Counter-based generator for (seed, stream) pairs; streams are disjoint."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


@dataclass
class WeightedSampleSet:
    """Entry phase points distributed according to the boundary measure."""

    q: np.ndarray
    v: np.ndarray
    piece: np.ndarray
    cos_in: np.ndarray
    normalization: float     # total mass = trajectory-space volume
    seed: int
    stream: int
    resampled_fraction: float

    def __len__(self):
        return self.q.shape[0]

    def estimate(self, values):
        """Estimate of the integral of f against the measure (mass-scaled mean)."""
        return Estimate.from_samples(values).scaled(self.normalization)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            d = self.q.shape[1]
            writer.writerow([f"q{i}" for i in range(d)] + [f"v{i}" for i in range(d)]
                            + ["piece", "weight"])
            w = self.normalization / len(self)
            for i in range(len(self)):
                writer.writerow(list(self.q[i]) + list(self.v[i]) + [int(self.piece[i]), w])


def _lift_directions(space, q, normals, rng, gtol):
    """Cosine-distributed inward unit directions at boundary points."""
    n_pts = q.shape[0]
    dim = space.dim
    frame = space.tangent_frame(q, normals)         # (N, dim-1, cd)
    out = np.empty_like(normals)
    todo = np.arange(n_pts)
    resampled = 0
    while todo.size:
        m = todo.size
        if dim == 2:
            u = rng.uniform(-1.0, 1.0, (m, 1))
        else:
            r = np.sqrt(rng.uniform(0.0, 1.0, m))
            phi = rng.uniform(0.0, 2.0 * np.pi, m)
            u = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
        u2 = np.sum(u * u, axis=1)
        cos = np.sqrt(np.maximum(1.0 - u2, 0.0))
        vec = cos[:, None] * normals[todo]
        for j in range(dim - 1):
            vec = vec + u[:, j:j + 1] * frame[todo, j]
        ok = cos > gtol
        out[todo[ok]] = vec[ok]
        resampled += int(np.sum(~ok))
        todo = todo[~ok]
    return out, resampled


def sample_mu_theta(table, count, seed, stream=0):
    """Draw `count` inward boundary phase points from the cosine measure."""
    if count < 1:
        raise ValueError("count must be at least 1")
    space = table.space
    rng = boundary_rng(seed, stream)
    weights = np.array([p.boundary_volume(space) for p in table.pieces])
    probs = weights / np.sum(weights)
    piece_idx = rng.choice(len(table.pieces), size=count, p=probs)
    q = np.empty((count, space.chart_dim))
    normals = np.empty_like(q)
    for k, piece in enumerate(table.pieces):
        mask = piece_idx == k
        m = int(np.sum(mask))
        if m == 0:
            continue
        pts = piece.sample_boundary(space, rng, m)
        q[mask] = pts
        normals[mask] = piece.inward_normal(space, pts)
    v, resampled = _lift_directions(space, q, normals, rng, table.tol.grazing_tol)
    cos_in = space.metric_dot(q, v, normals)
    return WeightedSampleSet(
        q=q, v=v, piece=piece_idx.astype(np.int64), cos_in=cos_in,
        normalization=trajectory_space_volume(table), seed=seed, stream=stream,
        resampled_fraction=resampled / count,
    )


# ---------------------------------------------------------------------------
# Densities and volumes
# ---------------------------------------------------------------------------


def mu_theta_density_batch(table, q, v):
    piece = table.active_piece(np.atleast_2d(q))
    if np.any(piece < 0):
        raise NotOnBoundary("density requested off the boundary")
    n = table.inward_normal_at(np.atleast_2d(q), piece)
    return table.space.metric_dot(np.atleast_2d(q), np.atleast_2d(v), n)


def mu_theta_density(table, z):
    """Cosine of the angle between v and the inward normal at q."""
    return float(mu_theta_density_batch(table, z.q[None, :], z.v[None, :])[0])


def trajectory_space_volume(table):
    """vol(B^{n-1}) times the g-volume of the boundary."""
    space = table.space
    vol_dm = sum(p.boundary_volume(space) for p in table.pieces)
    return unit_ball_volume(space.dim - 1) * vol_dm


@dataclass(frozen=True)
class DomainVolumes:
    vol_m: float
    vol_dm: float
    stderr_m: float = 0.0   # nonzero only for the Monte Carlo fallback


def _volume_mc(table, count=200_000, seed=17):
    space = table.space
    rng = boundary_rng(seed, 0)
    if isinstance(space, FlatTorus):
        q = rng.uniform(0.0, 1.0, (count, space.dim)) * space.periods
        vals = table.inside(q, tol=0.0).astype(float) * float(np.prod(space.periods))
    elif isinstance(space, Sphere):
        q = rng.standard_normal((count, space.chart_dim))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        total = unit_sphere_volume(space.dim)
        vals = table.inside(q, tol=0.0).astype(float) * total
    else:
        lo, hi = table._chart_box()
        box = float(np.prod(hi - lo))
        q = rng.uniform(0.0, 1.0, (count, space.dim)) * (hi - lo) + lo
        w = np.ones(count)
        if isinstance(space, HyperbolicBall):
            inside_chart = np.sum(q * q, axis=1) < 1.0
            w = np.where(inside_chart, space.conformal_factor(q) ** space.dim, 0.0)
        vals = table.inside(q, tol=0.0).astype(float) * w * box
    est = Estimate.from_samples(vals)
    return est.mean, est.stderr


def domain_volumes(table, mc_count=200_000, seed=17):
    """g-volumes of the domain and its boundary.

    Analytic whenever every piece reports its enclosed volume (balls, caps,
    Fourier walls, torus cells); otherwise a chart rejection Monte Carlo
    with reported standard error.
    """
    space = table.space
    vol_dm = float(sum(p.boundary_volume(space) for p in table.pieces))
    try:
        if isinstance(space, FlatTorus):
            vol = float(np.prod(space.periods))
            for p in table.pieces:
                vol -= p.domain_volume(space)
        else:
            vol = 0.0
            for p in table.pieces:
                if p.side == "outer":
                    vol += p.domain_volume(space)
                else:
                    vol -= p.domain_volume(space)
        return DomainVolumes(vol_m=vol, vol_dm=vol_dm)
    except (AttributeError, NotImplementedError):
        vol, err = _volume_mc(table, mc_count, seed)
        return DomainVolumes(vol_m=vol, vol_dm=vol_dm, stderr_m=err)


# ---------------------------------------------------------------------------
# Phase-space boxes and measure preservation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseBox:
    """Product box in (boundary parameter) x (direction parameter) coordinates.

    boundary: angle interval on the piece, taken modulo 2 pi (lo > hi wraps).
    incidence: signed-angle interval, n = 2 only.  cos_range: interval of
    the incidence cosine, any dimension.  Unset constraints are ignored.
    """

    piece: int | None = None
    boundary: tuple | None = None
    incidence: tuple | None = None
    cos_range: tuple | None = None

    def contains(self, table, q, v, piece_idx=None):
        space = table.space
        q = np.atleast_2d(q)
        v = np.atleast_2d(v)
        if piece_idx is None:
            piece_idx = table.active_piece(q)
        piece_idx = np.atleast_1d(piece_idx)
        mask = np.ones(q.shape[0], dtype=bool)
        if self.piece is not None:
            mask &= piece_idx == self.piece
        if not np.any(mask):
            return mask
        if self.boundary is not None:
            ang = np.full(q.shape[0], np.nan)
            for k, piece in enumerate(table.pieces):
                sel = mask & (piece_idx == k)
                if np.any(sel):
                    ang[sel] = piece.boundary_param(space, q[sel])
            lo, hi = self.boundary
            lo, hi = np.mod(lo, 2.0 * np.pi), np.mod(hi, 2.0 * np.pi)
            if lo <= hi:
                mask &= (ang >= lo) & (ang < hi)
            else:
                mask &= (ang >= lo) | (ang < hi)
        if self.incidence is not None or self.cos_range is not None:
            normals = table.inward_normal_at(q, np.maximum(piece_idx, 0))
            cos_in = space.metric_dot(q, v, normals)
            if self.cos_range is not None:
                lo, hi = self.cos_range
                mask &= (cos_in >= lo) & (cos_in < hi)
            if self.incidence is not None:
                if space.dim != 2:
                    raise ValueError("signed incidence boxes need n = 2")
                frame = space.tangent_frame(q, normals)[:, 0]
                sin_in = space.metric_dot(q, v, frame)
                theta = np.arctan2(sin_in, cos_in)
                lo, hi = self.incidence
                mask &= (theta >= lo) & (theta < hi)
        return mask


def random_phase_boxes(table, count, rng):
    """Random nondegenerate boxes for preservation testing (n = 2)."""
    boxes = []
    for _ in range(count):
        piece = int(rng.integers(0, len(table.pieces)))
        a = rng.uniform(0.0, 2.0 * np.pi)
        width = rng.uniform(0.4, 1.6)
        t0 = rng.uniform(-1.2, 0.7)
        tw = rng.uniform(0.25, 0.5)
        boxes.append(PhaseBox(piece=piece, boundary=(a, np.mod(a + width, 2 * np.pi)),
                              incidence=(t0, t0 + tw)))
    return boxes


@dataclass(frozen=True)
class PreservationResult:
    box: PhaseBox
    mu_k: Estimate
    mu_preimage_k: Estimate
    z_score: float
    excluded_fraction: float


def measure_preservation_test(table, law, boxes, count, seed):
    """Compare the measure of each box with the measure of its preimage.

    Both are estimated on the same stream: mu(K) from indicator means at
    entries z, mu(B^{-1}K) from indicators at B(z).  The paired z-score of
    the difference tests the pushforward invariance.
    """
    from .dynamics import billiard_batch

    samples = sample_mu_theta(table, count, seed)
    batch, next_q, next_v = billiard_batch(table, law, samples.q, samples.v)
    valid = ~batch.trapped & ~batch.grazing
    excluded = 1.0 - float(np.mean(valid))
    mass = samples.normalization
    q1, v1, p1 = samples.q[valid], samples.v[valid], samples.piece[valid]
    q2, v2 = next_q[valid], next_v[valid]
    p2 = np.where(batch.degenerate[valid], p1, batch.exit_piece[valid])
    results = []
    for box in boxes:
        in_now = box.contains(table, q1, v1, p1).astype(float)
        in_next = box.contains(table, q2, v2, p2).astype(float)
        if not np.any(in_now):
            raise DegenerateSet(f"box {box} has empirical measure zero")
        diff = Estimate.from_samples(in_now - in_next)
        z = 0.0 if diff.stderr == 0.0 else diff.mean / diff.stderr
        results.append(PreservationResult(
            box=box,
            mu_k=Estimate.from_samples(in_now).scaled(mass),
            mu_preimage_k=Estimate.from_samples(in_next).scaled(mass),
            z_score=float(z),
            excluded_fraction=excluded,
        ))
    return results
