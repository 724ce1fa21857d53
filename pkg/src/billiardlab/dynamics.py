"""Causality (scattering) map, reflection laws, billiard map, orbits.

The causality map sends an inward boundary phase point to the exit point of
its geodesic chord; tangent points on a convex outer wall are fixed points
by convention.  Composing with a boundary reflection involution gives the
billiard map.  Batch variants operate on arrays and back all Monte Carlo
drivers; the scalar API mirrors them one phase point at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStart, GrazingExit, Trapped
from .spaces import PhasePoint
from .tables import Stratum, StratumLabel

__all__ = [
    "ChordRecord", "ChordBatch", "OrbitRecord", "Termination",
    "Elastic", "Rescaled", "causality_map", "reflect", "billiard_map",
    "iterate_orbit", "trapping_probe", "causality_batch", "reflect_batch",
    "billiard_batch",
]

_IN = int(StratumLabel.TRANSVERSAL_IN)
_OUT = int(StratumLabel.TRANSVERSAL_OUT)
_CONVEX = int(StratumLabel.TANGENT_CONVEX)
_CONCAVE = int(StratumLabel.TANGENT_CONCAVE)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChordRecord:
    """One application of the causality map."""

    entry: PhasePoint
    exit: PhasePoint
    length: float
    entry_stratum: Stratum
    exit_stratum: Stratum
    degenerate: bool

    @property
    def grazing(self):
        return (not self.degenerate) and self.exit_stratum.label in (
            StratumLabel.TANGENT_CONVEX, StratumLabel.TANGENT_CONCAVE)


@dataclass(frozen=True)
class Termination:
    kind: str          # "completed" | "trapped" | "grazing"
    bounces: int


@dataclass(frozen=True)
class OrbitRecord:
    chords: tuple
    termination: Termination


@dataclass
class ChordBatch:
    """Vectorized chord records; invalid rows are flagged, not raised."""

    entry_q: np.ndarray
    entry_v: np.ndarray
    exit_q: np.ndarray
    exit_v: np.ndarray
    length: np.ndarray
    entry_label: np.ndarray
    exit_label: np.ndarray
    entry_cos: np.ndarray
    exit_cos: np.ndarray
    entry_piece: np.ndarray
    exit_piece: np.ndarray
    degenerate: np.ndarray
    trapped: np.ndarray

    @property
    def grazing(self):
        tangent = (self.exit_label == _CONVEX) | (self.exit_label == _CONCAVE)
        return tangent & ~self.degenerate & ~self.trapped

    @property
    def ok(self):
        """Rows with a clean transversal chord."""
        return ~self.trapped & ~self.degenerate & ~self.grazing

    def __len__(self):
        return self.length.shape[0]


# ---------------------------------------------------------------------------
# Reflection laws
# ---------------------------------------------------------------------------


class Elastic:
    """Orthogonal reflection of the velocity in the boundary hyperplane."""

    kind = "elastic"

    def __repr__(self):
        return "Elastic()"


class Rescaled:
    """Reflection through the unit sphere of a stretched boundary metric.

    The boundary metric adds a scalar stretch along a fixed chart axis:
    gt(u, w) = g(u, w) + (stretch^2 - 1) g(u, a) g(w, a) with a the
    g-normalized axis.  The induced map projects radially to the gt-sphere,
    reflects gt-elastically in the boundary hyperplane, and projects back;
    it is an involution for every stretch and reduces to the elastic law
    when stretch = 1.  `per_piece` optionally overrides (stretch, axis) on
    individual boundary pieces.
    """

    kind = "rescaled"

    def __init__(self, stretch=1.0, axis=(1.0, 0.0), per_piece=None):
        if stretch <= 0:
            raise ValueError("stretch must be positive")
        self.stretch = float(stretch)
        self.axis = np.asarray(axis, dtype=float)
        self.per_piece = None
        if per_piece:
            self.per_piece = {int(k): (float(s), np.asarray(a, dtype=float))
                              for k, (s, a) in per_piece.items()}
            if any(s <= 0 for s, _ in self.per_piece.values()):
                raise ValueError("stretch must be positive")

    def params_for(self, piece):
        if self.per_piece and piece in self.per_piece:
            return self.per_piece[piece]
        return self.stretch, self.axis

    def __repr__(self):
        return f"Rescaled(stretch={self.stretch}, axis={self.axis.tolist()})"


def reflect_batch(law, table, q, v, piece=None):
    """Map outgoing boundary velocities to incoming ones."""
    space = table.space
    q = np.atleast_2d(q)
    v = np.atleast_2d(v)
    if piece is None:
        piece = table.active_piece(q)
    n = table.inward_normal_at(q, piece)
    if isinstance(law, Elastic):
        out = v - 2.0 * space.metric_dot(q, v, n)[:, None] * n
        return space.unit(q, out)
    if not isinstance(law, Rescaled):
        raise TypeError(f"unknown reflection law {law!r}")
    frame = space.tangent_frame(q, n)                    # (N, m, cd)
    basis = np.concatenate([n[:, None, :], frame], axis=1)  # (N, dim, cd)
    coords = np.stack([space.metric_dot(q, v, basis[:, j]) for j in range(basis.shape[1])], axis=1)
    axis = np.broadcast_to(law.axis, q.shape).astype(float).copy()
    stretch = np.full(q.shape[0], law.stretch)
    if law.per_piece:
        piece = np.atleast_1d(piece)
        for k, (s_k, a_k) in law.per_piece.items():
            mask = piece == k
            if np.any(mask):
                stretch[mask] = s_k
                axis[mask] = a_k
    if space.kind == "sphere":
        axis = axis - np.sum(axis * q, axis=1, keepdims=True) * q
    alpha = np.stack([space.metric_dot(q, axis, basis[:, j]) for j in range(basis.shape[1])], axis=1)
    neff = np.linalg.norm(alpha, axis=1)
    good = neff > 1e-12
    alpha[good] /= neff[good, None]
    c = (stretch ** 2 - 1.0)[:, None]
    # gt-orthogonal direction to the boundary hyperplane (Sherman-Morrison)
    m = -(c / (1.0 + c)) * alpha[:, 0:1] * alpha
    m[:, 0] += 1.0
    y = coords / np.sqrt(1.0 + c[:, 0] * np.sum(alpha * coords, axis=1) ** 2)[:, None]
    beta = y[:, 0] / m[:, 0]
    z = y - 2.0 * beta[:, None] * m
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    elastic = coords.copy()
    elastic[:, 0] = -elastic[:, 0]
    z = np.where(good[:, None], z, elastic)
    return np.einsum("nj,njd->nd", z, basis)


def reflect(law, table, z):
    """Scalar reflection: outgoing or tangent phase point to incoming one."""
    v = reflect_batch(law, table, z.q[None, :], z.v[None, :])[0]
    return PhasePoint(z.q, v)


# ---------------------------------------------------------------------------
# Causality and billiard maps
# ---------------------------------------------------------------------------


def causality_batch(table, q, v):
    """Vectorized causality map on inward boundary phase points."""
    q = np.atleast_2d(q)
    v = np.atleast_2d(v)
    n = q.shape[0]
    entry_piece = table.active_piece(q)
    entry_label, entry_cos = table.classify(q, v, entry_piece)
    if np.any(entry_label == _OUT):
        raise DegenerateStart("causality map applied to an outward phase point")
    degenerate = entry_label == _CONVEX
    exit_q, exit_v = q.copy(), v.copy()
    length = np.zeros(n)
    exit_label = entry_label.copy()
    exit_cos = entry_cos.copy()
    exit_piece = entry_piece.copy()
    trapped = np.zeros(n, dtype=bool)
    trace = ~degenerate
    if np.any(trace):
        hit = table.first_hit(q[trace], v[trace])
        idx = np.flatnonzero(trace)
        trapped[idx] = hit.trapped
        good = idx[~hit.trapped]
        sel = ~hit.trapped
        exit_q[good] = hit.q[sel]
        exit_v[good] = hit.v[sel]
        length[good] = hit.s[sel]
        exit_label[good] = hit.label[sel]
        exit_cos[good] = hit.cos_in[sel]
        exit_piece[good] = hit.piece[sel]
    return ChordBatch(entry_q=q, entry_v=v, exit_q=exit_q, exit_v=exit_v,
                      length=length, entry_label=entry_label, exit_label=exit_label,
                      entry_cos=entry_cos, exit_cos=exit_cos,
                      entry_piece=entry_piece, exit_piece=exit_piece,
                      degenerate=degenerate, trapped=trapped)


def _record_from_batch(batch, i):
    return ChordRecord(
        entry=PhasePoint(batch.entry_q[i], batch.entry_v[i]),
        exit=PhasePoint(batch.exit_q[i], batch.exit_v[i]),
        length=float(batch.length[i]),
        entry_stratum=Stratum(StratumLabel(int(batch.entry_label[i])), float(batch.entry_cos[i])),
        exit_stratum=Stratum(StratumLabel(int(batch.exit_label[i])), float(batch.exit_cos[i])),
        degenerate=bool(batch.degenerate[i]),
    )


def causality_map(table, z, raise_grazing=False):
    """First return of the geodesic through z to the boundary."""
    batch = causality_batch(table, z.q[None, :], z.v[None, :])
    if batch.trapped[0]:
        raise Trapped(table.l_max)
    record = _record_from_batch(batch, 0)
    if raise_grazing and record.grazing:
        raise GrazingExit("chord exits inside the grazing band")
    return record


def billiard_batch(table, law, q, v):
    """One billiard step: chords plus reflected entries for clean rows."""
    batch = causality_batch(table, q, v)
    next_q = batch.exit_q.copy()
    next_v = batch.exit_v.copy()
    ok = batch.ok
    if np.any(ok):
        next_v[ok] = reflect_batch(law, table, batch.exit_q[ok], batch.exit_v[ok],
                                   piece=batch.exit_piece[ok])
    return batch, next_q, next_v


def billiard_map(table, law, z):
    """Scalar billiard map: returns (next entry phase point, chord length)."""
    record = causality_map(table, z)
    if record.degenerate:
        return PhasePoint(record.exit.q, record.exit.v), 0.0
    z_next = reflect(law, table, record.exit)
    return z_next, record.length


def iterate_orbit(table, law, z0, k_max):
    """Iterate the billiard map, recording chords until termination."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    chords = []
    z = z0
    for _ in range(k_max):
        try:
            record = causality_map(table, z)
        except Trapped:
            return OrbitRecord(tuple(chords), Termination("trapped", len(chords)))
        chords.append(record)
        if record.grazing:
            return OrbitRecord(tuple(chords), Termination("grazing", len(chords)))
        if record.degenerate:
            z = record.exit
        else:
            z = reflect(law, table, record.exit)
    return OrbitRecord(tuple(chords), Termination("completed", len(chords)))


# ---------------------------------------------------------------------------
# Trapping probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrappingProbe:
    escape_fraction: float
    max_chord: float
    grazing_fraction: float
    max_chord_progression: tuple
    gd_stabilized: bool
    sample_count: int
    l_max: float


def trapping_probe(table, sample_count, l_max=None, seed=0):
    """Monte Carlo escape statistics; max_chord is a lower bound for gd(M,g).

    Tables with unbounded free paths have power tails in the chord length,
    so some chords land far beyond the bulk of the distribution.  The probe
    flags the longest-chord estimate as unstabilized when any chord exceeds
    twice the 99.5% quantile: for a bounded geodesic diameter the top
    chords cluster below it, while a power tail always populates it.
    """
    from .measure import sample_mu_theta

    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    work = table if l_max is None else table.with_l_max(l_max)
    samples = sample_mu_theta(table, sample_count, seed)
    batch = causality_batch(work, samples.q, samples.v)
    escaped = ~batch.trapped
    lengths = batch.length[escaped]
    quarters = np.array_split(batch.length * np.where(escaped, 1.0, np.nan), 4)
    progression = []
    running = 0.0
    for part in quarters:
        vals = part[np.isfinite(part)]
        if vals.size:
            running = max(running, float(np.max(vals)))
        progression.append(running)
    if lengths.size < 200:
        stabilized = True  # not enough data to judge the tail
    else:
        stabilized = bool(np.all(lengths <= 2.0 * np.quantile(lengths, 0.995)))
    stabilized = stabilized and bool(np.all(escaped))
    return TrappingProbe(
        escape_fraction=float(np.mean(escaped)),
        max_chord=float(np.max(lengths)) if lengths.size else 0.0,
        grazing_fraction=float(np.mean(batch.grazing)),
        max_chord_progression=tuple(progression),
        gd_stabilized=stabilized,
        sample_count=sample_count,
        l_max=work.l_max,
    )
