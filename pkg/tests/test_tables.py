import numpy as np
import pytest

from billiardlab.errors import ConfigError, DegenerateStart, NotOnBoundary, Trapped
from billiardlab.spaces import Euclidean, FlatTorus, HyperbolicBall, PhasePoint
from billiardlab.tables import (Ball, HalfSpaceOrCap, RadialFourierCurve, StratumLabel,
                                Table, classify_boundary_point, first_boundary_hit,
                                inward_normal)


def test_disk_diameter_hit(disk):
    rec = first_boundary_hit(disk, PhasePoint([1.0, 0.0], [-1.0, 0.0]))
    assert abs(rec.s_hit - 2.0) < 1e-12
    assert np.allclose(rec.q_hit, [-1.0, 0.0], atol=1e-12)
    assert abs(rec.cos_in - (-1.0)) < 1e-12
    assert rec.stratum.label == StratumLabel.TRANSVERSAL_OUT


@pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, 1.4])
def test_disk_chord_length_oracle(disk, theta):
    # circle geometry: a chord entering at angle theta to the normal has
    # length 2 cos(theta)
    n = np.array([-1.0, 0.0])
    t = np.array([0.0, 1.0])
    v = np.cos(theta) * n + np.sin(theta) * t
    rec = first_boundary_hit(disk, PhasePoint([1.0, 0.0], v))
    assert abs(rec.s_hit - 2.0 * np.cos(theta)) < 1e-12


def test_interior_point_not_on_boundary(disk):
    assert disk.active_piece(np.array([[0.2, 0.1]]))[0] == -1
    with pytest.raises(NotOnBoundary):
        inward_normal(disk, [0.2, 0.1])


def test_degenerate_start_raises(disk):
    with pytest.raises(DegenerateStart):
        first_boundary_hit(disk, PhasePoint([1.0, 0.0], [1.0, 0.0]))


def brute_force_first_crossing(table, q, v, s_max, samples=400_000):
    """Oracle: dense scan of the max-gauge sign along the ray."""
    s = np.linspace(1e-9, s_max, samples)
    pts, _ = table.space.flow(np.tile(q, (samples, 1)), np.tile(v, (samples, 1)), s)
    g = table.max_gauge(pts)
    crossing = np.flatnonzero((g[:-1] <= 0) & (g[1:] > 0))
    assert crossing.size, "oracle found no crossing"
    return 0.5 * (s[crossing[0]] + s[crossing[0] + 1])


def test_torus_image_hit_against_dense_scan(one_ball):
    q = np.array([0.75, 0.5])  # east point of the obstacle
    for ang in (0.3, 1.1, 2.0, -2.4):
        v = np.array([np.cos(ang), np.sin(ang)])
        st = classify_boundary_point(one_ball, PhasePoint(q, v))
        if st.label != StratumLabel.TRANSVERSAL_IN:
            continue
        rec = first_boundary_hit(one_ball, PhasePoint(q, v))
        oracle = brute_force_first_crossing(one_ball, q, v, rec.s_hit + 0.5)
        assert abs(rec.s_hit - oracle) < 1e-4  # oracle is grid-limited
        # exact: the hit point lies on the obstacle circle
        assert abs(one_ball.max_gauge(rec.q_hit[None])[0]) < 1e-10


def test_torus_interior_start_rejected_for_normal(one_ball):
    with pytest.raises(NotOnBoundary):
        inward_normal(one_ball, [0.0, 0.0])


def test_disk_normal_and_obstacle_normal(disk, one_ball):
    n = inward_normal(disk, [1.0, 0.0])
    assert np.allclose(n, [-1.0, 0.0], atol=1e-14)
    n = inward_normal(one_ball, [0.75, 0.5])  # obstacle boundary east point
    assert np.allclose(n, [1.0, 0.0], atol=1e-12)  # points away from the ball


def test_hyperbolic_normal_against_fd_gradient(hyp_disk):
    space = hyp_disk.space
    qb = np.array([np.tanh(0.5), 0.0])
    n = inward_normal(hyp_disk, qb)
    # oracle: chart gradient of the distance gauge by finite differences,
    # converted to a g-unit vector (conformal metric keeps the direction)
    piece = hyp_disk.pieces[0]
    h = 1e-7
    grad = np.array([
        (piece.gauge(space, (qb + [h, 0])[None])[0] - piece.gauge(space, (qb - [h, 0])[None])[0]),
        (piece.gauge(space, (qb + [0, h])[None])[0] - piece.gauge(space, (qb - [0, h])[None])[0]),
    ]) / (2 * h)
    expected = space.unit(qb[None], -grad[None])[0]
    assert np.allclose(n, expected, atol=1e-7)
    assert abs(space.metric_dot(qb[None], n[None], n[None])[0] - 1.0) < 1e-12
    # radial direction after g-normalization
    assert np.allclose(n / np.linalg.norm(n), [-1.0, 0.0], atol=1e-12)


def test_classification_trivials(disk):
    n = np.array([-1.0, 0.0])
    t = np.array([0.0, 1.0])
    v = 0.5 * n + np.sqrt(1 - 0.25) * t
    st = classify_boundary_point(disk, PhasePoint([1.0, 0.0], v))
    assert st.label == StratumLabel.TRANSVERSAL_IN
    assert abs(st.cos_in - 0.5) < 1e-12
    st = classify_boundary_point(disk, PhasePoint([1.0, 0.0], [0.0, 1.0]))
    assert st.label == StratumLabel.TANGENT_CONVEX


def test_obstacle_tangency_is_discontinuity(one_ball):
    # tangency on a dispersing obstacle separates chords that clip the ball
    # from chords that pass it: the exit point jumps under a tiny turn of v
    st = classify_boundary_point(one_ball, PhasePoint([0.75, 0.5], [0.0, 1.0]))
    assert st.label == StratumLabel.TANGENT_CONCAVE
    # aim from the east point of the obstacle at the tangent of its periodic
    # image one period over; a tiny turn across the tangent flips between
    # clipping the image and flying past it
    q0 = np.array([0.75, 0.5])
    base = np.arcsin(0.25 / 0.75)
    delta = 2e-3
    hits = []
    for ang in (base - delta, base + delta):
        v = np.array([np.cos(ang), np.sin(ang)])
        hit = one_ball.first_hit(q0[None], v[None])
        hits.append(hit.q[0])
    jump = one_ball.space.chart_distance(hits[0], hits[1])
    assert jump > 0.05  # grazing side lands far from the clipping side


def test_stratum_stable_under_small_turns(disk):
    rng = np.random.default_rng(3)
    for _ in range(32):
        ang = rng.uniform(0, 2 * np.pi)
        q = np.array([np.cos(ang), np.sin(ang)])
        n = -q
        t = np.array([-n[1], n[0]])
        theta = rng.uniform(-1.4, 1.4)
        v = np.cos(theta) * n + np.sin(theta) * t
        st = classify_boundary_point(disk, PhasePoint(q, v))
        assert st.label == StratumLabel.TRANSVERSAL_IN
        margin = (st.cos_in - disk.tol.grazing_tol) / 2.0
        turn = 0.9 * margin  # cosine is 1-Lipschitz in the angle
        v2 = np.cos(theta + turn) * n + np.sin(theta + turn) * t
        st2 = classify_boundary_point(disk, PhasePoint(q, v2))
        assert st2.label == StratumLabel.TRANSVERSAL_IN


def test_hit_minimality_gauge_sign(disk, one_ball, hyp_disk):
    rng = np.random.default_rng(4)
    for table in (disk, one_ball, hyp_disk):
        from billiardlab.measure import sample_mu_theta

        s = sample_mu_theta(table, 8, seed=21)
        hit = table.first_hit(s.q, s.v)
        for i in range(len(s.q)):
            span = np.linspace(table.tol.hit_tol, hit.s[i] - table.tol.hit_tol, 1000)
            pts, _ = table.space.flow(np.tile(s.q[i], (1000, 1)), np.tile(s.v[i], (1000, 1)), span)
            assert np.all(table.max_gauge(pts) <= table.tol.hit_tol)


def test_trapped_when_cap_too_small(one_ball):
    short = one_ball.with_l_max(0.05)
    with pytest.raises(Trapped):
        first_boundary_hit(short, PhasePoint([0.75, 0.5], [1.0, 0.0]))


# -- Fourier walls ----------------------------------------------------------


def test_fourier_hit_against_dense_scan(ellipse):
    q = ellipse.pieces[0].point_at_param(ellipse.space, np.array([0.0]))[0]
    n = inward_normal(ellipse, q)
    t = np.array([-n[1], n[0]])
    for theta in (0.0, 0.6, -1.1):
        v = np.cos(theta) * n + np.sin(theta) * t
        rec = first_boundary_hit(ellipse, PhasePoint(q, v))
        oracle = brute_force_first_crossing(ellipse, q, v, rec.s_hit + 0.3)
        assert abs(rec.s_hit - oracle) < 1e-4
        assert abs(ellipse.max_gauge(rec.q_hit[None])[0]) < 1e-9


def test_fourier_normal_matches_fd(ellipse):
    piece = ellipse.pieces[0]
    space = ellipse.space
    for alpha in (0.3, 1.2, 2.5, 4.0):
        q = piece.point_at_param(space, np.array([alpha]))
        n = piece.inward_normal(space, q)[0]
        h = 1e-7
        grad = np.array([
            piece.gauge(space, q + [[h, 0]])[0] - piece.gauge(space, q - [[h, 0]])[0],
            piece.gauge(space, q + [[0, h]])[0] - piece.gauge(space, q - [[0, h]])[0],
        ]) / (2 * h)
        assert np.allclose(n, -grad / np.linalg.norm(grad), atol=1e-6)


def test_fourier_perimeter_positive_radius():
    with pytest.raises(ConfigError):
        RadialFourierCurve(0.1, cos_coeffs=(0.5,))


# -- half spaces and caps -----------------------------------------------------


def test_euclidean_halfspace_gauge_and_hit():
    piece = HalfSpaceOrCap(side="outer", normal=(0.0, 1.0), offset=1.0)
    space = Euclidean(2)
    assert piece.gauge(space, np.array([[0.0, 0.5]]))[0] < 0
    assert piece.gauge(space, np.array([[0.0, 1.5]]))[0] > 0
    s = piece.ray_hit(space, np.array([[0.0, 0.0]]), np.array([[0.0, 1.0]]), 1e-10, 10.0)
    assert abs(s[0] - 1.0) < 1e-12
    n = piece.inward_normal(space, np.array([[3.0, 1.0]]))[0]
    assert np.allclose(n, [0.0, -1.0])


def test_sphere_cap_piece_matches_ball(cap):
    # the cap preset is a geodesic ball on the sphere; a cap posed as
    # half-space-or-cap must agree with it
    space = cap.space
    piece = HalfSpaceOrCap(side="outer", pole=(0.0, 0.0, 1.0), angle=np.pi / 4)
    pts = cap.pieces[0].sample_boundary(space, np.random.default_rng(0), 64)
    assert np.max(np.abs(piece.gauge(space, pts))) < 1e-12


def test_hyperbolic_halfspace_hit():
    space = HyperbolicBall(2)
    # geodesic wall through the origin orthogonal to the x-axis
    piece = HalfSpaceOrCap(side="outer", minkowski_normal=(0.0, 1.0, 0.0))
    q = np.array([[-0.3, 0.0]])
    v = space.unit(q, np.array([[1.0, 0.0]]))
    s = piece.ray_hit(space, q, v, 1e-10, 10.0)
    assert abs(s[0] - space.distance(q[0], np.zeros(2))) < 1e-12
    n = piece.inward_normal(space, np.array([[0.0, 0.4]]))[0]
    assert n[0] < 0 and abs(n[1]) < 1e-12  # points to the negative-x side


# -- construction checks -------------------------------------------------------


def test_overlapping_obstacles_rejected():
    with pytest.raises(ConfigError):
        Table(FlatTorus((1.0, 1.0)),
              [Ball((0.3, 0.3), 0.2, side="obstacle"),
               Ball((0.5, 0.5), 0.2, side="obstacle")])


def test_obstacle_overlapping_own_images_rejected():
    with pytest.raises(ConfigError):
        Table(FlatTorus((1.0, 1.0)), [Ball((0.5, 0.5), 0.55, side="obstacle")])


def test_obstacle_touching_outer_wall_rejected():
    with pytest.raises(ConfigError):
        Table(Euclidean(2), [Ball((0.0, 0.0), 1.0, side="outer"),
                             Ball((0.8, 0.0), 0.4, side="obstacle")])


def test_torus_needs_obstacles():
    with pytest.raises(ConfigError):
        Table(FlatTorus((1.0, 1.0)), [Ball((0.5, 0.5), 0.2, side="outer")])


def test_obstacle_inside_disk_accepted():
    table = Table(Euclidean(2), [Ball((0.0, 0.0), 1.0, side="outer"),
                                 Ball((0.3, 0.0), 0.2, side="obstacle")])
    assert table.inside(np.array([[0.8, 0.0]]))[0]
    assert not table.inside(np.array([[0.3, 0.05]]))[0]
