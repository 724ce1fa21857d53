"""Acceptance suite: every criterion at its stated scale and tolerance.

Each test prints one PASS/FAIL line (run pytest -s to see them inline).
The drivers are the same production entry points the CLI uses; oracles are
closed forms or independent quadratures computed in the test body.
"""

import json
import time

import numpy as np

from billiardlab.dynamics import (Elastic, Rescaled, causality_batch,
                                  reflect_batch)
from billiardlab.ergodic import (ChordLength, mean_free_path, recurrence_test,
                                 space_average, time_average_many, inequality_report)
from billiardlab.holography import (conjugacy_residual, domain_reference_sample,
                                    generate_scattering_dataset, reconstruct_chords,
                                    rotation_map)
from billiardlab.lyapunov import (build_well_balanced_F, delta_F_batch,
                                  slice_area_curve, var_F_boundary)
from billiardlab.measure import (Estimate, PhaseBox, boundary_rng,
                                 measure_preservation_test, random_phase_boxes,
                                 sample_mu_theta, trajectory_space_volume)
from billiardlab.presets import (ball3, disk, hyperbolic_disk, spherical_cap,
                                 torus_one_ball, torus_two_balls)


def report(idx, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {idx:>2}: {status}  {detail}")
    assert ok, f"criterion {idx}: {detail}"


def timed(limit_s):
    """Record wall time and enforce the stated runtime budget."""
    start = time.time()

    def done():
        elapsed = time.time() - start
        assert elapsed < limit_s, f"runtime {elapsed:.1f}s exceeds {limit_s}s"
        return elapsed

    return done


def test_01_mean_free_path_disk():
    done = timed(60)
    rep = mean_free_path(disk(), count=1_000_000, seed=101)
    target = np.pi / 2
    gap = abs(rep.space.mean - target)
    ok = gap < 3 * rep.space.stderr and abs(rep.prediction - target) < 1e-12
    elapsed = done()
    report(1, ok, f"disk mean free path {rep.space.mean:.6f} vs pi/2 = {target:.6f} "
                  f"({gap / rep.space.stderr:.2f} sigma, {elapsed:.1f}s)")


def test_02_mean_free_path_ball3():
    done = timed(120)
    rep = mean_free_path(ball3(), count=1_000_000, seed=102)
    target = 4.0 / 3.0
    gap = abs(rep.space.mean - target)
    ok = gap < 3 * rep.space.stderr and abs(rep.prediction - target) < 1e-12
    elapsed = done()
    report(2, ok, f"ball (n=3) mean free path {rep.space.mean:.6f} vs 4/3 = {target:.6f} "
                  f"({gap / rep.space.stderr:.2f} sigma, {elapsed:.1f}s)")


def test_03_torus_eps_ball_example():
    done = timed(180)
    eps = 0.1
    table = torus_one_ball(eps)
    rep = mean_free_path(table, count=1_000_000, seed=103)
    target = np.pi * (1 - np.pi * eps ** 2) / (2 * np.pi * eps)
    rel = abs(rep.space.mean - target) / target
    capped = rep.space.trapped_fraction
    ok = (abs(rep.prediction - target) < 1e-12 and rel < 0.01 and capped < 1e-3)
    elapsed = done()
    report(3, ok, f"torus minus eps=0.1 ball: mc {rep.space.mean:.5f} vs {target:.5f} "
                  f"(rel {rel:.2%}), capped fraction {capped:.1e} reported, {elapsed:.1f}s")


def test_04_curved_space_mean_free_path():
    done = timed(360)
    rep_h = mean_free_path(hyperbolic_disk(1.0), count=1_000_000, seed=104)
    target_h = np.pi * np.tanh(0.5)
    gap_h = abs(rep_h.space.mean - target_h)
    rep_c = mean_free_path(spherical_cap(np.pi / 4), count=1_000_000, seed=105)
    target_c = np.pi * np.tan(np.pi / 8)
    gap_c = abs(rep_c.space.mean - target_c)
    ok = gap_h < 3 * rep_h.space.stderr and gap_c < 3 * rep_c.space.stderr
    elapsed = done()
    report(4, ok, f"hyperbolic disk {rep_h.space.mean:.6f} vs {target_h:.6f} "
                  f"({gap_h / rep_h.space.stderr:.2f} sigma); spherical cap "
                  f"{rep_c.space.mean:.6f} vs {target_c:.6f} "
                  f"({gap_c / rep_c.space.stderr:.2f} sigma); {elapsed:.1f}s")


def test_05_measure_preservation():
    done = timed(180)
    worst = 0.0
    for table, seed in ((disk(), 106), (torus_two_balls(), 107)):
        rng = boundary_rng(seed, 4242)
        boxes = random_phase_boxes(table, 20, rng)
        results = measure_preservation_test(table, Elastic(), boxes, 1_000_000, seed)
        worst = max(worst, max(abs(r.z_score) for r in results))
    ok = worst < 4.0
    elapsed = done()
    report(5, ok, f"pushforward invariance, 20 boxes on disk and two-ball table: "
                  f"max |z| = {worst:.2f} < 4 at N=1e6 ({elapsed:.1f}s)")


def test_06_birkhoff_agreement():
    done = timed(300)
    table = torus_two_balls()
    sa = space_average(table, ChordLength(), 300_000, seed=108)
    starts = sample_mu_theta(table, 10, seed=109)
    _, running, bounces, _ = time_average_many(
        table, Elastic(), ChordLength(), starts.q, starts.v, 100_000)
    finals = running[:, -1]
    gaps = np.abs(finals - sa.mean) / sa.mean
    agreeing = int(np.sum(gaps < 0.02))
    ok = agreeing >= 9 and np.all(bounces == 100_000)
    elapsed = done()
    report(6, ok, f"two-ball table: {agreeing}/10 starters within 2% of the space "
                  f"average after 1e5 bounces (worst gap {np.max(gaps):.2%}, {elapsed:.1f}s)")


def test_07_well_balanced_identity():
    done = timed(10)
    table = disk()
    f = build_well_balanced_F(table, seed=110)
    samples = sample_mu_theta(table, 10_000, seed=111)
    batch = causality_batch(table, samples.q, samples.v)
    err = np.max(np.abs(delta_F_batch(f, batch) - batch.length))
    ok = err < 1e-9
    elapsed = done()
    report(7, ok, f"max |Delta_F - chord length| = {err:.2e} < 1e-9 over 1e4 disk "
                  f"chords ({elapsed:.1f}s)")


def test_08_trajectory_space_volume():
    table = disk()
    closed = trajectory_space_volume(table)
    ok = abs(closed - 4 * np.pi) < 1e-12
    # direct quadrature of the cosine integral over inward directions
    theta = np.linspace(-np.pi / 2, np.pi / 2, 2_000_001)
    quad = np.trapezoid(np.cos(theta), theta) * 2 * np.pi
    ok &= abs(quad - closed) < 1e-9
    # sampling normalization: uniform directions reweighted by the cosine
    rng = boundary_rng(112, 0)
    n = 400_000
    ang = rng.uniform(0, 2 * np.pi, n)
    q = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    normals = -q
    tangents = np.stack([-normals[:, 1], normals[:, 0]], axis=1)
    inc = rng.uniform(-np.pi / 2, np.pi / 2, n)
    est = Estimate.from_samples(np.cos(inc) * np.pi * 2 * np.pi)
    ok &= abs(est.mean - closed) < 3 * est.stderr
    report(8, ok, f"disk trajectory-space volume: closed form {closed:.9f} = 4 pi, "
                  f"quadrature gap {abs(quad - closed):.1e}, sampling gap "
                  f"{abs(est.mean - closed) / est.stderr:.2f} sigma")


def test_09_slice_identity():
    done = timed(300)
    table = disk()
    f = build_well_balanced_F(table, seed=113)
    var = var_F_boundary(table, f, 50_000, seed=114)
    grid = np.linspace(var.f_min, var.f_max, 100)
    curve = slice_area_curve(table, f, grid, 100_000, seed=115)
    areas = np.array([e.mean for e in curve])
    integral = np.trapezoid(areas, grid)
    target = 2 * np.pi ** 2
    bound = 4 * np.pi
    rel = abs(integral - target) / target
    ok = rel < 0.02 and np.all(areas <= bound + 1e-9)
    elapsed = done()
    report(9, ok, f"disk slice identity: integral A(t) dt = {integral:.4f} vs "
                  f"2 pi^2 = {target:.4f} (rel {rel:.2%}); max A(t) = {np.max(areas):.4f} "
                  f"<= 4 pi ({elapsed:.1f}s)")


def test_10_inequality_report():
    rep_d = inequality_report(disk(), f=None, count=100_000, seed=116)
    gd_d = next(c for c in rep_d.checks if c.name == "geodesic-diameter bound")
    ok = gd_d.status == "pass" and abs(gd_d.lhs - np.pi) < 1e-12 and abs(gd_d.rhs - 4.0) < 0.01
    ok &= abs(gd_d.margin - 4.0 / np.pi) < 0.01
    rep_b = inequality_report(ball3(), f=None, count=100_000, seed=117)
    gd_b = next(c for c in rep_b.checks if c.name == "geodesic-diameter bound")
    ok &= gd_b.status == "pass" and abs(gd_b.lhs - 4 * np.pi / 3) < 1e-12
    ok &= abs(gd_b.rhs - 2 * np.pi) < 0.02
    report(10, ok, f"diameter bound margins: disk {gd_d.lhs:.4f} <= {gd_d.rhs:.4f} "
                   f"(margin {gd_d.margin:.4f} = 4/pi), ball {gd_b.lhs:.4f} <= {gd_b.rhs:.4f}")


def test_11_recurrence():
    done = timed(60)
    table = disk()
    box = PhaseBox(piece=0, boundary=(0.0, 0.1), incidence=(0.4, 0.6))
    res = recurrence_test(table, Elastic(), box, 128, 10_000, seed=118)
    ok = res.returned_fraction > 0.99
    elapsed = done()
    report(11, ok, f"disk box recurrence: returned fraction "
                   f"{res.returned_fraction:.4f} > 0.99 at m=1e4 "
                   f"(mean returns {res.mean_return_count:.1f}, {elapsed:.1f}s)")


def test_12_holography():
    done = timed(300)
    table = disk()
    conj = conjugacy_residual(table, table, rotation_map(1.0), 10_000, seed=119)
    f = build_well_balanced_F(table, seed=120)
    data = generate_scattering_dataset(table, f, grid=(64, 64))
    reference = domain_reference_sample(table, 4_096, seed=121)
    recon = reconstruct_chords(data, table.space, h=0.01, reference_points=reference)
    ok = conj.max_residual < 1e-9 and recon.hausdorff < 0.05
    elapsed = done()
    report(12, ok, f"isometry conjugacy residual {conj.max_residual:.2e} < 1e-9 at 1e4 "
                   f"samples; 64x64 chord cloud Hausdorff {recon.hausdorff:.4f} < 0.05 "
                   f"({elapsed:.1f}s)")


def test_13_property_suite(tmp_path):
    done = timed(60)
    table = disk()
    failures = []

    # reflection involution, both laws, 1e5 boundary phase points
    rng = np.random.default_rng(122)
    ang = rng.uniform(0, 2 * np.pi, 100_000)
    q = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    d = rng.uniform(0, 2 * np.pi, 100_000)
    v = np.stack([np.cos(d), np.sin(d)], axis=1)
    for law in (Elastic(), Rescaled(stretch=1.5, axis=(1.0, 0.3))):
        v2 = reflect_batch(law, table, q, reflect_batch(law, table, q, v))
        if np.max(np.linalg.norm(v2 - v, axis=1)) >= 1e-12:
            failures.append(f"involution ({law.kind})")

    # time reversal and chord replay at 1e-9
    s = sample_mu_theta(table, 20_000, seed=123)
    batch = causality_batch(table, s.q, s.v)
    ok_rows = batch.ok
    back = causality_batch(table, batch.exit_q[ok_rows], -batch.exit_v[ok_rows])
    if np.max(np.abs(back.length - batch.length[ok_rows])) >= 1e-9:
        failures.append("time reversal")
    q2, v2 = table.space.flow(batch.entry_q[ok_rows], batch.entry_v[ok_rows],
                              batch.length[ok_rows])
    if np.max(table.space.chart_distance(q2, batch.exit_q[ok_rows])) >= 1e-9:
        failures.append("chord replay")

    # flow composition on the disk's space
    qf = rng.uniform(-0.6, 0.6, (10_000, 2))
    vf = table.space.unit(qf, rng.standard_normal((10_000, 2)))
    sf = rng.uniform(-10, 10, 10_000)
    tf = rng.uniform(-10, 10, 10_000)
    qa, va = table.space.flow(*table.space.flow(qf, vf, sf), tf)
    qb, vb = table.space.flow(qf, vf, sf + tf)
    if np.max(np.linalg.norm(qa - qb, axis=1)) >= 1e-10:
        failures.append("flow composition")

    # Delta_F additivity along the flow
    f = build_well_balanced_F(table, seed=124)
    f0 = f.value_batch(s.q, s.v)
    frac = rng.uniform(0, 1, len(s.q)) * batch.length
    qm, vm = table.space.flow(s.q, s.v, frac)
    if np.max(np.abs(f.value_batch(qm, vm) - f0 - frac)) >= 1e-9:
        failures.append("Delta_F additivity")

    # estimate-merge exactness
    x = rng.normal(2.0, 3.0, 50_000)
    whole = Estimate.from_samples(x)
    merged = Estimate.merge_all(Estimate.from_samples(c) for c in np.array_split(x, 13))
    if merged.count != whole.count or abs(merged.mean - whole.mean) > 1e-12 \
            or abs(merged.stderr - whole.stderr) > 1e-12:
        failures.append("estimate merge")

    # determinism across worker counts (identical payloads modulo wall time)
    from billiardlab.cli import main as cli_main
    payloads = []
    for workers, sub in (("1", "wa"), ("4", "wb")):
        out_dir = tmp_path / sub
        code = cli_main(["mfp", "--preset", "disk", "--samples", "100000",
                         "--seed", "42", "--workers", workers, "--out", str(out_dir)])
        rep = json.loads((out_dir / "mfp.json").read_text())
        rep.pop("wall_time_s")
        payloads.append((code, rep))
    if payloads[0] != payloads[1]:
        failures.append("worker determinism")

    elapsed = done()
    report(13, not failures,
           f"property suite (involution, reversal, replay, composition, additivity, "
           f"merge, determinism): {'all exact' if not failures else failures} ({elapsed:.1f}s)")
