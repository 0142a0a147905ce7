import math

import numpy as np
import pytest

from helpers import near_nonsmooth, numeric_gradient

from alignmtl.synthetic import (
    DEFAULT_INITS,
    LOG_CLAMP,
    ParetoOracle,
    build_oracle,
    loss_grid,
    run_benchmark,
    synth_eval,
    synthetic_summary,
)


class TestSynthEval:
    def test_origin_has_zero_losses(self):
        ev = synth_eval((0.0, 0.0))
        assert ev.L1 == 0.0
        assert ev.L2 == 0.0
        # both gates vanish but the gate derivatives leave a theta2 pull
        assert ev.g1[0] == 0.0
        assert ev.g1[1] != 0.0

    def test_gate_saturation_positive_theta2(self):
        # Far above the axis the quadratic branch is switched off entirely.
        theta = (3.0, 30.0)
        ev = synth_eval(theta)
        u = math.tanh(-30.0)
        h1 = abs(0.5 * (-3.0 - 7.0) - u)
        h2 = abs(0.5 * (-3.0 + 3.0) + u + 2.0)
        c1 = math.tanh(15.0)
        assert ev.L1 == pytest.approx(c1 * (math.log(h1) + 6.0), rel=1e-12)
        assert ev.L2 == pytest.approx(c1 * (math.log(h2) + 6.0), rel=1e-12)

    def test_two_valley_layout(self):
        # The task-1 valley floor sits near theta1 = -7, the task-2 one
        # near +7, both bending with tanh(theta2) in the upper half plane.
        for t2 in (2.0, 5.0):
            u = math.tanh(-t2)
            valley1 = -7.0 - 2.0 * u
            valley2 = 7.0 + 2.0 * u
            assert abs(valley1 + 7.0) <= 2.0
            assert abs(valley2 - 7.0) <= 2.0
            ev1 = synth_eval((valley1, t2))
            ev2 = synth_eval((valley2, t2))
            clamp_floor = math.tanh(0.5 * t2) * (math.log(LOG_CLAMP) + 6.0)
            assert ev1.L1 == pytest.approx(clamp_floor, rel=1e-12)
            assert ev2.L2 == pytest.approx(clamp_floor, rel=1e-12)
            assert ev1.L1 < ev1.L2
            assert ev2.L2 < ev2.L1

    def test_finite_difference_oracle(self):
        # Oracle: central differences away from the non-smooth sets.
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(1000):
            theta = rng.uniform(-10.0, 10.0, size=2)
            if near_nonsmooth(theta):
                continue
            checked += 1
            ev = synth_eval(theta)
            analytic = np.array([[ev.g1[0], ev.g2[0]], [ev.g1[1], ev.g2[1]]])
            numeric = numeric_gradient(theta)
            scale = max(1.0, np.abs(numeric).max())
            assert np.abs(analytic - numeric).max() <= 1e-5 * scale, theta
        assert checked > 800

    def test_gradient_matrix_layout(self):
        ev = synth_eval((1.0, -2.0))
        G = ev.gradient_matrix()
        np.testing.assert_allclose(G[:, 0], ev.g1)
        np.testing.assert_allclose(G[:, 1], ev.g2)

    def test_loss_grid_matches_scalar_eval(self):
        rng = np.random.default_rng(1)
        t1 = rng.uniform(-10, 10, size=40)
        t2 = rng.uniform(-10, 10, size=40)
        L1, L2 = loss_grid(t1, t2)
        for i in range(40):
            ev = synth_eval((t1[i], t2[i]))
            assert L1[i] == pytest.approx(ev.L1, rel=1e-12, abs=1e-12)
            assert L2[i] == pytest.approx(ev.L2, rel=1e-12, abs=1e-12)


class TestOracle:
    def test_tiny_grid_picks_min_corner(self):
        oracle = build_oracle(bounds=((-1.0, 1.0), (-1.0, 1.0)), resolution=2)
        corners = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
        values = []
        for t1, t2 in corners:
            ev = synth_eval((t1, t2))
            values.append(0.5 * ev.L1 + 0.5 * ev.L2)
        assert oracle.optimum_value == pytest.approx(min(values), rel=1e-12)
        assert oracle.optimum_theta in corners

    def test_resolution_refinement_stable(self):
        coarse = build_oracle(resolution=1000)
        fine = build_oracle(resolution=2000)
        assert abs(coarse.optimum_value - fine.optimum_value) <= 1e-2

    def test_front_has_no_dominated_cells(self):
        oracle = build_oracle(resolution=120)
        L1 = oracle.L1.ravel()
        L2 = oracle.L2.ravel()
        front = np.nonzero(oracle.front_mask.ravel())[0]
        rng = np.random.default_rng(2)
        sample = rng.choice(front, size=min(200, front.size), replace=False)
        for idx in sample:
            dominates = (L1 <= L1[idx]) & (L2 <= L2[idx]) & ((L1 < L1[idx]) | (L2 < L2[idx]))
            assert not dominates.any()

    def test_dominated_points_detected(self):
        oracle = build_oracle(resolution=120)
        worst = (float(oracle.L1.max()), float(oracle.L2.max()))
        assert not oracle.is_non_dominated(worst)
        i, j = oracle.optimum_index
        assert oracle.is_non_dominated((oracle.L1[i, j], oracle.L2[i, j]))

    def test_weighted_optimum_matches_direct_argmin(self):
        oracle = build_oracle(resolution=150)
        w = (0.3, 0.7)
        _, value = oracle.weighted_optimum(w)
        combined = 0.3 * oracle.L1 + 0.7 * oracle.L2
        assert value == pytest.approx(float(combined.min()), rel=1e-12)

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            build_oracle(resolution=1)

    def test_summary_fields(self):
        oracle = build_oracle(resolution=60)
        summary = oracle.summary()
        assert set(summary) == {
            "bounds", "resolution", "optimum_theta", "optimum_value",
            "cell_variation", "front_size",
        }
        assert isinstance(oracle, ParetoOracle)


class TestRunBenchmark:
    def test_zero_steps_single_record(self):
        traj = run_benchmark("aligned-mtl", (0.0, 0.0), steps=0)
        assert len(traj.records) == 1
        assert traj.records[0].step == 0
        np.testing.assert_allclose(traj.records[0].theta, [0.0, 0.0])
        assert traj.records[0].losses == (0.0, 0.0)

    def test_deterministic_repeat(self):
        a = run_benchmark("pcgrad", (9.0, -1.0), steps=200, seed=3, record_stride=10)
        b = run_benchmark("pcgrad", (9.0, -1.0), steps=200, seed=3, record_stride=10)
        assert a.to_jsonl() == b.to_jsonl()

    def test_record_stride_and_final_record(self):
        traj = run_benchmark("uniform", (1.0, 1.0), steps=55, record_stride=20)
        assert [r.step for r in traj.records] == [0, 20, 40, 55]

    def test_unknown_method(self):
        with pytest.raises(KeyError):
            run_benchmark("sgd", (0.0, 0.0), steps=1)

    def test_reports_present(self):
        traj = run_benchmark("aligned-mtl", (-7.5, -0.5), steps=50, record_stride=5)
        for rec in traj.records:
            assert rec.report is not None
            assert rec.report.kappa >= 1.0

    def test_window_mean_descent_in_basin(self):
        # Windowed means of the cumulative loss must not increase once the
        # trajectory is inside the smooth basin (1e-6 slack for float noise
        # on the converged plateau).
        traj = run_benchmark("aligned-mtl", (0.0, 0.0), steps=35000, record_stride=1)
        steps = np.array([r.step for r in traj.records[:-1]])
        l0 = np.array([r.l0 for r in traj.records[:-1]])
        theta2 = np.array([r.theta[1] for r in traj.records[:-1]])
        basin_start = int(np.argmax(theta2 < -2.0))
        assert basin_start > 0
        inside = l0[basin_start:]
        n_windows = inside.size // 100
        means = inside[: n_windows * 100].reshape(n_windows, 100).mean(axis=1)
        assert np.all(np.diff(means) <= 1e-6)
        assert steps[-1] == 34999

    def test_summary_against_oracle(self):
        oracle = build_oracle(resolution=200)
        traj = run_benchmark("aligned-mtl", (0.0, 0.0), steps=400, record_stride=100)
        summary = synthetic_summary(traj, oracle)
        assert summary["oracle_tolerance"] >= 1e-2
        assert "reached_oracle" in summary
        assert summary["gap_to_oracle"] == pytest.approx(traj.final.l0 - summary["oracle_optimum"])

    def test_five_standard_inits(self):
        # Protocol constants: five starting points, 35k steps, lr 1e-3.
        assert DEFAULT_INITS == (
            (-8.5, 7.5), (0.0, 0.0), (9.0, 9.0), (-7.5, -0.5), (9.0, -1.0),
        )


@pytest.mark.slow
class TestWeightedSweep:
    def test_alpha_grid_non_dominated_and_beats_uniform(self):
        # For each task weighting, the aligned run must land on the front
        # from every init and match or beat uniform scalarization from at
        # least 4 of the 5 standard inits. The most extreme weighting
        # (alpha=0.1) is the benchmark's known hard case: two runs are
        # still drifting along the front when the 35k-step budget ends, so
        # its floor is 3 (measured; everything else is at 4 or 5).
        oracle = build_oracle(resolution=1000)
        min_wins = {0.1: 3, 0.3: 4, 0.5: 4, 0.7: 4, 0.9: 4}
        for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
            w = (alpha, 1.0 - alpha)
            slack = oracle.cell_variation(w) + 1e-3
            wins = 0
            nondom = 0
            for init in DEFAULT_INITS:
                aligned = run_benchmark("aligned-mtl", init, weights=w, record_stride=35000)
                base = run_benchmark("uniform", init, weights=w, record_stride=35000)
                if oracle.is_non_dominated(aligned.final.losses):
                    nondom += 1
                if aligned.final.l0 <= base.final.l0 + slack:
                    wins += 1
            assert wins >= min_wins[alpha], f"alpha={alpha}: aligned beat uniform only {wins}/5 times"
            assert nondom == 5, f"alpha={alpha}: aligned non-dominated only {nondom}/5 times"
