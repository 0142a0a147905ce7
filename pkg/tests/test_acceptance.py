"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
complete. Every tolerance is fixed here, not calibrated at runtime.
"""

import json
import math
import time

import numpy as np
import pytest

from helpers import near_nonsmooth, numeric_gradient

from alignmtl.aggregators import SharedRepGradients, ZeroGradient, align
from alignmtl.cli import main
from alignmtl.linalg import condition_number
from alignmtl.optim import make_optimizer, sgd_step
from alignmtl.serialize import write_gradient_dump
from alignmtl.synthetic import DEFAULT_INITS, build_oracle, run_benchmark, synth_eval
from alignmtl.toy import (
    forward_backward,
    make_linear_suite,
    make_tanh_suite,
    make_toy_model,
    train,
    two_quadratics,
)


def report(criterion: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {criterion}: {status} - {detail}", flush=True)
    assert ok, f"criterion {criterion}: {detail}"


def random_full_rank(rng, d, T, kappa):
    sv = np.exp(np.linspace(0.0, -math.log(kappa), T))
    U, _ = np.linalg.qr(rng.standard_normal((d, T)))
    V, _ = np.linalg.qr(rng.standard_normal((T, T)))
    return (U * sv) @ V.T


@pytest.fixture(scope="module")
def oracle():
    return build_oracle(resolution=1000)


@pytest.fixture(scope="module")
def benchmark_runs():
    """Aligned and uniform runs from the five standard inits (35k steps)."""
    t0 = time.perf_counter()
    runs = {}
    for method in ("aligned-mtl", "uniform"):
        runs[method] = [
            run_benchmark(method, init, steps=35000, lr=1e-3,
                          weights=(0.5, 0.5), seed=0, record_stride=35000)
            for init in DEFAULT_INITS
        ]
    runs["elapsed"] = time.perf_counter() - t0
    return runs


def test_criterion_1_alignment_invariants():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(8, 65))
        T = int(rng.integers(2, 9))
        kappa = 10.0 ** rng.uniform(0.0, 6.0)
        G = random_full_rank(rng, d, T, kappa)
        res = align(G)
        Ghat = res.aligned_matrix(G)
        sigma2 = res.sigma**2
        worst = max(worst, abs(condition_number(Ghat) - 1.0))
        norms = np.linalg.norm(Ghat, axis=0)
        worst = max(worst, float(np.abs(norms - res.sigma).max() / res.sigma))
        worst = max(worst, float(np.abs(Ghat.T @ Ghat - sigma2 * np.eye(T)).max() / sigma2))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 10.0
    report(1, ok, f"1000 alignments, worst identity deviation {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_non_negative_alignment():
    rng = np.random.default_rng(22)
    worst = math.inf
    count = 0
    while count < 100000:
        d = int(rng.integers(1, 9))
        T = int(rng.integers(1, 5))
        G = rng.standard_normal((d, T))
        kind = count % 10
        if kind == 0 and T >= 2:
            G[:, -1] = G[:, 0]               # duplicated column
        elif kind == 1 and T >= 2:
            G[:, -1] = -2.0 * G[:, 0]        # opposing pair
        elif kind == 2:
            G[:, rng.integers(0, T)] = 0.0   # zero column
        elif kind == 3 and d >= 2:
            G = np.outer(rng.standard_normal(d), rng.standard_normal(T))  # rank one
        w = rng.random(T) + 1e-3
        w = w / w.sum()
        count += 1
        try:
            res = align(G, w)
        except ZeroGradient:
            continue
        worst = min(worst, float((G @ w) @ res.g_hat0))
    ok = worst >= -1e-12
    report(2, ok, f"100000 draws incl. rank-deficient, min inner product {worst:.2e}")


def test_criterion_3_procrustes_optimality():
    rng = np.random.default_rng(33)
    violations = 0
    for _ in range(100):
        d = int(rng.integers(4, 17))
        T = int(rng.integers(2, 5))
        G = random_full_rank(rng, d, T, kappa=10.0 ** rng.uniform(0.0, 2.0))
        res = align(G)
        UVt = res.aligned_matrix(G) / res.sigma
        base = float(np.linalg.norm(G - UVt))
        for _ in range(200):
            Omega, _ = np.linalg.qr(rng.standard_normal((T, T)))
            Q = UVt @ Omega
            if base > float(np.linalg.norm(G - Q)) + 1e-12:
                violations += 1
    report(3, violations == 0, f"100 matrices x 200 orthonormal candidates, {violations} violations")


def test_criterion_4_corollary_reproduction():
    rng = np.random.default_rng(44)
    worst = 0.0
    # Orthogonal columns: kappa is the column norm ratio.
    for ratio in np.logspace(0.0, 4.0, 60):
        Q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        G = Q * np.array([ratio, 1.0])
        worst = max(worst, abs(condition_number(G) / ratio - 1.0))
    # Equal norms at angle a: tan(a/2) above 45 degrees, cot below.
    for alpha in np.linspace(0.01, math.pi - 0.01, 400):
        G = np.array([[1.0, math.cos(alpha)], [0.0, math.sin(alpha)]])
        half = alpha / 2.0
        expected = math.tan(half) if half > math.pi / 4.0 else 1.0 / math.tan(half)
        worst = max(worst, abs(condition_number(G) / expected - 1.0))
    ok = worst <= 1e-9
    report(4, ok, f"angle and norm-ratio sweeps, worst relative error {worst:.2e}")


def test_criterion_5_synthetic_convergence(oracle, benchmark_runs):
    tol = oracle.tolerance((0.5, 0.5))
    gaps = [traj.final.l0 - oracle.optimum_value for traj in benchmark_runs["aligned-mtl"]]
    elapsed = benchmark_runs["elapsed"]
    ok = all(gap <= tol for gap in gaps) and elapsed < 300.0
    detail = ", ".join(f"{g:+.2e}" for g in gaps)
    report(5, ok, f"five-init gaps [{detail}] vs tol {tol:.2e}, runs took {elapsed:.0f}s")


def test_criterion_6_uniform_baseline_fails(oracle, benchmark_runs):
    aligned = benchmark_runs["aligned-mtl"]
    base = benchmark_runs["uniform"]
    excesses = [b.final.l0 - a.final.l0 for a, b in zip(aligned, base)]
    ok = any(e > 0.1 for e in excesses)
    report(6, ok, "uniform excess over aligned per init: "
           + ", ".join(f"{e:+.2f}" for e in excesses))


def test_criterion_7_weighted_optimum():
    prob = two_quadratics(conflict_angle=2.4, dominance=2.0, seed=5, theta0=(0.0, 0.0))
    w = [0.7, 0.3]
    lam = prob.lipschitz_bound(w)
    traj = train(prob, "aligned-mtl", weights=w, lr=1.0 / lam, steps=4000, record_stride=4000)
    dist = float(np.linalg.norm(np.asarray(traj.final.theta) - prob.weighted_minimizer(w)))
    report(7, dist <= 1e-4, f"distance to closed-form weighted minimizer {dist:.2e}")


def test_criterion_8_lemma1_descent():
    from alignmtl.aggregators import align_ub

    total_steps = 0
    violations = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        prob = two_quadratics(
            conflict_angle=float(rng.uniform(0.3, 2.9)),
            dominance=float(rng.uniform(1.0, 5.0)),
            eccentricity=float(rng.uniform(1.0, 4.0)),
            seed=seed,
            theta0=rng.uniform(-3.0, 3.0, size=2),
        )
        w = rng.random(2) + 0.1
        w = w / w.sum()
        lam = prob.lipschitz_bound(w)
        alpha = 1.0 / lam
        start = prob.shared.copy()
        for route in ("align", "align_ub"):
            prob.shared = start.copy()
            opt = make_optimizer("sgd", alpha)
            for _ in range(100):
                ev = prob.evaluate()
                l0_before = float(w @ ev.losses)
                g0 = ev.G @ w
                r = align(ev.G, w).g_hat0 if route == "align" else align_ub(ev.rep, w).g_hat0
                prob.shared = sgd_step(opt, prob.shared, r)
                l0_after = float(w @ prob.losses_at(prob.shared))
                bound = alpha * float(g0 @ r) - 0.5 * alpha**2 * lam * float(r @ r)
                total_steps += 1
                if l0_before - l0_after < bound - 1e-12 * max(1.0, abs(l0_before)):
                    violations += 1
    ok = violations == 0
    report(8, ok, f"{total_steps} steps across 50 seeded runs x 2 routes, {violations} bound violations")


def test_criterion_9_upper_bound_inequality():
    rng = np.random.default_rng(99)
    violations = 0
    for _ in range(1000):
        h = int(rng.integers(2, 10))
        T = int(rng.integers(2, min(h, 5) + 1))
        p = int(rng.integers(2, 14))
        Z = rng.standard_normal((h, T)) * 10.0 ** rng.uniform(-2, 2)
        J = rng.standard_normal((p, h))
        res = align(Z)
        Z_hat = res.aligned_matrix(Z)
        lhs = float(np.linalg.norm(J @ Z - J @ Z_hat))
        rhs = float(np.linalg.norm(J)) * float(np.linalg.norm(Z - Z_hat))
        if lhs > rhs + 1e-10:
            violations += 1
    report(9, violations == 0, f"1000 shared-representation instances, {violations} violations")


def test_criterion_10_gradient_correctness():
    # Synthetic objective against central differences, away from kinks.
    rng = np.random.default_rng(1010)
    worst = 0.0
    checked = 0
    for _ in range(1000):
        theta = rng.uniform(-10.0, 10.0, size=2)
        if near_nonsmooth(theta):
            continue
        checked += 1
        ev = synth_eval(theta)
        analytic = np.array([[ev.g1[0], ev.g2[0]], [ev.g1[1], ev.g2[1]]])
        numeric = numeric_gradient(theta)
        scale = max(1.0, float(np.abs(numeric).max()))
        worst = max(worst, float(np.abs(analytic - numeric).max() / scale))
    ok = worst <= 1e-5 and checked > 800

    # Toy models: every G and Z column against central differences.
    for kind in ("linear", "tanh"):
        for seed in (0, 1):
            model = make_toy_model(kind, 3, 4, 3, seed=seed)
            X = rng.standard_normal((6, 3))
            Y = rng.standard_normal((6, 3))
            _, G, rep, _ = forward_backward(model, X, Y)
            vec = model.shared_vector()
            n = X.shape[0]
            for t in range(3):
                def loss_of_shared(v, t=t):
                    saved = model.shared_vector()
                    model.set_shared_vector(v)
                    _, preds = model.forward(X)
                    model.set_shared_vector(saved)
                    resid = preds[:, t] - Y[:, t]
                    return float(resid @ resid) / n

                numeric = np.zeros_like(vec)
                for i in range(vec.size):
                    h = 1e-6 * max(1.0, abs(vec[i]))
                    up, dn = vec.copy(), vec.copy()
                    up[i] += h
                    dn[i] -= h
                    numeric[i] = (loss_of_shared(up) - loss_of_shared(dn)) / (2 * h)
                scale = max(1.0, float(np.abs(numeric).max()))
                dev = float(np.abs(G[:, t] - numeric).max() / scale)
                worst = max(worst, dev)
                ok = ok and dev <= 1e-5
    report(10, ok, f"synthetic ({checked} smooth points) and toy models, worst relative deviation {worst:.2e}")


def test_criterion_11_cli_determinism(tmp_path):
    dump = tmp_path / "g.csv"
    write_gradient_dump(dump, np.array([[2.0, 0.0], [0.0, 1.0], [0.5, -0.5]]))
    zero_free = []

    def run_twice(args, out_names, subdir):
        d1 = tmp_path / subdir / "run1"
        d2 = tmp_path / subdir / "run2"
        outputs = []
        for d in (d1, d2):
            d.mkdir(parents=True)
            full = [a.format(out=str(d)) for a in args]
            assert main(full) == 0
            outputs.append([(d / n).read_bytes() for n in out_names])
        zero_free.append(outputs[0] == outputs[1])

    run_twice(["align", str(dump), "--weights", "0.6,0.4", "--out", "{out}/result.json"],
              ["result.json"], "align")
    run_twice(["synthetic", "--method", "aligned-mtl,pcgrad", "--steps", "25",
               "--seed", "7", "--record-stride", "5", "--oracle-resolution", "60",
               "--out", "{out}"],
              ["summary.json", "oracle_summary.json",
               "traj_aligned-mtl_w0.5_init0.jsonl", "traj_pcgrad_w0.5_init4.jsonl"],
              "synthetic")
    run_twice(["train-toy", "--suite", "tanh-mtl", "--method", "pcgrad", "--steps", "30",
               "--seed", "3", "--lr", "0.05", "--out", "{out}"],
              ["trajectory.jsonl", "summary.json"], "train-toy")
    run_twice(["diagnose", str(dump), "--out", "{out}/reports.jsonl"],
              ["reports.jsonl"], "diagnose")
    report(11, all(zero_free), f"byte-identical double runs for 4 commands: {zero_free}")
