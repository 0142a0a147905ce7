"""Two-task synthetic benchmark with analytic gradients and a grid oracle.

The objective gates two loss families by the sign region of theta2: a pair
of logarithmic valleys (active above the theta1 axis) and a pair of shifted
quadratic bowls (active below). The valley floors sit near theta1 = -7 and
+7; the cumulative objective has its global optimum inside the quadratic
region. Gradients are exact away from the measure-zero kink sets, with
fixed subgradient conventions on them: d|x|/dx = 0 at 0, a tied max takes
the first argument's derivative, and the log clamp passes zero gradient
when active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregators import ZeroGradient, make_aggregator
from .diagnostics import stability_report
from .optim import apply_step, make_optimizer
from .serialize import fmt_float, write_json
from .trajectory import Trajectory, TrajectoryRecord
from .validation import check_weights

LOG_CLAMP = 5e-6

# The benchmark's standard starting points and optimizer protocol.
DEFAULT_INITS: tuple[tuple[float, float], ...] = (
    (-8.5, 7.5),
    (0.0, 0.0),
    (9.0, 9.0),
    (-7.5, -0.5),
    (9.0, -1.0),
)
DEFAULT_STEPS = 35000
DEFAULT_LR = 1e-3
DEFAULT_BOUNDS: tuple[tuple[float, float], tuple[float, float]] = ((-10.0, 10.0), (-10.0, 10.0))


@dataclass(frozen=True)
class SyntheticEval:
    """Losses and analytic gradients at one parameter point."""

    L1: float
    L2: float
    g1: tuple[float, float]
    g2: tuple[float, float]

    def losses(self) -> np.ndarray:
        return np.array([self.L1, self.L2])

    def gradient_matrix(self) -> np.ndarray:
        return np.array([[self.g1[0], self.g2[0]], [self.g1[1], self.g2[1]]])


def synth_eval(theta) -> SyntheticEval:
    """Evaluate both task losses and their gradients at ``theta``."""
    t1 = float(theta[0])
    t2 = float(theta[1])

    u = math.tanh(-t2)
    du_dt2 = -(1.0 - u * u)

    # Valley curves: a1 = 0 near theta1 = -7, a2 = 0 near theta1 = +7 (both
    # bending with tanh(theta2): the sign of the tanh term in a2 is fixed by
    # requiring this two-valley layout).
    a1 = 0.5 * (-t1 - 7.0) - u
    a2 = 0.5 * (-t1 + 3.0) + u + 2.0
    h1 = abs(a1)
    h2 = abs(a2)
    s1 = math.copysign(1.0, a1) if a1 != 0.0 else 0.0
    s2 = math.copysign(1.0, a2) if a2 != 0.0 else 0.0

    if h1 >= LOG_CLAMP:
        f1 = math.log(h1) + 6.0
        df1_dt1 = s1 * (-0.5) / h1
        df1_dt2 = s1 * (-du_dt2) / h1
    else:
        f1 = math.log(LOG_CLAMP) + 6.0
        df1_dt1 = 0.0
        df1_dt2 = 0.0
    if h2 >= LOG_CLAMP:
        f2 = math.log(h2) + 6.0
        df2_dt1 = s2 * (-0.5) / h2
        df2_dt2 = s2 * du_dt2 / h2
    else:
        f2 = math.log(LOG_CLAMP) + 6.0
        df2_dt1 = 0.0
        df2_dt2 = 0.0

    th = math.tanh(0.5 * t2)
    if th > 0.0:
        c1 = th
        dc1_dt2 = 0.5 * (1.0 - th * th)
    elif th == 0.0:
        c1 = 0.0
        dc1_dt2 = 0.5
    else:
        c1 = 0.0
        dc1_dt2 = 0.0
    tm = -th
    if tm > 0.0:
        c2 = tm
        dc2_dt2 = -0.5 * (1.0 - tm * tm)
    elif tm == 0.0:
        c2 = 0.0
        dc2_dt2 = -0.5
    else:
        c2 = 0.0
        dc2_dt2 = 0.0

    q1 = ((-t1 - 7.0) ** 2 + 0.1 * (-t2 - 8.0) ** 2) / 10.0 - 20.0
    dq1_dt1 = (t1 + 7.0) / 5.0
    dq_dt2 = (t2 + 8.0) / 50.0
    q2 = ((-t1 + 7.0) ** 2 + 0.1 * (-t2 - 8.0) ** 2) / 10.0 - 20.0
    dq2_dt1 = (t1 - 7.0) / 5.0

    L1 = c1 * f1 + c2 * q1
    g1 = (
        c1 * df1_dt1 + c2 * dq1_dt1,
        dc1_dt2 * f1 + c1 * df1_dt2 + dc2_dt2 * q1 + c2 * dq_dt2,
    )
    L2 = c1 * f2 + c2 * q2
    g2 = (
        c1 * df2_dt1 + c2 * dq2_dt1,
        dc1_dt2 * f2 + c1 * df2_dt2 + dc2_dt2 * q2 + c2 * dq_dt2,
    )
    return SyntheticEval(L1=L1, L2=L2, g1=g1, g2=g2)


def loss_grid(theta1, theta2) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (L1, L2) over broadcastable arrays of parameters."""
    t1 = np.asarray(theta1, dtype=np.float64)
    t2 = np.asarray(theta2, dtype=np.float64)

    u = np.tanh(-t2)
    h1 = np.abs(0.5 * (-t1 - 7.0) - u)
    h2 = np.abs(0.5 * (-t1 + 3.0) + u + 2.0)
    f1 = np.log(np.maximum(h1, LOG_CLAMP)) + 6.0
    f2 = np.log(np.maximum(h2, LOG_CLAMP)) + 6.0
    c1 = np.maximum(np.tanh(0.5 * t2), 0.0)
    c2 = np.maximum(np.tanh(-0.5 * t2), 0.0)
    q1 = ((-t1 - 7.0) ** 2 + 0.1 * (-t2 - 8.0) ** 2) / 10.0 - 20.0
    q2 = ((-t1 + 7.0) ** 2 + 0.1 * (-t2 - 8.0) ** 2) / 10.0 - 20.0
    return c1 * f1 + c2 * q1, c1 * f2 + c2 * q2


def _pareto_front_mask(L1: np.ndarray, L2: np.ndarray) -> np.ndarray:
    """Non-dominated mask over flattened loss grids (2-D sweep)."""
    a = L1.ravel()
    b = L2.ravel()
    order = np.lexsort((b, a))
    dominated = np.zeros(a.size, dtype=bool)
    best_b_strictly_before = math.inf
    i = 0
    n = a.size
    while i < n:
        j = i
        while j < n and a[order[j]] == a[order[i]]:
            j += 1
        group = order[i:j]
        group_b = b[group]
        group_min = group_b.min()
        # Dominated by a strictly better-on-L1 cell, or by an equal-L1 cell
        # with strictly smaller L2.
        dominated[group] = (group_b >= best_b_strictly_before) | (group_b > group_min)
        best_b_strictly_before = min(best_b_strictly_before, group_min)
        i = j
    return ~dominated.reshape(L1.shape)


@dataclass(frozen=True)
class ParetoOracle:
    """Dense-grid reference for the benchmark's optimum and Pareto front."""

    bounds: tuple[tuple[float, float], tuple[float, float]]
    resolution: int
    theta1_axis: np.ndarray
    theta2_axis: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    L0: np.ndarray
    front_mask: np.ndarray

    @property
    def optimum_index(self) -> tuple[int, int]:
        flat = int(np.argmin(self.L0))
        return np.unravel_index(flat, self.L0.shape)  # type: ignore[return-value]

    @property
    def optimum_theta(self) -> tuple[float, float]:
        i, j = self.optimum_index
        return float(self.theta1_axis[i]), float(self.theta2_axis[j])

    @property
    def optimum_value(self) -> float:
        return float(self.L0.min())

    @property
    def front_size(self) -> int:
        return int(self.front_mask.sum())

    def weighted_optimum(self, weights) -> tuple[tuple[float, float], float]:
        """Grid optimum of w1*L1 + w2*L2 for arbitrary task weights."""
        w = check_weights(weights, 2)
        combined = w[0] * self.L1 + w[1] * self.L2
        i, j = np.unravel_index(int(np.argmin(combined)), combined.shape)
        return (float(self.theta1_axis[i]), float(self.theta2_axis[j])), float(combined[i, j])

    def cell_variation(self, weights=None) -> float:
        """Max loss variation between the optimum cell and its neighbors."""
        if weights is None:
            grid = self.L0
            i, j = self.optimum_index
        else:
            w = check_weights(weights, 2)
            grid = w[0] * self.L1 + w[1] * self.L2
            i, j = np.unravel_index(int(np.argmin(grid)), grid.shape)
        n1, n2 = grid.shape
        best = grid[i, j]
        var = 0.0
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ii, jj = i + di, j + dj
                if 0 <= ii < n1 and 0 <= jj < n2:
                    var = max(var, abs(float(grid[ii, jj]) - float(best)))
        return var

    def tolerance(self, weights=None, floor: float = 1e-2) -> float:
        """Convergence tolerance: max of ``floor`` and the grid variation."""
        return max(floor, self.cell_variation(weights))

    def is_non_dominated(self, losses, slack: float | None = None) -> bool:
        """Whether a loss pair is undominated by every grid cell (with slack)."""
        l1, l2 = float(losses[0]), float(losses[1])
        if slack is None:
            slack = self.cell_variation() + 1e-9
        dominates = (self.L1 <= l1 - slack) & (self.L2 <= l2 - slack)
        return not bool(dominates.any())

    def summary(self) -> dict:
        return {
            "bounds": [list(self.bounds[0]), list(self.bounds[1])],
            "resolution": self.resolution,
            "optimum_theta": list(self.optimum_theta),
            "optimum_value": self.optimum_value,
            "cell_variation": self.cell_variation(),
            "front_size": self.front_size,
        }

    def write_summary_json(self, path) -> None:
        write_json(path, self.summary())

    def write_grid_csv(self, path) -> None:
        """Full grid dump: theta1, theta2, L1, L2, L0, on_front per row."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("theta1,theta2,L1,L2,L0,on_front\n")
            for i, t1 in enumerate(self.theta1_axis):
                for j, t2 in enumerate(self.theta2_axis):
                    fh.write(
                        f"{fmt_float(t1)},{fmt_float(t2)},{fmt_float(self.L1[i, j])},"
                        f"{fmt_float(self.L2[i, j])},{fmt_float(self.L0[i, j])},"
                        f"{int(self.front_mask[i, j])}\n"
                    )


def build_oracle(bounds=DEFAULT_BOUNDS, resolution: int = 1000) -> ParetoOracle:
    """Evaluate the benchmark on a dense grid and locate optimum and front.

    Resolutions below ~100 per axis are only good for smoke tests; the
    convergence checks use 1000.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2 per axis")
    (lo1, hi1), (lo2, hi2) = bounds
    t1 = np.linspace(lo1, hi1, resolution)
    t2 = np.linspace(lo2, hi2, resolution)
    L1, L2 = loss_grid(t1[:, None], t2[None, :])
    L0 = 0.5 * L1 + 0.5 * L2
    front = _pareto_front_mask(L1, L2)
    return ParetoOracle(
        bounds=((float(lo1), float(hi1)), (float(lo2), float(hi2))),
        resolution=resolution,
        theta1_axis=t1,
        theta2_axis=t2,
        L1=L1,
        L2=L2,
        L0=L0,
        front_mask=front,
    )


def run_benchmark(
    method: str,
    init,
    *,
    steps: int = DEFAULT_STEPS,
    lr: float = DEFAULT_LR,
    weights=None,
    seed: int = 0,
    record_stride: int = 1,
    optimizer: str = "adam",
) -> Trajectory:
    """Optimize the synthetic objective with one aggregation method.

    Records theta, per-task losses, the weighted cumulative loss and a
    stability report every ``record_stride`` steps plus the final step.
    Stops early if the aggregator signals a zero gradient system.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if record_stride < 1:
        raise ValueError("record_stride must be at least 1")
    w = check_weights(weights, 2)
    agg = make_aggregator(method, weights=w, random_state=seed)
    opt = make_optimizer(optimizer, lr)

    theta = np.array([float(init[0]), float(init[1])])
    traj = Trajectory(
        method=method,
        seed=seed,
        lr=lr,
        weights=(w[0], w[1]),
        steps=steps,
        record_stride=record_stride,
        init=(theta[0], theta[1]),
    )

    def record(step: int, ev: SyntheticEval, G: np.ndarray) -> None:
        nonzero = np.any(G != 0.0, axis=0).all()
        report = stability_report(G) if nonzero else None
        l0 = w[0] * ev.L1 + w[1] * ev.L2
        traj.add(TrajectoryRecord(
            step=step,
            theta=(theta[0], theta[1]),
            losses=(ev.L1, ev.L2),
            l0=float(l0),
            report=report,
        ))

    for step in range(steps):
        ev = synth_eval(theta)
        G = ev.gradient_matrix()
        if step % record_stride == 0:
            record(step, ev, G)
        try:
            direction = agg.aggregate(G)
        except ZeroGradient:
            traj.stopped_early_at = step
            traj.stop_reason = "zero-gradient"
            break
        theta = apply_step(opt, theta, direction)

    final_step = traj.stopped_early_at if traj.stopped_early_at is not None else steps
    ev = synth_eval(theta)
    G = ev.gradient_matrix()
    if not traj.records or traj.records[-1].step != final_step:
        record(final_step, ev, G)
    return traj


def synthetic_summary(traj: Trajectory, oracle: ParetoOracle) -> dict:
    """Run summary augmented with oracle comparisons."""
    base = traj.summary()
    _, opt_value = oracle.weighted_optimum(traj.weights)
    tol = oracle.tolerance(traj.weights)
    gap = traj.final.l0 - opt_value
    base.update({
        "oracle_optimum": opt_value,
        "gap_to_oracle": gap,
        "oracle_tolerance": tol,
        "reached_oracle": bool(gap <= tol),
    })
    return base
