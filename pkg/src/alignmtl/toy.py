"""Desk-scale multi-task training with exact manual backpropagation.

Three problem families:

* two quadratics with a controllable conflict angle and dominance ratio
  (Lipschitz constants and weighted minimizers have closed forms);
* a shared linear encoder with linear regression heads (the joint optimum
  is the per-task least-squares solution);
* a one-hidden-layer tanh encoder with several heads.

Every problem exposes the full gradient matrix G over the shared
parameters and, where a shared representation exists, the pair (Z, J) with
G = J @ Z, so both alignment routes can drive the same training loop.
Task-specific head parameters are always updated with their own unmodified
gradients.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .aggregators import SharedRepGradients, ZeroGradient, make_aggregator
from .diagnostics import stability_report
from .linalg import sym_eigh
from .optim import apply_step, make_optimizer
from .trajectory import Trajectory, TrajectoryRecord
from .validation import check_weights


class DivergenceError(RuntimeError):
    """A task loss blew past the divergence guard during training."""


@dataclass
class ProblemEval:
    losses: np.ndarray
    G: np.ndarray
    rep: SharedRepGradients | None
    head_grads: list[np.ndarray]


# ---------------------------------------------------------------------------
# Quadratic task suite


class QuadraticProblem:
    """T quadratic tasks over a single shared parameter vector.

    L_t(theta) = 0.5 * (theta - m_t)^T Q_t (theta - m_t) with SPD Q_t.
    A fixed full-rank map P fabricates a shared representation H = P theta,
    giving exact (Z, J) with G = J @ Z for the upper-bound alignment route.
    """

    def __init__(self, minimizers, hessians, theta0, rep_map=None):
        self.minimizers = [np.asarray(m, dtype=np.float64) for m in minimizers]
        self.hessians = [np.asarray(Q, dtype=np.float64) for Q in hessians]
        if len(self.minimizers) != len(self.hessians):
            raise ValueError("need one hessian per minimizer")
        self.theta = np.asarray(theta0, dtype=np.float64).copy()
        dim = self.theta.shape[0]
        if rep_map is None:
            rng = np.random.default_rng(12345)
            while True:
                P = rng.standard_normal((dim + 1, dim))
                if np.linalg.matrix_rank(P) == dim:
                    break
            rep_map = P
        self.rep_map = np.asarray(rep_map, dtype=np.float64)
        # (P^+)^T maps parameter-space gradients to representation space.
        self._pinv_T = self.rep_map @ np.linalg.inv(self.rep_map.T @ self.rep_map)

    @property
    def n_tasks(self) -> int:
        return len(self.minimizers)

    @property
    def shared(self) -> np.ndarray:
        return self.theta

    @shared.setter
    def shared(self, value) -> None:
        self.theta = np.asarray(value, dtype=np.float64).copy()

    def losses_at(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        return np.array([
            0.5 * float((theta - m) @ Q @ (theta - m))
            for m, Q in zip(self.minimizers, self.hessians)
        ])

    def evaluate(self) -> ProblemEval:
        theta = self.theta
        G = np.column_stack([Q @ (theta - m) for m, Q in zip(self.minimizers, self.hessians)])
        Z = self._pinv_T @ G
        rep = SharedRepGradients(Z=Z, J=self.rep_map.T)
        return ProblemEval(losses=self.losses_at(theta), G=G, rep=rep, head_grads=[])

    def cumulative_hessian(self, weights=None) -> np.ndarray:
        w = check_weights(weights, self.n_tasks)
        H = np.zeros_like(self.hessians[0])
        for wt, Q in zip(w, self.hessians):
            H += wt * Q
        return H

    def lipschitz_bound(self, weights=None) -> float:
        """Exact smoothness constant of the weighted objective."""
        spectrum = sym_eigh(self.cumulative_hessian(weights))
        return float(spectrum.eigenvalues[0])

    def weighted_minimizer(self, weights=None) -> np.ndarray:
        """Closed-form minimizer of sum_t w_t L_t."""
        w = check_weights(weights, self.n_tasks)
        H = self.cumulative_hessian(w)
        rhs = np.zeros(self.theta.shape[0])
        for wt, m, Q in zip(w, self.minimizers, self.hessians):
            rhs += wt * (Q @ m)
        return np.linalg.solve(H, rhs)


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def two_quadratics(
    conflict_angle: float = 2.2,
    dominance: float = 3.0,
    *,
    eccentricity: float = 1.0,
    theta0=(0.0, 0.0),
    seed: int = 0,
) -> QuadraticProblem:
    """Two 2-D quadratics whose gradients at the origin meet the requested
    angle and norm ratio.

    ``dominance`` is the gradient norm ratio at theta0=(0,0);
    ``eccentricity`` stretches the hessians away from isotropy.
    """
    if not 0.0 < conflict_angle < np.pi:
        raise ValueError("conflict_angle must lie in (0, pi)")
    if dominance < 1.0:
        raise ValueError("dominance must be >= 1")
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.0, 2.0 * np.pi)
    u1 = np.array([np.cos(base), np.sin(base)])
    u2 = _rotation(conflict_angle) @ u1
    m1 = dominance * u1
    m2 = u2
    if eccentricity == 1.0:
        Q1 = np.eye(2)
        Q2 = np.eye(2)
    else:
        R = _rotation(rng.uniform(0.0, np.pi))
        Q1 = R @ np.diag([1.0, eccentricity]) @ R.T
        R2 = _rotation(rng.uniform(0.0, np.pi))
        Q2 = R2 @ np.diag([1.0, eccentricity]) @ R2.T
    return QuadraticProblem([m1, m2], [Q1, Q2], theta0=np.asarray(theta0, dtype=np.float64))


# ---------------------------------------------------------------------------
# Shared-encoder models


@dataclass
class ToyModel:
    """Shared encoder plus per-task linear heads.

    ``kind`` selects the encoder: "linear" (H = X W^T) or "tanh"
    (H = tanh(X W^T + b)). Heads are linear with an optional bias.
    """

    kind: str
    enc_w: np.ndarray
    enc_b: np.ndarray | None
    head_w: list[np.ndarray]
    head_b: list[float] | None

    def __post_init__(self):
        if self.kind not in ("linear", "tanh"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")

    @property
    def n_tasks(self) -> int:
        return len(self.head_w)

    @property
    def hidden_dim(self) -> int:
        return self.enc_w.shape[0]

    @property
    def in_dim(self) -> int:
        return self.enc_w.shape[1]

    def shared_vector(self) -> np.ndarray:
        parts = [self.enc_w.ravel()]
        if self.enc_b is not None:
            parts.append(self.enc_b)
        return np.concatenate(parts)

    def set_shared_vector(self, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        k, d = self.enc_w.shape
        self.enc_w = vec[: k * d].reshape(k, d).copy()
        if self.enc_b is not None:
            self.enc_b = vec[k * d:].copy()

    def head_vector(self, t: int) -> np.ndarray:
        if self.head_b is not None:
            return np.concatenate([self.head_w[t], [self.head_b[t]]])
        return self.head_w[t].copy()

    def set_head_vector(self, t: int, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        k = self.hidden_dim
        self.head_w[t] = vec[:k].copy()
        if self.head_b is not None:
            self.head_b[t] = float(vec[k])

    def representation(self, X) -> np.ndarray:
        pre = X @ self.enc_w.T
        if self.enc_b is not None:
            pre = pre + self.enc_b
        if self.kind == "tanh":
            return np.tanh(pre)
        return pre

    def forward(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Return (H, predictions) with one prediction column per task."""
        H = self.representation(X)
        preds = np.column_stack([H @ self.head_w[t] for t in range(self.n_tasks)])
        if self.head_b is not None:
            preds = preds + np.asarray(self.head_b)
        return H, preds


def make_toy_model(kind: str, in_dim: int, hidden_dim: int, n_tasks: int, seed: int = 0) -> ToyModel:
    rng = np.random.default_rng(seed)
    enc_w = rng.standard_normal((hidden_dim, in_dim)) * 0.5
    enc_b = rng.standard_normal(hidden_dim) * 0.1 if kind == "tanh" else None
    head_w = [rng.standard_normal(hidden_dim) * 0.5 for _ in range(n_tasks)]
    head_b = [0.0 for _ in range(n_tasks)] if kind == "tanh" else None
    return ToyModel(kind=kind, enc_w=enc_w, enc_b=enc_b, head_w=head_w, head_b=head_b)


def forward_backward(model: ToyModel, X, Y) -> tuple[np.ndarray, np.ndarray, SharedRepGradients, list[np.ndarray]]:
    """Exact gradients of per-task MSE losses.

    Returns (losses, G, rep, head_grads): G has one column per task over the
    flattened shared parameters; rep carries Z (gradients w.r.t. the
    batch-flattened representation) and J (its Jacobian w.r.t. the shared
    parameters) with G = J @ Z.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("X and Y must be 2-D (samples x features / tasks)")
    n = X.shape[0]
    if n == 0:
        raise ValueError("batch is empty")
    T = model.n_tasks
    if Y.shape != (n, T):
        raise ValueError(f"targets must be {(n, T)}, got {Y.shape}")
    if X.shape[1] != model.in_dim:
        raise ValueError(f"inputs must have {model.in_dim} features, got {X.shape[1]}")

    k, d = model.enc_w.shape
    H, preds = model.forward(X)
    losses = np.empty(T)
    Z = np.empty((n * k, T))
    n_shared = k * d + (k if model.enc_b is not None else 0)
    G = np.empty((n_shared, T))
    head_grads: list[np.ndarray] = []

    if model.kind == "tanh":
        act_deriv = 1.0 - H * H
    else:
        act_deriv = None

    for t in range(T):
        resid = preds[:, t] - Y[:, t]
        losses[t] = float(resid @ resid) / n
        dpred = 2.0 * resid / n
        gw = H.T @ dpred
        if model.head_b is not None:
            head_grads.append(np.concatenate([gw, [dpred.sum()]]))
        else:
            head_grads.append(gw)
        dH = dpred[:, None] * model.head_w[t][None, :]
        Z[:, t] = dH.ravel()
        dpre = dH * act_deriv if act_deriv is not None else dH
        g_enc = (dpre.T @ X).ravel()
        if model.enc_b is not None:
            G[:, t] = np.concatenate([g_enc, dpre.sum(axis=0)])
        else:
            G[:, t] = g_enc

    # Jacobian of the flattened representation w.r.t. the shared parameters.
    J = np.zeros((n_shared, n * k))
    for a in range(k):
        cols = slice(a, n * k, k)
        scale = act_deriv[:, a] if act_deriv is not None else None
        block = X.T if scale is None else X.T * scale[None, :]
        J[a * d:(a + 1) * d, cols] = block
        if model.enc_b is not None:
            J[k * d + a, cols] = scale if scale is not None else np.ones(n)
    rep = SharedRepGradients(Z=Z, J=J)
    return losses, G, rep, head_grads


class EncoderProblem:
    """A ToyModel bound to a fixed seeded dataset."""

    def __init__(self, model: ToyModel, X, Y):
        self.model = model
        self.X = np.asarray(X, dtype=np.float64)
        self.Y = np.asarray(Y, dtype=np.float64)

    @property
    def n_tasks(self) -> int:
        return self.model.n_tasks

    @property
    def shared(self) -> np.ndarray:
        return self.model.shared_vector()

    @shared.setter
    def shared(self, value) -> None:
        self.model.set_shared_vector(value)

    def evaluate(self) -> ProblemEval:
        losses, G, rep, head_grads = forward_backward(self.model, self.X, self.Y)
        return ProblemEval(losses=losses, G=G, rep=rep, head_grads=head_grads)

    def head_vector(self, t: int) -> np.ndarray:
        return self.model.head_vector(t)

    def set_head_vector(self, t: int, vec) -> None:
        self.model.set_head_vector(t, vec)

    def least_squares_losses(self) -> np.ndarray:
        """Per-task ordinary-least-squares optimum of the MSE (linear encoder).

        Valid when the encoder is linear and wide enough that the shared
        subspace can hold every per-task regressor jointly.
        """
        if self.model.kind != "linear":
            raise ValueError("closed-form optimum only applies to the linear encoder")
        sol, *_ = np.linalg.lstsq(self.X, self.Y, rcond=None)
        resid = self.Y - self.X @ sol
        return np.einsum("it,it->t", resid, resid) / self.X.shape[0]


def make_linear_suite(seed: int = 0, *, n_samples: int = 32, in_dim: int = 3,
                      hidden_dim: int = 3, n_tasks: int = 2, noise: float = 0.1) -> EncoderProblem:
    """Linear encoder + linear heads on seeded linear-with-noise data."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, in_dim))
    W_true = rng.standard_normal((in_dim, n_tasks))
    Y = X @ W_true + noise * rng.standard_normal((n_samples, n_tasks))
    model = make_toy_model("linear", in_dim, hidden_dim, n_tasks, seed=seed + 1)
    return EncoderProblem(model, X, Y)


def make_tanh_suite(seed: int = 0, *, n_samples: int = 24, in_dim: int = 3,
                    hidden_dim: int = 4, n_tasks: int = 3, noise: float = 0.05) -> EncoderProblem:
    """Tanh encoder + 3 heads on data from a seeded teacher network."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, in_dim))
    teacher = make_toy_model("tanh", in_dim, hidden_dim, n_tasks, seed=seed + 7)
    _, Y = teacher.forward(X)
    Y = Y + noise * rng.standard_normal(Y.shape)
    model = make_toy_model("tanh", in_dim, hidden_dim, n_tasks, seed=seed + 1)
    return EncoderProblem(model, X, Y)


# ---------------------------------------------------------------------------
# Training loop


def train(
    problem,
    method: str = "aligned-mtl",
    *,
    weights=None,
    optimizer: str = "sgd",
    lr: float = 0.01,
    steps: int = 100,
    seed: int = 0,
    record_stride: int = 1,
    divergence_limit: float = 1e12,
) -> Trajectory:
    """Train a multi-task problem with one gradient aggregation method.

    Shared parameters follow the aggregated direction; task heads (if the
    problem has any) follow their own unmodified gradients with a separate
    optimizer state each. Stops early on a zero gradient system; aborts
    with DivergenceError when a loss passes ``divergence_limit``.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if record_stride < 1:
        raise ValueError("record_stride must be at least 1")
    T = problem.n_tasks
    w = check_weights(weights, T)
    agg = make_aggregator(method, weights=w, random_state=seed)
    shared_opt = make_optimizer(optimizer, lr)
    head_opts = {}

    traj = Trajectory(
        method=method,
        seed=seed,
        lr=lr,
        weights=tuple(w),
        steps=steps,
        record_stride=record_stride,
        init=tuple(np.asarray(problem.shared).tolist()),
    )

    def record(step: int, ev: ProblemEval) -> None:
        all_nonzero = bool(np.any(ev.G != 0.0, axis=0).all())
        report = stability_report(ev.G) if all_nonzero else None
        traj.add(TrajectoryRecord(
            step=step,
            theta=tuple(np.asarray(problem.shared).tolist()),
            losses=tuple(float(x) for x in ev.losses),
            l0=float(w @ ev.losses),
            report=report,
        ))

    for step in range(steps):
        ev = problem.evaluate()
        if np.any(np.abs(ev.losses) > divergence_limit):
            raise DivergenceError(
                f"loss {float(np.abs(ev.losses).max()):.3e} exceeded {divergence_limit:.1e} at step {step}"
            )
        if step % record_stride == 0:
            record(step, ev)
        try:
            direction = agg.aggregate(ev.G, rep=ev.rep)
        except ZeroGradient:
            traj.stopped_early_at = step
            traj.stop_reason = "zero-gradient"
            break
        problem.shared = apply_step(shared_opt, problem.shared, direction)
        for t, head_grad in enumerate(ev.head_grads):
            if t not in head_opts:
                head_opts[t] = make_optimizer(optimizer, lr)
            problem.set_head_vector(t, apply_step(head_opts[t], problem.head_vector(t), head_grad))

    final_step = traj.stopped_early_at if traj.stopped_early_at is not None else steps
    ev = problem.evaluate()
    if not traj.records or traj.records[-1].step != final_step:
        record(final_step, ev)
    return traj


# ---------------------------------------------------------------------------
# Relative performance scoring


@dataclass(frozen=True)
class MetricRow:
    task: str
    metric: str
    higher_better: bool
    baseline: float
    model: float


@dataclass
class MetricTable:
    """Per-task, per-metric scores of a model against single-task baselines."""

    rows: list[MetricRow] = field(default_factory=list)

    def __post_init__(self):
        for row in self.rows:
            if row.baseline == 0.0:
                raise ValueError(f"zero baseline for {row.task}/{row.metric}")

    @property
    def tasks(self) -> list[str]:
        seen: list[str] = []
        for row in self.rows:
            if row.task not in seen:
                seen.append(row.task)
        return seen


def delta_m(table: MetricTable, mode: str = "task") -> float:
    """Average relative performance drop versus single-task baselines (%).

    ``task`` mode averages per-task sums of signed relative changes over the
    number of tasks; note the inner sum is not divided by the per-task
    metric count, so tasks with more metrics weigh more. ``metric`` mode
    averages over all (task, metric) rows equally. Positive values mean the
    model is worse than the baselines.
    """
    if mode not in ("task", "metric"):
        raise ValueError(f"mode must be 'task' or 'metric', got {mode!r}")
    if not table.rows:
        raise ValueError("empty metric table")

    def term(row: MetricRow) -> float:
        sign = -1.0 if row.higher_better else 1.0
        return sign * (row.model - row.baseline) / row.baseline

    if mode == "metric":
        return 100.0 * sum(term(r) for r in table.rows) / len(table.rows)
    tasks = table.tasks
    total = 0.0
    for task in tasks:
        total += sum(term(r) for r in table.rows if r.task == task)
    return 100.0 * total / len(tasks)


def read_metric_table(path) -> MetricTable:
    """Load a metric table from CSV (task, metric, direction, baseline, model).

    ``direction`` is 1 when higher is better, 0 when lower is better.
    """
    rows: list[MetricRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"task", "metric", "direction", "baseline", "model"}
        if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
            raise ValueError(f"metric table needs columns {sorted(required)}")
        for rec in reader:
            direction = rec["direction"].strip()
            if direction not in ("0", "1"):
                raise ValueError(f"direction must be 0 or 1, got {direction!r}")
            rows.append(MetricRow(
                task=rec["task"].strip(),
                metric=rec["metric"].strip(),
                higher_better=direction == "1",
                baseline=float(rec["baseline"]),
                model=float(rec["model"]),
            ))
    return MetricTable(rows)
