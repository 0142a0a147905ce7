"""Trajectory records shared by the synthetic benchmark and toy training."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .diagnostics import StabilityReport
from .serialize import dumps


@dataclass(frozen=True)
class TrajectoryRecord:
    """State of one logged optimization step."""

    step: int
    theta: tuple[float, ...]
    losses: tuple[float, ...]
    l0: float
    report: StabilityReport | None

    def to_dict(self) -> dict:
        r = self.report
        return {
            "step": self.step,
            "theta": list(self.theta),
            "losses": list(self.losses),
            "l0": self.l0,
            "kappa": r.kappa if r else None,
            "gms_min": r.gms_min if r else None,
            "cos_min": r.cos_min if r else None,
            "norm_ratio_max": r.norm_ratio_max if r else None,
        }


@dataclass
class Trajectory:
    """Ordered per-step records of one seeded optimization run."""

    method: str
    seed: int
    lr: float
    weights: tuple[float, ...]
    steps: int
    record_stride: int
    init: tuple[float, ...] = ()
    records: list[TrajectoryRecord] = field(default_factory=list)
    stopped_early_at: int | None = None
    stop_reason: str | None = None

    @property
    def final(self) -> TrajectoryRecord:
        return self.records[-1]

    def add(self, record: TrajectoryRecord) -> None:
        self.records.append(record)

    def to_jsonl(self) -> str:
        return "".join(dumps(rec.to_dict()) + "\n" for rec in self.records)

    def write_jsonl(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    def summary(self) -> dict:
        final = self.final
        return {
            "method": self.method,
            "seed": self.seed,
            "lr": self.lr,
            "weights": list(self.weights),
            "steps": self.steps,
            "record_stride": self.record_stride,
            "init": list(self.init),
            "final_step": final.step,
            "final_theta": list(final.theta),
            "final_losses": list(final.losses),
            "final_l0": final.l0,
            "stopped_early_at": self.stopped_early_at,
            "stop_reason": self.stop_reason,
        }

    def window_mean_l0(self, window: int = 100) -> list[float]:
        """Means of l0 over consecutive record windows (for descent checks)."""
        values = [r.l0 for r in self.records]
        means = []
        for start in range(0, len(values) - window + 1, window):
            chunk = values[start:start + window]
            means.append(math.fsum(chunk) / len(chunk))
        return means
