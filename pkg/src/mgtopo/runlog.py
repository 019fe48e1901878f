"""Per-iteration run records and their totals."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RunLog", "ConvergenceError"]


class ConvergenceError(RuntimeError):
    """An optimizer gave up; `log` holds the iterations done so far."""

    def __init__(self, message, log=None, state=None):
        super().__init__(message)
        self.log = log
        self.state = state


@dataclass
class RunLog:
    """Rows of one optimizer run; every row is one linear system solved."""

    solver: str
    columns: tuple
    rows: list = field(default_factory=list)
    wall_time: float = 0.0
    linear_time: float = 0.0
    objective: float = float("nan")
    x_min: float = float("nan")
    status: str = "running"
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def append(self, **row):
        self.rows.append({c: row.get(c, "") for c in self.columns})

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def feval(self):
        return len(self.rows)

    @property
    def total_cg_iters(self):
        return int(sum(int(r["cg_iters"]) for r in self.rows))

    @property
    def avg_cg_per_solve(self):
        return self.total_cg_iters / self.feval if self.feval else 0.0

    def summary(self):
        return {
            "solver": self.solver,
            "status": self.status,
            "feval": self.feval,
            "total_cg_iters": self.total_cg_iters,
            "avg_cg_per_solve": self.avg_cg_per_solve,
            "objective": self.objective,
            "x_min": self.x_min,
            "wall_time": self.wall_time,
            "linear_solver_time": self.linear_time,
            **self.extra,
            "notes": list(self.notes),
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.columns), lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
