"""Hyperparameter sweeps laid out like the solver, shuffle and batch/epoch tables."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .config import TrainConfig
from .training import train

AXES = ("solvers", "shuffles", "batch-epoch")

SOLVER_LABELS = {"adam": "Adam", "sgdm": "sgdm", "rmsprop": "rmsprop"}
SHUFFLE_LABELS = {"never": "Never", "once": "Once", "every-epoch": "Every epoch"}
FIXED_EPOCHS, FIXED_BATCH = 10, 50
GRID_EPOCHS, GRID_BATCHES = 40, (20, 30, 40, 50, 60, 70)
GRID_BATCH, GRID_EPOCH_SET = 50, (10, 20, 30, 40, 50, 60)


@dataclass(frozen=True)
class SweepCell:
    group: str
    solver: str
    shuffle: str
    epochs: int
    batch_size: int
    runs: tuple[float, ...]

    @property
    def mean(self) -> float:
        return sum(self.runs) / len(self.runs)


@dataclass(frozen=True)
class SweepReport:
    axis: str
    cells: tuple[SweepCell, ...]
    seed: int

    @property
    def runs(self) -> int:
        return len(self.cells[0].runs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.runs
        w.writerow(["axis", "group", "solver", "shuffle", "epochs", "batch_size"]
                   + [f"run_{i + 1}" for i in range(n)] + ["mean"])  # fmt: skip
        for c in self.cells:
            w.writerow([self.axis, c.group, c.solver, c.shuffle, c.epochs, c.batch_size]
                       + [f"{r:.4f}" for r in c.runs] + [f"{c.mean:.4f}"])  # fmt: skip
        return buf.getvalue()

    def to_text(self) -> str:
        if self.axis == "batch-epoch":
            return _grid_table(self)
        if self.axis == "solvers":
            heads = [f"Validation Acc ({SOLVER_LABELS[c.solver]})" for c in self.cells]
        else:
            heads = [f"Validation Acc ({SHUFFLE_LABELS[c.shuffle]})" for c in self.cells]
        first = f"Epochs={self.cells[0].epochs}, MiniBS={self.cells[0].batch_size}"
        rows = [[first] + heads]
        for r in range(self.runs):
            rows.append([f"Test {r + 1}"] + [f"{c.runs[r]:.2f}%" for c in self.cells])
        rows.append(["Average"] + [f"{c.mean:.2f}%" for c in self.cells])
        return _render(rows, rule_after=(0, self.runs))


def _render(rows, rule_after=()) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    line = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    out = [line]
    for i, row in enumerate(rows):
        out.append("| " + " | ".join(v.center(w) for v, w in zip(row, widths)) + " |")
        if i in rule_after:
            out.append(line.replace("-", "="))
    out.append(line)
    return "\n".join(out) + "\n"


def _grid_table(report: SweepReport) -> str:
    left = [c for c in report.cells if c.group == "epochs"]
    right = [c for c in report.cells if c.group == "batch"]
    rows = [["epochs", "MiniBS", "Validation Accuracy", "", "MiniBS", "epochs", "Validation Accuracy"]]
    for a, b in zip(left, right):
        rows.append([str(a.epochs), str(a.batch_size), f"{a.mean:.2f}%", "",
                     str(b.batch_size), str(b.epochs), f"{b.mean:.2f}%"])  # fmt: skip
    return _render(rows, rule_after=(0,))


def sweep_cells(axis: str, base: TrainConfig) -> list[tuple[str, TrainConfig]]:
    """``(group, config)`` for every cell of the table, in table order."""
    if axis == "solvers":
        return [
            ("solver", replace(base, solver=replace(base.solver, kind=k), shuffle="every-epoch",
                               max_epochs=FIXED_EPOCHS, batch_size=FIXED_BATCH))  # fmt: skip
            for k in ("adam", "sgdm", "rmsprop")
        ]
    adam = replace(base.solver, kind="adam")
    if axis == "shuffles":
        return [
            ("shuffle", replace(base, solver=adam, shuffle=s, max_epochs=FIXED_EPOCHS,
                                batch_size=FIXED_BATCH))  # fmt: skip
            for s in ("never", "once", "every-epoch")
        ]
    if axis == "batch-epoch":
        cells = [
            ("epochs", replace(base, solver=adam, shuffle="every-epoch", max_epochs=GRID_EPOCHS,
                               batch_size=bs))  # fmt: skip
            for bs in GRID_BATCHES
        ]
        cells += [
            ("batch", replace(base, solver=adam, shuffle="every-epoch", max_epochs=ep,
                              batch_size=GRID_BATCH))  # fmt: skip
            for ep in GRID_EPOCH_SET
        ]
        return cells
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")


def _final_accuracy(cfg: TrainConfig) -> float:
    return train(cfg)[1].final_val_accuracy


def sweep(axis: str, base: TrainConfig, runs: int = 3, jobs: int = 1, train_fn=None) -> SweepReport:
    """Train every cell ``runs`` times with seeds ``base.seed + r``.

    Results are joined in table order, so the report does not depend on ``jobs``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    cells = sweep_cells(axis, base)
    tasks = [replace(cfg, seed=base.seed + r) for _, cfg in cells for r in range(runs)]
    fn = train_fn or _final_accuracy
    if jobs > 1 and train_fn is None:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            accs = list(pool.map(fn, tasks))
    else:
        accs = [fn(t) for t in tasks]
    out = []
    for i, (group, cfg) in enumerate(cells):
        out.append(
            SweepCell(group, cfg.solver.kind, cfg.shuffle, cfg.max_epochs, cfg.batch_size,
                      tuple(accs[i * runs : (i + 1) * runs]))  # fmt: skip
        )
    return SweepReport(axis, tuple(out), base.seed)
