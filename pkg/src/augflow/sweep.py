"""Experiment sweeps: cell expansion, execution, summaries, and plots.

A sweep's cells are the cross product of the configured axes (objective,
alpha, grid side, seed). Cells are independent and may run in a process pool;
each cell re-derives everything from its own config, so results do not depend
on worker count or execution order. One metrics CSV and one visit-count CSV
per cell, plus a manifest and copies of the source configs, make the output
directory self-describing and byte-reproducible.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from augflow import svgplot
from augflow.configio import ExperimentSpec, trainer_config_from_items
from augflow.env import GridConfig, make_grid
from augflow.trainer import CSV_HEADER, train

METRICS = ("l1_error", "modes", "loss", "mean_intrinsic", "topk_reward")


@dataclass(frozen=True)
class Cell:
    index: int
    objective: str
    alpha: float
    side: int
    seed: int

    @property
    def name(self) -> str:
        return (
            f"cell{self.index:03d}__{self.objective}_H{self.side}"
            f"_a{self.alpha:g}_seed{self.seed}"
        )

    @property
    def config_key(self) -> str:
        """Grouping key: everything but the seed."""
        return f"{self.objective}_H{self.side}_a{self.alpha:g}"


def expand_cells(spec: ExperimentSpec) -> list[Cell]:
    base = trainer_config_from_items(dict(spec.trainer_items))
    objectives = spec.objectives or [base.objective]
    alphas = spec.alphas or [base.intrinsic.alpha]
    sides = spec.sides or [spec.grid.side]
    seeds = spec.seeds or [base.seed]
    cells = []
    i = 0
    for obj in objectives:
        for alpha in alphas:
            for side in sides:
                for seed in seeds:
                    cells.append(Cell(i, obj, alpha, side, seed))
                    i += 1
    return cells


def cell_grid(spec: ExperimentSpec, cell: Cell) -> GridConfig:
    if cell.side == spec.grid.side:
        return spec.grid
    # changing the side re-derives the default goal layout at the new size
    return make_grid(
        cell.side,
        reward_floor=spec.grid.reward_floor,
        goal_reward=spec.grid.goal_reward,
    )


def cell_trainer_items(spec: ExperimentSpec, cell: Cell) -> dict[str, str]:
    items = dict(spec.trainer_items)
    items["objective"] = cell.objective
    items["alpha"] = repr(cell.alpha)
    items["seed"] = str(cell.seed)
    return items


def run_cell(spec: ExperimentSpec, cell: Cell) -> tuple[str, str]:
    """Execute one cell; returns (cell name, status line)."""
    try:
        grid = cell_grid(spec, cell)
        cfg = trainer_config_from_items(cell_trainer_items(spec, cell))
        record = train(cfg, grid)
        out = Path(spec.output_dir)
        (out / f"{cell.name}.csv").write_text(record.rows_csv())
        (out / f"{cell.name}_visits.csv").write_text(record.visits_csv())
        return cell.name, "ok"
    except Exception as e:  # noqa: BLE001 - cell failures are reported, not fatal
        return cell.name, f"failed: {type(e).__name__}: {e}"


def _run_cell_star(args):
    return run_cell(*args)


def run_sweep(spec: ExperimentSpec, workers: int = 1, cap: int | None = None) -> int:
    """Run every cell; returns 0 on success, 2 if any cell failed.

    The cross-product size is bounded by the cap (CLI flag wins over the
    spec's value); exceeding it is a configuration error, raised before any
    cell runs.
    """
    cells = expand_cells(spec)
    limit = cap if cap is not None else spec.cap
    if len(cells) > limit:
        raise ValueError(f"sweep has {len(cells)} cells, cap is {limit}")
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in spec.source_texts.items():
        (out / name).write_text(text)

    if workers > 1 and len(cells) > 1:
        ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
        with ctx.Pool(processes=min(workers, len(cells))) as pool:
            results = pool.map(_run_cell_star, [(spec, c) for c in cells])
    else:
        results = [run_cell(spec, c) for c in cells]

    status = dict(results)
    lines = ["# cell objective H alpha seed status"]
    for c in cells:
        lines.append(
            f"{c.name} objective={c.objective} H={c.side} alpha={c.alpha:g} "
            f"seed={c.seed} status={status[c.name]}"
        )
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    return 0 if all(v == "ok" for v in status.values()) else 2


# ---------------------------------------------------------------------------
# reading results back

def read_metrics_csv(path: Path) -> dict[str, np.ndarray]:
    lines = path.read_text().strip().splitlines()
    if lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {lines[0]!r}")
    cols = CSV_HEADER.split(",")
    data = np.asarray(
        [[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.float64
    )
    return {c: data[:, i] for i, c in enumerate(cols)}


def load_manifest(out_dir: Path) -> list[dict[str, str]]:
    rows = []
    for line in (out_dir / "manifest.txt").read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        name, rest = line.split(" ", 1)
        entry = {"cell": name}
        for part in rest.split(" "):
            k, v = part.split("=", 1)
            entry[k] = v
        rows.append(entry)
    return rows


@dataclass
class ConfigSummary:
    key: str
    n_seeds: int
    final_l1_mean: float
    final_l1_std: float
    final_modes_mean: float
    final_modes_std: float
    modes_auc_mean: float
    modes_auc_std: float


def summarize(out_dir: str | Path) -> tuple[list[ConfigSummary], list[str]]:
    """Per-configuration statistics across seeds plus the missing-cell list."""
    out = Path(out_dir)
    entries = load_manifest(out)
    groups: dict[str, list[dict[str, np.ndarray]]] = {}
    missing: list[str] = []
    for e in entries:
        csv = out / f"{e['cell']}.csv"
        if e["status"] != "ok" or not csv.exists():
            missing.append(e["cell"])
            continue
        key = f"{e['objective']}_H{e['H']}_a{e['alpha']}"
        groups.setdefault(key, []).append(read_metrics_csv(csv))
    summaries = []
    for key in sorted(groups):
        runs = groups[key]
        final_l1 = np.array([r["l1_error"][-1] for r in runs])
        final_modes = np.array([r["modes"][-1] for r in runs])
        aucs = np.array([np.trapezoid(r["modes"], r["update"]) for r in runs])
        summaries.append(
            ConfigSummary(
                key=key,
                n_seeds=len(runs),
                final_l1_mean=float(final_l1.mean()),
                final_l1_std=float(final_l1.std()),
                final_modes_mean=float(final_modes.mean()),
                final_modes_std=float(final_modes.std()),
                modes_auc_mean=float(aucs.mean()),
                modes_auc_std=float(aucs.std()),
            )
        )
    return summaries, missing


def write_summary(out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    summaries, missing = summarize(out)
    csv_lines = [
        "config,n_seeds,final_l1_mean,final_l1_std,final_modes_mean,"
        "final_modes_std,modes_auc_mean,modes_auc_std"
    ]
    for s in summaries:
        csv_lines.append(
            f"{s.key},{s.n_seeds},{s.final_l1_mean!r},{s.final_l1_std!r},"
            f"{s.final_modes_mean!r},{s.final_modes_std!r},"
            f"{s.modes_auc_mean!r},{s.modes_auc_std!r}"
        )
    csv_path = out / "summary.csv"
    csv_path.write_text("\n".join(csv_lines) + "\n")

    width = max([len(s.key) for s in summaries] + [6])
    txt = [
        f"{'config':<{width}}  seeds  final L1 (mean+/-std)   final modes     modes AUC"
    ]
    for s in summaries:
        txt.append(
            f"{s.key:<{width}}  {s.n_seeds:>5}  "
            f"{s.final_l1_mean:.6f}+/-{s.final_l1_std:.6f}  "
            f"{s.final_modes_mean:.2f}+/-{s.final_modes_std:.2f}  "
            f"{s.modes_auc_mean:.1f}+/-{s.modes_auc_std:.1f}"
        )
    if missing:
        txt.append("missing cells: " + ", ".join(missing))
    txt_path = out / "summary.txt"
    txt_path.write_text("\n".join(txt) + "\n")
    return csv_path, txt_path


def plot(out_dir: str | Path) -> list[Path]:
    """One SVG per metric: mean curve per configuration with a +/-1 std band."""
    out = Path(out_dir)
    entries = load_manifest(out)
    groups: dict[str, list[dict[str, np.ndarray]]] = {}
    for e in entries:
        csv = out / f"{e['cell']}.csv"
        if e["status"] != "ok" or not csv.exists():
            continue
        key = f"{e['objective']}_H{e['H']}_a{e['alpha']}"
        groups.setdefault(key, []).append(read_metrics_csv(csv))
    paths = []
    for metric in METRICS:
        series = []
        for key in sorted(groups):
            runs = groups[key]
            n = min(r[metric].shape[0] for r in runs)
            stack = np.stack([r[metric][:n] for r in runs])
            series.append(
                svgplot.Series(
                    name=key,
                    x=runs[0]["update"][:n],
                    mean=stack.mean(axis=0),
                    std=stack.std(axis=0) if len(runs) > 1 else None,
                )
            )
        path = out / f"plot_{metric}.svg"
        svgplot.line_chart(path, metric, "update", metric, series)
        paths.append(path)
    return paths
