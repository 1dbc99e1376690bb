"""Experiment grid over neuron counts, astrocyte proportions and seeds."""
import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import analysis
from .readout import LossHistory, TrainConfig, TrainingDivergence, train
from .reservoir import ReservoirDivergence, ReservoirSpec, build

log = logging.getLogger(__name__)

PAPER_NEURON_COUNTS = (10, 50, 200, 300, 400)
PROPORTION_INDICES = tuple(range(1, 11))


def astrocyte_factor(n):
    if not 1 <= n <= 10:
        raise ValueError(f"proportion index must be in 1..10, got {n}")
    return 0.75 + 0.25 * n


def astrocyte_count(n_neurons, n):
    """Astrocytes for neuron count ``n_neurons`` at proportion index ``n``: (3/4 + n/4) * N.

    Rounded half-to-even (Python's ``round``); never below 1.
    """
    if n_neurons < 1:
        raise ValueError(f"neuron count must be positive, got {n_neurons}")
    return max(1, round(astrocyte_factor(n) * n_neurons))


@dataclass
class SweepConfig:
    neuron_counts: List[int] = field(default_factory=lambda: list(PAPER_NEURON_COUNTS))
    proportion_indices: List[int] = field(default_factory=lambda: list(PROPORTION_INDICES))
    seeds_per_cell: int = 2
    jobs: Optional[int] = None

    def __post_init__(self):
        if any(c < 2 for c in self.neuron_counts):
            raise ValueError("all neuron counts must be >= 2")
        if any(not 1 <= n <= 10 for n in self.proportion_indices):
            raise ValueError("proportion indices must lie in 1..10")
        if self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be >= 1")

    def cells(self):
        for N in self.neuron_counts:
            for n in self.proportion_indices:
                for s in range(self.seeds_per_cell):
                    yield N, n, s


@dataclass
class RunRecord:
    N: int
    A: int
    n_index: int
    seed_index: int
    seed: int
    ratio: float
    train_slope: float = float("nan")
    val_slope: float = float("nan")
    train_plateau: float = float("nan")
    val_plateau: float = float("nan")
    train_plateau_start: int = 0
    val_plateau_start: int = 0
    plateau_fallback: bool = False
    final_train_loss: float = float("nan")
    final_val_loss: float = float("nan")
    diverged: bool = False
    batch_loss_path: str = ""
    epoch_loss_path: str = ""

    @property
    def key(self):
        return (self.N, self.n_index, self.seed_index)


RECORD_FIELDS = [f.name for f in fields(RunRecord)]


def run_seed(global_seed, N, n, seed_index):
    return int(np.random.SeedSequence([global_seed, N, n, seed_index]).generate_state(1)[0])


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_records(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in RECORD_FIELDS])


def read_records(path):
    types = {f.name: f.type for f in fields(RunRecord)}
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RECORD_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            kw = {}
            for k in RECORD_FIELDS:
                t = types[k]
                v = row[k]
                if t in (bool, "bool"):
                    kw[k] = v.strip().lower() in ("1", "true")
                elif t in (int, "int"):
                    kw[k] = int(v)
                elif t in (float, "float"):
                    kw[k] = float(v)
                else:
                    kw[k] = v
            out.append(RunRecord(**kw))
    return out


def summarize_history(record, hist: LossHistory, slope_epochs=10, window=5, tol=0.01):
    record.train_slope = analysis.learning_rate(hist.epoch_train, slope_epochs)
    record.final_train_loss = hist.epoch_train[-1]
    fallback = False
    if len(hist.epoch_train) >= 20:
        p = analysis.plateau_loss(hist.epoch_train, window, tol)
        record.train_plateau, record.train_plateau_start = p.mean, p.start_epoch
        fallback |= p.fallback
    if np.all(np.isfinite(hist.epoch_val)):
        record.val_slope = analysis.learning_rate(hist.epoch_val, slope_epochs)
        record.final_val_loss = hist.epoch_val[-1]
        if len(hist.epoch_val) >= 20:
            p = analysis.plateau_loss(hist.epoch_val, window, tol)
            record.val_plateau, record.val_plateau_start = p.mean, p.start_epoch
            fallback |= p.fallback
    record.plateau_fallback = fallback
    return record


def run_cell(dataset, reservoir_template: ReservoirSpec, train_cfg: TrainConfig, global_seed,
             N, n, seed_index, out_dir=None, slope_epochs=10, window=5, tol=0.01) -> RunRecord:
    """One (N, n, seed) cell: build reservoir, train the readout, summarise the loss curves."""
    A = astrocyte_count(N, n)
    seed = run_seed(global_seed, N, n, seed_index)
    rec = RunRecord(N=N, A=A, n_index=n, seed_index=seed_index, seed=seed, ratio=A / N)
    spec = replace(reservoir_template, n_neurons=N, n_astrocytes=A, seed=seed)
    try:
        weights = build(spec)
        _, hist, _ = train(spec, weights, dataset, train_cfg, seed=seed)
    except (TrainingDivergence, ReservoirDivergence) as exc:
        log.warning("run N=%d A=%d seed=%d diverged: %s", N, A, seed, exc)
        rec.diverged = True
        return rec
    if out_dir is not None:
        stem = f"N{N}_n{n}_s{seed_index}"
        base = Path(out_dir) / "losses"
        hist.write_csv(base / f"{stem}_batches.csv", base / f"{stem}_epochs.csv")
        rec.batch_loss_path = f"losses/{stem}_batches.csv"
        rec.epoch_loss_path = f"losses/{stem}_epochs.csv"
    return summarize_history(rec, hist, slope_epochs, window, tol)


def _cell_task(args):
    return run_cell(*args)


def default_jobs():
    env = os.environ.get("ASTROLSM_JOBS")
    if env:
        return max(1, int(env))
    return 1


def run_sweep(cfg: SweepConfig, dataset, reservoir_template: ReservoirSpec,
              train_cfg: TrainConfig, global_seed=0, out_dir=None, jobs=None,
              slope_epochs=10, window=5, tol=0.01) -> List[RunRecord]:
    """Run every cell; results are ordered by (N, n, seed index) whatever the schedule."""
    if train_cfg.epochs < slope_epochs:
        raise ValueError(f"sweep needs at least {slope_epochs} training epochs to measure the "
                         f"learning rate, got {train_cfg.epochs}")
    cells = list(cfg.cells())
    jobs = jobs or cfg.jobs or default_jobs()
    tasks = [(dataset, reservoir_template, train_cfg, global_seed, N, n, s, out_dir,
              slope_epochs, window, tol) for N, n, s in cells]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_cell_task, tasks))
    else:
        records = []
        for k, t in enumerate(tasks):
            records.append(_cell_task(t))
            log.info("cell %d/%d done (N=%d, n=%d, seed %d)", k + 1, len(tasks), *t[4:7])
    records.sort(key=lambda r: r.key)
    return records
