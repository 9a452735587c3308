"""Monte Carlo campaigns over the engine: trial fan-out, aggregation, CSV.

Every campaign is fully determined by (config, base_seed): trial i draws
its RNG stream from the base seed and the global trial index, results are
merged in trial-index order, and CSV bytes are reproducible.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import metrics
from .engine import (ByzMode, Configuration, EngineError, FaultSpec, LeakModel,
                     LeakPool, ProtocolKind, StopMode, auto_margin, derive_seed,
                     init_configuration, kernel_seed, make_protocol, run,
                     sample_error)

TRIAL_HEADER = ("trial_index,seed,protocol,model,n_inputs,m_workers,margin,"
                "beta,leak_model,leak_pool,byz_mode,byz_count,horizon,"
                "steps_run,converged,steps_to_converge,terminal_class,"
                "final_x,final_y,final_b,sample_error,sample_success,"
                "cum_null,cum_xy,cum_blank,cum_leaks")
AGGREGATE_HEADER = ("group_key,trials,mean_sample_success,sd_sample_success,"
                    "wilson_lo,wilson_hi,conv_rate,mean_steps_converged")

_Z95 = 1.959963984540054


def worker_count() -> int:
    env = os.environ.get("POPDYN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def wilson_interval(successes: float, total: float, z: float = _Z95):
    """Wilson score interval; count-based, so it behaves at the boundaries."""
    if total <= 0:
        return 0.0, 1.0
    phat = successes / total
    denom = 1.0 + z * z / total
    centre = phat + z * z / (2 * total)
    adj = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total))
    return (centre - adj) / denom, (centre + adj) / denom


class ConfigError(ValueError):
    pass


_FAULT_KEYS = {"leak_model", "beta", "leak_pool", "byz_mode", "byz_count"}


@dataclass
class ExperimentConfig:
    protocol: str = "dbamc"
    model: str = "ci"
    n_inputs: object = 500        # int or sweep list
    m_workers: object = 500       # int or sweep list
    margin: object = "auto"       # int, "auto", {"auto": alpha}, or sweep list
    fault: dict = field(default_factory=dict)  # FaultSpec fields; beta may be a list
    horizon: object = "4nlogn"    # int or "<factor>nlogn"
    trials: int = 100
    base_seed: int = 0
    checkpoint_every: int = 0
    samples_per_trial: int = 1

    @classmethod
    def from_json(cls, path_or_dict) -> "ExperimentConfig":
        if isinstance(path_or_dict, dict):
            data = dict(path_or_dict)
        else:
            with open(path_or_dict) as fh:
                data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        fault = data.get("fault", {})
        bad = set(fault) - _FAULT_KEYS
        if bad:
            raise ConfigError(f"unknown fault keys: {sorted(bad)}")
        return cls(**data)


@dataclass(frozen=True)
class Cell:
    """One fully resolved point of a sweep."""
    protocol: str
    model: str
    n_inputs: int
    m_workers: int
    margin: int
    beta: float
    leak_model: str
    leak_pool: str
    byz_mode: str
    byz_count: int
    horizon: int
    stop: str  # StopMode value

    @property
    def group_key(self) -> str:
        return (f"protocol={self.protocol},n={self.n_inputs},"
                f"m={self.m_workers},margin={self.margin},beta={self.beta:.9g},"
                f"byz={self.byz_mode}:{self.byz_count}")

    def fault_spec(self) -> FaultSpec:
        return FaultSpec(leak_model=LeakModel(self.leak_model), beta=self.beta,
                         leak_pool=LeakPool(self.leak_pool),
                         byz_mode=ByzMode(self.byz_mode),
                         byz_count=self.byz_count)


def resolve_margin(margin, n_inputs: int, total: int, parity_of: int) -> int:
    if isinstance(margin, dict) and set(margin) == {"auto"}:
        return auto_margin(total, alpha=float(margin["auto"]), parity_of=parity_of)
    if margin == "auto":
        return auto_margin(total, parity_of=parity_of)
    return int(margin)


def resolve_horizon(horizon, total: int) -> int:
    if isinstance(horizon, str):
        if not horizon.endswith("nlogn"):
            raise ConfigError(f"bad horizon spec {horizon!r}")
        factor = float(horizon[:-len("nlogn")] or 1)
        return math.ceil(factor * total * math.log(total))
    return int(horizon)


def _as_list(v):
    return v if isinstance(v, (list, tuple)) else [v]


def resolve_cells(cfg: ExperimentConfig):
    """Cross-product of all swept parameters; invalid cells are reported,
    not fatal.  Returns (cells, errors)."""
    cells, errors = [], []
    fault = dict(cfg.fault)
    leak_model = fault.get("leak_model", "none")
    leak_pool = fault.get("leak_pool", "all")
    byz_mode = fault.get("byz_mode", "none")
    byz_count = int(fault.get("byz_count", 0))
    betas = _as_list(fault.get("beta", 0.0))
    for n in _as_list(cfg.n_inputs):
        for m in _as_list(cfg.m_workers):
            for margin in _as_list(cfg.margin):
                for beta in betas:
                    desc = f"n={n},m={m},margin={margin},beta={beta}"
                    try:
                        total = (n + m if cfg.model == "ci" else n) + byz_count
                        res_margin = resolve_margin(margin, n, total, parity_of=n)
                        horizon = resolve_horizon(cfg.horizon, total)
                        faulty = ((leak_model != "none" and beta > 0)
                                  or byz_mode != "none")
                        cell = Cell(
                            protocol=cfg.protocol, model=cfg.model,
                            n_inputs=n, m_workers=m if cfg.model == "ci" else 0,
                            margin=res_margin, beta=float(beta),
                            leak_model=leak_model, leak_pool=leak_pool,
                            byz_mode=byz_mode, byz_count=byz_count,
                            horizon=horizon,
                            stop=(StopMode.AT_HORIZON if faulty
                                  else StopMode.AT_CONVERGENCE).value)
                        _build_config(cell)  # validate eagerly
                        cells.append(cell)
                    except (EngineError, ConfigError) as exc:
                        errors.append((desc, str(exc)))
    return cells, errors


def _build_config(cell: Cell) -> Configuration:
    return init_configuration(cell.model, cell.n_inputs, cell.m_workers,
                              cell.margin, byz=cell.fault_spec())


@dataclass
class TrialRecord:
    trial_index: int
    seed: int
    cell: Cell
    steps_run: int
    converged: bool
    steps_to_converge: Optional[int]
    terminal_class: str
    final_x: int
    final_y: int
    final_b: int
    sample_error: float
    sample_success: float
    cum_null: int
    cum_xy: int
    cum_blank: int
    cum_leaks: int

    def to_row(self) -> dict:
        c = self.cell
        return {
            "trial_index": self.trial_index, "seed": self.seed,
            "protocol": c.protocol, "model": c.model,
            "n_inputs": c.n_inputs, "m_workers": c.m_workers,
            "margin": c.margin, "beta": c.beta,
            "leak_model": c.leak_model, "leak_pool": c.leak_pool,
            "byz_mode": c.byz_mode, "byz_count": c.byz_count,
            "horizon": c.horizon, "steps_run": self.steps_run,
            "converged": str(self.converged).lower(),
            "steps_to_converge": (self.steps_to_converge
                                  if self.steps_to_converge is not None else ""),
            "terminal_class": self.terminal_class,
            "final_x": self.final_x, "final_y": self.final_y,
            "final_b": self.final_b,
            "sample_error": self.sample_error,
            "sample_success": self.sample_success,
            "cum_null": self.cum_null, "cum_xy": self.cum_xy,
            "cum_blank": self.cum_blank, "cum_leaks": self.cum_leaks,
        }


def run_trial(cell: Cell, trial_index: int, base_seed: int,
              samples_per_trial: int, checkpoint_every: int = 0):
    """Execute one seeded trial; returns (TrialRecord, trajectory points)."""
    ss = derive_seed(base_seed, trial_index)
    kseed = kernel_seed(ss)
    cfg = _build_config(cell)
    spec = make_protocol(cell.protocol)
    fault = cell.fault_spec()
    result = run(cfg, spec, fault, seed=kseed, horizon=cell.horizon,
                 stop=StopMode(cell.stop), checkpoint_every=checkpoint_every)
    rng = np.random.Generator(np.random.PCG64(ss))
    m = result.final.workers
    p_maj = result.final.x / m if m else 0.0
    successes = int(rng.binomial(samples_per_trial, p_maj)) if m else 0
    record = TrialRecord(
        trial_index=trial_index, seed=kseed, cell=cell,
        steps_run=result.steps_run, converged=result.converged,
        steps_to_converge=result.steps_to_converge,
        terminal_class=result.terminal_class.value,
        final_x=result.final.x, final_y=result.final.y, final_b=result.final.b,
        sample_error=sample_error(result.final) if m else 1.0,
        sample_success=successes / samples_per_trial,
        cum_null=result.cum_null, cum_xy=result.cum_xy,
        cum_blank=result.cum_blank, cum_leaks=result.cum_leaks)
    return record, result.trajectory


def _trial_task(args):
    cell, trial_index, base_seed, samples = args
    record, _ = run_trial(cell, trial_index, base_seed, samples)
    return record


@dataclass
class AggregateRecord:
    group_key: str
    trials: int
    mean_sample_success: float
    sd_sample_success: float
    wilson_lo: float
    wilson_hi: float
    conv_rate: float
    mean_steps_converged: Optional[float]
    mean_sample_error: float = 0.0  # not part of the aggregate CSV schema

    def to_row(self) -> dict:
        return {
            "group_key": self.group_key, "trials": self.trials,
            "mean_sample_success": self.mean_sample_success,
            "sd_sample_success": self.sd_sample_success,
            "wilson_lo": self.wilson_lo, "wilson_hi": self.wilson_hi,
            "conv_rate": self.conv_rate,
            "mean_steps_converged": (self.mean_steps_converged
                                     if self.mean_steps_converged is not None
                                     else ""),
        }


def aggregate(records, group_key: str, samples_per_trial: int) -> AggregateRecord:
    succ = np.array([r.sample_success for r in records], dtype=float)
    total_draws = len(records) * samples_per_trial
    total_successes = float(succ.sum()) * samples_per_trial
    lo, hi = wilson_interval(total_successes, total_draws)
    conv = [r for r in records if r.converged]
    return AggregateRecord(
        group_key=group_key, trials=len(records),
        mean_sample_success=float(succ.mean()) if len(succ) else 0.0,
        sd_sample_success=float(succ.std(ddof=1)) if len(succ) > 1 else 0.0,
        wilson_lo=lo, wilson_hi=hi,
        conv_rate=len(conv) / len(records) if records else 0.0,
        mean_steps_converged=(float(np.mean([r.steps_to_converge for r in conv]))
                              if conv else None),
        mean_sample_error=float(np.mean([r.sample_error for r in records]))
        if records else 1.0)


@dataclass
class CampaignResult:
    trials: list
    aggregates: list
    cell_errors: list


def _run_cells(cells, trials: int, base_seed: int, samples_per_trial: int,
               parallel: Optional[bool] = None):
    tasks = []
    idx = 0
    for cell in cells:
        for _ in range(trials):
            tasks.append((cell, idx, base_seed, samples_per_trial))
            idx += 1
    nworkers = worker_count()
    if parallel is None:
        parallel = nworkers > 1 and len(tasks) >= 64
    if parallel:
        chunk = max(1, len(tasks) // (nworkers * 8))
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            records = list(pool.map(_trial_task, tasks, chunksize=chunk))
    else:
        records = [_trial_task(t) for t in tasks]
    aggregates = []
    for i, cell in enumerate(cells):
        group = records[i * trials:(i + 1) * trials]
        aggregates.append(aggregate(group, cell.group_key, samples_per_trial))
    return records, aggregates


def run_campaign(cfg: ExperimentConfig,
                 parallel: Optional[bool] = None) -> CampaignResult:
    """Full cross-product of sweep lists x trials."""
    cells, errors = resolve_cells(cfg)
    records, aggregates = _run_cells(cells, cfg.trials, cfg.base_seed,
                                     cfg.samples_per_trial, parallel=parallel)
    return CampaignResult(trials=records, aggregates=aggregates,
                          cell_errors=errors)


# ---------------------------------------------------------------------------
# Pre-built campaigns


def figure2_beta_values(total: int):
    return [0.0, 1.0 / total, math.log(total) / total,
            math.sqrt(total * math.log(total)) / (8.0 * total)]


def figure2_campaign(out_dir, sizes=(300, 1000, 5000), base_seed: int = 2024,
                     checkpoints: int = 200):
    """3x4 grid of single DBAMC trajectories (population size x leak rate),
    one trajectory CSV per cell."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    idx = 0
    for size in sizes:
        total = 2 * size
        margin = auto_margin(total, parity_of=size)
        horizon = resolve_horizon("4nlogn", total)
        for bi, beta in enumerate(figure2_beta_values(total)):
            cell = Cell(protocol="dbamc", model="ci", n_inputs=size,
                        m_workers=size, margin=margin, beta=beta,
                        leak_model="adversarial" if beta > 0 else "none",
                        leak_pool="all", byz_mode="none", byz_count=0,
                        horizon=horizon, stop=StopMode.AT_HORIZON.value)
            _, trajectory = run_trial(cell, idx, base_seed, 1,
                                      checkpoint_every=max(1, horizon // checkpoints))
            params = metrics.PhaseParams(m=size, n=size, margin=margin,
                                         beta=beta, ci=True)
            path = os.path.join(out_dir, f"fig2_m{size}_b{bi}_beta{beta:.6g}.csv")
            metrics.write_trajectory_csv(trajectory, params, path)
            paths.append((cell, path))
            idx += 1
    return paths


FIGURE3_M_SWEEP = (60, 150, 300, 600, 1200, 2400, 3000)


def figure3_campaign(trials: int = 3000, m_list=FIGURE3_M_SWEEP,
                     n_inputs: int = 600, base_seed: int = 2024,
                     samples_per_trial: int = 1, out_dir=None,
                     parallel: Optional[bool] = None):
    """Success-rate sweep over worker count at leak rate 1/N, margin
    sqrt(N ln N), sampling after 4 N ln N steps."""
    cells = []
    for m in m_list:
        total = n_inputs + m
        cells.append(Cell(
            protocol="dbamc", model="ci", n_inputs=n_inputs, m_workers=m,
            margin=auto_margin(total, parity_of=n_inputs), beta=1.0 / total,
            leak_model="adversarial", leak_pool="all", byz_mode="none",
            byz_count=0, horizon=resolve_horizon("4nlogn", total),
            stop=StopMode.AT_HORIZON.value))
    records, aggregates = _run_cells(cells, trials, base_seed,
                                     samples_per_trial, parallel=parallel)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv([r.to_row() for r in records],
                  os.path.join(out_dir, "fig3_trials.csv"), TRIAL_HEADER)
        write_csv([a.to_row() for a in aggregates],
                  os.path.join(out_dir, "fig3_agg.csv"), AGGREGATE_HEADER)
    return records, aggregates


def margin_threshold_campaign(n: int, m: int, margins, trials: int = 300,
                              base_seed: int = 2024,
                              parallel: Optional[bool] = None):
    """Convergence rate within 4 N ln N steps per input margin."""
    if list(margins) != sorted(margins):
        raise ConfigError("margins must be sorted ascending")
    total = n + m
    cells = []
    for margin in margins:
        if (margin + n) % 2 != 0:
            margin += 1  # keep counts integral
        cells.append(Cell(
            protocol="dbamc", model="ci", n_inputs=n, m_workers=m,
            margin=margin, beta=0.0, leak_model="none", leak_pool="all",
            byz_mode="none", byz_count=0,
            horizon=resolve_horizon("4nlogn", total),
            stop=StopMode.AT_CONVERGENCE.value))
    records, aggregates = _run_cells(cells, trials, base_seed, 1,
                                     parallel=parallel)
    return records, aggregates


@dataclass
class EquivalencePair:
    factor: float
    byz_count: int
    aggregate: AggregateRecord
    mean_error_ratio: float  # Byzantine side / leak side


@dataclass
class EquivalenceResult:
    leak_aggregate: AggregateRecord
    pairs: list


def equivalence_campaign(N: int, beta: float, factor_list=(1.0, 2.0, 4.0),
                         trials: int = 500, base_seed: int = 2024,
                         samples_per_trial: int = 1,
                         parallel: Optional[bool] = None) -> EquivalenceResult:
    """Weak leaks at rate beta vs stubborn-Y Byzantine agents: paired mean
    sample errors and their ratio for each Byzantine census factor."""
    if not 0.0 <= beta <= 0.1:
        raise ConfigError("equivalence campaign expects beta in [0, 0.1]")
    margin = auto_margin(N, parity_of=N)
    leak_cell = Cell(protocol="dbam", model="standard", n_inputs=N,
                     m_workers=0, margin=margin, beta=beta,
                     leak_model="weak" if beta > 0 else "none",
                     leak_pool="all", byz_mode="none", byz_count=0,
                     horizon=resolve_horizon("4nlogn", N),
                     stop=(StopMode.AT_HORIZON if beta > 0
                           else StopMode.AT_CONVERGENCE).value)
    records, aggs = _run_cells([leak_cell], trials, base_seed,
                               samples_per_trial, parallel=parallel)
    leak_agg = aggs[0]
    pairs = []
    byz_cells = []
    for f in factor_list:
        B = math.ceil(f * N * beta)
        byz_cells.append(Cell(
            protocol="dbam", model="standard", n_inputs=N, m_workers=0,
            margin=margin, beta=0.0, leak_model="none", leak_pool="all",
            byz_mode="stubborn", byz_count=B,
            horizon=math.ceil(4 * (N + B) * math.log(N)),
            stop=(StopMode.AT_HORIZON if B > 0
                  else StopMode.AT_CONVERGENCE).value))
    _, byz_aggs = _run_cells(byz_cells, trials, base_seed + 1,
                             samples_per_trial, parallel=parallel)
    for f, cell, agg in zip(factor_list, byz_cells, byz_aggs):
        ratio = (agg.mean_sample_error / leak_agg.mean_sample_error
                 if leak_agg.mean_sample_error > 0 else math.inf)
        pairs.append(EquivalencePair(factor=f, byz_count=cell.byz_count,
                                     aggregate=agg, mean_error_ratio=ratio))
    return EquivalenceResult(leak_aggregate=leak_agg, pairs=pairs)


# ---------------------------------------------------------------------------
# CSV I/O


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.9g}"
    return v


def write_csv(rows, path, header: str) -> None:
    """RFC-4180 CSV with the exact schematized header; floats at 9
    significant digits; row order preserved."""
    fields_ = header.split(",")
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields_, lineterminator="\r\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(row[k]) for k in fields_})
    except OSError as exc:
        raise OSError(f"failed writing CSV to {path}: {exc}") from exc


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
