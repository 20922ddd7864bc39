"""Multi-trial orchestration, result files and checkpoints."""

from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_to_dict, config_to_text, load_config
from .env import EnvState
from .learner import Population, run_training
from .metrics import MetricsRow
from .nn import deserialize_params, hidden_width, serialize_params, sync_target

CSV_HEADER = "k,mean_return,std_return,exploitability,seconds"
THREADS_ENV = "MFGMESH_THREADS"


@dataclass
class TrialResult:
    trial: int
    seed: int
    rows: list[MetricsRow]
    population: Population | None = field(default=None, repr=False)
    checkpoint: Path | None = None


def trial_seed(config: ExperimentConfig, trial: int) -> int:
    return config.seed + trial


def run_trial(config: ExperimentConfig, trial: int) -> TrialResult:
    seed = trial_seed(config, trial)
    pop, rows = run_training(config, seed)
    return TrialResult(trial, seed, rows, pop)


def worker_count(config: ExperimentConfig, requested: int | None = None) -> int:
    cap = requested or os.cpu_count() or 1
    env_cap = os.environ.get(THREADS_ENV)
    if env_cap:
        cap = min(cap, max(1, int(env_cap)))
    return max(1, min(cap, config.trials))


def run_trials(config: ExperimentConfig, workers: int | None = None) -> list[TrialResult]:
    """Run every trial; trial ``t`` is seeded with ``config.seed + t``.

    Trials share no state, so the results do not depend on worker count or
    scheduling order.
    """
    n = worker_count(config, workers)
    trials = range(config.trials)
    if n == 1:
        return [run_trial(config, t) for t in trials]
    with ProcessPoolExecutor(max_workers=n) as pool:
        results = list(pool.map(run_trial, [config] * config.trials, trials))
    return sorted(results, key=lambda r: r.trial)


# --- result files ------------------------------------------------------------

def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def rows_to_csv(rows: list[MetricsRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(f"{r.k},{_fmt(r.mean_return)},{_fmt(r.std_return)},"
                     f"{_fmt(r.exploitability)},{_fmt(r.seconds)}")
    return "\n".join(lines) + "\n"


def read_csv_rows(path) -> list[MetricsRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header")
    rows = []
    for line in lines[1:]:
        k, mean, std, ex, sec = line.split(",")
        rows.append(MetricsRow(int(k), float(mean), float(std),
                               float(ex) if ex else None, float(sec)))
    return rows


def _mean_std(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def summarize(config: ExperimentConfig, results: list[TrialResult]) -> dict:
    """Cross-trial mean and population std of both metrics at every iteration."""
    per_k = []
    for k in range(config.K):
        returns = [r.rows[k].mean_return for r in results]
        exploits = [r.rows[k].exploitability for r in results
                    if r.rows[k].exploitability is not None]
        ret_mean, ret_std = _mean_std(returns)
        ex_mean, ex_std = _mean_std(exploits)
        per_k.append({"k": k, "return_mean": ret_mean, "return_std": ret_std,
                      "exploitability_mean": ex_mean, "exploitability_std": ex_std})
    obs_dim = results[0].population.obs_dim if results and results[0].population else None
    metadata = {
        "version": __version__,
        "seeds": [r.seed for r in results],
        "std": "population (divides by the number of trials / agents)",
    }
    if obs_dim is not None:
        width = hidden_width(obs_dim)
        metadata["hidden_width"] = width
        metadata["hidden_width_floored"] = width > (1 << (obs_dim.bit_length() - 1))
    return {"label": config.label, "config": config_to_dict(config),
            "metadata": metadata, "per_k": per_k}


def export_results(config: ExperimentConfig, results: list[TrialResult], out_dir,
                   force: bool = False, checkpoints: bool = True) -> dict:
    """Write ``trial_<t>.csv`` files, ``summary.json``, ``config.txt`` and checkpoints.

    An existing ``out_dir`` is only reused when ``force`` is set.
    """
    out = Path(out_dir)
    if out.exists() and not force:
        raise FileExistsError(f"{out} already exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    for r in results:
        (out / f"trial_{r.trial}.csv").write_text(rows_to_csv(r.rows))
        if checkpoints and r.population is not None:
            r.checkpoint = save_checkpoint(r.population, out / "checkpoints" / f"trial_{r.trial}",
                                           iteration=len(r.rows), seed=r.seed)
    summary = summarize(config, results)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "config.txt").write_text(config_to_text(config))
    return summary


def load_summary(out_dir) -> dict:
    path = Path(out_dir) / "summary.json"
    if not path.exists():
        raise FileNotFoundError(f"no summary.json in {out_dir}")
    return json.loads(path.read_text())


# --- checkpoints -------------------------------------------------------------
# agent_<i>.bin: u64 iteration index followed by the serialized parameters.

def save_checkpoint(pop: Population, directory, iteration: int, seed: int) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, lrn in enumerate(pop.learners):
        (d / f"agent_{i}.bin").write_bytes(struct.pack("<Q", iteration) + serialize_params(lrn.params))
    state = {"iteration": iteration, "seed": seed, "time": pop.env.time,
             "positions": pop.env.positions.tolist(),
             "entity": list(pop.env.entity) if pop.env.entity is not None else None}
    (d / "state.json").write_text(json.dumps(state) + "\n")
    (d / "config.txt").write_text(config_to_text(pop.config))
    return d


def read_agent_checkpoint(path) -> tuple[int, bytes]:
    blob = Path(path).read_bytes()
    (iteration,) = struct.unpack_from("<Q", blob, 0)
    return iteration, blob[8:]


def load_checkpoint(directory) -> Population:
    """Rebuild a population from saved parameters and environment state.

    Random streams and optimiser moments restart from the trial seed, so
    anything run on the restored population is reproducible but does not
    continue the original streams.
    """
    d = Path(directory)
    config = load_config(d / "config.txt")
    state = json.loads((d / "state.json").read_text())
    pop = Population(config, state["seed"] + state["iteration"])
    for i, lrn in enumerate(pop.learners):
        _, blob = read_agent_checkpoint(d / f"agent_{i}.bin")
        lrn.params = deserialize_params(blob)
        lrn.target = sync_target(lrn.params)
    entity = tuple(state["entity"]) if state["entity"] is not None else None
    pop.env = EnvState(np.asarray(state["positions"], dtype=np.int64), entity, state["time"])
    pop.refresh_observation()
    return pop
