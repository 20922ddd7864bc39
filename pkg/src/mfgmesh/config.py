"""Experiment configuration: defaults, validation and the ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, fields
from pathlib import Path

from .env import GridConfig, ObservationMode, TaskKind


class ArchitectureKind(str, enum.Enum):
    NETWORKED = "Networked"
    CENTRALISED = "Centralised"
    INDEPENDENT = "Independent"


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when there is one."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


AUTO = "auto"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = ""
    width: int = 10
    height: int = 10
    task: TaskKind = TaskKind.CLUSTER
    n_agents: int = 500
    architecture: ArchitectureKind = ArchitectureKind.NETWORKED
    obs_mode: ObservationMode = ObservationMode.LOCAL_ONLY
    estimator: str = "visibility"
    comm_radius_fraction: float = 0.5
    vis_radius_fraction: float = 0.5
    K: int = 100
    M: int = 50
    L: int = 50
    E: int = 20
    C_p: int = 1
    C_e: int = 1
    gamma: float = 0.9
    tau_q: float = 0.03
    cl: float = -1.0
    batch_size: int = 32
    adam_lr: float = 0.01
    nu: int | None = None  # None means L - 1
    tau_comm_start: float = 0.001
    tau_comm_end: float = 1.0
    trials: int = 10
    seed: int = 0
    exploitability_every: int | None = None  # None: 2, or 4 if population-dependent; 0 disables
    exploit_improve_iters: int = 50
    exploit_eval_loops: int = 10
    shark_noise_prob: float = 0.01
    targets: tuple[tuple[int, int], ...] | None = None  # None: the four corners

    def __post_init__(self):
        _coerce_enums(self)
        validate(self)

    @property
    def label(self) -> str:
        return self.name or self.architecture.value

    @property
    def target_period(self) -> int:
        return self.nu if self.nu is not None else max(self.L - 1, 1)

    @property
    def exploit_period(self) -> int:
        if self.exploitability_every is not None:
            return self.exploitability_every
        return 4 if self.obs_mode.population_dependent else 2

    @property
    def resolved_targets(self) -> tuple[tuple[int, int], ...]:
        if self.task is not TaskKind.TARGET_AGREEMENT:
            return ()
        if self.targets is None:
            return GridConfig.corner_targets(self.width, self.height)
        return self.targets

    def grid(self) -> GridConfig:
        return GridConfig(self.width, self.height, self.task, self.n_agents,
                          self.resolved_targets, self.shark_noise_prob)

    def tau_comm(self, k: int) -> float:
        """Adoption temperature at iteration ``k``, linear from start to end over the run."""
        if self.K <= 1:
            return self.tau_comm_start
        return self.tau_comm_start + (self.tau_comm_end - self.tau_comm_start) * k / (self.K - 1)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_ENUMS = {"task": TaskKind, "architecture": ArchitectureKind, "obs_mode": ObservationMode}


def _coerce_enums(cfg: ExperimentConfig) -> None:
    for key, kind in _ENUMS.items():
        value = getattr(cfg, key)
        try:
            object.__setattr__(cfg, key, kind(value))
        except ValueError:
            choices = ", ".join(m.value for m in kind)
            raise ConfigError(f"{key}: {value!r} is not one of {choices}", key) from None


def validate(cfg: ExperimentConfig) -> None:
    def need(ok: bool, key: str, msg: str):
        if not ok:
            raise ConfigError(f"{key}: {msg} (got {getattr(cfg, key)!r})", key)

    need(cfg.width >= 2, "width", "must be >= 2")
    need(cfg.height >= 2, "height", "must be >= 2")
    need(cfg.n_agents >= 2, "n_agents", "must be >= 2")
    for key in ("K", "M", "L", "E", "batch_size", "trials"):
        need(getattr(cfg, key) >= 1, key, "must be >= 1")
    for key in ("C_p", "C_e", "exploit_improve_iters", "exploit_eval_loops"):
        need(getattr(cfg, key) >= 0, key, "must be >= 0")
    need(cfg.estimator in ("visibility", "general"), "estimator", "must be visibility or general")
    for key in ("comm_radius_fraction", "vis_radius_fraction", "shark_noise_prob"):
        need(0.0 <= getattr(cfg, key) <= 1.0, key, "must lie in [0, 1]")
    need(0.0 < cfg.gamma < 1.0, "gamma", "must lie in (0, 1)")
    need(cfg.tau_q > 0, "tau_q", "must be positive")
    need(cfg.cl < 0, "cl", "must be negative")
    need(cfg.adam_lr > 0, "adam_lr", "must be positive")
    need(cfg.nu is None or cfg.nu >= 1, "nu", "must be >= 1")
    need(cfg.tau_comm_start > 0, "tau_comm_start", "must be positive")
    need(cfg.tau_comm_end > 0, "tau_comm_end", "must be positive")
    need(cfg.seed >= 0, "seed", "must be >= 0")
    need(cfg.exploitability_every is None or cfg.exploitability_every >= 0,
         "exploitability_every", "must be >= 0")
    need(not (cfg.architecture is ArchitectureKind.CENTRALISED
              and cfg.obs_mode is ObservationMode.ESTIMATED_MEAN_FIELD),
         "obs_mode", "Centralised learners observe the true mean field; use GlobalMeanField")
    if cfg.targets is not None:
        need(cfg.task is TaskKind.TARGET_AGREEMENT, "targets", "only valid for TargetAgreement")
        need(len(cfg.targets) > 0, "targets", "must list at least one cell")
        for r, c in cfg.targets:
            need(0 <= r < cfg.height and 0 <= c < cfg.width, "targets", "cell outside the grid")


# --- text format -------------------------------------------------------------

def _parse_targets(text: str):
    cells = []
    for part in text.split(";"):
        part = part.strip()
        if part:
            r, c = part.split(",")
            cells.append((int(r), int(c)))
    return tuple(cells)


def _format_targets(targets) -> str:
    return ";".join(f"{r},{c}" for r, c in targets)


def _parse_value(key: str, raw: str, ftype: str):
    if raw == AUTO and key in ("nu", "exploitability_every", "targets"):
        return None
    if key == "targets":
        return _parse_targets(raw)
    if key in _ENUMS or ftype == "str":
        return raw
    if ftype.startswith("int"):
        return int(raw)
    if ftype == "float":
        return float(raw)
    raise ConfigError(f"{key}: unsupported field type {ftype}", key)


def parse_config_text(text: str) -> ExperimentConfig:
    known = {f.name: str(f.type) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown key {key!r} on line {lineno}", key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} on line {lineno}", key)
        try:
            values[key] = _parse_value(key, raw, known[key])
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw!r}", key) from None
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    """Read a ``key = value`` file; missing keys take their defaults."""
    return parse_config_text(Path(path).read_text())


def config_to_dict(cfg: ExperimentConfig) -> dict[str, str]:
    out = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            out[f.name] = AUTO
        elif isinstance(value, enum.Enum):
            out[f.name] = value.value
        elif f.name == "targets":
            out[f.name] = _format_targets(value)
        else:
            out[f.name] = repr(value) if isinstance(value, float) else str(value)
    return out


def config_to_text(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_to_dict(cfg).items())
