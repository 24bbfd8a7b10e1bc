"""Run configuration: strict parsing, validation, defaults, manifests.

One JSON file per run.  Unknown keys are rejected, every field is validated
before any compute starts, and the manifest echoes the fully resolved
configuration (defaults included) so a run is reproducible from its manifest
alone.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .errors import ConfigError

PROTOCOL_CHOICES = ("hopping-projective", "ising-projective", "ising-noclick")
ENV_OUTPUT_ROOT = "FFMAGIC_OUT"


@dataclass
class WindowSpec:
    """Stationary time window, either as fractions of L or absolute times."""

    kind: str = "fraction"
    lo: float = 0.125
    hi: float = 0.25

    def validate(self) -> None:
        if self.kind not in ("fraction", "absolute"):
            raise ConfigError(f"window.kind must be 'fraction' or 'absolute', got {self.kind!r}")
        if not 0 <= self.lo < self.hi:
            raise ConfigError(f"window must satisfy 0 <= lo < hi, got [{self.lo}, {self.hi}]")

    def resolve(self, L: int) -> tuple[float, float]:
        if self.kind == "fraction":
            return (self.lo * L, self.hi * L)
        return (self.lo, self.hi)


@dataclass
class RunConfig:
    protocol: str = "hopping-projective"
    L: list[int] = field(default_factory=lambda: [16])
    gamma: list[float] = field(default_factory=lambda: [0.0])
    alpha: list[float] = field(default_factory=lambda: [1.0, 2.0])
    dt: float = 0.05
    t_max: float | None = None
    initial_state: str = "neel"
    samples: int = 1000
    n_traj: int = 1
    master_seed: int = 12345
    out_dir: str | None = None
    window: WindowSpec | None = None
    h: float = 0.5
    J: float = 1.0
    n_ramp_snapshots: int = 12
    n_window_snapshots: int = 8
    subsystem: int | None = None
    save_trajectories: bool = False
    recompute_every: int = 32
    threads: int = 1
    gge: dict | None = None
    analyze: dict | None = None

    # ------------------------------------------------------------------
    def validate(self) -> None:
        if self.protocol not in PROTOCOL_CHOICES:
            raise ConfigError(f"protocol must be one of {PROTOCOL_CHOICES}, got {self.protocol!r}")
        if not self.L or any(not isinstance(l, int) or l < 2 for l in self.L):
            raise ConfigError(f"L must be a nonempty list of integers >= 2, got {self.L}")
        if any(g < 0 for g in self.gamma):
            raise ConfigError(f"gamma entries must be >= 0, got {self.gamma}")
        if not self.alpha or any(a <= 0 for a in self.alpha):
            raise ConfigError(f"alpha entries must be > 0, got {self.alpha}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_max is not None and self.t_max <= 0:
            raise ConfigError(f"t_max must be positive, got {self.t_max}")
        if self.samples < 2:
            raise ConfigError(f"samples must be >= 2, got {self.samples}")
        if self.n_traj < 1:
            raise ConfigError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.recompute_every < 0:
            raise ConfigError(f"recompute_every must be >= 0, got {self.recompute_every}")
        for l in self.L:
            self.initial_occupation(l)  # raises on bad patterns
        if self.subsystem is not None and self.subsystem < 1:
            raise ConfigError(f"subsystem must be >= 1, got {self.subsystem}")
        if self.window is not None:
            self.window.validate()
        max_rate = max(self.gamma, default=0.0) * self.dt
        if max_rate > 0.5:
            raise ConfigError(
                f"gamma*dt = {max_rate} > 0.5: the per-step Bernoulli schedule is invalid; "
                "decrease dt")

    # ------------------------------------------------------------------
    def initial_occupation(self, L: int) -> tuple[int, ...]:
        name = self.initial_state.strip().lower()
        if name == "vacuum":
            return tuple([0] * L)
        if name == "neel":
            name = "10"
        if not name or any(ch not in "01" for ch in name):
            raise ConfigError(
                f"initial_state must be 'vacuum', 'neel' or a 0/1 pattern, got {self.initial_state!r}")
        if L % len(name) != 0:
            raise ConfigError(
                f"pattern {self.initial_state!r} of length {len(name)} does not tile L={L}")
        return tuple(int(ch) for ch in name) * (L // len(name))

    def density(self, L: int) -> float:
        occ = self.initial_occupation(L)
        return float(np.mean(occ))

    def resolved_window(self, L: int) -> tuple[float, float]:
        if self.window is not None:
            return self.window.resolve(L)
        return self.default_window().resolve(L)

    def default_window(self) -> WindowSpec:
        # hopping at half filling relaxes fastest; everything else gets [L/4, L/2]
        if self.protocol == "hopping-projective" and abs(self.density(self.L[0]) - 0.5) < 1e-12:
            return WindowSpec("fraction", 0.125, 0.25)
        return WindowSpec("fraction", 0.25, 0.5)

    def resolved_t_max(self, L: int) -> float:
        if self.t_max is not None:
            return self.t_max
        return self.resolved_window(L)[1]

    def output_root(self) -> str:
        if self.out_dir:
            return self.out_dir
        return os.environ.get(ENV_OUTPUT_ROOT, "runs")

    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        if self.window is not None:
            d["window"] = asdict(self.window)
        return d

    def resolved_dict(self) -> dict:
        """Full echo with every default made explicit (manifest content)."""
        d = self.to_dict()
        d["window"] = asdict(self.window if self.window is not None else self.default_window())
        d["resolved_windows"] = {str(l): list(self.resolved_window(l)) for l in self.L}
        d["resolved_t_max"] = {str(l): self.resolved_t_max(l) for l in self.L}
        d["initial_occupations"] = {str(l): list(self.initial_occupation(l)) for l in self.L}
        d["out_dir"] = self.output_root()
        return d

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:10]

    def run_id(self) -> str:
        return time.strftime("%Y%m%dT%H%M%S") + "-" + self.content_hash()


def config_from_dict(data: dict) -> RunConfig:
    """Strict constructor: unknown keys and wrong shapes are errors."""
    if not isinstance(data, dict):
        raise ConfigError(f"configuration must be a JSON object, got {type(data).__name__}")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    data = dict(data)
    if "window" in data and data["window"] is not None:
        w = data["window"]
        if not isinstance(w, dict):
            raise ConfigError("window must be an object with kind/lo/hi")
        extra = sorted(set(w) - {"kind", "lo", "hi"})
        if extra:
            raise ConfigError(f"unknown window keys: {', '.join(extra)}")
        data["window"] = WindowSpec(**{k: w[k] for k in ("kind", "lo", "hi") if k in w})
    for key in ("L",):
        if key in data and isinstance(data[key], list):
            data[key] = [int(v) for v in data[key]]
    for key in ("gamma", "alpha"):
        if key in data and isinstance(data[key], list):
            data[key] = [float(v) for v in data[key]]
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def write_manifest(path, cfg: RunConfig, *, command: str, run_id: str,
                   trajectory_seeds: dict, wall_clock: float,
                   warnings: dict, outputs: list[str]) -> None:
    manifest = {
        "run_id": run_id,
        "command": command,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "package_version": __version__,
        "config": cfg.resolved_dict(),
        "trajectory_seeds": trajectory_seeds,
        "wall_clock_seconds": wall_clock,
        "warnings": warnings,
        "outputs": outputs,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_from_manifest(path: str) -> RunConfig:
    """Re-parse the config echo of a manifest into an equivalent RunConfig."""
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    echo = dict(manifest["config"])
    for derived in ("resolved_windows", "resolved_t_max", "initial_occupations"):
        echo.pop(derived, None)
    return config_from_dict(echo)
