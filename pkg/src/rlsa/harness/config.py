"""Experiment configuration: JSON file plus command-line overrides.

Schema (all keys optional except where a family is needed)::

    {
      "instance": {"family": "affine-vi", "seed": 0, "dims": {"n": 5, "J": 10},
                   "noise_level": 0.1, "params": {}},
      "instance_path": "descriptor.json",          # alternative to "instance"
      "solver": {"rho0": 1.0, "gamma0": 0.1, "iters": 100000,
                 "schedule": "decaying", "check_coupling": false,
                 "x0": null, "backend": "auto"},   # x0: a list, or "outward:D"
      "seeds": [0, 1, 2],
      "checkpoints": "geometric",                  # or "linear:N" or a list
      "extra_checkpoints": [1000],
      "gap_method": "affine",                      # or "sampled" or "none"
      "fit_k_min": 1000,
      "timing": false,
      "workers": 1,
      "out": "runs/demo"
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from ..errors import ConfigurationError, InvalidArgumentError
from ..problems import FAMILIES, InstanceDescriptor
from ..solver import SolverConfig, geometric_checkpoints, linear_checkpoints

GAP_METHODS = ("affine", "sampled", "none")
SOLVER_KEYS = {f.name for f in fields(SolverConfig)} - {"noise_seed", "index_seed"}
TOP_KEYS = {"instance", "instance_path", "solver", "seeds", "checkpoints", "extra_checkpoints",
            "gap_method", "fit_k_min", "timing", "workers", "out"}


@dataclass
class ExperimentConfig:
    descriptor: InstanceDescriptor
    solver: SolverConfig = field(default_factory=SolverConfig)
    seeds: list = field(default_factory=lambda: [0])
    checkpoints: object = "geometric"
    extra_checkpoints: list = field(default_factory=list)
    gap_method: str = "affine"
    fit_k_min: int = 1000
    timing: bool = False
    workers: int = 1
    out: Optional[str] = None
    start: Optional[str] = None

    def validate(self):
        self.solver.validate()
        if self.start is not None:
            try:
                kind, dist = self.start.split(":")
                ok = kind == "outward" and float(dist) > 0
            except ValueError:
                ok = False
            if not ok:
                raise ConfigurationError(f"x0 string must look like 'outward:D' with D > 0, got {self.start!r}")
        if not self.seeds:
            raise ConfigurationError("seeds must be a nonempty list")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError(f"seeds must be duplicate-free, got {self.seeds}")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigurationError("seeds must be nonnegative integers")
        if self.gap_method not in GAP_METHODS:
            raise ConfigurationError(f"gap_method must be one of {GAP_METHODS}, got {self.gap_method!r}")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        cps = self.checkpoint_list()
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigurationError("checkpoint schedule must be strictly increasing")
        return self

    def checkpoint_list(self) -> list:
        K = self.solver.iters
        text = self.checkpoints
        if isinstance(text, str):
            if text == "geometric":
                base = geometric_checkpoints(K)
            elif text.startswith("linear:"):
                try:
                    count = int(text.split(":", 1)[1])
                except ValueError:
                    raise ConfigurationError(f"bad checkpoint schedule {text!r}; use linear:N") from None
                if count < 1:
                    raise ConfigurationError("linear:N needs N >= 1")
                base = linear_checkpoints(K, count)
            else:
                raise ConfigurationError(f"checkpoints must be 'geometric', 'linear:N' or a list, got {text!r}")
        else:
            base = [int(c) for c in text]
            if any(b <= a for a, b in zip(base, base[1:])):
                raise ConfigurationError("checkpoint schedule must be strictly increasing")
            if base and (base[0] < 0 or base[-1] > K):
                raise ConfigurationError(f"checkpoints must lie in [0, {K}]")
        extra = [int(c) for c in self.extra_checkpoints if 0 <= int(c) <= K]
        return sorted(set(base) | set(extra) | {K})

    def seed_config(self, seed: int, instance=None) -> SolverConfig:
        cfg = replace(self.solver, noise_seed=seed, index_seed=seed)
        if self.start is not None:
            from ..problems import outward_start

            try:
                x0 = outward_start(instance, float(self.start.split(":")[1]))
            except InvalidArgumentError as exc:
                raise ConfigurationError(f"x0: {exc}") from None
            cfg = replace(cfg, x0=tuple(float(v) for v in x0))
        return cfg

    def out_dir(self) -> Path:
        root = self.out or os.environ.get("RLSA_OUT_DIR") or "rlsa_out"
        return Path(root)

    def to_dict(self) -> dict:
        s = asdict(self.solver)
        for k in ("noise_seed", "index_seed"):
            s.pop(k)
        if self.start is not None:
            s["x0"] = self.start
        elif s["x0"] is not None:
            s["x0"] = [float(v) for v in s["x0"]]
        return {"instance": self.descriptor.to_dict(), "solver": s, "seeds": list(self.seeds),
                "checkpoints": self.checkpoints, "extra_checkpoints": list(self.extra_checkpoints),
                "gap_method": self.gap_method, "fit_k_min": self.fit_k_min,
                "timing": self.timing, "workers": self.workers, "out": self.out}


def _descriptor_from(d: dict) -> InstanceDescriptor:
    try:
        return InstanceDescriptor.from_dict(d)
    except InvalidArgumentError as exc:
        raise ConfigurationError(f"instance: {exc}") from None


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a JSON object")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return data


def build_config(data: dict, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Merge a config dict with flag overrides (flags win) and validate.

    ``overrides`` may contain ``family, n, J, N, instance_seed, noise_level``
    (instance),
    ``rho0, gamma0, iters`` (solver), ``seeds``, ``checkpoints``,
    ``gap_method``, ``timing``, ``workers`` and ``out``; ``None`` values are ignored.
    """
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "instance_path" in data and "instance" not in data:
        try:
            inst = json.loads(Path(data["instance_path"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot load instance_path: {exc}") from None
    else:
        inst = dict(data.get("instance", {}))
    inst.setdefault("dims", {})
    inst = {**inst, "dims": dict(inst["dims"])}
    if "family" in ov:
        if ov["family"] not in FAMILIES:
            raise ConfigurationError(f"family must be one of {FAMILIES}, got {ov['family']!r}")
        inst["family"] = ov["family"]
    if "family" not in inst:
        raise ConfigurationError("no instance family given (use --family or a config file)")
    for key in ("n", "J", "N"):
        if key in ov:
            inst["dims"][key] = int(ov[key])
    if "instance_seed" in ov:
        inst["seed"] = int(ov["instance_seed"])
    if "noise_level" in ov:
        inst["noise_level"] = float(ov["noise_level"])
    descriptor = _descriptor_from(inst)

    solver = dict(data.get("solver", {}))
    unknown = set(solver) - SOLVER_KEYS
    if unknown:
        raise ConfigurationError(f"unknown solver keys: {sorted(unknown)}")
    for key in ("rho0", "gamma0", "iters"):
        if key in ov:
            solver[key] = ov[key]
    start = None
    if isinstance(solver.get("x0"), str):
        start = solver.pop("x0")
    elif solver.get("x0") is not None:
        solver["x0"] = tuple(float(v) for v in solver["x0"])
    scfg = SolverConfig(**solver)

    seeds = ov.get("seeds", data.get("seeds", [0]))
    cfg = ExperimentConfig(
        descriptor=descriptor, solver=scfg, seeds=list(seeds),
        checkpoints=ov.get("checkpoints", data.get("checkpoints", "geometric")),
        extra_checkpoints=list(data.get("extra_checkpoints", [])),
        gap_method=ov.get("gap_method", data.get("gap_method", "affine")),
        fit_k_min=int(data.get("fit_k_min", 1000)),
        timing=bool(ov.get("timing", data.get("timing", False))),
        workers=int(ov.get("workers", data.get("workers", 1))),
        out=ov.get("out", data.get("out")),
        start=start,
    )
    return cfg.validate()
