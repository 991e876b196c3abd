"""Experiment configuration: one TOML file with fixed sections.

```toml
[metric]            # name plus constructor parameters
name = "sphere"
n = 2
a = 1.0

[run]               # geodesic start and integration
chart = 0
x0 = [0.0, 0.0]
y0 = [1.0, 0.0]     # rescaled onto the indicatrix before use
L = 6.283185307179586
h = 0.001
directions = 64
workers = 1

[bounds]            # BoundParams and the ray length cap for `myers`
a = 1.05
n = 2
Lambda = 0.5
epsilon = -1
L_max = 10.0

[sweep]             # r grid for `index-sweep`
r_min = 0.5
r_max = 4.0
r_step = 0.1

[theorem_b]
b = 2.0
r_max = 30.0
r_step = 0.1

[numerics]          # NumericsPolicy overrides
[output]
dir = "out"
seed = 0
include_samples = false
```

Only ``[metric]`` is required; every other key has a default. Unknown sections
or keys are rejected.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

import tomli
import tomli_w

from .errors import FinslerError
from .metric import FinslerMetric, metric_from_spec
from .numerics import POLICY, NumericsPolicy


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (CLI exit code 2)."""


DEFAULTS = {
    "run": {"chart": 0, "x0": None, "y0": None, "L": 2 * math.pi, "h": POLICY.h, "directions": 64, "workers": 1},
    "bounds": {"a": 1.0, "n": None, "Lambda": 0.0, "epsilon": -1, "L_max": 10.0},
    "sweep": {"r_min": 0.5, "r_max": 4.0, "r_step": 0.1},
    "theorem_b": {"b": 2.0, "r_max": 30.0, "r_step": 0.1},
    "output": {"dir": "out", "seed": 0, "include_samples": False},
}
SECTIONS = ("metric", "run", "bounds", "sweep", "theorem_b", "numerics", "output")
_POLICY_FIELDS = {f.name: f.type for f in dataclasses.fields(NumericsPolicy)}


@dataclass
class ExperimentConfig:
    metric: dict
    run: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    theorem_b: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    # ------------------------------------------------------------ io

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as err:
            raise ConfigError(f"TOML syntax: {err}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from None
        try:
            return cls.from_toml(raw.decode("utf-8"))
        except UnicodeDecodeError as err:
            raise ConfigError(f"config is not UTF-8: {err}") from None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "metric" not in data:
            raise ConfigError("missing [metric] section")
        for name in SECTIONS:
            if name in data and not isinstance(data[name], dict):
                raise ConfigError(f"[{name}] must be a table")
        cfg = cls(**{k: dict(v) for k, v in data.items()})
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = getattr(self, name)
            if sec:
                out[name] = {k: sec[k] for k in sorted(sec)} if name != "metric" else _metric_sorted(sec)
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        """sha256 of the canonical TOML, ignoring the output directory."""
        d = self.to_dict()
        if "output" in d:
            d["output"] = {k: v for k, v in d["output"].items() if k != "dir"}
            if not d["output"]:
                del d["output"]
        return hashlib.sha256(tomli_w.dumps(d).encode("utf-8")).hexdigest()

    # ------------------------------------------------------------ access

    def section(self, name: str) -> dict:
        merged = dict(DEFAULTS.get(name, {}))
        merged.update(getattr(self, name))
        return merged

    def build_metric(self) -> FinslerMetric:
        try:
            return metric_from_spec(self.metric)
        except (FinslerError, TypeError, ValueError) as err:
            raise ConfigError(f"[metric]: {err}") from None

    def policy(self) -> NumericsPolicy:
        kw = dict(self.numerics)
        run_h = self.run.get("h")
        if run_h is not None:
            kw.setdefault("h", run_h)
        return dataclasses.replace(POLICY, **kw)

    # ------------------------------------------------------------ checks

    def validate(self) -> None:
        for name, defaults in DEFAULTS.items():
            extra = set(getattr(self, name)) - set(defaults)
            if extra:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
        extra = set(self.numerics) - set(_POLICY_FIELDS)
        if extra:
            raise ConfigError(f"unknown keys in [numerics]: {sorted(extra)}")
        for k, v in self.numerics.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"[numerics].{k} must be a positive number")
        metric = self.build_metric()
        pol = self.policy()
        run = self.section("run")
        h = run["h"]
        if not _num(h) or not 0 < h <= pol.h_max:
            raise ConfigError(f"[run].h must satisfy 0 < h <= {pol.h_max}, got {h!r}")
        if not _num(run["L"]) or run["L"] <= 0:
            raise ConfigError("[run].L must be positive")
        for key in ("x0", "y0"):
            v = run[key]
            if v is not None and (not isinstance(v, list) or len(v) != metric.dim or not all(_num(c) for c in v)):
                raise ConfigError(f"[run].{key} must be a list of {metric.dim} numbers")
        for key in ("chart", "directions", "workers"):
            if not isinstance(run[key], int) or isinstance(run[key], bool) or run[key] < 0:
                raise ConfigError(f"[run].{key} must be a nonnegative integer")
        if run["directions"] < 1 or run["workers"] < 1:
            raise ConfigError("[run].directions and [run].workers must be at least 1")
        if run["chart"] not in [c.id for c in metric.charts]:
            raise ConfigError(f"[run].chart {run['chart']} is not a chart of {metric.name}")
        b = self.section("bounds")
        for key in ("a", "Lambda", "L_max"):
            if not _num(b[key]):
                raise ConfigError(f"[bounds].{key} must be a number")
        if b["epsilon"] not in (1, -1):
            raise ConfigError("[bounds].epsilon must be 1 or -1")
        if b["n"] is not None and b["n"] != metric.dim:
            raise ConfigError(f"[bounds].n = {b['n']} but the metric has dimension {metric.dim}")
        s = self.section("sweep")
        if not all(_num(s[k]) for k in s) or not 0 < s["r_min"] <= s["r_max"] or s["r_step"] <= 0:
            raise ConfigError("[sweep] needs 0 < r_min <= r_max and r_step > 0")
        tb = self.section("theorem_b")
        if not all(_num(tb[k]) for k in tb) or not 1 < tb["b"] < tb["r_max"] or tb["r_step"] <= 0:
            raise ConfigError("[theorem_b] needs 1 < b < r_max and r_step > 0")
        out = self.section("output")
        if not isinstance(out["dir"], str):
            raise ConfigError("[output].dir must be a string")
        if not isinstance(out["seed"], int) or isinstance(out["seed"], bool):
            raise ConfigError("[output].seed must be an integer")
        if not isinstance(out["include_samples"], bool):
            raise ConfigError("[output].include_samples must be true or false")


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _metric_sorted(sec: dict) -> dict:
    out = {"name": sec["name"]} if "name" in sec else {}
    for k in sorted(sec):
        if k == "name":
            continue
        out[k] = _metric_sorted(sec[k]) if isinstance(sec[k], dict) else sec[k]
    return out
