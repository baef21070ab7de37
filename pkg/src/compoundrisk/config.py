"""Run configuration: one JSON file naming inputs, ensemble settings and outputs.

Paths are resolved relative to the config file. Unknown keys anywhere are
errors, and the master seed is mandatory.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .harden import STRATEGIES
from .heat import HI_THRESHOLD, WINDOW_DAYS
from .windfield import WindParams


class ConfigError(ValueError):
    pass


DATA_DIR = Path(__file__).parent / "data"

_PATH_KEYS = ("network", "catalog", "climatology", "fragility", "resources", "study_grid", "anomaly_table",
              "baseline_catalog", "baseline_climatology")
_REQUIRED_PATHS = ("network", "catalog", "climatology", "fragility", "resources")


@dataclass(frozen=True)
class HardenSection:
    strategies: tuple = STRATEGIES
    rates: tuple = (0.0, 0.01, 0.02, 0.05, 0.1)
    n_periods: int | None = None        # defaults to the run's n_periods
    plan_seed: int = 0


@dataclass(frozen=True)
class CalibrateSection:
    targets: Path | None = None
    replicates: int = 16
    max_iterations: int = 60


@dataclass(frozen=True)
class RunConfig:
    source: Path
    network: Path
    catalog: Path
    climatology: Path
    fragility: Path
    resources: Path
    seed: int
    study_grid: Path | None = None
    anomaly_table: Path | None = None
    baseline_catalog: Path | None = None
    baseline_climatology: Path | None = None
    n_periods: int = 2000
    period_years: int = 20
    outage_days: int = 5
    hi_threshold: float = HI_THRESHOLD
    window_days: int = WINDOW_DAYS
    floor: float | None = None
    capacity_multiplier: float = 1.0
    frequency_override: bool = False
    composite_adjust: bool = True
    bias_correct: bool = True
    wind: WindParams = field(default_factory=WindParams)
    workers: int = 1
    output_dir: Path | None = None
    scaling_periods: int | None = None
    harden: HardenSection = field(default_factory=HardenSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def input_paths(self) -> dict:
        out = {k: getattr(self, k) for k in _PATH_KEYS if getattr(self, k) is not None}
        if self.calibrate.targets is not None:
            out["targets"] = self.calibrate.targets
        return out

    def missing_files(self) -> list[str]:
        return [f"{k}: file not found: {p}" for k, p in self.input_paths().items() if not Path(p).is_file()]

    def digest(self) -> str:
        """Hash of the config contents (minus worker count) and every referenced input file."""
        h = hashlib.sha256()
        raw = {k: v for k, v in self.raw.items() if k not in ("workers", "output_dir")}
        h.update(json.dumps(raw, sort_keys=True).encode())
        for k, p in sorted(self.input_paths().items()):
            h.update(k.encode())
            if Path(p).is_file():
                h.update(hashlib.sha256(Path(p).read_bytes()).digest())
        return h.hexdigest()


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def _int(v, name, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{name} must be >= {lo}, got {v}")
    return v


def _float(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number, got {v!r}")
    return float(v)


def _bool(v, name):
    if not isinstance(v, bool):
        raise ConfigError(f"{name} must be true or false, got {v!r}")
    return v


def config_from_dict(d: dict, base_dir=".", source="<config>") -> RunConfig:
    base = Path(base_dir)
    scalars = {"seed", "n_periods", "period_years", "outage_days", "hi_threshold", "window_days", "floor",
               "capacity_multiplier", "frequency_override", "composite_adjust", "bias_correct", "workers",
               "output_dir", "scaling_periods", "wind", "harden", "calibrate", "description"}
    _check_keys(d, set(_PATH_KEYS) | scalars, source)
    if "seed" not in d:
        raise ConfigError(f"{source}: 'seed' is required")
    for k in _REQUIRED_PATHS:
        if k not in d:
            raise ConfigError(f"{source}: '{k}' is required")
    kw = {k: base / d[k] for k in _PATH_KEYS if d.get(k) is not None}
    kw["seed"] = _int(d["seed"], "seed", 0)
    for k, lo in (("n_periods", 1), ("period_years", 1), ("outage_days", 0), ("window_days", 1),
                  ("workers", 1), ("scaling_periods", 1)):
        if d.get(k) is not None:
            kw[k] = _int(d[k], k, lo)
    for k in ("hi_threshold", "capacity_multiplier"):
        if k in d:
            kw[k] = _float(d[k], k)
    if d.get("floor") is not None:
        kw["floor"] = _float(d["floor"], "floor")
        if not 0 < kw["floor"] <= 1:
            raise ConfigError("floor must lie in (0, 1]")
    if kw.get("capacity_multiplier", 1.0) <= 0:
        raise ConfigError("capacity_multiplier must be positive")
    for k in ("frequency_override", "composite_adjust", "bias_correct"):
        if k in d:
            kw[k] = _bool(d[k], k)
    if kw.get("frequency_override") and "baseline_catalog" not in kw:
        raise ConfigError("frequency_override needs baseline_catalog to take the historical frequency from")
    if d.get("output_dir") is not None:
        kw["output_dir"] = base / d["output_dir"]
    if "wind" in d:
        _check_keys(d["wind"], WindParams.__dataclass_fields__, f"{source}: wind")
        try:
            kw["wind"] = WindParams(**{k: _float(v, f"wind.{k}") for k, v in d["wind"].items()})
        except ValueError as e:
            raise ConfigError(f"{source}: wind: {e}") from None
    if "harden" in d:
        h = d["harden"]
        _check_keys(h, {"strategies", "rates", "n_periods", "plan_seed"}, f"{source}: harden")
        hk = {}
        if "strategies" in h:
            bad = [s for s in h["strategies"] if s not in STRATEGIES]
            if bad:
                raise ConfigError(f"harden.strategies: unknown {bad}; choose from {list(STRATEGIES)}")
            hk["strategies"] = tuple(h["strategies"])
        if "rates" in h:
            rates = tuple(_float(r, "harden.rates") for r in h["rates"])
            if list(rates) != sorted(rates) or any(not 0 <= r <= 1 for r in rates):
                raise ConfigError("harden.rates must be sorted values in [0, 1]")
            hk["rates"] = rates
        if h.get("n_periods") is not None:
            hk["n_periods"] = _int(h["n_periods"], "harden.n_periods", 1)
        if "plan_seed" in h:
            hk["plan_seed"] = _int(h["plan_seed"], "harden.plan_seed", 0)
        kw["harden"] = HardenSection(**hk)
    if "calibrate" in d:
        c = d["calibrate"]
        _check_keys(c, {"targets", "replicates", "max_iterations"}, f"{source}: calibrate")
        ck = {}
        if c.get("targets") is not None:
            ck["targets"] = base / c["targets"]
        if "replicates" in c:
            ck["replicates"] = _int(c["replicates"], "calibrate.replicates", 1)
        if "max_iterations" in c:
            ck["max_iterations"] = _int(c["max_iterations"], "calibrate.max_iterations", 0)
        kw["calibrate"] = CalibrateSection(**ck)
    return RunConfig(source=Path(source), raw=dict(d), **kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return config_from_dict(d, path.parent, str(path))


def bundled_config(name="historical") -> Path:
    p = DATA_DIR / f"config_{name}.json"
    if not p.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return p
