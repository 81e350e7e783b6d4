"""Run configuration: one TOML file, optionally patched with ``section.key=value`` overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .droop import DroopConfig, MarketId
from .market_data import DataError
from .milp.lp import SolveOptions
from .scheduling import FREQ_LEVELS, SPOT_LEVELS, BessParams, BidStructure

__all__ = ["RunConfig", "load_config", "apply_overrides", "ConfigError"]


class ConfigError(DataError):
    pass


@dataclass
class DataSection:
    price_dir: str = ""  # holds <zone>_<market>.csv
    scenarios: str = ""  # scenario JSON for optimize / export-lp
    frequency: list[str] = field(default_factory=list)  # minute traces for simulate-meb
    zones: list[str] = field(default_factory=lambda: ["DK1"])
    markets: list[str] = field(default_factory=lambda: ["SPOT", "FCR_N"])


@dataclass
class GamSection:
    hour_k: int = 24
    day_k: int = 7
    cyclic_hour: bool = False
    lambda_min: float = 1e-4
    lambda_max: float = 1e8
    lambda_points: int = 25
    train_hours: int = 336
    horizon_hours: int = 168
    scale: str = "level"
    workers: int = 1

    def grid(self) -> np.ndarray:
        return np.logspace(np.log10(self.lambda_min), np.log10(self.lambda_max), self.lambda_points)


@dataclass
class BessSection:
    e_min: float = 0.0
    e_max: float = 1.0
    soc_start: float = 0.5
    soc_end: float = 0.5
    ilf: float = 0.10
    dt_minutes: int = 60
    horizon_hours: int = 24
    soc_mode: str = "fixed"
    firm_spot: bool = True

    def params(self) -> BessParams:
        return BessParams(**dataclasses.asdict(self))


@dataclass
class BidSection:
    structure: str = "single"
    markets: list[str] = field(default_factory=lambda: [m.value for m in MarketId])
    freq_levels: list[float] = field(default_factory=lambda: list(FREQ_LEVELS))
    spot_levels: list[float] = field(default_factory=lambda: list(SPOT_LEVELS))
    bid_min: float = 0.0
    bid_max: float | None = None
    eps: float = 1e-3

    def build(self) -> BidStructure:
        kw = dict(markets=[MarketId(m) for m in self.markets], bid_min=self.bid_min, bid_max=self.bid_max, eps=self.eps)
        if self.structure == "single":
            return BidStructure.single(self.freq_levels[0], self.spot_levels[0], **kw)
        if self.structure == "multi":
            return BidStructure.multi(self.freq_levels, self.spot_levels, **kw)
        raise ConfigError(f"bids.structure must be 'single' or 'multi', got {self.structure!r}")


@dataclass
class DroopSection:
    nominal_hz: float = 50.0
    fcr_n_deadband_hz: float = 0.0
    fcr_n_full_dev_hz: float = 0.1
    fcr_d_start_hz: float = 49.9
    fcr_d_full_hz: float = 49.5

    def build(self) -> DroopConfig:
        return DroopConfig(**dataclasses.asdict(self))


@dataclass
class SolverSection:
    rel_gap: float = 1e-6
    abs_gap: float = 1e-9
    node_limit: int = 1_000_000
    time_limit: float = 600.0
    branching: str = "pseudocost"
    dive_every: int = 50

    def build(self) -> SolveOptions:
        return SolveOptions(**dataclasses.asdict(self))


@dataclass
class ExperimentSection:
    runs: list[dict] = field(default_factory=list)  # ExperimentSpec fields per run
    compare: list[list[str]] = field(default_factory=list)  # [name_a, name_b] pairs


_SECTIONS = {
    "data": DataSection,
    "gam": GamSection,
    "bess": BessSection,
    "bids": BidSection,
    "droop": DroopSection,
    "solver": SolverSection,
    "experiment": ExperimentSection,
}


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "out"
    data: DataSection = field(default_factory=DataSection)
    gam: GamSection = field(default_factory=GamSection)
    bess: BessSection = field(default_factory=BessSection)
    bids: BidSection = field(default_factory=BidSection)
    droop: DroopSection = field(default_factory=DroopSection)
    solver: SolverSection = field(default_factory=SolverSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path = Path(".")) -> "RunConfig":
        raw = dict(raw)
        kw: dict[str, Any] = {"base_dir": Path(base_dir)}
        for name, typ in _SECTIONS.items():
            sect = raw.pop(name, {})
            if not isinstance(sect, dict):
                raise ConfigError(f"[{name}] must be a table")
            known = {f.name for f in dataclasses.fields(typ)}
            unknown = sorted(set(sect) - known)
            if unknown:
                raise ConfigError(f"unknown keys in [{name}]: {unknown}")
            kw[name] = typ(**sect)
        for key in ("seed", "output_dir"):
            if key in raw:
                kw[key] = raw.pop(key)
        if raw:
            raise ConfigError(f"unknown top-level keys: {sorted(raw)}")
        return cls(**kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def digest(self) -> str:
        """Hash of everything that shapes results (the output location is excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    @property
    def out(self) -> Path:
        return self.path(self.output_dir)

    def price_file(self, zone: str, market: str) -> Path:
        return self.path(self.data.price_dir) / f"{zone}_{market}.csv".lower()

    def require(self, *paths: Path) -> None:
        """Raise a data error naming the first missing path."""
        for p in paths:
            if not Path(p).exists():
                raise DataError(f"missing input file: {p}")


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text  # bare strings need no quotes


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``a.b=value`` assignments (values parsed as TOML literals) to a raw config dict."""
    raw = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = _parse_value(text.strip())
    return raw


def load_config(path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    raw: dict = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise DataError(f"missing input file: {path}")
        try:
            raw = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = path.parent
    try:
        return RunConfig.from_dict(apply_overrides(raw, list(overrides)), base)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise ConfigError(str(exc)) from exc
