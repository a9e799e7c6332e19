"""Experiment configuration: TOML (or JSON) in, validated dataclass out.

Every physical quantity carries its unit in the key name.  A report written
by the CLI embeds the resolved configuration under ``"config"``; such a
report can be passed back as ``--config`` to reproduce it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .states import SpiralSpectrum

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

TABLE1_SUBSPACES = ((-1, 1), (-2, 2), (-2, -1), (-2, 1), (2, -1), (2, 1))


class ConfigError(ValueError):
    pass


@dataclass
class SourceConfig:
    truncation: int = 2
    # c_ell keyed "c0", "c1", ...; a number or [re, im]
    spectrum: dict = field(default_factory=lambda: {"c0": 0.0, "c1": 1.0, "c2": 1.0})


@dataclass
class NoiseConfig:
    visibility: float = 0.71
    rep_rate_hz: float = 80e6
    singles_hz: dict = field(default_factory=dict)
    pairs_hz: dict = field(default_factory=dict)


@dataclass
class AcquisitionConfig:
    # the measured l=+-1 rate was 0.04 Hz; x100 keeps desk-scale runs short
    fourfold_rate_hz: float = 4.0
    duration_s: float = 150.0
    method: str = "mle"
    n_resamples: int = 100
    subspaces: list = field(default_factory=lambda: [list(s) for s in TABLE1_SUBSPACES])


@dataclass
class HomConfig:
    center_um: float = 11.42
    width_um: float = 3.0
    visibility: float = 0.71
    baseline_counts: float = 400.0
    start_um: float = 0.0
    stop_um: float = 23.0
    points: int = 50
    noiseless: bool = False


@dataclass
class SweepConfig:
    visibilities: list = field(default_factory=lambda: [round(0.1 * i, 10) for i in range(11)])
    simulate: bool = True
    subspace: list = field(default_factory=lambda: [-1, 1])


@dataclass
class PurifyConfig:
    filter_n: int = 2


@dataclass
class RunConfig:
    seed: int | None = None
    output_dir: str = "swapsim-out"
    jobs: int = 1


_SECTIONS = {
    "source": SourceConfig,
    "noise": NoiseConfig,
    "acquisition": AcquisitionConfig,
    "hom": HomConfig,
    "sweep": SweepConfig,
    "purify": PurifyConfig,
    "run": RunConfig,
}


@dataclass
class ExperimentConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    hom: HomConfig = field(default_factory=HomConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    purify: PurifyConfig = field(default_factory=PurifyConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, kind in _SECTIONS.items():
            section = data.get(name, {}) or {}
            if not isinstance(section, dict):
                raise ConfigError(f"section [{name}] must be a table")
            allowed = {f.name for f in fields(kind)}
            bad = set(section) - allowed
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            kwargs[name] = kind(**section)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def spectrum(self) -> SpiralSpectrum:
        coeffs = {}
        for key, val in self.source.spectrum.items():
            if not key.startswith("c") or not key[1:].isdigit():
                raise ConfigError(f"spectrum keys look like 'c0', 'c1', ...; got {key!r}")
            if isinstance(val, (list, tuple)):
                if len(val) != 2:
                    raise ConfigError(f"complex coefficient {key} must be [re, im]")
                val = complex(float(val[0]), float(val[1]))
            coeffs[int(key[1:])] = complex(val)
        sp = SpiralSpectrum(coeffs)
        if sp.total_weight() == 0:
            raise ConfigError("spectrum is empty")
        return sp.normalized()

    def validate(self) -> None:
        s, n, a, h, r = self.source, self.noise, self.acquisition, self.hom, self.run
        if int(s.truncation) < 1:
            raise ConfigError("source.truncation must be >= 1")
        sp = self.spectrum()
        if sp.max_ell > s.truncation:
            raise ConfigError(f"spectrum reaches l={sp.max_ell} beyond truncation {s.truncation}")
        if not 0 <= n.visibility <= 1 or not 0 <= h.visibility <= 1:
            raise ConfigError("visibilities must lie in [0, 1]")
        if n.rep_rate_hz <= 0:
            raise ConfigError("noise.rep_rate_hz must be positive")
        for k, v in {**n.singles_hz, **n.pairs_hz}.items():
            if not isinstance(v, (int, float)) or v < 0 or not math.isfinite(v):
                raise ConfigError(f"rate {k} must be a non-negative number")
        if set(n.singles_hz) - set("ABCD"):
            raise ConfigError("singles_hz keys are A, B, C, D")
        if set(n.pairs_hz) - {"AB", "CD", "AC", "BD"}:
            raise ConfigError("pairs_hz keys are AB, CD, AC, BD")
        if a.fourfold_rate_hz <= 0 or a.duration_s <= 0:
            raise ConfigError("acquisition rate and duration must be positive")
        if a.method not in ("mle", "linear"):
            raise ConfigError("acquisition.method is 'mle' or 'linear'")
        if a.n_resamples < 100:
            raise ConfigError("acquisition.n_resamples must be >= 100")
        for sub in a.subspaces:
            if len(sub) != 2 or sub[0] == sub[1] or max(abs(x) for x in sub) > s.truncation:
                raise ConfigError(f"bad subspace {sub}")
        if h.width_um <= 0 or h.points < 5 or h.stop_um <= h.start_um or h.baseline_counts <= 0:
            raise ConfigError("hom scan needs width > 0, >= 5 points, start < stop, positive counts")
        if any(not 0 <= v <= 1 for v in self.sweep.visibilities):
            raise ConfigError("sweep visibilities must lie in [0, 1]")
        if self.purify.filter_n < 1:
            raise ConfigError("purify.filter_n must be >= 1")
        if r.seed is None:
            raise ConfigError("run.seed is required (pass --seed or set it in [run])")
        if not isinstance(r.seed, int) or not 0 <= r.seed < 2**64:
            raise ConfigError("run.seed must be an unsigned 64-bit integer")
        if r.jobs < 1:
            raise ConfigError("run.jobs must be >= 1")


def load_config(path: str | Path, seed: int | None = None, output_dir: str | None = None) -> ExperimentConfig:
    """Read a TOML config, a JSON config, or a report carrying one under ``"config"``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw)
            if "config" in data and isinstance(data["config"], dict):
                data = data["config"]
        else:
            data = tomllib.loads(raw.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    data.setdefault("run", {})
    if seed is not None:
        data["run"]["seed"] = seed
    if output_dir is not None:
        data["run"]["output_dir"] = output_dir
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
