"""Scene configuration: YAML loading, validation with field names, hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

import numpy as np
import yaml


class ConfigError(ValueError):
    """Schema or value problem in a scene configuration; names the field."""


@dataclass(frozen=True)
class ArrayConfig:
    M: int = 10
    spacing: float = 0.5


@dataclass(frozen=True)
class WaveformConfig:
    N: int = 32
    tau_us: float = 4.0
    B_MHz: float = 4.0
    f0_GHz: float = 1.0


@dataclass(frozen=True)
class CpiConfig:
    P: int = 30
    L: int = 80
    Q: int = 64


@dataclass(frozen=True)
class TargetConfig:
    angle_deg: float
    range_cell: int
    doppler_cell: int
    snr_db: float


@dataclass(frozen=True)
class ClutterConfig:
    Nc: int = 100
    cnr_db: float = 28.0
    angle_min_deg: float = -60.0
    angle_max_deg: float = 60.0


@dataclass(frozen=True)
class CommConfig:
    theta_c_deg: float = -50.0
    theta_t_deg: float = 0.0
    sll_db_list: tuple = (-25.0, -30.0)
    phase_list: tuple = (0.0, float(np.pi))
    sidelobe_region_deg: tuple = ((-90.0, -5.0), (5.0, 90.0))
    grid_step_deg: float = 0.5


@dataclass(frozen=True)
class ProcessingConfig:
    noise_power_db: float = 0.0
    eta: float = 1e-6
    max_iter: int = 1000
    prior_passes: int = 1
    transmit: str = "cbm"          # "cbm" random symbols, "ncbm" constant w_1
    mc_draws: int = 20000
    bench_repeats: int = 10


@dataclass(frozen=True)
class SceneConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    cpi: CpiConfig = field(default_factory=CpiConfig)
    targets: tuple = ()
    clutter: ClutterConfig = field(default_factory=ClutterConfig)
    comm: CommConfig = field(default_factory=CommConfig)
    processing: ProcessingConfig = field(default_factory=ProcessingConfig)
    seed: int = 0

    @property
    def noise_power(self):
        return 10.0 ** (self.processing.noise_power_db / 10.0)

    def to_dict(self):
        d = asdict(self)
        d["targets"] = [asdict(t) if not isinstance(t, dict) else t for t in self.targets]
        return _plain(d)

    def hash(self):
        """sha256 of the canonical JSON form (seed included), first 16 hex digits."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def with_transmit(self, mode):
        return replace(self, processing=replace(self.processing, transmit=mode))

    def without_clutter(self):
        return replace(self, clutter=replace(self.clutter, Nc=0))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


TABLE1_TARGETS = (
    TargetConfig(0.0, 35, 52, 10.0),
    TargetConfig(0.0, 50, 47, 5.0),
    TargetConfig(0.0, 40, 52, -5.0),
)


def default_config() -> SceneConfig:
    """Full-scale experiment: M=10, N=32, P=30, L=80, Q=64, Nc=100, CNR 28 dB."""
    return SceneConfig(targets=TABLE1_TARGETS)


def reduced_config() -> SceneConfig:
    """Desk-scale config where full AMPC is cheap (NP = 128, 640 cells).

    Targets keep their SNRs and their range/Doppler spacing pattern: the
    two same-Doppler targets stay 5 range cells apart and the third sits
    in a neighbouring Doppler bin.
    """
    return SceneConfig(
        waveform=WaveformConfig(N=16),
        cpi=CpiConfig(P=8, L=40, Q=16),
        targets=(
            TargetConfig(0.0, 18, 13, 10.0),
            TargetConfig(0.0, 25, 12, 5.0),
            TargetConfig(0.0, 20, 13, -5.0),
        ),
    )


def small_config() -> SceneConfig:
    """Lemma-check config: N=8, P=4, Q=8, Nc=5, L=16."""
    return SceneConfig(
        waveform=WaveformConfig(N=8),
        cpi=CpiConfig(P=4, L=16, Q=8),
        targets=(TargetConfig(0.0, 8, 3, 10.0),),
        clutter=ClutterConfig(Nc=5),
    )


PRESETS = {"default": default_config, "reduced": reduced_config, "small": small_config}


# --- parsing ---------------------------------------------------------------------

def _section(raw, name, cls, base):
    data = raw.get(name)
    if data is None:
        return base
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(data).__name__}")
    known = set(cls.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{name}: unknown field(s) {sorted(extra)}; allowed {sorted(known)}")
    kwargs = {}
    for key, value in data.items():
        default = getattr(base, key)
        kwargs[key] = _coerce(f"{name}.{key}", value, default)
    return replace(base, **kwargs)


def _coerce(path, value, like):
    if isinstance(like, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(like, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(like, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(like, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(like, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        if like and isinstance(like[0], tuple):
            out = []
            for i, iv in enumerate(value):
                if not isinstance(iv, (list, tuple)) or len(iv) != 2:
                    raise ConfigError(f"{path}[{i}]: expected [lo, hi], got {iv!r}")
                out.append(tuple(_coerce(f"{path}[{i}]", float(x) if isinstance(x, int) else x, 0.0) for x in iv))
            return tuple(out)
        return tuple(_coerce(f"{path}[{i}]", v, 0.0) for i, v in enumerate(value))
    return value


def _targets(raw, base):
    data = raw.get("targets")
    if data is None:
        return base
    if not isinstance(data, list):
        raise ConfigError("targets: expected a list of mappings")
    out = []
    for i, t in enumerate(data):
        if not isinstance(t, dict):
            raise ConfigError(f"targets[{i}]: expected a mapping")
        need = ("angle_deg", "range_cell", "doppler_cell", "snr_db")
        missing = [k for k in need if k not in t]
        if missing:
            raise ConfigError(f"targets[{i}]: missing field(s) {missing}")
        extra = set(t) - set(need)
        if extra:
            raise ConfigError(f"targets[{i}]: unknown field(s) {sorted(extra)}")
        out.append(TargetConfig(
            _coerce(f"targets[{i}].angle_deg", t["angle_deg"], 0.0),
            _coerce(f"targets[{i}].range_cell", t["range_cell"], 0),
            _coerce(f"targets[{i}].doppler_cell", t["doppler_cell"], 0),
            _coerce(f"targets[{i}].snr_db", t["snr_db"], 0.0),
        ))
    return tuple(out)


def config_from_dict(raw: dict, base: Optional[SceneConfig] = None) -> SceneConfig:
    """Build and validate a config; keys absent from ``raw`` keep ``base`` values."""
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    raw = copy.deepcopy(raw)
    preset = raw.pop("preset", None)
    if base is None:
        if preset is not None and preset not in PRESETS:
            raise ConfigError(f"preset: unknown {preset!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[preset or "default"]()
    allowed = {"array", "waveform", "cpi", "targets", "clutter", "comm", "processing", "seed"}
    extra = set(raw) - allowed
    if extra:
        raise ConfigError(f"top level: unknown field(s) {sorted(extra)}")
    cfg = SceneConfig(
        array=_section(raw, "array", ArrayConfig, base.array),
        waveform=_section(raw, "waveform", WaveformConfig, base.waveform),
        cpi=_section(raw, "cpi", CpiConfig, base.cpi),
        targets=_targets(raw, base.targets),
        clutter=_section(raw, "clutter", ClutterConfig, base.clutter),
        comm=_section(raw, "comm", CommConfig, base.comm),
        processing=_section(raw, "processing", ProcessingConfig, base.processing),
        seed=_coerce("seed", raw.get("seed", base.seed), 0),
    )
    validate(cfg)
    return cfg


def load_config(path) -> SceneConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return config_from_dict(raw or {})


def dump_config(cfg: SceneConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def validate(cfg: SceneConfig):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.array.M >= 2, "array.M: must be >= 2")
    need(cfg.array.spacing > 0, "array.spacing: must be > 0")
    need(cfg.waveform.N >= 2, "waveform.N: must be >= 2")
    need(cfg.waveform.tau_us > 0, "waveform.tau_us: must be > 0")
    need(cfg.waveform.B_MHz >= 0, "waveform.B_MHz: must be >= 0")
    need(cfg.cpi.P >= 1, "cpi.P: must be >= 1")
    need(cfg.cpi.L >= 1, "cpi.L: must be >= 1")
    need(cfg.cpi.Q >= 1, "cpi.Q: must be >= 1")
    need(cfg.clutter.Nc >= 0, "clutter.Nc: must be >= 0")
    need(cfg.clutter.angle_min_deg <= cfg.clutter.angle_max_deg, "clutter.angle_min_deg: must not exceed angle_max_deg")
    need(-90 <= cfg.clutter.angle_min_deg and cfg.clutter.angle_max_deg <= 90, "clutter: angles must lie in [-90, 90]")
    need(len(cfg.comm.sll_db_list) >= 1, "comm.sll_db_list: needs at least one level")
    need(all(x < 0 for x in cfg.comm.sll_db_list), "comm.sll_db_list: levels must be negative dB")
    need(len(cfg.comm.phase_list) >= 1, "comm.phase_list: needs at least one phase")
    need(cfg.comm.grid_step_deg > 0, "comm.grid_step_deg: must be > 0")
    need(cfg.processing.eta > 0, "processing.eta: must be > 0")
    need(cfg.processing.max_iter >= 1, "processing.max_iter: must be >= 1")
    need(cfg.processing.prior_passes >= 1, "processing.prior_passes: must be >= 1")
    need(cfg.processing.transmit in ("cbm", "ncbm"), "processing.transmit: must be 'cbm' or 'ncbm'")
    need(cfg.processing.mc_draws >= 1000, "processing.mc_draws: must be >= 1000")
    need(cfg.processing.bench_repeats >= 1, "processing.bench_repeats: must be >= 1")
    need(cfg.seed >= 0, "seed: must be a nonnegative integer")
    for i, t in enumerate(cfg.targets):
        need(1 <= t.range_cell <= cfg.cpi.L, f"targets[{i}].range_cell: must lie in [1, {cfg.cpi.L}]")
        need(0 <= t.doppler_cell < cfg.cpi.Q, f"targets[{i}].doppler_cell: must lie in [0, {cfg.cpi.Q})")
        need(-90 <= t.angle_deg <= 90, f"targets[{i}].angle_deg: must lie in [-90, 90]")
