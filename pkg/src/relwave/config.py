"""Flat ``key = value`` run configuration.

One assignment per line; ``#`` starts a comment; blank lines are ignored.
Values are plain numbers, booleans (``true``/``false``) or bare strings.
Unknown keys are errors. ``serialize`` writes every field, so
``parse_config(serialize(cfg)) == cfg``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .reduction import POLICIES
from .spacetime import BETA_LIMIT

SCENARIOS = ("einstein_screen", "decay_90", "epr_boosted", "packet_boost_demo")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    seed: int = 0
    out: str = "out"
    n_trials: int = 10_000
    workers: int = 1
    beta: float = 0.5
    # two-body decay
    k_center: float = 1.0
    k_width: float = 0.05
    mass: float = 1.0
    distance: float = 10.0
    distance_2: float = 10.0
    half_angle: float = 0.1
    detector_angle_deg: float = 90.0
    # hemisphere screen
    n_theta: int = 8
    n_phi: int = 16
    # singlet pair
    detector_separation: float = 2.0
    n_angles: int = 19
    trial_csv: bool = False
    # single packet
    n_records: int = 50
    n_cells: int = 8
    policy: str = "instantaneous-born"

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_overrides(self, **kw) -> RunConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _guard(ok: bool, key: str, message: str):
    if not ok:
        raise ConfigError(message, key=key)


def validate(cfg: RunConfig) -> None:
    _guard(cfg.scenario in SCENARIOS, "scenario",
           f"unknown scenario {cfg.scenario!r} (expected one of {', '.join(SCENARIOS)})")
    for k in FIELD_TYPES:
        v = getattr(cfg, k)
        if isinstance(v, float):
            _guard(math.isfinite(v), k, "must be finite")
    _guard(abs(cfg.beta) < BETA_LIMIT, "beta", f"|beta| < 1 guard violated (beta = {cfg.beta!r})")
    _guard(cfg.seed >= 0, "seed", "must be >= 0")
    _guard(cfg.n_trials >= 0, "n_trials", "must be >= 0")
    _guard(cfg.workers >= 1, "workers", "must be >= 1")
    _guard(cfg.k_center > 0, "k_center", "must be > 0")
    _guard(cfg.k_width > 0, "k_width", "must be > 0")
    _guard(cfg.mass > 0, "mass", "must be > 0")
    _guard(cfg.distance > 0, "distance", "must be > 0")
    _guard(cfg.distance_2 > 0, "distance_2", "must be > 0")
    _guard(0 < cfg.half_angle < math.pi / 2, "half_angle", "must lie in (0, pi/2)")
    _guard(0 < cfg.detector_angle_deg <= 180, "detector_angle_deg", "must lie in (0, 180]")
    _guard(cfg.n_theta >= 1 and cfg.n_phi >= 1, "n_theta", "bin counts must be >= 1")
    _guard(cfg.detector_separation > 0, "detector_separation", "must be > 0")
    _guard(cfg.n_angles >= 2, "n_angles", "must be >= 2")
    _guard(cfg.n_records >= 0, "n_records", "must be >= 0")
    _guard(cfg.n_cells >= 1, "n_cells", "must be >= 1")
    _guard(cfg.policy in POLICIES, "policy", f"unknown policy (expected one of {', '.join(POLICIES)})")
    if cfg.scenario == "epr_boosted":
        _guard(cfg.n_trials >= 1000, "n_trials", "correlation estimates need n_trials >= 1000")


def _convert(key: str, raw: str, line: int):
    typ = FIELD_TYPES[key]
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "bool":
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError("expected true or false")
            return low == "true"
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot read {raw!r} as {typ}: {exc}", line, key) from None


def parse_config(text: str, scenario: str | None = None) -> RunConfig:
    """Parse config text; ``scenario`` fills in (or must agree with) the ``scenario`` key."""
    values = {}
    lines = {}
    for n, raw_line in enumerate(text.splitlines(), start=1):
        body = raw_line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", n)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in FIELD_TYPES:
            raise ConfigError("unknown key", n, key)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", n, key)
        if not raw:
            raise ConfigError("missing value", n, key)
        values[key] = _convert(key, raw, n)
        lines[key] = n
    if scenario is not None:
        if values.setdefault("scenario", scenario) != scenario:
            raise ConfigError(f"config is for {values['scenario']!r}, not {scenario!r}",
                              lines["scenario"], "scenario")
    if "scenario" not in values:
        raise ConfigError("missing required key", key="scenario")
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        if exc.key in lines:
            raise ConfigError(str(exc).split(": ", 1)[-1], lines[exc.key], exc.key) from None
        raise


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_format(v)}\n" for k, v in cfg.to_dict().items())


def load_config(path, scenario: str | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), scenario)
