"""Scenario configuration: ``key = value`` files with typed validation.

Grammar, one setting per line::

    # comment
    key = value

Keys are listed in :data:`KEYS`. Unknown keys are rejected. Booleans accept
on/off, true/false, yes/no, 1/0.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Iterable

PROTOCOLS = ("lmac", "csma", "dutycycle")
PATTERNS = ("pairs", "sink")


class ConfigError(ValueError):
    def __init__(self, problems: Iterable[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ScenarioConfig:
    area_width: float = 800.0
    area_height: float = 800.0
    n_nodes: int = 50
    seed: int = 1
    tx_range: float = 250.0
    block_side: float = 200.0
    bitrate: float = 250_000.0
    packet_size: int = 512
    sim_time: float = 500.0
    protocol: str = "lmac"
    slot_duration: float = 0.05
    theta: float = 0.3
    cw_min: int = 8
    cw_max: int = 64
    mini_slot: float = 0.001
    retry_limit: int = 5
    grant_size: int = 16
    duty_listen: float = 0.1
    duty_sleep: float = 0.9
    traffic: str = "poisson"
    pattern: str = "pairs"
    rate: float = 1.0
    # 0 means one flow sourced at every node
    flows: int = 0
    sink: int = 0
    p_tx: float = 0.060
    p_rx: float = 0.045
    p_idle: float = 0.045
    p_sleep: float = 9e-5
    trace: bool = False

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @property
    def data_duration(self) -> float:
        return 8 * self.packet_size / self.bitrate

    @property
    def grant_duration(self) -> float:
        return 8 * self.grant_size / self.bitrate

    def problems(self) -> list[str]:
        p = []
        if self.area_width <= 0 or self.area_height <= 0:
            p.append("area_width/area_height: must be positive")
        if self.n_nodes < 2:
            p.append("n_nodes: need at least 2 nodes")
        if self.tx_range <= 0:
            p.append("range: must be positive")
        if self.block_side <= 0:
            p.append("block_side: must be positive")
        if self.bitrate <= 0:
            p.append("bitrate: must be positive")
        if self.packet_size <= 0:
            p.append("packet_size: must be positive")
        if self.grant_size <= 0:
            p.append("grant_size: must be positive")
        if self.sim_time <= 0:
            p.append("sim_time: must be positive")
        if self.protocol not in PROTOCOLS:
            p.append(f"protocol: expected one of {', '.join(PROTOCOLS)}")
        if self.slot_duration <= 0:
            p.append("slot_duration: must be positive")
        if not 0 < self.theta < 1:
            p.append("theta: must lie strictly between 0 and 1")
        if self.cw_min < 1 or self.cw_max < self.cw_min:
            p.append("cw_min/cw_max: need 1 <= cw_min <= cw_max")
        if self.mini_slot <= 0:
            p.append("mini_slot: must be positive")
        if self.retry_limit < 0:
            p.append("retry_limit: must be non-negative")
        if self.duty_listen <= 0 or self.duty_sleep <= 0:
            p.append("duty_listen/duty_sleep: must be positive")
        if self.traffic != "poisson":
            p.append("traffic: only 'poisson' is supported")
        if self.pattern not in PATTERNS:
            p.append(f"pattern: expected one of {', '.join(PATTERNS)}")
        if self.rate < 0:
            p.append("rate: must be non-negative")
        if self.flows < 0:
            p.append("flows: must be non-negative")
        if not 0 <= self.sink < max(self.n_nodes, 1):
            p.append("sink: must be a node id")
        if min(self.p_tx, self.p_rx, self.p_idle, self.p_sleep) < 0:
            p.append("p_tx/p_rx/p_idle/p_sleep: must be non-negative")
        exchange = self.data_duration + self.grant_duration
        if self.protocol == "lmac" and exchange >= self.slot_duration:
            p.append("slot_duration: too short for a data frame plus grant")
        if self.protocol == "dutycycle" and exchange >= self.duty_listen:
            p.append("duty_listen: listen window shorter than a data frame plus ack")
        return p

    def validate(self) -> "ScenarioConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self


# file key -> attribute name
KEYS = {f.name: f.name for f in fields(ScenarioConfig)}
KEYS["range"] = "tx_range"
del KEYS["tx_range"]
_ATTR_TO_KEY = {v: k for k, v in KEYS.items()}
_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


def _convert(attr: str, raw: str):
    kind = _TYPES[attr]
    if kind == "bool":
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected on/off, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config(text: str, base: ScenarioConfig = ScenarioConfig()) -> ScenarioConfig:
    """Parse ``key = value`` text over ``base``; raises ConfigError listing every bad line/key."""
    changes = {}
    problems = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        attr = KEYS.get(key)
        if attr is None:
            problems.append(f"{key}: unknown key")
            continue
        try:
            changes[attr] = _convert(attr, value)
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    cfg = base.replace(**changes)
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "on" if v else "off"
        lines.append(f"{_ATTR_TO_KEY[f.name]} = {v}")
    return "\n".join(lines) + "\n"
