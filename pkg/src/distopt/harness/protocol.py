"""Line-delimited JSON messages exchanged between subsystems and the coordinator.

One UTF-8 JSON object per LF-terminated line; ``type`` selects the message
kind and ``tick`` is the coordinator sample counter. Floats are written in
shortest round-trip form, so decoding returns exactly what was encoded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Dict, Tuple, Type, Union

from ..core import ProtocolError

__all__ = [
    "PriceBroadcast",
    "UsageReport",
    "OpportunityCostReport",
    "AllocationUpdate",
    "OverrideReport",
    "Message",
    "encode_message",
    "decode_message",
]


def _floats(values, name) -> Tuple[float, ...]:
    if not isinstance(values, (list, tuple)):
        raise ProtocolError(f"{name} must be a list of numbers")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ProtocolError(f"{name} must contain finite numbers, got {v!r}")
        out.append(float(v))
    return tuple(out)


def _index(v, name) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ProtocolError(f"{name} must be a non-negative integer, got {v!r}")
    return v


@dataclass(frozen=True)
class PriceBroadcast:
    lam: Tuple[float, ...]
    tick: int


@dataclass(frozen=True)
class UsageReport:
    subsystem: int
    g: Tuple[float, ...]
    tick: int


@dataclass(frozen=True)
class OpportunityCostReport:
    subsystem: int
    lambda_i: Tuple[float, ...]
    tick: int


@dataclass(frozen=True)
class AllocationUpdate:
    subsystem: int
    t: Tuple[float, ...]
    tick: int


@dataclass(frozen=True)
class OverrideReport:
    subsystem: int
    u_c: Tuple[float, ...]
    u_g: Tuple[float, ...]
    tick: int


Message = Union[PriceBroadcast, UsageReport, OpportunityCostReport, AllocationUpdate, OverrideReport]

# wire type -> (class, {wire field: attribute})
_WIRE: Dict[str, Tuple[Type, Dict[str, str]]] = {
    "price": (PriceBroadcast, {"lambda": "lam", "tick": "tick"}),
    "usage": (UsageReport, {"subsystem": "subsystem", "g": "g", "tick": "tick"}),
    "opportunity_cost": (
        OpportunityCostReport,
        {"subsystem": "subsystem", "lambda_i": "lambda_i", "tick": "tick"},
    ),
    "allocation": (AllocationUpdate, {"subsystem": "subsystem", "t": "t", "tick": "tick"}),
    "override": (
        OverrideReport,
        {"subsystem": "subsystem", "u_c": "u_c", "u_g": "u_g", "tick": "tick"},
    ),
}
_TYPE_OF = {cls: name for name, (cls, _) in _WIRE.items()}


def encode_message(msg: Message) -> str:
    try:
        kind = _TYPE_OF[type(msg)]
    except KeyError:
        raise ProtocolError(f"cannot encode {type(msg).__name__}") from None
    obj = {"type": kind}
    for wire, attr in _WIRE[kind][1].items():
        v = getattr(msg, attr)
        if attr == "tick" or attr == "subsystem":
            obj[wire] = _index(v, wire)
        else:
            obj[wire] = list(_floats(v, wire))
    return json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"


def decode_message(line: Union[str, bytes]) -> Message:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError("message is not valid UTF-8") from exc
    if line.endswith("\n"):
        line = line[:-1]
    if "\n" in line:
        raise ProtocolError("one message per line")
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message: {exc.msg} at column {exc.colno}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("a message must be a JSON object")
    kind = obj.get("type")
    if kind not in _WIRE:
        raise ProtocolError(f"unknown message type {kind!r}")
    cls, spec = _WIRE[kind]
    extra = set(obj) - set(spec) - {"type"}
    if extra:
        raise ProtocolError(f"unknown field(s) in {kind} message: {', '.join(sorted(extra))}")
    missing = set(spec) - set(obj)
    if missing:
        raise ProtocolError(f"{kind} message lacks {', '.join(sorted(missing))}")
    kwargs = {}
    for wire, attr in spec.items():
        if attr in ("tick", "subsystem"):
            kwargs[attr] = _index(obj[wire], wire)
        else:
            kwargs[attr] = _floats(obj[wire], wire)
    return cls(**kwargs)
