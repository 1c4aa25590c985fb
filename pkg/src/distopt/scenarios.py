"""Scenario files, disturbance timelines, the naive baseline and the
centralized steady-state oracle.

A scenario is a JSON document validated against the bundled schema
(structure) and by :func:`validate_scenario` (everything the schema cannot
express). Times are in seconds everywhere.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import jsonschema
import numpy as np

from .core import (
    InputError,
    OracleError,
    ScenarioError,
    UndefinedMetricError,
    UsageError,
)
from .models import HouseSubsystem, SubsystemModel, WellSubsystem
from .plant import HouseParams, WellParams

log = logging.getLogger(__name__)

__all__ = [
    "ConstantProfile",
    "PointsProfile",
    "DailyProfile",
    "SubsystemDef",
    "Schedule",
    "Scenario",
    "Disturbance",
    "OracleSolution",
    "parse_profile",
    "ramp_windows",
    "load_scenario",
    "scenario_from_dict",
    "dump_scenario",
    "validate_scenario",
    "bundled_scenario_path",
    "disturbance_at",
    "freeze",
    "with_g_max",
    "centralized_oracle",
    "naive_allocation",
    "profit_diff",
]

DAY = 86400.0
SCHEMA_VERSION = 1


# --------------------------------------------------------------------------
# profiles

@dataclass(frozen=True)
class ConstantProfile:
    value: float

    def __call__(self, t: float) -> float:
        return self.value

    def to_json(self):
        return self.value

    def covers(self, horizon: float) -> bool:
        return True


@dataclass(frozen=True)
class PointsProfile:
    """Piecewise-linear through ``(t, v)`` breakpoints, held flat outside."""

    points: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        ts = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ScenarioError("timeline breakpoints must be strictly increasing in time")
        object.__setattr__(self, "_t", np.array(ts, dtype=float))
        object.__setattr__(self, "_v", np.array([p[1] for p in self.points], dtype=float))

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self._t, self._v))

    def to_json(self):
        return {"points": [list(p) for p in self.points]}

    def covers(self, horizon: float) -> bool:
        return self._t[0] <= 0.0 and self._t[-1] >= horizon


@dataclass(frozen=True)
class DailyProfile:
    """Cosine day-night curve peaking at ``peak_time``, optionally clipped below."""

    mean: float
    amplitude: float
    peak_time: float
    period: float = DAY
    clip_min: Optional[float] = None

    def __call__(self, t: float) -> float:
        v = self.mean + self.amplitude * math.cos(2.0 * math.pi * (t - self.peak_time) / self.period)
        if self.clip_min is not None:
            v = max(v, self.clip_min)
        return v

    def to_json(self):
        d = {"mean": self.mean, "amplitude": self.amplitude, "peak_time": self.peak_time,
             "period": self.period}
        if self.clip_min is not None:
            d["clip_min"] = self.clip_min
        return {"daily": d}

    def covers(self, horizon: float) -> bool:
        return True


Profile = Union[ConstantProfile, PointsProfile, DailyProfile]


def parse_profile(obj) -> Profile:
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return ConstantProfile(float(obj))
    if isinstance(obj, dict) and "points" in obj:
        return PointsProfile(tuple((float(t), float(v)) for t, v in obj["points"]))
    if isinstance(obj, dict) and "daily" in obj:
        d = obj["daily"]
        clip = d.get("clip_min")
        return DailyProfile(
            float(d["mean"]),
            float(d["amplitude"]),
            float(d["peak_time"]),
            float(d.get("period", DAY)),
            None if clip is None else float(clip),
        )
    raise ScenarioError(f"not a profile: {obj!r}")


# --------------------------------------------------------------------------
# scenario

@dataclass(frozen=True)
class SubsystemDef:
    type: str
    params: Dict[str, float]
    bounds: Tuple[float, float]
    disturbances: Dict[str, Profile] = field(default_factory=dict)
    name: Optional[str] = None

    def build(self) -> SubsystemModel:
        lo, hi = self.bounds
        if self.type == "house":
            return HouseSubsystem(HouseParams.from_dict(self.params), lo, hi)
        return WellSubsystem(WellParams.from_dict(self.params), lo, hi)


@dataclass(frozen=True)
class Schedule:
    coordinator_period: int = 10
    allow_unseparated: bool = False
    oracle_period: float = 600.0


@dataclass(frozen=True)
class Scenario:
    name: str
    case: str
    horizon: float
    dt: float
    g_max: Tuple[Profile, ...]
    subsystems: Tuple[SubsystemDef, ...]
    tuning: dict
    shared: Dict[str, Profile] = field(default_factory=dict)
    hub: Optional[Dict[str, float]] = None
    schedule: Schedule = Schedule()
    seed: int = 0
    description: str = ""

    @property
    def N(self) -> int:
        return len(self.subsystems)

    @property
    def m(self) -> int:
        return len(self.g_max)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def models(self) -> List[SubsystemModel]:
        return [sub.build() for sub in self.subsystems]

    def period_for(self, arch: str) -> int:
        key = "dual_override" if arch == "dual-override" else arch
        return int(self.tuning.get(key, {}).get("coordinator_period", self.schedule.coordinator_period))

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "case": self.case,
        }
        if self.description:
            out["description"] = self.description
        out.update(
            horizon=self.horizon,
            dt=self.dt,
            seed=self.seed,
            constraints={"g_max": [p.to_json() for p in self.g_max]},
        )
        if self.shared:
            out["shared_disturbances"] = {k: p.to_json() for k, p in self.shared.items()}
        subs = []
        for sub in self.subsystems:
            d = {"type": sub.type}
            if sub.name is not None:
                d["name"] = sub.name
            d["params"] = dict(sub.params)
            d["bounds"] = list(sub.bounds)
            if sub.disturbances:
                d["disturbances"] = {k: p.to_json() for k, p in sub.disturbances.items()}
            subs.append(d)
        out["subsystems"] = subs
        if self.hub is not None:
            out["hub"] = dict(self.hub)
        out["schedule"] = {
            "coordinator_period": self.schedule.coordinator_period,
            "allow_unseparated": self.schedule.allow_unseparated,
            "oracle_period": self.schedule.oracle_period,
        }
        out["tuning"] = json.loads(json.dumps(self.tuning))
        return out


_REQUIRED_DISTURBANCES = {"house": ("T_a", "irradiance", "T_sp"), "well": ("opening",)}
_PARAM_NAMES = {
    "house": ("C_s", "C_i", "C_e", "C_h", "R_is", "R_ih", "R_ie", "R_ea", "R_ia", "A_w", "A_e"),
    "well": ("q0", "alpha", "beta", "price"),
}


def _schema() -> dict:
    text = resources.files("distopt").joinpath("data/scenario.schema.json").read_text("utf-8")
    return json.loads(text)


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``energy_hub``, ``gas_lift``)."""
    stem = name[:-5] if name.endswith(".json") else name
    p = resources.files("distopt").joinpath(f"data/{stem}.json")
    if not p.is_file():
        raise UsageError(f"no bundled scenario named {name!r}")
    return Path(str(p))


def validate_scenario(doc: dict) -> List[str]:
    """Every problem with a scenario document, schema and semantics."""
    validator = jsonschema.Draft202012Validator(_schema())
    problems = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        problems.append(f"{where}: {err.message}")
    if problems:
        return problems

    horizon, dt = doc["horizon"], doc["dt"]
    steps = horizon / dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        problems.append("horizon: must be a whole number of dt steps")

    def check_profile(where, obj):
        try:
            prof = parse_profile(obj)
        except ScenarioError as exc:
            problems.append(f"{where}: {exc}")
            return
        if not prof.covers(horizon):
            problems.append(f"{where}: timeline does not cover [0, {horizon}]")

    m = len(doc["constraints"]["g_max"])
    for k, obj in enumerate(doc["constraints"]["g_max"]):
        check_profile(f"constraints/g_max/{k}", obj)
    shared = doc.get("shared_disturbances", {})
    for key, obj in shared.items():
        check_profile(f"shared_disturbances/{key}", obj)

    subs = doc["subsystems"]
    N = len(subs)
    if m != 1:
        problems.append("constraints/g_max: bundled models share a single resource (m = 1)")
    types = {s["type"] for s in subs}
    if len(types) > 1:
        problems.append("subsystems: all subsystems of a scenario must have the same type")
    for i, sub in enumerate(subs):
        kind = sub["type"]
        names = _PARAM_NAMES[kind]
        missing = [n for n in names if n not in sub["params"]]
        extra = [n for n in sub["params"] if n not in names]
        if missing:
            problems.append(f"subsystems/{i}/params: missing {', '.join(missing)}")
        if extra:
            problems.append(f"subsystems/{i}/params: unknown {', '.join(extra)}")
        if not missing:
            try:
                SubsystemDef(kind, sub["params"], tuple(sub["bounds"])).build()
            except (UsageError, ScenarioError) as exc:
                problems.append(f"subsystems/{i}: {exc}")
        lo, hi = sub["bounds"]
        if not lo < hi:
            problems.append(f"subsystems/{i}/bounds: lower bound must be below upper bound")
        local = sub.get("disturbances", {})
        for key, obj in local.items():
            check_profile(f"subsystems/{i}/disturbances/{key}", obj)
        for key in _REQUIRED_DISTURBANCES[kind]:
            if key not in local and key not in shared:
                problems.append(f"subsystems/{i}/disturbances: no timeline for {key}")
        unknown = [k for k in local if k not in _REQUIRED_DISTURBANCES[kind]]
        if unknown:
            problems.append(f"subsystems/{i}/disturbances: unknown {', '.join(unknown)}")
    if doc["case"] == "energy_hub" and "hub" not in doc:
        problems.append("hub: the energy-hub case needs battery and solar parameters")
    if doc["case"] == "energy_hub" and types != {"house"}:
        problems.append("subsystems: the energy-hub case uses house subsystems")
    if doc["case"] == "gas_lift" and types != {"well"}:
        problems.append("subsystems: the gas-lift case uses well subsystems")

    schedule = doc.get("schedule", {})
    allow = schedule.get("allow_unseparated", False)
    tuning = doc["tuning"]
    periods = [("schedule/coordinator_period", schedule.get("coordinator_period", 10))]
    for arch in ("dual", "dual_override", "primal"):
        if "coordinator_period" in tuning[arch]:
            periods.append((f"tuning/{arch}/coordinator_period", tuning[arch]["coordinator_period"]))
    for where, period in periods:
        if period < 5 and not allow:
            problems.append(f"{where}: below 5 local samples without allow_unseparated")
    for arch in ("dual", "dual_override"):
        t = tuning[arch]
        if len(t["local"]) != N:
            problems.append(f"tuning/{arch}/local: need one entry per subsystem ({N})")
        if len(t["coordinator_gain"]) not in (1, m):
            problems.append(f"tuning/{arch}/coordinator_gain: need {m} entries")
        if len(t.get("initial_price", [0.0])) not in (1, m):
            problems.append(f"tuning/{arch}/initial_price: need {m} entries")
        if "local_constraint_gain" in t:
            problems.append(f"tuning/{arch}/local_constraint_gain: bundled models have no local constraints")
    crit = tuning["dual_override"]["critical"]
    if len(crit) != m:
        problems.append(f"tuning/dual_override/critical: need one list per coupling constraint ({m})")
    for j, ids in enumerate(crit):
        for i in ids:
            if i >= N:
                problems.append(f"tuning/dual_override/critical/{j}: subsystem {i} does not exist")
    p = tuning["primal"]
    if len(p["equalizer_gains"]) != N - 1:
        problems.append(f"tuning/primal/equalizer_gains: need {N - 1} entries")
    if len(p["marginal_gain"]) not in (1, m):
        problems.append(f"tuning/primal/marginal_gain: need {m} entries")
    return problems


def scenario_from_dict(doc: dict, source: str = "<scenario>") -> Scenario:
    problems = validate_scenario(doc)
    if problems:
        raise ScenarioError(f"{source}: invalid scenario:\n  " + "\n  ".join(problems), problems)
    subs = tuple(
        SubsystemDef(
            s["type"],
            {k: float(v) for k, v in s["params"].items()},
            (float(s["bounds"][0]), float(s["bounds"][1])),
            {k: parse_profile(v) for k, v in s.get("disturbances", {}).items()},
            s.get("name"),
        )
        for s in doc["subsystems"]
    )
    sched = doc.get("schedule", {})
    return Scenario(
        name=doc["name"],
        case=doc["case"],
        horizon=float(doc["horizon"]),
        dt=float(doc["dt"]),
        g_max=tuple(parse_profile(p) for p in doc["constraints"]["g_max"]),
        subsystems=subs,
        tuning=json.loads(json.dumps(doc["tuning"])),
        shared={k: parse_profile(v) for k, v in doc.get("shared_disturbances", {}).items()},
        hub={k: float(v) for k, v in doc["hub"].items()} if "hub" in doc else None,
        schedule=Schedule(
            int(sched.get("coordinator_period", 10)),
            bool(sched.get("allow_unseparated", False)),
            float(sched.get("oracle_period", 600.0)),
        ),
        seed=int(doc.get("seed", 0)),
        description=doc.get("description", ""),
    )


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file.

    Bare names of bundled scenarios (``energy_hub``, ``gas_lift.json``) are
    resolved when no such file exists.
    """
    p = Path(path)
    if not p.exists() and p.parent == Path("."):
        try:
            p = bundled_scenario_path(p.name)
        except UsageError:
            pass
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario file ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: parse error: {exc.msg}") from exc
    return scenario_from_dict(doc, str(path))


def dump_scenario(s: Scenario, path=None) -> str:
    text = json.dumps(s.to_dict(), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# --------------------------------------------------------------------------
# disturbances

@dataclass(frozen=True)
class Disturbance:
    """Exogenous values at one instant: supply limits plus one dict per subsystem."""

    t: float
    g_max: np.ndarray
    local: Tuple[Dict[str, float], ...]
    shared: Dict[str, float]


def disturbance_at(s: Scenario, t: float) -> Disturbance:
    tol = 1e-9 * max(1.0, s.horizon)
    if not (-tol <= t <= s.horizon + tol):
        raise InputError(f"t={t} outside the scenario horizon [0, {s.horizon}]")
    shared = {k: p(t) for k, p in s.shared.items()}
    local = []
    for sub in s.subsystems:
        d = dict(shared)
        d.update({k: p(t) for k, p in sub.disturbances.items()})
        local.append(d)
    return Disturbance(t, np.array([p(t) for p in s.g_max]), tuple(local), shared)


def freeze(s: Scenario, t: float, horizon: Optional[float] = None) -> Scenario:
    """Copy of ``s`` with every timeline held at its value at ``t``."""
    d = disturbance_at(s, t)
    subs = tuple(
        replace(sub, disturbances={k: ConstantProfile(p(t)) for k, p in sub.disturbances.items()})
        for sub in s.subsystems
    )
    return replace(
        s,
        name=f"{s.name}@{t:g}",
        horizon=s.horizon if horizon is None else float(horizon),
        g_max=tuple(ConstantProfile(float(v)) for v in d.g_max),
        shared={k: ConstantProfile(v) for k, v in d.shared.items()},
        subsystems=subs,
    )


def with_g_max(s: Scenario, values) -> Scenario:
    values = np.atleast_1d(np.asarray(values, dtype=float))
    return replace(s, g_max=tuple(ConstantProfile(float(v)) for v in values))


# --------------------------------------------------------------------------
# oracle

# Stopping tolerance on |sum g - g_bar| for the price bisection. Tighter than
# needed for the 2% comparisons so the KKT residuals certify to ~1e-8.
ORACLE_TOL = 1e-10
GRID_STEP = 1e-3
GRID_AGREEMENT = 1e-2


@dataclass(frozen=True)
class OracleSolution:
    u: Tuple[np.ndarray, ...]
    lam: np.ndarray
    active: np.ndarray
    kkt: Dict[str, float]

    @property
    def total(self) -> np.ndarray:
        return np.sum([ui for ui in self.u], axis=0)


def _kkt(models, u, lam, g_total, g_bar, d) -> Dict[str, float]:
    stat = 0.0
    for mdl, ui, di in zip(models, u, d.local):
        gp = mdl.gradients(ui, di)
        c = gp.gamma + gp.phi @ lam
        # projected-gradient stationarity on the box
        stat = max(stat, float(np.max(np.abs(ui - mdl.clip(ui - c)))))
    viol = g_total - g_bar
    return {
        "primal": float(np.max(np.maximum(viol, 0.0))),
        "dual": float(np.max(np.maximum(-lam, 0.0))),
        "complementarity": float(np.max(np.abs(lam * viol))),
        "stationarity": stat,
    }


def _grid_check(models, u, lam, d) -> None:
    for i, (mdl, ui, di) in enumerate(zip(models, u, d.local)):
        if mdl.n_inputs != 1 or not mdl.input_constraint:
            continue
        lo, hi = float(mdl.lower[0]), float(mdl.upper[0])
        grid = np.append(np.arange(lo, hi, GRID_STEP), hi)
        lagr = mdl.cost_many(grid, di) + lam[0] * grid
        k = int(np.argmin(lagr))
        best = float(mdl.cost(ui, di) + lam[0] * ui[0])
        scale = max(1.0, abs(best))
        if abs(grid[k] - ui[0]) > GRID_AGREEMENT or lagr[k] < best - 1e-9 * scale:
            raise OracleError(
                f"subsystem {i}: grid minimiser {grid[k]:.6g} disagrees with "
                f"bisection solution {ui[0]:.6g} (non-convex local problem?)"
            )


def centralized_oracle(s: Scenario, t_snapshot: float, cross_check: bool = True) -> OracleSolution:
    """Steady-state optimum ``min sum J_i  s.t.  sum g_i <= g_bar`` with frozen disturbances.

    Bisection on the scalar price; each subsystem answers with its priced
    best response.
    """
    if s.m != 1:
        raise UsageError("the price bisection oracle handles a single coupling constraint")
    models = s.models()
    d = disturbance_at(s, t_snapshot)
    g_bar = float(d.g_max[0])

    def respond(lam):
        u = [mdl.best_response(np.array([lam]), di) for mdl, di in zip(models, d.local)]
        total = float(sum(mdl.usage(ui, di)[0] for mdl, ui, di in zip(models, u, d.local)))
        return u, total

    u, total = respond(0.0)
    lam = 0.0
    if total > g_bar + ORACLE_TOL:
        lo, hi = 0.0, 1.0
        u_hi, tot_hi = respond(hi)
        for _ in range(200):
            if tot_hi <= g_bar:
                break
            lo, hi = hi, 2.0 * hi
            u_hi, tot_hi = respond(hi)
        else:
            raise OracleError("no finite price makes the coupling constraint feasible")
        u, total, lam = u_hi, tot_hi, hi
        for _ in range(300):
            if abs(total - g_bar) <= ORACLE_TOL or hi - lo <= 1e-15 * hi:
                break
            mid = 0.5 * (lo + hi)
            u_mid, tot_mid = respond(mid)
            if tot_mid > g_bar:
                lo = mid
            else:
                hi = mid
                u, total, lam = u_mid, tot_mid, mid
    lam_v = np.array([lam])
    if cross_check:
        _grid_check(models, u, lam_v, d)
    kkt = _kkt(models, u, lam_v, np.array([total]), np.array([g_bar]), d)
    return OracleSolution(tuple(u), lam_v, np.array([lam > 0.0]), kkt)


# --------------------------------------------------------------------------
# baseline and profit metric

def naive_allocation(s: Scenario, t: float = 0.0) -> List[np.ndarray]:
    """Equal split of the supply, ``u_i = g_bar / N``."""
    d = disturbance_at(s, t)
    return [np.full(mdl.n_inputs, d.g_max[0] / s.N) for mdl in s.models()]


def profit_diff(P, P_naive):
    """Percent profit difference against the naive baseline."""
    P = np.asarray(P, dtype=float)
    P_naive = np.asarray(P_naive, dtype=float)
    if np.any(P_naive == 0):
        raise UndefinedMetricError("profit difference is undefined for a zero naive profit")
    out = (P - P_naive) / P_naive * 100.0
    return float(out) if out.ndim == 0 else out


def ramp_windows(s: Scenario) -> List[Tuple[float, float]]:
    """``(ramp end, next ramp start or horizon)`` for every disturbance ramp."""
    ramps = []
    for sub in s.subsystems:
        for prof in sub.disturbances.values():
            if isinstance(prof, PointsProfile):
                for (ta, va), (tb, vb) in zip(prof.points, prof.points[1:]):
                    if va != vb:
                        ramps.append((ta, tb))
    for prof in s.g_max:
        if isinstance(prof, PointsProfile):
            for (ta, va), (tb, vb) in zip(prof.points, prof.points[1:]):
                if va != vb:
                    ramps.append((ta, tb))
    ramps.sort()
    out = []
    for k, (_, end) in enumerate(ramps):
        nxt = ramps[k + 1][0] if k + 1 < len(ramps) else s.horizon
        out.append((end, nxt))
    return out
