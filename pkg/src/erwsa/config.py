"""Strict JSON experiment configuration.

Top-level keys: d, schedule, steps, horizon, checkpoints, seed, replicates,
first_step, urn, experiment.  Unknown keys are errors; every error names the
field and, when the file is available, its line.
"""
from __future__ import annotations

import json
import re
from fractions import Fraction

from .model import ConfigError, MemorySchedule, StepSizeModel, WalkConfig, as_number
from .walkers import RpwConfig

WALK_KEYS = {"d", "schedule", "steps", "horizon", "checkpoints", "seed", "replicates", "first_step"}
TOP_KEYS = WALK_KEYS | {"urn", "experiment"}
SCHEDULE_KEYS = {
    "constant": {"kind", "p"},
    "tabulated": {"kind", "values", "limit"},
    "power": {"kind", "p", "amplitude", "exponent"},
}
URN_KEYS = {"pA", "pB", "W0", "B0", "p0"}


class Source:
    """Raw text used to map a field name to its line."""

    def __init__(self, text: str | None = None):
        self.text = text or ""

    def line_of(self, field: str) -> int | None:
        key = field.split(".")[-1]
        m = re.search(r'"' + re.escape(key) + r'"\s*:', self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def error(self, field: str, message: str) -> ConfigError:
        return ConfigError(field, message, self.line_of(field))


def load_config(path) -> tuple[dict, Source]:
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc.msg}", exc.lineno) from None
    src = Source(text)
    if not isinstance(data, dict):
        raise src.error("<root>", "top level must be an object")
    check_keys(data, TOP_KEYS, "", src)
    return data, src


def check_keys(obj: dict, allowed: set, prefix: str, src: Source) -> None:
    for key in obj:
        if key not in allowed:
            raise src.error(prefix + key, f"unknown key (allowed: {', '.join(sorted(allowed))})")


def parse_override(text: str) -> tuple[list, object]:
    """``a.b=value`` -> (["a", "b"], value); the value is read as JSON when possible."""
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, _, raw = text.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_override(data: dict, path: list, value) -> None:
    cur = data
    for k in path[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigError(".".join(path), "cannot override inside a non-object")
    cur[path[-1]] = value


def _int(value, field, src, lo=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise src.error(field, f"expected an integer, got {value!r}")
    value = int(value)
    if lo is not None and value < lo:
        raise src.error(field, f"must be >= {lo}")
    return value


def _prob(value, field, src):
    try:
        p = as_number(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise src.error(field, f"expected a number or ratio string, got {value!r}") from None
    if not 0 <= p <= 1:
        raise src.error(field, "must lie in [0, 1]")
    return p


def build_schedule(spec, src: Source, field: str = "schedule") -> MemorySchedule:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise src.error(field, "expected an object with a 'kind'")
    kind = spec["kind"]
    if kind not in SCHEDULE_KEYS:
        raise src.error(field + ".kind", f"unknown schedule kind {kind!r}")
    check_keys(spec, SCHEDULE_KEYS[kind], field + ".", src)
    try:
        if kind == "constant":
            return MemorySchedule.constant(_prob(spec["p"], field + ".p", src))
        if kind == "tabulated":
            vals = [float(_prob(v, field + ".values", src)) for v in spec["values"]]
            return MemorySchedule.tabulated(vals, _prob(spec["limit"], field + ".limit", src))
        return MemorySchedule.power_law(_prob(spec["p"], field + ".p", src), float(spec["amplitude"]), float(spec["exponent"]))
    except KeyError as exc:
        raise src.error(f"{field}.{exc.args[0]}", "missing") from None


def build_steps(spec, src: Source, field: str = "steps") -> StepSizeModel:
    try:
        if isinstance(spec, str):
            return StepSizeModel.parse(spec)
        if isinstance(spec, dict):
            check_keys(spec, {"law", "params"}, field + ".", src)
            return StepSizeModel(str(spec["law"]), tuple(spec.get("params", ())))
    except (ValueError, KeyError) as exc:
        raise src.error(field, str(exc)) from None
    raise src.error(field, "expected 'law:params' or {law, params}")


def build_walk_config(data: dict, src: Source | None = None) -> WalkConfig:
    src = src or Source()
    for key in ("d", "schedule"):
        if key not in data:
            raise src.error(key, "required")
    d = _int(data["d"], "d", src, 1)
    schedule = build_schedule(data["schedule"], src)
    steps = build_steps(data.get("steps", "constant:1"), src)
    horizon = _int(data.get("horizon", 1000), "horizon", src, 1)
    cps = data.get("checkpoints", [])
    if not isinstance(cps, list):
        raise src.error("checkpoints", "expected a list of times")
    cps = tuple(_int(c, "checkpoints", src, 1) for c in cps)
    seed = _int(data.get("seed", 0), "seed", src, 0)
    reps = _int(data.get("replicates", 1), "replicates", src, 1)
    first = data.get("first_step", "uniform")
    try:
        return WalkConfig(d, schedule, steps, horizon, cps, seed, reps, first)
    except ValueError as exc:
        msg = str(exc)
        fld = "checkpoints" if "checkpoint" in msg else "first_step" if "first_step" in msg else "seed" if "seed" in msg else "<config>"
        raise src.error(fld, msg) from None


def build_rpw_config(data: dict, src: Source | None = None) -> RpwConfig:
    src = src or Source()
    urn = data.get("urn", {})
    if not isinstance(urn, dict):
        raise src.error("urn", "expected an object")
    check_keys(urn, URN_KEYS, "urn.", src)
    for key in ("pA", "pB"):
        if key not in urn:
            raise src.error("urn." + key, "required")
    try:
        return RpwConfig(
            float(_prob(urn["pA"], "urn.pA", src)),
            float(_prob(urn["pB"], "urn.pB", src)),
            _int(urn.get("W0", 0), "urn.W0", src, 0),
            _int(urn.get("B0", 0), "urn.B0", src, 0),
            float(_prob(urn.get("p0", 1.0), "urn.p0", src)),
            _int(data.get("horizon", 1000), "horizon", src, 1),
            _int(data.get("seed", 0), "seed", src, 0),
            _int(data.get("replicates", 1), "replicates", src, 1),
        )
    except ValueError as exc:
        raise src.error("urn", str(exc)) from None


def number_repr(x) -> object:
    """JSON-safe representation of a probability (ratios stay strings)."""
    return str(x) if isinstance(x, Fraction) else x
