"""Plain-text run configuration: ``key = value`` lines grouped under
``[section]`` headers, ``#`` comments, and ``NEMSTRIP_<SECTION>_<KEY>``
environment overrides.

Every problem found is reported together, each with its line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Callable, Mapping

from .errors import ConfigError

MODES = ("aniso", "hydro", "sweep", "blasius", "verify")
PRESETS = ("random", "kolmogorov", "snapshot")
Z_BCS = ("periodic", "zero")
ENV_PREFIX = "NEMSTRIP_"


@dataclass(frozen=True)
class RunConfig:
    mode: str
    nx: int = 64
    ny: int = 64
    nz: int = 64
    z_bc: str = "periodic"
    eps: float = 0.1
    eps_list: tuple = (0.2, 0.1, 0.05)
    nu1: float = 1.0
    nu2: float = 1.0
    a: float = 50.0
    b: float = 1.0
    c: float = 10.0
    dt: float = 1e-3
    t_end: float = 1.0
    output_stride: int = 10
    preset: str = "random"
    snapshot: str = ""
    seed: int = 0
    amplitude: float = 0.1
    q_amplitude: float = 0.01
    alpha: float = 0.75
    eta_max: float = 12.0
    output_dir: str = "out"
    snapshot_stride: int = 0  # 0: initial and final snapshots only


def _pos(x):
    return None if x > 0 else "must be positive"


def _nonneg(x):
    return None if x >= 0 else "must be nonnegative"


def _even(x):
    return None if x >= 4 and x % 2 == 0 else "must be an even integer >= 4"


def _one_of(choices):
    def check(x):
        return None if x in choices else f"must be one of {', '.join(choices)}"

    return check


def _eps_list(xs):
    if not xs:
        return "must not be empty"
    if any(x <= 0 for x in xs):
        return "entries must be positive"
    if any(b >= a for a, b in zip(xs, xs[1:])):
        return "must be strictly decreasing"
    return None


def _alpha(x):
    return None if 0.0 < x < 1.0 else "must lie in (0, 1)"


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(text: str) -> int:
    return int(text, 10)


def _floats(text: str) -> tuple:
    return tuple(_float(p) for p in text.split(",") if p.strip())


def _str(text: str) -> str:
    return text


# (section, key) -> (field name, parser, validator)
SCHEMA: dict[tuple[str, str], tuple[str, Callable, Callable | None]] = {
    ("", "mode"): ("mode", _str, _one_of(MODES)),
    ("grid", "nx"): ("nx", _int, _even),
    ("grid", "ny"): ("ny", _int, _even),
    ("grid", "nz"): ("nz", _int, _even),
    ("grid", "z_bc"): ("z_bc", _str, _one_of(Z_BCS)),
    ("physics", "eps"): ("eps", _float, _pos),
    ("physics", "eps_list"): ("eps_list", _floats, _eps_list),
    ("physics", "nu1"): ("nu1", _float, _pos),
    ("physics", "nu2"): ("nu2", _float, _pos),
    ("physics", "a"): ("a", _float, _pos),
    ("physics", "b"): ("b", _float, None),
    ("physics", "c"): ("c", _float, _pos),
    ("time", "dt"): ("dt", _float, _pos),
    ("time", "t_end"): ("t_end", _float, _pos),
    ("time", "output_stride"): ("output_stride", _int, _pos),
    ("init", "preset"): ("preset", _str, _one_of(PRESETS)),
    ("init", "snapshot"): ("snapshot", _str, None),
    ("init", "seed"): ("seed", _int, _nonneg),
    ("init", "amplitude"): ("amplitude", _float, _nonneg),
    ("init", "q_amplitude"): ("q_amplitude", _float, _nonneg),
    ("init", "alpha"): ("alpha", _float, _alpha),
    ("blasius", "eta_max"): ("eta_max", _float, lambda x: None if x >= 8 else "must be >= 8"),
    ("output", "dir"): ("output_dir", _str, None),
    ("output", "snapshot_stride"): ("snapshot_stride", _int, _nonneg),
}
REQUIRED = (("", "mode"),)
_BY_FIELD = {v[0]: k for k, v in SCHEMA.items()}


def _key_name(section: str, key: str) -> str:
    return f"{section}.{key}" if section else key


def _env_items(env: Mapping[str, str]):
    """Yield ``(section, key, value, name)`` for recognised override variables."""
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX) :].lower()
        for section, key in SCHEMA:
            tag = f"{section}_{key}" if section else key
            if rest == tag:
                yield section, key, env[name], name
                break
        else:
            yield None, rest, env[name], name


def parse_config(text: str, env: Mapping[str, str] | None = None, overrides: Mapping[str, object] | None = None) -> RunConfig:
    """Validate ``text`` (plus environment and keyword overrides) into a RunConfig.

    ``overrides`` maps field names to already-typed values and wins over both
    the file and the environment.
    """
    errors: list[tuple[int | None, str]] = []
    values: dict[str, object] = {}
    seen: dict[tuple[str, str], int] = {}
    section = ""

    def assign(sec, key, raw, lineno, where):
        spec = SCHEMA.get((sec, key))
        if spec is None:
            errors.append((lineno, f"unknown key {_key_name(sec, key)!r}{where}"))
            return
        fname, parse, check = spec
        try:
            val = parse(raw)
        except ValueError:
            errors.append((lineno, f"{_key_name(sec, key)}: cannot parse {raw!r} as {parse.__name__.strip('_')}{where}"))
            return
        msg = check(val) if check else None
        if msg:
            errors.append((lineno, f"{_key_name(sec, key)} {msg} (got {raw!r}){where}"))
            return
        values[fname] = val

    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("["):
            if not s.endswith("]") or len(s) < 3:
                errors.append((lineno, f"malformed section header {s!r}"))
                continue
            section = s[1:-1].strip().lower()
            if not any(sec == section for sec, _ in SCHEMA):
                errors.append((lineno, f"unknown section [{section}]"))
            continue
        if "=" not in s:
            errors.append((lineno, f"expected 'key = value', got {s!r}"))
            continue
        key, raw = (p.strip() for p in s.split("=", 1))
        key = key.lower()
        if (section, key) in seen:
            errors.append((lineno, f"duplicate key {_key_name(section, key)!r} (first on line {seen[section, key]})"))
            continue
        seen[section, key] = lineno
        assign(section, key, raw, lineno, "")

    for sec, key, raw, name in _env_items(env or {}):
        if sec is None:
            errors.append((None, f"unknown environment override {name}"))
            continue
        seen.setdefault((sec, key), 0)
        assign(sec, key, raw, None, f" [from {name}]")

    for fname, val in (overrides or {}).items():
        if fname not in _BY_FIELD:
            errors.append((None, f"unknown override {fname!r}"))
            continue
        check = SCHEMA[_BY_FIELD[fname]][2]
        msg = check(val) if check else None
        if msg:
            errors.append((None, f"{_key_name(*_BY_FIELD[fname])} {msg} (got {val!r})"))
            continue
        values[fname] = val

    for req in REQUIRED:
        if SCHEMA[req][0] not in values and not any(e[1].startswith(_key_name(*req)) for e in errors):
            errors.append((None, f"missing required key {_key_name(*req)!r}"))

    if not errors and values.get("preset") == "snapshot" and not values.get("snapshot"):
        errors.append((seen.get(("init", "preset")), "init.preset = snapshot needs init.snapshot"))

    if errors:
        errors.sort(key=lambda e: (e[0] is None, e[0] or 0))
        raise ConfigError(errors)
    return RunConfig(**values)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def serialize(cfg: RunConfig) -> str:
    """Full text form; ``parse_config(serialize(c)) == c``."""
    by_section: dict[str, list[str]] = {}
    for f in fields(cfg):
        sec, key = _BY_FIELD[f.name]
        by_section.setdefault(sec, []).append(f"{key} = {_fmt(getattr(cfg, f.name))}")
    out = list(by_section.pop("", []))
    for sec, lines in by_section.items():
        out.append("")
        out.append(f"[{sec}]")
        out.extend(lines)
    return "\n".join(out) + "\n"


def with_mode(cfg: RunConfig, mode: str) -> RunConfig:
    if mode not in MODES:
        raise ConfigError([(None, f"mode must be one of {', '.join(MODES)}")])
    return replace(cfg, mode=mode)
