"""Run configuration: flat ``key = value`` pairs under ``[run]`` and ``[environment]``."""

from __future__ import annotations

import ast
import configparser
import re
from dataclasses import dataclass, field, fields
from typing import Optional

from ..planner import ALGORITHMS, FEEDBACK, STEP_RULES, WARM_STARTS


class ConfigError(ValueError):
    """Invalid configuration; ``lineno`` points into the file when known."""

    def __init__(self, message: str, lineno: Optional[int] = None, path: str = "<config>"):
        self.lineno = lineno
        self.path = path
        where = f"{path}:{lineno}" if lineno is not None else path
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class RunConfig:
    benchmark: str
    algorithm: str = "mdp-bo"
    feedback: str = "episodic"
    delay: int = 0
    T: int = 1
    H: Optional[int] = None
    seed: int = 0
    replicates: int = 1
    allocation: str = "xy"
    maximizer_set: str = "credible"
    K: int = 50
    beta: float = 2.0
    components: int = 1
    step_rule: str = "harmonic"
    warm_start: Optional[str] = None
    noise_agnostic: bool = False
    workers: int = 1
    output: str = "results"
    environment: dict = field(default_factory=dict)

    def __post_init__(self):
        from .registry import BENCHMARKS

        for name in ("T", "replicates", "K", "components", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.H is not None and self.H < 1:
            raise ValueError("H must be at least 1")
        if self.delay < 0:
            raise ValueError("delay must be non-negative")
        if self.benchmark not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {self.benchmark!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.feedback not in FEEDBACK:
            raise ValueError(f"unknown feedback {self.feedback!r}")
        if self.allocation not in ("xy", "g"):
            raise ValueError(f"unknown allocation {self.allocation!r}")
        if self.maximizer_set not in ("credible", "thompson", "ucb-batch"):
            raise ValueError(f"unknown maximizer set {self.maximizer_set!r}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.warm_start is not None and self.warm_start not in WARM_STARTS:
            raise ValueError(f"unknown warm start {self.warm_start!r}")


_RUN_KEYS = {f.name: f for f in fields(RunConfig) if f.name != "environment"}


def _literal(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", ""):
        return None
    try:
        return ast.literal_eval(text.strip())
    except (ValueError, SyntaxError):
        return text.strip()


def _coerce(name: str, raw: str):
    typ = _RUN_KEYS[name].type
    value = _literal(raw)
    if "bool" in typ:
        if not isinstance(value, bool):
            raise ValueError(f"{name} expects true/false, got {raw!r}")
    elif "int" in typ:
        if value is None and "Optional" in typ:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{name} expects an integer, got {raw!r}")
    elif "float" in typ:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{name} expects a number, got {raw!r}")
        value = float(value)
    elif value is None and "Optional" in typ:
        return None
    else:
        value = str(raw).strip()
    return value


def _key_lines(text: str) -> dict:
    """Map (section, key) to the 1-based line where the key is set."""
    lines, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines[(section, m.group(1).strip().lower())] = i
    return lines


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("missing section header", exc.lineno, path) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", lineno, path) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno, path) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section {exc.section!r}", exc.lineno, path) from exc
    where = _key_lines(text)
    for section in parser.sections():
        if section not in ("run", "environment"):
            raise ConfigError(f"unknown section [{section}]", _section_line(text, section), path)
    if not parser.has_section("run"):
        raise ConfigError("missing [run] section", None, path)
    kwargs = {}
    for key, raw in parser.items("run"):
        line = where.get(("run", key.lower()))
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r}", line, path)
        try:
            kwargs[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(str(exc), line, path) from exc
    if "benchmark" not in kwargs:
        raise ConfigError("[run] needs a benchmark", _section_line(text, "run"), path)
    env = {}
    if parser.has_section("environment"):
        for key, raw in parser.items("environment"):
            env[key] = _literal(raw)
    try:
        cfg = RunConfig(environment=env, **kwargs)
    except ValueError as exc:
        key = _offending_key(str(exc), kwargs)
        raise ConfigError(str(exc), where.get(("run", key)) if key else None, path) from exc
    from .registry import check_environment_params

    try:
        check_environment_params(cfg.benchmark, env)
    except ValueError as exc:
        key = str(exc).split("'")[1] if "'" in str(exc) else None
        raise ConfigError(str(exc), where.get(("environment", (key or "").lower())), path) from exc
    return cfg


def _section_line(text: str, section: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip() == f"[{section}]":
            return i
    return None


def _offending_key(message: str, kwargs: dict) -> Optional[str]:
    for key in kwargs:
        if message.startswith(f"{key} ") or f"{key!r}" in message or key in message.split():
            return key
    for key, value in kwargs.items():
        if isinstance(value, str) and repr(value) in message:
            return key
    return None


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from exc
    return parse_config(text, str(path))
