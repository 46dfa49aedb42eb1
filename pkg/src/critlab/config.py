"""Experiment configuration: a sectioned key = value file.

Grammar (INI, as read by configparser; ``#`` and ``;`` start comments)::

    [manifold]
    kind = sphere            # sphere | torus
    n = 6
    N = 4096                 # sphere: radial nodes
    clustering = 2.0         # sphere: node clustering exponent at the pole
    L = 1.0                  # torus: side length
    m = 16                   # torus: nodes per side

    [fields]
    h = const(6)             # profile descriptors, see make_profile
    f = cos_poly(0.5, 0.5)

    [task]
    name = classify          # constants | solve | classify | find-critical | aubin
                             # | concentrate | green-mass | conformal-check
    tol_class = 0.05         # task parameters; lists are comma separated

    [output]
    directory = out
    csv = yes

    [sweep]                  # optional: run the task once per value
    key = task.q
    values = 2.8, 2.9, 2.95, 2.99
"""

from __future__ import annotations

import configparser
import copy
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidConfiguration

TASKS = (
    "constants",
    "solve",
    "classify",
    "find-critical",
    "aubin",
    "concentrate",
    "green-mass",
    "conformal-check",
)
SECTIONS = ("manifold", "fields", "task", "output", "sweep")


@dataclass
class ExperimentConfig:
    manifold: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    task: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    source: str = "<defaults>"

    @property
    def task_name(self) -> str:
        return self.task.get("name", "")

    def section(self, name: str) -> dict:
        if name not in SECTIONS:
            raise InvalidConfiguration(f"unknown section [{name}]")
        return getattr(self, name)

    def set(self, dotted: str, value: str) -> None:
        """Set ``section.key`` to a raw string value."""
        if "." not in dotted:
            raise InvalidConfiguration(f"expected section.key, got {dotted!r}")
        sec, key = dotted.split(".", 1)
        self.section(sec)[key.strip()] = str(value).strip()

    def copy(self) -> "ExperimentConfig":
        return copy.deepcopy(self)

    def validate(self) -> "ExperimentConfig":
        name = self.task_name
        if not name:
            raise InvalidConfiguration("no task given ([task] name is missing)")
        if name not in TASKS:
            raise InvalidConfiguration(f"unknown task {name!r}; expected one of {', '.join(TASKS)}")
        kind = self.manifold.get("kind", "sphere")
        if kind not in ("sphere", "torus"):
            raise InvalidConfiguration(f"unknown manifold kind {kind!r}")
        for key in ("h", "f"):
            val = self.fields.get(key, "")
            if val.startswith(("file(", "from_file(")):
                path = val[val.index("(") + 1 : -1].strip("\"' ")
                if not Path(path).exists():
                    raise InvalidConfiguration(f"[fields] {key}: file {path} does not exist")
        return self

    def echo(self) -> str:
        """The configuration as it was resolved, in the input grammar."""
        lines = []
        for sec in SECTIONS:
            d = self.section(sec)
            if not d:
                continue
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {d[k]}" for k in sorted(d))
            lines.append("")
        return "\n".join(lines)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str  # keys are case sensitive (N versus n)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise InvalidConfiguration(f"{source}: {exc}") from exc
    cfg = ExperimentConfig(source=source)
    for sec in parser.sections():
        if sec not in SECTIONS:
            raise InvalidConfiguration(f"{source}: unknown section [{sec}]")
        cfg.section(sec).update({k: v.strip() for k, v in parser.items(sec)})
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise InvalidConfiguration(f"config file {path} does not exist")
    return parse_config(path.read_text(), source=str(path))


def get_str(d: dict, key: str, default=None) -> str:
    if key in d:
        return d[key]
    if default is None:
        raise InvalidConfiguration(f"missing parameter {key!r}")
    return default


def get_float(d: dict, key: str, default=None) -> float:
    raw = d.get(key)
    if raw is None:
        if default is None:
            raise InvalidConfiguration(f"missing parameter {key!r}")
        return float(default)
    try:
        return float(raw)
    except ValueError as exc:
        raise InvalidConfiguration(f"parameter {key!r} = {raw!r} is not a number") from exc


def get_int(d: dict, key: str, default=None) -> int:
    val = get_float(d, key, default)
    if val != int(val):
        raise InvalidConfiguration(f"parameter {key!r} must be an integer, got {val}")
    return int(val)


def get_bool(d: dict, key: str, default: bool = False) -> bool:
    raw = d.get(key)
    if raw is None:
        return default
    low = raw.lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise InvalidConfiguration(f"parameter {key!r} = {raw!r} is not a boolean")


def split_list(raw: str) -> list:
    return [p for p in raw.replace(",", " ").split() if p]


def get_list(d: dict, key: str, default=None, cast=float) -> list:
    raw = d.get(key)
    if raw is None:
        if default is None:
            raise InvalidConfiguration(f"missing parameter {key!r}")
        return list(default)
    try:
        return [cast(p) for p in split_list(raw)]
    except ValueError as exc:
        raise InvalidConfiguration(f"parameter {key!r} = {raw!r} is not a list of numbers") from exc
