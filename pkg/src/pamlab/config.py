"""Flat key-value run configuration with a round-trippable text echo.

A config file holds ``key = value`` lines; ``#`` starts a comment and
lists are comma separated (``p:q`` pairs for ``pairs``).  Every output
starts with the resolved configuration written as ``# key = value``
comment lines, and :func:`parse_header` recovers the exact config from it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .model import CovarianceModel

COMMANDS = ("variational", "fk", "simulate", "hyper", "report", "rates")

# keys that do not influence any output value and so are not echoed
_NOT_ECHOED = ("workers",)


class ConfigError(ValueError):
    """Invalid configuration; reported as a single line with exit code 2."""


@dataclass
class RunConfig:
    command: str = "report"
    # model
    alpha0: float = 0.5
    alpha: float = 1.0
    d: int = 1
    lam: float = 1.0
    kernel: str = "delta"
    seed: int = 0
    workers: int = 1
    # variational problem
    var_M: int = 64
    var_N: int = 64
    var_L: float = 0.0  # 0 selects the automatic box
    step: float = 0.5
    tol: float = 1e-12
    max_iter: int = 5000
    lambdas: tuple = (1.0,)
    # Feynman-Kac engine
    n: tuple = (2,)
    t: tuple = (0.25,)
    samples: int = 20000
    steps: int = 64
    # chaos engine
    chaos_M: int = 8
    chaos_N: int = 64
    chaos_L: float = 2.0
    grading: float = 2.0
    K: int = 3
    chaos_samples: int = 20000
    p: tuple = (2.0, 3.0)
    pairs: tuple = field(default_factory=lambda: ((2.0, 3.0), (2.0, 4.0), (3.0, 5.0)))

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        try:
            self.model()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        positive = ("var_M", "var_N", "max_iter", "samples", "steps", "chaos_M", "chaos_N",
                    "K", "chaos_samples", "workers")
        for key in positive:
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.step <= 0 or self.tol <= 0 or self.chaos_L <= 0 or self.grading < 1:
            raise ConfigError("step, tol and chaos_L must be positive and grading >= 1")
        if self.var_L < 0:
            raise ConfigError("var_L must be nonnegative (0 = automatic)")
        if any(v < 0 for v in self.lambdas) or any(v <= 0 for v in self.t):
            raise ConfigError("lambdas must be nonnegative and t positive")
        if any(int(v) != v or v < 1 for v in self.n):
            raise ConfigError("n must list integers >= 1")
        if any(v < 1 for v in self.p):
            raise ConfigError("p must list reals >= 1")
        if any(not q >= p > 1 for p, q in self.pairs):
            raise ConfigError("pairs need q >= p > 1")

    def model(self, lam=None):
        return CovarianceModel(self.alpha0, self.alpha, self.d,
                               self.lam if lam is None else lam, self.kernel)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _field_map():
    return {f.name: f for f in fields(RunConfig)}


def _key(name):
    return "lambda" if name == "lam" else name


def _name(key):
    return "lam" if key == "lambda" else key


def coerce(name, text):
    """Parse the string ``text`` for field ``name``."""
    default = _field_map()[name].default
    if default is dataclasses.MISSING:
        default = _field_map()[name].default_factory()
    text = text.strip()
    try:
        if name == "pairs":
            out = []
            for item in text.split(","):
                p, q = item.split(":")
                out.append((float(p), float(q)))
            return tuple(out)
        if name == "n":
            return tuple(int(v) for v in text.split(","))
        if isinstance(default, tuple):
            return tuple(float(v) for v in text.split(","))
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"cannot parse {_key(name)} = {text!r}") from None


def format_value(name, value):
    if name == "pairs":
        return ",".join(f"{p!r}:{q!r}" for p, q in value)
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def parse_pairs(lines):
    """``key = value`` pairs from config text; blank lines and comments skipped."""
    out = {}
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {num}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if _name(key) not in _field_map():
            raise ConfigError(f"line {num}: unknown key {key!r}")
        out[_name(key)] = value
    return out


def load_config(path=None, overrides=None, command=None):
    """Resolve a config: defaults, then the file at ``path``, then ``overrides``."""
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        values.update({k: coerce(k, v) for k, v in parse_pairs(text.splitlines()).items()})
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = coerce(k, v) if isinstance(v, str) else v
    if command is not None:
        values["command"] = command
    return RunConfig(**values)


def echo(config):
    """Resolved config as ``# key = value`` lines (sorted, stable)."""
    lines = ["# pamlab run configuration"]
    for f in sorted(fields(RunConfig), key=lambda f: f.name):
        if f.name in _NOT_ECHOED:
            continue
        lines.append(f"# {_key(f.name)} = {format_value(f.name, getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def parse_header(text):
    """Rebuild the :class:`RunConfig` echoed at the top of an output file."""
    body = []
    for raw in text.splitlines():
        if not raw.startswith("#"):
            break
        line = raw[1:].strip()
        if "=" in line:
            body.append(line)
    values = {k: coerce(k, v) for k, v in parse_pairs(body).items()}
    return RunConfig(**values)
