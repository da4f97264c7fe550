"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from ..mesh import Rect
from ..truth import CATALOG


class ConfigError(ValueError):
    """Bad configuration; ``line`` is 1-based when the error comes from a file."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line else f"{path}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)


def _floats(text, n=None):
    vals = [float(t) for t in text.replace(" ", "").split(",") if t]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated numbers")
    return vals


def _ints(text):
    out = []
    for t in text.replace(" ", "").split(","):
        if not t:
            continue
        # allow 2^k shorthand
        if "^" in t:
            b, e = t.split("^")
            out.append(int(b) ** int(e))
        else:
            out.append(int(t))
    return out


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    truth_id: str = "harmonic_exp"
    truth_gamma: float = 0.5
    truth_delta: float = 0.05
    alpha: float = 2.0
    beta: int = 1
    sigma: float = 0.1
    noise: str = "white"                  # white | diagonal
    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    omega: tuple = (0.25, 0.75, 0.25, 0.5)
    b_region: tuple = (0.25, 0.75, 0.25, 0.75)
    N_schedule: list = field(default_factory=lambda: [256, 512, 1024, 2048, 4096])
    coupling: str = "balanced"            # balanced | fixed_h | fixed_slack
    c0: float = 1.0
    h: float = 0.0                        # target h for fixed_h
    coupling_sigma: float | None = None   # sigma used by the coupling rule; defaults to sigma
    l_schedule: str = "log"               # log | power
    eps: float = 0.1
    nx_max: int = 256
    replicates: int = 1
    seed: int = 0
    degree: int = 1
    method: str = "fem"                   # fem | spectral | both
    output: str = "report.csv"
    timing: bool = False
    trace: bool = True                    # record the expected triple-norm error

    _PARSERS = {
        "truth_id": str, "truth_gamma": float, "truth_delta": float, "alpha": float, "beta": int,
        "sigma": float, "noise": str, "domain": lambda s: tuple(_floats(s, 4)),
        "omega": lambda s: tuple(_floats(s, 4)), "b_region": lambda s: tuple(_floats(s, 4)),
        "N_schedule": _ints, "coupling": str, "c0": float, "h": float,
        "coupling_sigma": lambda s: None if s.strip().lower() in ("", "none") else float(s),
        "l_schedule": str, "eps": float, "nx_max": int, "replicates": int, "seed": int,
        "degree": int, "method": str, "output": str, "timing": _bool, "trace": _bool,
    }

    def __post_init__(self):
        self.validate()

    @property
    def effective_coupling_sigma(self) -> float:
        return self.sigma if self.coupling_sigma is None else self.coupling_sigma

    @property
    def truth_params(self) -> dict:
        if self.truth_id == "fractional_corner":
            return {"gamma": self.truth_gamma, "delta": self.truth_delta}
        return {}

    def validate(self) -> None:
        if self.truth_id not in CATALOG:
            raise ConfigError(f"unknown truth_id {self.truth_id!r}")
        if not self.alpha > 1:
            raise ConfigError("alpha must exceed 1")
        if self.beta not in (0, 1):
            raise ConfigError("beta must be 0 or 1")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if self.noise not in ("white", "diagonal"):
            raise ConfigError(f"unknown noise model {self.noise!r}")
        try:
            for name in ("domain", "omega", "b_region"):
                Rect.coerce(getattr(self, name))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        Ns = list(self.N_schedule)
        if not Ns or any(n < 1 for n in Ns) or any(b <= a for a, b in zip(Ns, Ns[1:])):
            raise ConfigError("N_schedule must be a strictly increasing list of positive integers")
        if self.coupling not in ("balanced", "fixed_h", "fixed_slack"):
            raise ConfigError(f"unknown coupling {self.coupling!r}")
        if self.coupling == "fixed_h" and not self.h > 0:
            raise ConfigError("fixed_h coupling needs h > 0")
        if self.coupling != "fixed_h" and not self.effective_coupling_sigma > 0:
            raise ConfigError("balanced/fixed_slack coupling needs a positive sigma "
                              "(set coupling_sigma when sigma = 0)")
        if not self.c0 > 0:
            raise ConfigError("c0 must be positive")
        if self.l_schedule not in ("log", "power"):
            raise ConfigError(f"unknown l_schedule {self.l_schedule!r}")
        if self.coupling == "fixed_slack" and self.l_schedule == "log" and min(Ns) < 3:
            raise ConfigError("log slack schedule needs N >= 3")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.degree not in (1, 2):
            raise ConfigError("degree must be 1 or 2")
        if self.method not in ("fem", "spectral", "both"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.nx_max < 4:
            raise ConfigError("nx_max must be at least 4")

    def as_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_text(cls, text: str, path=None) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
            key, value = (p.strip() for p in line.split("=", 1))
            if key not in cls._PARSERS:
                raise ConfigError(f"unknown key {key!r}", lineno, path)
            if key in values:
                raise ConfigError(f"duplicate key {key!r}", lineno, path)
            try:
                values[key] = cls._PARSERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", lineno, path) from None
        try:
            return cls(**values)
        except ConfigError as exc:
            raise ConfigError(str(exc), None, path) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
        return cls.from_text(text, path=path)

    def to_text(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, list):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif v is None:
                v = "none"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"
