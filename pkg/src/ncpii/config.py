"""Line-oriented `key = value` configuration for verification sessions."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from fractions import Fraction

from .algebra import GaussRat, RewriteSystem, combine_systems, inv_system, qp1_system, scalar, zf_system


class ConfigError(ValueError):
    pass


_COMPLEX_RE = re.compile(
    r"""^\s*
    (?P<re>[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)?
    \s*
    (?P<im>[-+]\s*(?:\d*\.?\d+(?:[eE][-+]?\d+)?)?\s*i|^[-+]?\s*(?:\d*\.?\d+(?:[eE][-+]?\d+)?)?\s*i)?
    \s*$""",
    re.VERBOSE,
)


def parse_complex(text: str) -> complex:
    """Parse '2', '-1.5', 'i', '-i', '2i', '1+2i', '0.5-0.25i' forms."""
    s = text.strip().replace(" ", "")
    if not s:
        raise ConfigError("empty numeric value")
    if "i" not in s:
        try:
            return complex(float(s))
        except ValueError:
            raise ConfigError(f"bad numeric value {text!r}") from None
    # split a trailing imaginary part off an optional real part
    m = re.fullmatch(
        r"(?P<re>[-+]?[0-9.eE]+(?![0-9.eEi]))?(?P<im>[-+]?[0-9.eE]*)i", s
    )
    if m is None:
        raise ConfigError(f"bad numeric value {text!r}")
    re_part = float(m.group("re")) if m.group("re") else 0.0
    im_text = m.group("im")
    if im_text in ("", "+"):
        im_part = 1.0
    elif im_text == "-":
        im_part = -1.0
    else:
        try:
            im_part = float(im_text)
        except ValueError:
            raise ConfigError(f"bad numeric value {text!r}") from None
    return complex(re_part, im_part)


@dataclass
class SessionConfig:
    """Resolved verification-session parameters with defaults applied."""

    grid_start: float
    grid_stop: float
    grid_step: float
    relations: str = ""
    kappa: complex | None = None  # None -> i*hbar
    hbar: complex = 0.0
    lambdas: tuple[complex, ...] = (0.25,)
    beta: complex = 0.0
    C: complex | None = None  # None -> 4*(beta + 1/2)
    dim: int = 1
    init: dict[str, complex] = field(default_factory=dict)
    tol_residual: float = 1e-6
    tol_invariant: float = 1e-8
    out_json: str | None = None
    out_csv: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.grid_step <= 0:
            raise ConfigError("grid.step must be > 0")
        if self.grid_stop <= self.grid_start:
            raise ConfigError("grid.stop must exceed grid.start")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.kappa is None:
            self.kappa = 1j * self.hbar
        if self.C is None:
            self.C = 4 * (self.beta + 0.5)
        self.init = {
            "phi": 1.0,
            "phi'": 0.0,
            "psi": 1.0,
            "psi'": 0.0,
            **self.init,
        }

    def rewrite_system(self) -> RewriteSystem | None:
        """The rewrite system named by `relations` ('', 'qp1', 'zf', 'inv', 'qp1+zf', ...)."""
        names = [n for n in self.relations.replace(",", "+").split("+") if n]
        if not names:
            return None
        parts = []
        for n in names:
            if n == "qp1":
                parts.append(qp1_system())
            elif n == "zf":
                kappa = complex(self.kappa)
                coeff = scalar(
                    GaussRat(
                        Fraction(kappa.real).limit_denominator(10**9),
                        Fraction(kappa.imag).limit_denominator(10**9),
                    )
                )
                parts.append(zf_system(coeff))
            elif n == "inv":
                parts.append(inv_system())
            else:
                raise ConfigError(f"unknown relation set {n!r}")
        if len(parts) == 1:
            return parts[0]
        return combine_systems("+".join(names), *parts)

    @property
    def grid_count(self) -> int:
        return int(round((self.grid_stop - self.grid_start) / self.grid_step)) + 1


_KEY_MAP = {
    "relations": "relations",
    "kappa": "kappa",
    "hbar": "hbar",
    "lambda": "lambdas",
    "beta": "beta",
    "C": "C",
    "grid.start": "grid_start",
    "grid.stop": "grid_stop",
    "grid.step": "grid_step",
    "dim": "dim",
    "tol.residual": "tol_residual",
    "tol.invariant": "tol_invariant",
    "out.json": "out_json",
    "out.csv": "out_csv",
    "seed": "seed",
}


def load_config(text: str) -> SessionConfig:
    """Parse `key = value` lines (# comments) into a validated SessionConfig."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        raw[key] = value

    kwargs: dict[str, object] = {}
    init: dict[str, complex] = {}
    for key, value in raw.items():
        if key.startswith("init."):
            name = key[len("init.") :].replace("_prime", "'")
            init[name] = parse_complex(value)
            continue
        if key not in _KEY_MAP:
            raise ConfigError(f"unknown key {key!r}")
        attr = _KEY_MAP[key]
        if attr in ("grid_start", "grid_stop", "grid_step", "tol_residual", "tol_invariant"):
            kwargs[attr] = float(value)
        elif attr == "dim":
            kwargs[attr] = int(value)
        elif attr == "seed":
            kwargs[attr] = int(value)
        elif attr == "lambdas":
            kwargs[attr] = tuple(parse_complex(v) for v in value.split(","))
        elif attr in ("hbar", "beta", "C", "kappa"):
            kwargs[attr] = parse_complex(value)
        else:
            kwargs[attr] = value

    for required in ("grid_start", "grid_stop", "grid_step"):
        if required not in kwargs:
            dotted = {v: k for k, v in _KEY_MAP.items()}[required]
            raise ConfigError(f"missing required key {dotted!r}")
    if init:
        kwargs["init"] = init
    return SessionConfig(**kwargs)  # type: ignore[arg-type]


def config_to_dict(cfg: SessionConfig) -> dict:
    """JSON-able view of a resolved config (complex values as [re, im])."""

    def enc(v):
        if isinstance(v, complex):
            return [v.real, v.imag]
        if isinstance(v, tuple):
            return [enc(x) for x in v]
        if isinstance(v, dict):
            return {k: enc(x) for k, x in v.items()}
        return v

    return {f.name: enc(getattr(cfg, f.name)) for f in fields(cfg)}
