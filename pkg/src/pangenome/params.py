"""Model parameters, random stream specification and config-file parsing.

Rates are stored exactly as they enter the model definition: ``theta`` is the
gain rate whose per-individual event rate is ``theta/2``, ``rho`` the loss rate
(``rho/2`` per gene copy) and ``gamma`` the transfer rate (``gamma/2N`` per
ordered pair and donor gene).  Every consumer applies the factor ``1/2`` at the
point of use.
"""
from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np

from .errors import RangeError

_UINT64 = 2**64


@dataclasses.dataclass(frozen=True)
class ModelParams:
    theta: float
    rho: float
    gamma: float = 0.0
    n: int = 1
    N: int | None = None

    def replace(self, **changes) -> ModelParams:
        return validate(dataclasses.replace(self, **changes))

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate(params: ModelParams) -> ModelParams:
    """Check every invariant of ``params`` and return it unchanged.

    Raises
    ------
    RangeError
        Naming the first offending field.
    """
    for name in ("theta", "rho", "gamma"):
        value = getattr(params, name)
        if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
            raise RangeError(name, f"{name} must be a finite real, got {value!r}")
    if params.rho <= 0:
        raise RangeError("rho", f"rho must be > 0, got {params.rho}")
    if params.theta < 0:
        raise RangeError("theta", f"theta must be >= 0, got {params.theta}")
    if params.gamma < 0:
        raise RangeError("gamma", f"gamma must be >= 0, got {params.gamma}")
    if int(params.n) != params.n or params.n < 1:
        raise RangeError("n", f"sample size must be an integer >= 1, got {params.n}")
    if params.N is not None:
        if int(params.N) != params.N or params.N < 2:
            raise RangeError("N", f"population size must be an integer >= 2, got {params.N}")
        if params.n > params.N:
            raise RangeError("n", f"sample size n={params.n} exceeds population size N={params.N}")
    return params


@dataclasses.dataclass(frozen=True)
class RngSpec:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    Distinct ``stream_id`` values under one seed give statistically
    independent streams (numpy ``SeedSequence`` spawn keys); identical pairs
    reproduce identical draws.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if int(value) != value or not 0 <= value < _UINT64:
                raise RangeError(name, f"{name} must be a 64-bit unsigned integer, got {value!r}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))

    def stream(self, stream_id: int) -> RngSpec:
        return RngSpec(self.seed, stream_id)


CONFIG_KEYS = {
    "theta": float,
    "rho": float,
    "gamma": float,
    "n": int,
    "N": int,
    "seed": int,
    "reps": int,
    "burn_in": float,
    "tol": float,
}


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` text.

    ``#`` starts a comment, blank lines are ignored and whitespace around keys
    and values is insignificant.  Keys are case-sensitive (``n`` is the sample
    size, ``N`` the population size).
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        conv = CONFIG_KEYS[key]
        try:
            out[key] = conv(float(value)) if conv is int and "e" in value.lower() else conv(value)
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key!r}: {value!r}") from exc
    return out


def load_config(path: str | Path) -> dict:
    return parse_config(Path(path).read_text())
