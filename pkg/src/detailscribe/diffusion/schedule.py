"""Cumulative signal-retention schedules for forward diffusion.

A schedule holds alpha_bar[t] for t = 0..T: the fraction of the clean signal
surviving at step t. Step 0 is exactly clean (alpha_bar = 1) and step T is
effectively pure noise (alpha_bar <= 1e-4), strictly decreasing in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from detailscribe import DetailScribeError

# noise ceiling the terminal step must reach
ALPHA_BAR_T_MAX = 1e-4
# positive floor keeping every value in (0, 1]
ALPHA_BAR_FLOOR = 1e-12

LINEAR_BETA_START = 1e-4
LINEAR_BETA_END = 2e-2
COSINE_OFFSET = 0.008


class InvalidArgument(DetailScribeError):
    """A schedule parameter or constructed schedule violates the invariants."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Total step count T plus alpha_bar[0..T]."""

    T: int
    alpha_bar: tuple[float, ...]
    kind: str = "custom"

    def __post_init__(self) -> None:
        if self.T < 1:
            raise InvalidArgument("T must be >= 1")
        if len(self.alpha_bar) != self.T + 1:
            raise InvalidArgument(f"alpha_bar must have T+1={self.T + 1} entries")
        if self.alpha_bar[0] != 1.0:
            raise InvalidArgument("alpha_bar[0] must be exactly 1")
        if self.alpha_bar[self.T] > ALPHA_BAR_T_MAX:
            raise InvalidArgument(f"alpha_bar[T] must be <= {ALPHA_BAR_T_MAX}")
        prev = math.inf
        for t, a in enumerate(self.alpha_bar):
            if not (0.0 < a <= 1.0):
                raise InvalidArgument(f"alpha_bar[{t}]={a} outside (0, 1]")
            if a >= prev:
                raise InvalidArgument(f"alpha_bar not strictly decreasing at t={t}")
            prev = a

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.T}


def make_schedule(kind: str, T: int) -> NoiseSchedule:
    """Build a linear-beta or squared-cosine schedule with T steps.

    linear: beta_t spaced uniformly over [1e-4, 2e-2], alpha_bar_t the running
    product of (1 - beta_i). cosine: the standard squared-cosine alpha_bar.
    Whenever the natural terminal value misses the <= 1e-4 ceiling (short
    schedules), the whole curve is power-rescaled (alpha_bar ** gamma), which
    preserves endpoints-at-1, strict monotonicity, and positivity exactly.
    """
    if T < 1:
        raise InvalidArgument("T must be >= 1")
    if kind == "linear":
        betas = np.linspace(LINEAR_BETA_START, LINEAR_BETA_END, T)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    elif kind == "cosine":
        t = np.arange(T + 1, dtype=np.float64)
        f = np.cos((t / T + COSINE_OFFSET) / (1 + COSINE_OFFSET) * math.pi / 2) ** 2
        alpha_bar = f / f[0]
        alpha_bar[0] = 1.0
        alpha_bar = np.clip(alpha_bar, ALPHA_BAR_FLOOR, 1.0)
    else:
        raise InvalidArgument(f"unknown schedule kind {kind!r}")

    terminal = float(alpha_bar[T])
    if terminal > ALPHA_BAR_T_MAX:
        gamma = math.log(ALPHA_BAR_T_MAX) / math.log(terminal)
        alpha_bar = alpha_bar**gamma
        alpha_bar[0] = 1.0
        # float rounding of the rescale must not overshoot the ceiling
        alpha_bar[T] = min(alpha_bar[T], ALPHA_BAR_T_MAX)
    return NoiseSchedule(T=T, alpha_bar=tuple(float(a) for a in alpha_bar), kind=kind)
