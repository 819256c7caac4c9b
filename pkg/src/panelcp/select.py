"""Information-criterion choice of the number of breaks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detect import DetectionResult

__all__ = [
    "PENALTIES",
    "DegenerateFitError",
    "ICConfig",
    "ICCurve",
    "penalty_weight",
    "param_count",
    "select_m",
]

PENALTIES = ("hqic", "bic", "aic")


class DegenerateFitError(ValueError):
    """A candidate model fits the data perfectly, so log S_NT is undefined."""


def penalty_weight(kind: str, N: int, T: int) -> float:
    """Per-parameter penalty ``l_NT``.

    ``hqic``: ``log(log(NT)) / NT``; ``bic``: ``log(NT) / NT``;
    ``aic``: ``2 / NT``.
    """
    nt = N * T
    if nt < 3:
        raise ValueError(f"NT = {nt} is too small for a penalty (need NT >= 3)")
    kind = kind.lower()
    if kind == "hqic":
        return math.log(math.log(nt)) / nt
    if kind == "bic":
        return math.log(nt) / nt
    if kind == "aic":
        return 2.0 / nt
    raise ValueError(f"unknown penalty {kind!r}; expected one of {PENALTIES}")


def param_count(m: int, p: int) -> int:
    """Effective parameter count ``3m + (m+1)p``; each break costs three."""
    return 3 * m + (m + 1) * p


@dataclass(frozen=True)
class ICConfig:
    penalty: str = "hqic"
    m_max: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "penalty", self.penalty.lower())
        if self.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {self.penalty!r}; expected one of {PENALTIES}")
        if self.m_max is not None and self.m_max < 0:
            raise ValueError(f"m_max must be nonnegative, got {self.m_max}")


@dataclass(frozen=True)
class ICCurve:
    ic: np.ndarray
    p_star: np.ndarray
    s_nt: np.ndarray
    penalty: str
    weight: float
    m_hat: int


def select_m(detection: DetectionResult, cfg: ICConfig = ICConfig()) -> ICCurve:
    """Evaluate ``IC(m) = log S_NT(m) + p*_m l_NT`` and pick the smallest minimizer.

    Sets ``detection.m_hat`` as a side effect.
    """
    T, N, p = detection.n_periods, detection.n_individuals, detection.n_regressors
    m_max = detection.m_max if cfg.m_max is None else cfg.m_max
    if m_max > T - 1:
        raise ValueError(f"m_max={m_max} exceeds T - 1 = {T - 1}")
    if m_max > detection.m_max:
        raise ValueError(f"detection only covers m <= {detection.m_max}, asked for {m_max}")
    s_nt = detection.s_nt[: m_max + 1]
    zero = np.flatnonzero(s_nt <= 0)
    if zero.size:
        raise DegenerateFitError(f"perfect fit (S_NT = 0) at m = {int(zero[0])}")
    weight = penalty_weight(cfg.penalty, N, T)
    m = np.arange(m_max + 1)
    p_star = param_count(m, p)
    ic = np.log(s_nt) + p_star * weight
    m_hat = int(np.argmin(ic))  # first occurrence: ties go to fewer breaks
    detection.m_hat = m_hat
    return ICCurve(ic=ic, p_star=p_star, s_nt=s_nt.copy(), penalty=cfg.penalty,
                   weight=weight, m_hat=m_hat)
