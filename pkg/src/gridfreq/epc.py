"""Droop frequency-based supplementary power control for HVDC links."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ModelFormatError

THRESHOLD_REFERENCED = "threshold_referenced"
LITERAL = "literal"


@dataclass
class EpcConfig:
    link: str
    g_prime: float                 # MW/Hz
    f_activ: float = -0.4          # Hz, activation threshold (under-frequency)
    p_headroom: float = float("inf")   # MW available toward import
    law: str = THRESHOLD_REFERENCED

    def __post_init__(self):
        if self.g_prime < 0:
            raise ModelFormatError("EPC gain must be >= 0")
        if self.f_activ >= 0:
            raise ModelFormatError("under-frequency service needs f_activ < 0")
        if self.p_headroom < 0:
            raise ModelFormatError("EPC headroom must be >= 0")
        if self.law not in (THRESHOLD_REFERENCED, LITERAL):
            raise ModelFormatError(f"unknown EPC law {self.law!r}")


def epc_power(df, cfg: EpcConfig, latched: bool = False):
    """Supplementary active power (MW) for measured deviation df (Hz).

    Default law ramps from zero at the threshold: -g' * (df - f_activ) below
    f_activ, which keeps the output continuous at activation. The literal law
    instead switches -g' * df on at the threshold (discontinuous); with
    latched=True it stays on after df recovers above the threshold.
    """
    df = np.asarray(df, dtype=float)
    if cfg.law == THRESHOLD_REFERENCED:
        raw = -cfg.g_prime * (df - cfg.f_activ)
        out = np.where(df > cfg.f_activ, 0.0, raw)
    else:
        raw = -cfg.g_prime * df
        active = (df <= cfg.f_activ) | latched
        out = np.where(active, np.maximum(raw, 0.0), 0.0)
    out = np.minimum(out, cfg.p_headroom)
    return float(out) if out.ndim == 0 else out


def gain_per_unit(g_prime: float, p_rated: float, f_n: float = 50.0) -> float:
    """Convert a MW/Hz gain to the dimensionless per-unit gain on the link base."""
    if p_rated <= 0:
        raise DomainError("p_rated must be > 0")
    return g_prime * f_n / p_rated


def max_gain(p_headroom: float, f_activ: float, f_max_fcr: float) -> float:
    """Largest MW/Hz gain that cannot exhaust the headroom before the nadir.

    f_max_fcr is the signed governor-only nadir deviation; the bound is
    headroom / (f_activ - f_max_fcr).
    """
    if abs(f_max_fcr) <= abs(f_activ):
        raise DomainError("control never activates: |f_max_fcr| <= |f_activ|")
    return p_headroom / (f_activ - f_max_fcr)
