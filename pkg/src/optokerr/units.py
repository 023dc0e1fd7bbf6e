"""Frequency-unit conversions and the mechanical-bath temperature relation.

Internal convention everywhere in this package: angular frequencies in
krad/s, times in ms (so omega * t is in radians).  Configuration files and
CLI flags quote frequencies in multiples of pi krad/s, mirroring the
"200 pi kHz"-style on which the model parameters are usually stated.
"""

from __future__ import annotations

import math

__all__ = [
    "PI_KRAD_S",
    "pi_units_to_angular",
    "angular_to_pi_units",
    "linear_khz_to_pi_units",
    "pi_units_to_linear_khz",
    "temperature_to_nth",
    "nth_to_temperature",
    "convert",
]

PI_KRAD_S = math.pi  # one "pi krad/s" in krad/s

# hbar/k_B in kelvin per (krad/s): hbar*omega/k_B with omega in krad/s
_HBAR_OVER_KB_KRADS = 1.054571817e-34 / 1.380649e-23 * 1e3


def pi_units_to_angular(value: float) -> float:
    """Multiples of pi krad/s -> angular krad/s."""
    return value * math.pi


def angular_to_pi_units(value: float) -> float:
    """Angular krad/s -> multiples of pi krad/s."""
    return value / math.pi


def linear_khz_to_pi_units(value: float) -> float:
    """Linear frequency in kHz -> multiples of pi krad/s (400 kHz -> 800)."""
    return 2.0 * value


def pi_units_to_linear_khz(value: float) -> float:
    return value / 2.0


def temperature_to_nth(temperature_K: float, omega_m: float) -> float:
    """Bose occupation of a mode at omega_m (angular krad/s) and T in kelvin."""
    if temperature_K <= 0:
        return 0.0
    x = _HBAR_OVER_KB_KRADS * omega_m / temperature_K
    return 1.0 / math.expm1(x)


def nth_to_temperature(n_th: float, omega_m: float) -> float:
    """Temperature (K) at which a mode at omega_m has occupation n_th."""
    if n_th <= 0:
        return 0.0
    return _HBAR_OVER_KB_KRADS * omega_m / math.log(1.0 + 1.0 / n_th)


_FREQ_UNITS = {
    "pi-krad/s": (pi_units_to_angular, angular_to_pi_units),
    "krad/s": (lambda v: v, lambda v: v),
    "kHz-linear": (lambda v: 2.0 * math.pi * v, lambda v: v / (2.0 * math.pi)),
}


def convert(value: float, from_unit: str, to_unit: str) -> float:
    """Convert a frequency value between pi-krad/s, krad/s and kHz-linear."""
    try:
        to_angular, _ = _FREQ_UNITS[from_unit]
        _, from_angular = _FREQ_UNITS[to_unit]
    except KeyError as exc:
        raise ValueError(
            f"unknown unit {exc.args[0]!r}; choose from {sorted(_FREQ_UNITS)}"
        ) from None
    return from_angular(to_angular(value))
