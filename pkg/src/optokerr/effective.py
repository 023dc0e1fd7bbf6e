"""Closed-form derived coefficients of the atom-assisted two-mode optomechanical model.

Adiabatic elimination of the far-detuned atomic medium leaves an effective
beam-splitter coupling between the two cavity modes (strengths nu1, nu2,
lam, all linear in the atom number N).  Diagonalizing that coupling defines
quasimodes c1, c2 split by omega_f; second-order treatment of the
radiation-pressure coupling then yields cross-Kerr (eta1, eta2) and
self-Kerr (s) strengths plus the frequency pulls u1, u2.

All frequencies are angular, in krad/s; the configuration layer feeds
values in multiples of pi krad/s (see :mod:`optokerr.units`).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, fields, replace
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SystemParams",
    "DerivedCoefficients",
    "ValidityEntry",
    "ValidityReport",
    "SingularDetuningError",
    "UndefinedRotationError",
    "ResonanceSingularityError",
    "beat_coefficients",
    "quasimode_transform",
    "kerr_coefficients",
    "validity_report",
    "sweep",
    "sweep_to_csv",
    "UNIT_CONVENTION",
]

UNIT_CONVENTION = "angular, pi*krad/s"

SWEEP_AXES = ("N", "d", "Omega", "delta", "Delta")


class SingularDetuningError(ValueError):
    """delta*(Delta+delta) - Omega^2 vanished; the elimination is singular."""


class UndefinedRotationError(ValueError):
    """lam = 0 with nu1 = nu2 leaves the quasimode rotation undefined."""


class ResonanceSingularityError(ValueError):
    """A perturbative denominator vanished (within the guard band)."""


@dataclass(frozen=True)
class SystemParams:
    """Physical inputs, angular frequencies in krad/s.

    g1, g2 : atom-field couplings of the two cavity modes
    Omega  : classical Rabi frequency driving the upper atomic transition
    delta  : common field-atom detuning
    Delta  : classical-drive detuning
    N      : atom number (>= 1)
    G      : radiation-pressure coupling
    omega_m: mechanical frequency
    d      : cavity mode splitting (mode2 - mode1)
    eps1, eps2      : weak classical drive amplitudes
    kappa1, kappa2  : cavity amplitude decay rates
    gamma_m         : mechanical amplitude decay rate
    n_th            : mechanical bath occupation
    """

    g1: float
    g2: float
    Omega: float
    delta: float
    Delta: float
    N: int
    G: float
    omega_m: float
    d: float
    eps1: float = 0.0
    eps2: float = 0.0
    kappa1: float = 0.0
    kappa2: float = 0.0
    gamma_m: float = 0.0
    n_th: float = 0.0

    def __post_init__(self):
        for name in ("g1", "g2", "Omega", "omega_m", "kappa1", "kappa2", "gamma_m", "n_th"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def Delta_tilde(self) -> float:
        return self.delta * (self.Delta + self.delta) - self.Omega ** 2

    @classmethod
    def from_pi_units(cls, **kwargs) -> "SystemParams":
        """Build from values given in multiples of pi krad/s (N, n_th unscaled)."""
        scaled = {}
        for key, val in kwargs.items():
            if key in ("N", "n_th"):
                scaled[key] = val
            else:
                scaled[key] = val * math.pi
        return cls(**scaled)

    def in_pi_units(self) -> dict:
        """Field dict with frequencies expressed in multiples of pi krad/s."""
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = val if f.name in ("N", "n_th") else val / math.pi
        return out

    def with_overrides(self, **kwargs) -> "SystemParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class DerivedCoefficients:
    """Every derived coefficient, angular krad/s (theta in rad).

    Identities held by construction: omega_f = omega_c2 - omega_c1,
    eta1 = v + u2 - u1, eta2 = u2 - u1.
    """

    nu1: float
    nu2: float
    lam: float
    Delta_tilde: float
    theta: float
    omega_c1: float
    omega_c2: float
    omega_f: float
    v: float
    u1: float
    u2: float
    s: float
    eta1: float
    eta2: float

    FIELD_ORDER = ("nu1", "nu2", "lam", "Delta_tilde", "theta", "omega_c1",
                   "omega_c2", "omega_f", "v", "u1", "u2", "s", "eta1", "eta2")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELD_ORDER}

    def in_pi_units(self) -> dict:
        """Values in multiples of pi krad/s; theta in rad, Delta_tilde in (pi krad/s)^2."""
        out = {}
        for name, val in self.as_dict().items():
            if name == "theta":
                out[name] = val
            elif name == "Delta_tilde":
                out[name] = val / math.pi ** 2
            else:
                out[name] = val / math.pi
        return out


def beat_coefficients(p: SystemParams) -> dict:
    """Atom-induced beam-splitter coefficients.

    nu1 = 2 g1^2 delta N / Dt, nu2 = 2 g2^2 (delta+Delta) N / Dt,
    lam = 2 g1 g2 Omega N / Dt, with Dt = delta (Delta+delta) - Omega^2.
    """
    Dt = p.Delta_tilde
    if Dt == 0.0:
        raise SingularDetuningError(
            "delta*(Delta+delta) - Omega^2 = 0: atomic elimination singular"
        )
    return {
        "nu1": 2.0 * p.g1 ** 2 * p.delta * p.N / Dt,
        "nu2": 2.0 * p.g2 ** 2 * (p.delta + p.Delta) * p.N / Dt,
        "lam": 2.0 * p.g1 * p.g2 * p.Omega * p.N / Dt,
        "Delta_tilde": Dt,
    }


def quasimode_transform(nu1: float, nu2: float, lam: float) -> dict:
    """Rotation angle and quasimode frequencies diagonalizing the beam splitter.

    theta = atan2(2 lam, nu2 - nu1) / 2, mapped into [0, pi/2), so that
    lam -> 0+ with nu2 > nu1 gives theta -> 0 (c1 connects to mode 1
    continuously).  Also returns the off-diagonal residual
    (nu2 - nu1) sin(theta) cos(theta) - lam cos(2 theta) as a diagnostic.
    """
    if lam == 0.0 and nu1 == nu2:
        raise UndefinedRotationError("nu1 = nu2 with lam = 0: rotation angle undefined")
    theta = 0.5 * math.atan2(2.0 * lam, nu2 - nu1)
    if theta < 0.0:
        theta += 0.5 * math.pi
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    sin2t = math.sin(2.0 * theta)
    omega_c1 = nu1 * cos_t ** 2 + nu2 * sin_t ** 2 - lam * sin2t
    omega_c2 = nu1 * sin_t ** 2 + nu2 * cos_t ** 2 + lam * sin2t
    residual = (nu2 - nu1) * sin_t * cos_t - lam * math.cos(2.0 * theta)
    scale = max(abs(nu1), abs(nu2), abs(lam))
    if scale > 0 and abs(residual) > 1e-10 * scale:
        raise UndefinedRotationError(
            f"rotation failed to diagonalize: residual {residual:.3e} vs scale {scale:.3e}"
        )
    return {
        "theta": theta,
        "omega_c1": omega_c1,
        "omega_c2": omega_c2,
        "omega_f": omega_c2 - omega_c1,
        "residual": residual,
    }


_DENOMINATORS = ("omega_f+d-omega_m", "omega_f-d-omega_m",
                 "omega_f+d+omega_m", "omega_f-d+omega_m",
                 "omega_m^2-d^2", "omega_m")


def kerr_coefficients(p: SystemParams, guard_band: float = 1e-6) -> DerivedCoefficients:
    """Full coefficient set including Kerr/cross-Kerr strengths.

    v  = [omega_m sin^2(2 theta)/(omega_m^2 - d^2) - 2/omega_m] G^2
    u1 = G^2 sin^4(theta)/(omega_f + d - omega_m)
         + G^2 cos^4(theta)/(omega_f - d - omega_m)
    u2 = -G^2 sin^4(theta)/(omega_f + d + omega_m)
         - G^2 cos^4(theta)/(omega_f - d + omega_m)
    s  = -[1/omega_m + omega_m sin^2(2 theta)/(2 omega_m^2 - 2 d^2)] G^2
    eta1 = v + u2 - u1,  eta2 = u2 - u1

    Raises ResonanceSingularityError when any denominator falls within
    guard_band * omega_m of zero, naming the offending combination.
    """
    beat = beat_coefficients(p)
    rot = quasimode_transform(beat["nu1"], beat["nu2"], beat["lam"])
    theta, omega_f = rot["theta"], rot["omega_f"]
    wm, d, G = p.omega_m, p.d, p.G
    denominators = (omega_f + d - wm, omega_f - d - wm,
                    omega_f + d + wm, omega_f - d + wm,
                    wm ** 2 - d ** 2, wm)
    guard = guard_band * wm
    for name, val in zip(_DENOMINATORS, denominators):
        limit = guard ** 2 if name == "omega_m^2-d^2" else guard
        if abs(val) < limit:
            raise ResonanceSingularityError(
                f"denominator {name} = {val:.6g} inside guard band {limit:.3g}"
            )
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    sin2t_sq = math.sin(2.0 * theta) ** 2
    g2 = G * G
    v = (wm * sin2t_sq / (wm ** 2 - d ** 2) - 2.0 / wm) * g2
    u1 = g2 * sin_t ** 4 / (omega_f + d - wm) + g2 * cos_t ** 4 / (omega_f - d - wm)
    u2 = -g2 * sin_t ** 4 / (omega_f + d + wm) - g2 * cos_t ** 4 / (omega_f - d + wm)
    s = -(1.0 / wm + wm * sin2t_sq / (2.0 * wm ** 2 - 2.0 * d ** 2)) * g2
    return DerivedCoefficients(
        nu1=beat["nu1"], nu2=beat["nu2"], lam=beat["lam"],
        Delta_tilde=beat["Delta_tilde"],
        theta=theta, omega_c1=rot["omega_c1"], omega_c2=rot["omega_c2"],
        omega_f=omega_f,
        v=v, u1=u1, u2=u2, s=s,
        eta1=v + u2 - u1, eta2=u2 - u1,
    )


@dataclass(frozen=True)
class ValidityEntry:
    """One named inequality with both sides; the flag is always derived."""

    name: str
    kind: str  # "ratio>=" or "<"
    left: float
    right: float
    threshold: float = 1.0

    @property
    def passed(self) -> bool:
        if self.kind == "ratio>=":
            return self.right != 0 and self.left / self.right >= self.threshold
        return self.left < self.right


@dataclass(frozen=True)
class ValidityReport:
    entries: tuple[ValidityEntry, ...]

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failed(self) -> list[ValidityEntry]:
        return [e for e in self.entries if not e.passed]

    def lines(self) -> list[str]:
        out = []
        for e in self.entries:
            if e.kind == "ratio>=":
                desc = f"{e.left:.6g} >= {e.threshold:g} * {e.right:.6g}"
            else:
                desc = f"{e.left:.6g} < {e.right:.6g}"
            out.append(f"{'PASS' if e.passed else 'FAIL'}  {e.name}: {desc}")
        return out


def validity_report(p: SystemParams, large_ratio: float = 10.0) -> ValidityReport:
    """Regime diagnostics; never raises on a failed inequality, only flags.

    Checks the large-detuning conditions delta >> g1, g2 and Delta >> Omega
    (">>" as ratio >= large_ratio), the weak-coupling conditions G < omega_m
    and G^2 < kappa1 omega_m, and the four perturbative gaps
    {G sin^2 theta, G cos^2 theta} < |omega_f +/- d +/- omega_m|.
    """
    dc = kerr_coefficients(p)
    sin2 = math.sin(dc.theta) ** 2
    cos2 = math.cos(dc.theta) ** 2
    entries = [
        ValidityEntry("delta >> g1", "ratio>=", p.delta, p.g1, large_ratio),
        ValidityEntry("delta >> g2", "ratio>=", p.delta, p.g2, large_ratio),
        ValidityEntry("Delta >> Omega", "ratio>=", p.Delta, p.Omega, large_ratio),
        ValidityEntry("G < omega_m", "<", p.G, p.omega_m),
        ValidityEntry("G^2 < kappa1*omega_m", "<", p.G ** 2, p.kappa1 * p.omega_m),
    ]
    gaps = (("omega_f+d-omega_m", dc.omega_f + p.d - p.omega_m),
            ("omega_f-d-omega_m", dc.omega_f - p.d - p.omega_m),
            ("omega_f+d+omega_m", dc.omega_f + p.d + p.omega_m),
            ("omega_f-d+omega_m", dc.omega_f - p.d + p.omega_m))
    strength = max(p.G * sin2, p.G * cos2)
    for name, gap in gaps:
        entries.append(
            ValidityEntry(f"max(G sin^2, G cos^2) < |{name}|", "<", strength, abs(gap))
        )
    return ValidityReport(tuple(entries))


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    coefficients: DerivedCoefficients | None
    error: str = ""


def sweep(p: SystemParams, axis: str, grid: Sequence[float]) -> list[SweepRow]:
    """Evaluate kerr_coefficients along one parameter axis.

    Singular points are kept as explicit error rows, in grid order.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis {axis!r} not one of {SWEEP_AXES}")
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")
    rows = []
    for value in grid:
        kwargs = {axis: int(round(value)) if axis == "N" else float(value)}
        try:
            dc = kerr_coefficients(p.with_overrides(**kwargs))
            rows.append(SweepRow(float(value), dc))
        except (SingularDetuningError, UndefinedRotationError,
                ResonanceSingularityError, ValueError) as exc:
            rows.append(SweepRow(float(value), None, error=str(exc)))
    return rows


def sweep_to_csv(p: SystemParams, axis: str, rows: Iterable[SweepRow]) -> str:
    """CSV text: one comment line with the full parameter set, then the table.

    Coefficient columns are in multiples of pi krad/s (theta in rad), as
    recorded in the header comment.
    """
    buf = io.StringIO()
    params = ", ".join(f"{k}={v:.12g}" for k, v in p.in_pi_units().items())
    buf.write(f"# units: {UNIT_CONVENTION} (theta in rad, Delta_tilde in (pi krad/s)^2); "
              f"params: {params}\n")
    names = list(DerivedCoefficients.FIELD_ORDER)
    buf.write(",".join([axis] + names + ["error"]) + "\n")
    for row in rows:
        if row.coefficients is None:
            vals = [""] * len(names)
            err = row.error.replace(",", ";")
        else:
            pi_vals = row.coefficients.in_pi_units()
            vals = [f"{pi_vals[n]:.15g}" for n in names]
            err = ""
        axis_val = row.axis_value if axis == "N" else row.axis_value / math.pi
        buf.write(",".join([f"{axis_val:.15g}"] + vals + [err]) + "\n")
    return buf.getvalue()
