import math

import numpy as np
import pytest

from optokerr.effective import (
    ResonanceSingularityError,
    SingularDetuningError,
    SystemParams,
    UndefinedRotationError,
    beat_coefficients,
    kerr_coefficients,
    quasimode_transform,
    sweep,
    sweep_to_csv,
    validity_report,
)

PI = math.pi

# Frozen reference values at the standard parameter point, computed by
# independent high-precision evaluation of the closed forms (see
# test_frozen_values_recomputed for the in-test recomputation).
FROZEN = {
    "Delta_tilde": 124600.0 * PI ** 2,
    "nu1": (70_000_000 / 124_600) * PI,        # 561.797752808...
    "nu2": (169_400_000 / 124_600) * PI,       # 1359.550561797...
    "lam": (6_160_000 / 124_600) * PI,         # 49.438202247...
    "theta": 0.5 * math.atan2(2 * 6_160_000 / 124_600, 99_400_000 / 124_600),
}


def test_beat_coefficients_reference_point(fig2_params):
    got = beat_coefficients(fig2_params)
    for key in ("Delta_tilde", "nu1", "nu2", "lam"):
        assert got[key] == pytest.approx(FROZEN[key], rel=1e-12)
    # the capsule numbers quoted around this parameter point
    assert got["nu1"] / PI == pytest.approx(561.80, abs=5e-3)
    assert got["nu2"] / PI == pytest.approx(1359.55, abs=5e-3)
    assert got["lam"] / PI == pytest.approx(49.44, abs=5e-3)


def test_frozen_values_recomputed(fig2_params):
    # independent evaluation with explicit integer arithmetic in the
    # numerators/denominators (unit pi krad/s)
    p = fig2_params
    dt = 250 * 500 - 20 ** 2  # (pi krad/s)^2
    assert p.Delta_tilde == pytest.approx(dt * PI ** 2, rel=1e-14)
    nu1 = 2 * 20 ** 2 * 250 * 350 / dt
    nu2 = 2 * 22 ** 2 * 500 * 350 / dt
    lam = 2 * 20 * 22 * 20 * 350 / dt
    got = beat_coefficients(p)
    assert got["nu1"] == pytest.approx(nu1 * PI, rel=1e-14)
    assert got["nu2"] == pytest.approx(nu2 * PI, rel=1e-14)
    assert got["lam"] == pytest.approx(lam * PI, rel=1e-14)


def test_beat_coefficients_lambda_vanishes_with_omega(fig2_params):
    got = beat_coefficients(fig2_params.with_overrides(Omega=0.0))
    assert got["lam"] == 0.0


def test_beat_coefficients_linear_in_n(fig2_params):
    one = beat_coefficients(fig2_params.with_overrides(N=175))
    two = beat_coefficients(fig2_params.with_overrides(N=350))
    for key in ("nu1", "nu2", "lam"):
        assert two[key] == pytest.approx(2 * one[key], rel=1e-14)


def test_beat_coefficients_singular_detuning():
    p = SystemParams.from_pi_units(g1=1, g2=1, Omega=10, delta=5, Delta=15,
                                   N=10, G=1, omega_m=100, d=10)
    assert p.Delta_tilde == 0.0
    with pytest.raises(SingularDetuningError):
        beat_coefficients(p)


def test_quasimode_transform_reference_point(fig2_params):
    beat = beat_coefficients(fig2_params)
    rot = quasimode_transform(beat["nu1"], beat["nu2"], beat["lam"])
    # tan(2 theta) = 17600/142000 at this point
    assert math.tan(2 * rot["theta"]) == pytest.approx(17600 / 142000, rel=1e-12)
    assert rot["theta"] == pytest.approx(0.06166, abs=5e-6)
    assert rot["omega_f"] == pytest.approx(rot["omega_c2"] - rot["omega_c1"], rel=1e-15)


def test_quasimode_theta_independent_of_n(fig2_params):
    thetas = []
    for n in (200, 400):
        beat = beat_coefficients(fig2_params.with_overrides(N=n))
        thetas.append(quasimode_transform(beat["nu1"], beat["nu2"], beat["lam"])["theta"])
    assert abs(thetas[0] - thetas[1]) <= 1e-12 * abs(thetas[0])


def test_quasimode_transform_already_diagonal():
    rot = quasimode_transform(3.0, 7.0, 0.0)
    assert rot["theta"] == 0.0
    assert rot["omega_c1"] == pytest.approx(3.0)
    assert rot["omega_c2"] == pytest.approx(7.0)


def test_quasimode_transform_symmetric_crossing():
    rot = quasimode_transform(5.0, 5.0, 2.0)
    assert rot["theta"] == pytest.approx(math.pi / 4, rel=1e-12)
    assert rot["omega_f"] == pytest.approx(4.0, rel=1e-12)


def test_quasimode_transform_degenerate_raises():
    with pytest.raises(UndefinedRotationError):
        quasimode_transform(5.0, 5.0, 0.0)


def test_quasimode_spectrum_matches_eigenvalues():
    rng = np.random.default_rng(3)
    for _ in range(20):
        nu1, nu2, lam = rng.uniform(-10, 10, size=3)
        if lam == 0 and nu1 == nu2:
            continue
        rot = quasimode_transform(nu1, nu2, lam)
        evals = np.linalg.eigvalsh(np.array([[nu1, -lam], [-lam, nu2]]))
        got = sorted([rot["omega_c1"], rot["omega_c2"]])
        assert got[0] == pytest.approx(evals[0], rel=1e-12, abs=1e-12)
        assert got[1] == pytest.approx(evals[1], rel=1e-12, abs=1e-12)


# frozen against a 40-digit mpmath evaluation of the closed forms
FROZEN_KERR = {
    "theta": 0.061657386503973804872,
    "omega_c1": 558.74565383067599977,
    "omega_c2": 1362.6026607760655733,
    "omega_f": 803.85700694538957349,
    "v": -0.99193087477174034797,
    "u1": -2.023843714189982782,
    "u2": -0.28277295864771985443,
    "s": -0.50403456261412982601,
    "eta1": 0.74913988077052257962,
    "eta2": 1.7410707555422629276,
}


def test_kerr_coefficients_reference_point(fig2_params):
    dc = kerr_coefficients(fig2_params)
    vals = dc.in_pi_units()
    for name, expected in FROZEN_KERR.items():
        assert vals[name] == pytest.approx(expected, rel=1e-10), name
    # structural identities
    assert dc.eta1 == pytest.approx(dc.v + dc.u2 - dc.u1, rel=1e-15)
    assert dc.eta2 == pytest.approx(dc.u2 - dc.u1, rel=1e-15)
    assert dc.eta1 - dc.eta2 == pytest.approx(dc.v, rel=1e-12)


def test_kerr_coefficients_vanish_without_pressure_coupling(fig2_params):
    dc = kerr_coefficients(fig2_params.with_overrides(G=0.0))
    for name in ("v", "u1", "u2", "s", "eta1", "eta2"):
        assert getattr(dc, name) == 0.0


def test_kerr_coefficients_theta_zero_limit(fig2_params):
    # Omega = 0 kills the beam-splitter mixing: sin(theta) = 0
    p = fig2_params.with_overrides(Omega=0.0)
    dc = kerr_coefficients(p)
    assert dc.theta == 0.0
    g2, wm, d, wf = p.G ** 2, p.omega_m, p.d, dc.omega_f
    assert dc.s == pytest.approx(-g2 / wm, rel=1e-12)
    assert dc.v == pytest.approx(-2 * g2 / wm, rel=1e-12)
    assert dc.u1 == pytest.approx(g2 / (wf - d - wm), rel=1e-12)
    assert dc.u2 == pytest.approx(-g2 / (wf - d + wm), rel=1e-12)


def test_kerr_coefficients_resonance_guard(fig2_params):
    # choose d so that omega_f - d - omega_m ~ 0 (omega_f ~ 803.857 pi)
    dc = kerr_coefficients(fig2_params)
    d_res = dc.omega_f - fig2_params.omega_m
    with pytest.raises(ResonanceSingularityError, match="omega_f-d-omega_m"):
        kerr_coefficients(fig2_params.with_overrides(d=d_res))


def test_validity_report_reference_point(fig2_params):
    p = fig2_params.with_overrides(kappa1=200 * PI)
    rep = validity_report(p)
    by_name = {e.name: e for e in rep.entries}
    assert by_name["delta >> g1"].left / by_name["delta >> g1"].right == pytest.approx(12.5)
    assert by_name["delta >> g1"].passed
    assert by_name["Delta >> Omega"].passed
    assert by_name["G < omega_m"].passed
    assert by_name["G^2 < kappa1*omega_m"].passed
    assert rep.all_passed


def test_validity_report_flags_without_throwing(fig2_params):
    p = fig2_params.with_overrides(G=400 * PI)  # G = omega_m / 2
    rep = validity_report(p)
    assert not rep.all_passed
    assert any("omega_f" in e.name for e in rep.failed())


def test_sweep_n_axis_monotone(fig2_params):
    rows = sweep(fig2_params, "N", list(range(200, 401, 10)))
    eta1 = [r.coefficients.eta1 for r in rows]
    eta2 = [r.coefficients.eta2 for r in rows]
    assert all(b > a for a, b in zip(eta1, eta1[1:]))
    assert all(b > a for a, b in zip(eta2, eta2[1:]))


def test_sweep_d_axis_kerr_strictly_increasing(fig2_params):
    grid = np.linspace(0.05, 0.9, 35) * fig2_params.omega_m
    rows = sweep(fig2_params, "d", grid)
    mag = [abs(r.coefficients.s) for r in rows]
    assert all(b > a for a, b in zip(mag, mag[1:]))


def test_sweep_theta_invariant_under_n_doubling(fig2_params):
    rows = sweep(fig2_params, "N", [175, 350])
    t1, t2 = rows[0].coefficients.theta, rows[1].coefficients.theta
    assert abs(t1 - t2) <= 1e-12 * abs(t1)


def test_sweep_records_singular_rows(fig2_params):
    dc = kerr_coefficients(fig2_params)
    d_res = dc.omega_f - fig2_params.omega_m
    rows = sweep(fig2_params, "d", [100 * PI, d_res, 300 * PI])
    assert rows[0].error == "" and rows[2].error == ""
    assert rows[1].coefficients is None and "omega_f-d-omega_m" in rows[1].error


def test_sweep_empty_grid_rejected(fig2_params):
    with pytest.raises(ValueError):
        sweep(fig2_params, "N", [])


def test_sweep_unknown_axis(fig2_params):
    with pytest.raises(ValueError):
        sweep(fig2_params, "G", [1.0])


def test_sweep_csv_roundtrip(fig2_params):
    rows = sweep(fig2_params, "N", [300, 350])
    text = sweep_to_csv(fig2_params, "N", rows)
    lines = text.strip().split("\n")
    assert lines[0].startswith("# units: angular, pi*krad/s")
    header = lines[1].split(",")
    assert header[0] == "N" and "eta1" in header and header[-1] == "error"
    row = dict(zip(header, lines[3].split(",")))
    assert float(row["N"]) == 350
    assert float(row["eta1"]) == pytest.approx(FROZEN_KERR["eta1"], rel=1e-10)


def test_perturbation_oracle_agrees_for_linear_and_self_kerr(fig2_params):
    """Brute-force second-order shifts reproduce u1, u2, s closely."""
    from oracles import perturbation_kerr_oracle

    dc = kerr_coefficients(fig2_params)
    oracle = perturbation_kerr_oracle(fig2_params)
    assert oracle["u1"] == pytest.approx(dc.u1, rel=0.10)
    assert oracle["u2"] == pytest.approx(dc.u2, rel=0.10)
    assert oracle["s"] == pytest.approx(dc.s, rel=0.10)


def test_perturbation_oracle_cross_kerr_discrepancy_documented(fig2_params):
    """The cross-Kerr combinations disagree with brute-force perturbation theory.

    The second-order oracle gives eta1 = v + u1 + u2 and eta2 = u1 - u2,
    while the closed forms shipped here (and pinned by the coefficient
    contract) combine them as eta1 = v + u2 - u1, eta2 = u2 - u1.  This
    test records the verified relationship so the disagreement checked in
    the acceptance suite is traceable.
    """
    from oracles import perturbation_kerr_oracle

    dc = kerr_coefficients(fig2_params)
    oracle = perturbation_kerr_oracle(fig2_params)
    assert oracle["eta1"] == pytest.approx(dc.v + dc.u1 + dc.u2, rel=0.05)
    assert oracle["eta2"] == pytest.approx(dc.u1 - dc.u2, rel=0.05)
    assert oracle["eta2_mode2"] == pytest.approx(oracle["eta2"], rel=0.05)
    # and they are NOT within 10% of the shipped combinations
    assert abs(oracle["eta1"] - dc.eta1) > 0.1 * abs(dc.eta1)
    assert abs(oracle["eta2"] - dc.eta2) > 0.1 * abs(dc.eta2)
