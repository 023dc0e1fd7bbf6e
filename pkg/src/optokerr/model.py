"""Hamiltonians and jump operators of the two-mode optomechanical model.

The simulation basis is the quasimode basis (c1, c2, b): initial states,
observables and the drive-balance condition eps2 = eps1 tan(theta) are all
stated in quasimodes, and the rotation is exact, including for the
dissipators.  Bare-mode operators enter only through the rotation
a1 = c1 cos(theta) + c2 sin(theta), a2 = c1 sin(theta) - c2 cos(theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .effective import DerivedCoefficients, SystemParams, beat_coefficients, quasimode_transform
from .hilbert import InvalidDimensionError, ModeSpace, SpaceMismatchError, lowering, number, transition

__all__ = [
    "TimeDependentHamiltonian",
    "JumpSet",
    "hamiltonian_interaction",
    "hamiltonian_effective",
    "hamiltonian_beam_splitter",
    "jump_operators",
    "single_atom_model",
]


@dataclass
class TimeDependentHamiltonian:
    """H(t) = sum of static terms plus amplitude*cos(omega t + phase) terms.

    Each stored matrix is Hermitian, so H(t) is Hermitian at every t.  An
    oscillating pair O e^{-i d t} + O^dag e^{+i d t} is stored as the two
    Hermitian quadratures (O + O^dag) at phase 0 and i(O^dag - O) at phase
    -pi/2, both with angular frequency d.
    """

    space: ModeSpace
    static_terms: list = field(default_factory=list)      # (csr, coefficient)
    oscillating_terms: list = field(default_factory=list)  # (csr, amplitude, omega, phase)

    def add_static(self, matrix, coefficient: float = 1.0):
        self.static_terms.append((sp.csr_matrix(matrix, dtype=complex), float(coefficient)))

    def add_oscillating(self, matrix, amplitude: float, omega: float, phase: float = 0.0):
        self.oscillating_terms.append(
            (sp.csr_matrix(matrix, dtype=complex), float(amplitude), float(omega), float(phase))
        )

    def add_rotating_pair(self, op, amplitude: float, omega: float):
        """Add amplitude * (op e^{-i omega t} + op^dag e^{+i omega t})."""
        op = sp.csr_matrix(op, dtype=complex)
        self.add_oscillating(op + op.conj().T, amplitude, omega, 0.0)
        self.add_oscillating(1j * (op.conj().T - op), amplitude, omega, -0.5 * math.pi)

    def static_sum(self) -> sp.csr_matrix:
        dim = self.space.total_dim
        out = sp.csr_matrix((dim, dim), dtype=complex)
        for mat, c in self.static_terms:
            out = out + c * mat
        return out.tocsr()

    def evaluate(self, t: float) -> sp.csr_matrix:
        """H(t) as a sparse matrix."""
        out = self.static_sum()
        for mat, amp, omega, phase in self.oscillating_terms:
            out = out + (amp * math.cos(omega * t + phase)) * mat
        return out.tocsr()


@dataclass
class JumpSet:
    """The four dissipation channels of the open model.

    Labels are fixed: cavity1, cavity2, phonon-down, phonon-up.  The
    phonon-up operator carries sqrt(2 gamma_m n_th), so n_th = 0 makes it
    the zero matrix.
    """

    space: ModeSpace
    operators: list
    labels: tuple[str, ...] = ("cavity1", "cavity2", "phonon-down", "phonon-up")

    def __post_init__(self):
        if len(self.operators) != len(self.labels):
            raise ValueError("one operator per label required")
        self.operators = [sp.csr_matrix(op, dtype=complex) for op in self.operators]

    def __iter__(self):
        return iter(self.operators)

    def __len__(self):
        return len(self.operators)


def _require_three_modes(space: ModeSpace):
    if space.n_modes != 3:
        raise SpaceMismatchError(f"expected a 3-mode space, got {space.n_modes} modes")


def _quasimode_ops(space: ModeSpace, theta: float):
    c1 = lowering(space, 0)
    c2 = lowering(space, 1)
    b = lowering(space, 2)
    a1 = math.cos(theta) * c1 + math.sin(theta) * c2
    a2 = math.sin(theta) * c1 - math.cos(theta) * c2
    return c1, c2, b, a1.tocsr(), a2.tocsr()


def _check_theta(p: SystemParams, dc: DerivedCoefficients):
    beat = beat_coefficients(p)
    theta = quasimode_transform(beat["nu1"], beat["nu2"], beat["lam"])["theta"]
    if abs(theta - dc.theta) > 1e-12:
        raise ValueError(
            f"coefficients inconsistent with parameters: theta {dc.theta!r} vs recomputed {theta!r}"
        )


def hamiltonian_interaction(space: ModeSpace, p: SystemParams,
                            dc: DerivedCoefficients) -> TimeDependentHamiltonian:
    """Interaction-picture Hamiltonian in the quasimode basis.

    Static part: -omega_c1 n1 - omega_c2 n2 + omega_m b^dag b
    + G (n1 + n2)(b + b^dag) + rotated drives
    (eps1 cos + eps2 sin)(c1 + c1^dag) + (eps1 sin - eps2 cos)(c2 + c2^dag).

    Oscillating part: G (a1^dag a2 e^{-i d t} + h.c.)(b + b^dag) expressed
    through the quasimode operators, at angular frequency d.
    """
    _require_three_modes(space)
    _check_theta(p, dc)
    theta = dc.theta
    c1, c2, b, a1, a2 = _quasimode_ops(space, theta)
    n1 = (c1.conj().T @ c1).tocsr()
    n2 = (c2.conj().T @ c2).tocsr()
    nb = (b.conj().T @ b).tocsr()
    xb = (b + b.conj().T).tocsr()

    H = TimeDependentHamiltonian(space)
    H.add_static(n1, -dc.omega_c1)
    H.add_static(n2, -dc.omega_c2)
    H.add_static(nb, p.omega_m)
    H.add_static(((n1 + n2) @ xb).tocsr(), p.G)
    drive1 = p.eps1 * math.cos(theta) + p.eps2 * math.sin(theta)
    drive2 = p.eps1 * math.sin(theta) - p.eps2 * math.cos(theta)
    if drive1 != 0.0:
        H.add_static((c1 + c1.conj().T).tocsr(), drive1)
    if drive2 != 0.0:
        H.add_static((c2 + c2.conj().T).tocsr(), drive2)
    K = (a1.conj().T @ a2 @ xb).tocsr()
    H.add_rotating_pair(K, p.G, p.d)
    return H


def hamiltonian_effective(space: ModeSpace, dc: DerivedCoefficients) -> sp.csr_matrix:
    """Number-diagonal effective Kerr Hamiltonian.

    eta1 n1 n2 + eta2 (n1 - n2) b^dag b + s (n1^2 + n2^2) + u1 n1 + u2 n2,
    diagonal in the Fock basis, so it commutes with every number operator
    (the formal content of the nondemolition property).
    """
    _require_three_modes(space)
    occ = space.basis_occupations().astype(float)
    n1, n2, nb = occ[:, 0], occ[:, 1], occ[:, 2]
    diag = (dc.eta1 * n1 * n2 + dc.eta2 * (n1 - n2) * nb
            + dc.s * (n1 ** 2 + n2 ** 2) + dc.u1 * n1 + dc.u2 * n2)
    return sp.csr_matrix(sp.diags(diag.astype(complex), 0))


def hamiltonian_beam_splitter(space: ModeSpace, p: SystemParams) -> sp.csr_matrix:
    """Two-mode atom-induced beam-splitter Hamiltonian on a (mode1, mode2) space.

    -nu1 a1^dag a1 - nu2 a2^dag a2 + lam (a1^dag a2 + a2^dag a1); this is the
    field-only Hamiltonian the single-atom model is validated against.
    """
    if space.n_modes != 2:
        raise SpaceMismatchError(f"expected a 2-mode space, got {space.n_modes} modes")
    beat = beat_coefficients(p)
    a1 = lowering(space, 0)
    a2 = lowering(space, 1)
    H = (-beat["nu1"] * (a1.conj().T @ a1) - beat["nu2"] * (a2.conj().T @ a2)
         + beat["lam"] * (a1.conj().T @ a2 + a2.conj().T @ a1))
    return H.tocsr()


def jump_operators(space: ModeSpace, p: SystemParams, dc: DerivedCoefficients) -> JumpSet:
    """Dissipation channels, with the bare-mode losses rewritten in quasimodes.

    cavity1: sqrt(2 kappa1) (cos c1 + sin c2)
    cavity2: sqrt(2 kappa2) (sin c1 - cos c2)
    phonon-down: sqrt(2 gamma_m (n_th + 1)) b
    phonon-up:   sqrt(2 gamma_m n_th) b^dag
    """
    _require_three_modes(space)
    theta = dc.theta
    c1, c2, b, a1, a2 = _quasimode_ops(space, theta)
    ops = [
        math.sqrt(2.0 * p.kappa1) * a1,
        math.sqrt(2.0 * p.kappa2) * a2,
        math.sqrt(2.0 * p.gamma_m * (p.n_th + 1.0)) * b,
        math.sqrt(2.0 * p.gamma_m * p.n_th) * b.conj().T.tocsr(),
    ]
    return JumpSet(space, ops)


ATOM_LEVELS = ("a", "b", "c")


def single_atom_model(space: ModeSpace, p: SystemParams) -> sp.csr_matrix:
    """Full single-atom validation Hamiltonian on (field1, field2, atom).

    Delta sigma_cc - delta sigma_aa
    + (g1 a1 sigma_ca + g2 a2 sigma_ba + Omega sigma_cb + h.c.),
    with atomic levels ordered (a, b, c).  Used to validate the adiabatic
    elimination behind the beam-splitter coefficients.
    """
    _require_three_modes(space)
    if space.dims[2] != 3:
        raise InvalidDimensionError(
            f"atom mode must have dimension 3, got {space.dims[2]}"
        )
    a1 = lowering(space, 0)
    a2 = lowering(space, 1)
    s_aa = transition(space, 2, 0, 0)
    s_ba = transition(space, 2, 1, 0)
    s_ca = transition(space, 2, 2, 0)
    s_cb = transition(space, 2, 2, 1)
    s_cc = transition(space, 2, 2, 2)
    half = p.g1 * (a1 @ s_ca) + p.g2 * (a2 @ s_ba) + p.Omega * s_cb
    H = p.Delta * s_cc - p.delta * s_aa + half + half.conj().T
    return H.tocsr()
