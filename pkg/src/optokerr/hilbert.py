"""Truncated-Fock-space tensor algebra.

Composite spaces are built from per-mode truncated bosonic (or few-level)
factors.  The composite index convention is big-endian: mode 0 varies
slowest, so for dims (2, 3) the basis order is
|00>, |01>, |02>, |10>, |11>, |12>.  Every builder in this package uses
this convention; do not mix it with little-endian codes.

Operators are scipy CSR matrices (complex128); states are numpy arrays,
either a vector (pure) or a square matrix (density operator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ModeSpace",
    "QuantumState",
    "make_space",
    "lowering",
    "raising",
    "number",
    "quadrature",
    "identity",
    "transition",
    "embed",
    "fock_vector",
    "coherent_vector",
    "thermal_weights",
    "product_state",
    "expectation",
    "expectation_real",
    "InvalidDimensionError",
    "InvalidModeError",
    "TruncationRiskError",
    "SpaceMismatchError",
    "StateInvariantError",
]


class InvalidDimensionError(ValueError):
    """A mode dimension below 2 was requested."""


class InvalidModeError(IndexError):
    """A mode index outside the space was used."""


class TruncationRiskError(ValueError):
    """A state specification would be visibly biased by the truncation."""


class SpaceMismatchError(ValueError):
    """Operator and state/space dimensions do not match."""


class StateInvariantError(ValueError):
    """A constructed state violates normalization or Hermiticity."""


@dataclass(frozen=True)
class ModeSpace:
    """Ordered collection of truncated mode dimensions.

    Parameters
    ----------
    dims : tuple of int
        Per-mode truncation dimensions, each >= 2.
    labels : tuple of str
        Mode labels, e.g. ("c1", "c2", "b").  Defaults to mode0, mode1, ...
    """

    dims: tuple[int, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise InvalidDimensionError("a ModeSpace needs at least one mode")
        for d in dims:
            if d < 2:
                raise InvalidDimensionError(f"mode dimension {d} < 2")
        object.__setattr__(self, "dims", dims)
        labels = self.labels or tuple(f"mode{i}" for i in range(len(dims)))
        if len(labels) != len(dims):
            raise ValueError(f"expected {len(dims)} labels, got {len(labels)}")
        object.__setattr__(self, "labels", tuple(labels))

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        out = 1
        for d in self.dims:
            out *= d
        return out

    def check_mode(self, mode: int) -> int:
        if not 0 <= mode < self.n_modes:
            raise InvalidModeError(f"mode {mode} outside space with {self.n_modes} modes")
        return mode

    def basis_occupations(self) -> np.ndarray:
        """(total_dim, n_modes) array of occupation numbers per basis state."""
        grids = np.indices(self.dims).reshape(self.n_modes, -1).T
        return grids

    def index_of(self, occ: Sequence[int]) -> int:
        """Composite index of the basis state with the given occupations."""
        if len(occ) != self.n_modes:
            raise SpaceMismatchError("occupation list length != number of modes")
        idx = 0
        for n, d in zip(occ, self.dims):
            if not 0 <= n < d:
                raise TruncationRiskError(f"occupation {n} outside dimension {d}")
            idx = idx * d + n
        return idx


def make_space(dims: Sequence[int], labels: Sequence[str] | None = None) -> ModeSpace:
    """Build a ModeSpace; every dim must be >= 2."""
    return ModeSpace(tuple(dims), tuple(labels) if labels else ())


def _lower_1m(dim: int) -> sp.csr_matrix:
    off = [math.sqrt(n) for n in range(1, dim)]
    return sp.csr_matrix(sp.diags(off, 1, shape=(dim, dim), dtype=complex))


def embed(space: ModeSpace, mode: int, op_1m) -> sp.csr_matrix:
    """Embed a single-mode operator: identity on every other tensor factor."""
    space.check_mode(mode)
    d = space.dims[mode]
    op_1m = sp.csr_matrix(op_1m, dtype=complex)
    if op_1m.shape != (d, d):
        raise SpaceMismatchError(f"operator shape {op_1m.shape} != mode dim {d}")
    left = 1
    for dd in space.dims[:mode]:
        left *= dd
    right = 1
    for dd in space.dims[mode + 1:]:
        right *= dd
    out = sp.kron(sp.identity(left, format="csr"), op_1m, format="csr")
    out = sp.kron(out, sp.identity(right, format="csr"), format="csr")
    return sp.csr_matrix(out, dtype=complex)


def lowering(space: ModeSpace, mode: int) -> sp.csr_matrix:
    """Annihilation operator on one mode: <n-1|a|n> = sqrt(n) within the truncation."""
    return embed(space, mode, _lower_1m(space.dims[space.check_mode(mode)]))


def raising(space: ModeSpace, mode: int) -> sp.csr_matrix:
    """Creation operator on one mode (adjoint of :func:`lowering`)."""
    return sp.csr_matrix(lowering(space, mode).conj().T)


def number(space: ModeSpace, mode: int) -> sp.csr_matrix:
    """Number operator a^dag a on one mode."""
    d = space.dims[space.check_mode(mode)]
    return embed(space, mode, sp.diags(np.arange(d, dtype=float), 0))


def quadrature(space: ModeSpace, mode: int) -> sp.csr_matrix:
    """Hermitian quadrature a + a^dag on one mode."""
    a = _lower_1m(space.dims[space.check_mode(mode)])
    return embed(space, mode, a + a.conj().T)


def identity(space: ModeSpace) -> sp.csr_matrix:
    return sp.identity(space.total_dim, dtype=complex, format="csr")


def transition(space: ModeSpace, mode: int, i: int, j: int) -> sp.csr_matrix:
    """Level transition |i><j| on one mode (atomic spin operator)."""
    d = space.dims[space.check_mode(mode)]
    if not (0 <= i < d and 0 <= j < d):
        raise InvalidModeError(f"levels ({i},{j}) outside mode dimension {d}")
    m = sp.csr_matrix(([1.0 + 0j], ([i], [j])), shape=(d, d))
    return embed(space, mode, m)


def fock_vector(dim: int, n: int) -> np.ndarray:
    if not 0 <= n < dim:
        raise TruncationRiskError(f"fock level {n} outside dimension {dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def coherent_vector(dim: int, alpha: complex) -> np.ndarray:
    """Truncated coherent state, renormalized after truncation.

    The guard |alpha|^2 <= dim/4 keeps the lost tail weight negligible.
    """
    if abs(alpha) ** 2 > dim / 4.0:
        raise TruncationRiskError(
            f"coherent amplitude |alpha|^2={abs(alpha)**2:.3g} too large for dim {dim}"
        )
    ns = np.arange(dim)
    logfact = np.cumsum(np.log(np.maximum(ns, 1)))
    with np.errstate(divide="ignore"):
        amps = np.exp(ns * np.log(complex(alpha)) - 0.5 * logfact) if alpha != 0 else None
    if alpha == 0:
        return fock_vector(dim, 0)
    v = np.asarray(amps, dtype=complex)
    v /= np.linalg.norm(v)
    return v


def thermal_weights(dim: int, nbar: float) -> np.ndarray:
    """Diagonal weights prop. to (nbar/(nbar+1))^n, renormalized over the truncation."""
    if nbar < 0:
        raise TruncationRiskError(f"thermal occupation {nbar} < 0")
    if nbar == 0:
        w = np.zeros(dim)
        w[0] = 1.0
        return w
    r = nbar / (nbar + 1.0)
    w = r ** np.arange(dim)
    return w / w.sum()


@dataclass
class QuantumState:
    """State on a ModeSpace: pure vector or density matrix.

    Invariants (checked on construction): pure states have unit norm to
    1e-10; density matrices have unit trace and are Hermitian to 1e-10.
    """

    space: ModeSpace
    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=complex)
        dim = self.space.total_dim
        if arr.ndim == 1:
            if arr.shape != (dim,):
                raise SpaceMismatchError(f"vector length {arr.shape} != space dim {dim}")
            if abs(np.linalg.norm(arr) - 1.0) > 1e-10:
                raise StateInvariantError("pure state norm differs from 1 beyond 1e-10")
        elif arr.ndim == 2:
            if arr.shape != (dim, dim):
                raise SpaceMismatchError(f"matrix shape {arr.shape} != space dim {dim}")
            if abs(np.trace(arr) - 1.0) > 1e-10:
                raise StateInvariantError("density matrix trace differs from 1 beyond 1e-10")
            if np.max(np.abs(arr - arr.conj().T)) > 1e-10:
                raise StateInvariantError("density matrix not Hermitian to 1e-10")
        else:
            raise SpaceMismatchError("state array must be 1-d or 2-d")
        self.array = arr

    @property
    def is_pure(self) -> bool:
        return self.array.ndim == 1

    def density(self) -> np.ndarray:
        """Density matrix form (outer product for pure states)."""
        if self.is_pure:
            return np.outer(self.array, self.array.conj())
        return self.array


def product_state(space: ModeSpace, specs: Sequence[tuple]) -> QuantumState:
    """Tensor product of per-mode states.

    Parameters
    ----------
    space : ModeSpace
    specs : sequence of tuples, one per mode
        ("fock", n), ("coherent", alpha) or ("thermal", nbar).

    Returns a pure state when every factor is fock/coherent, otherwise a
    density matrix.  Guard rails: fock n < dim, |alpha|^2 <= dim/4,
    nbar >= 0; violations raise TruncationRiskError naming the mode.
    """
    if len(specs) != space.n_modes:
        raise SpaceMismatchError(f"expected {space.n_modes} specs, got {len(specs)}")
    pure = all(kind in ("fock", "coherent") for kind, _ in specs)
    factors = []
    for mode, (kind, value) in enumerate(specs):
        d = space.dims[mode]
        try:
            if kind == "fock":
                f = fock_vector(d, int(value))
            elif kind == "coherent":
                f = coherent_vector(d, value)
            elif kind == "thermal":
                f = thermal_weights(d, float(value))
            else:
                raise ValueError(f"unknown state spec kind {kind!r}")
        except TruncationRiskError as exc:
            raise TruncationRiskError(
                f"mode {mode} ({space.labels[mode]}): {exc}"
            ) from None
        if not pure and kind != "thermal":
            f = np.outer(f, f.conj())
        elif not pure:
            f = np.diag(f)
        factors.append(f)
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return QuantumState(space, out)


def expectation(state: QuantumState, op) -> complex:
    """tr(rho O) or <psi|O|psi>."""
    op = sp.csr_matrix(op)
    if op.shape != (state.space.total_dim,) * 2:
        raise SpaceMismatchError(
            f"operator shape {op.shape} != space dim {state.space.total_dim}"
        )
    if state.is_pure:
        return complex(np.vdot(state.array, op @ state.array))
    return complex((op @ state.array).diagonal().sum())


def expectation_real(state: QuantumState, op, imag_tol: float = 1e-9):
    """Real part of a (Hermitian) expectation plus the imaginary residual.

    The residual is measured relative to max(|value|, 1); a residual above
    imag_tol signals a non-Hermitian operator or a corrupted state.
    """
    val = expectation(state, op)
    residual = abs(val.imag) / max(abs(val), 1.0)
    if residual > imag_tol:
        raise StateInvariantError(
            f"imaginary residual {residual:.2e} above {imag_tol:.1e} for a Hermitian expectation"
        )
    return val.real, residual
