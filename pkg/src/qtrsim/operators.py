"""Dense complex-matrix algebra for truncated bosonic and spin operators.

Everything here is deliberately dense: the largest composite dimension in
production use is 72 (6 qubit x 6 resonator x 2 TLS levels), where sparse
bookkeeping costs more than it saves. Matrix backends are numpy/scipy
LAPACK routines behind the small wrapper types below.

Composite operators use the fixed tensor ordering
``qubit (x) resonator (x) TLS``; :func:`embed` is the single helper that
places a subsystem operator into the product space, so the ordering is
encoded in exactly one place.

All types are immutable after construction and safe to share between
threads or worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.linalg


class DimensionError(ValueError):
    """Raised for invalid or mismatched Hilbert-space dimensions."""


class HermiticityError(ValueError):
    """Raised when an operation requires a Hermitian operator and gets none."""


@dataclass(frozen=True)
class Operator:
    """Dense complex matrix on a truncated Hilbert space.

    Entries are dimensionless or in angular-frequency units (rad/us)
    depending on use; Hamiltonian builders document their convention.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=complex, order="C")
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"operator data must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def dagger(self) -> "Operator":
        return Operator(self.data.conj().T)

    def hermiticity_defect(self) -> float:
        """Largest elementwise magnitude of A - A^dagger."""
        return float(np.max(np.abs(self.data - self.data.conj().T))) if self.dim else 0.0

    def norm(self) -> float:
        """Spectral-scale norm used for relative tolerances (max |entry| * dim)."""
        return float(np.max(np.abs(self.data))) * self.dim if self.dim else 0.0

    def __add__(self, other: "Operator") -> "Operator":
        _check_same_dim(self, other)
        return Operator(self.data + other.data)

    def __sub__(self, other: "Operator") -> "Operator":
        _check_same_dim(self, other)
        return Operator(self.data - other.data)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(-self.data)

    def __matmul__(self, other: "Operator") -> "Operator":
        _check_same_dim(self, other)
        return Operator(self.data @ other.data)


State = Union["StateVector", "DensityMatrix"]


@dataclass(frozen=True)
class StateVector:
    """Complex amplitude vector, normalized to unity within 1e-12."""

    amplitudes: np.ndarray

    def __post_init__(self):
        vec = np.array(self.amplitudes, dtype=complex).ravel()
        if vec.size == 0:
            raise DimensionError("empty state vector")
        n = np.linalg.norm(vec)
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        vec = vec / n
        vec.setflags(write=False)
        object.__setattr__(self, "amplitudes", vec)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Density operator; `validate()` enforces the physicality invariants."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=complex, order="C")
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"density matrix must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))[0])

    def validate(self, herm_tol: float = 1e-10, trace_tol: float = 1e-9,
                 eig_floor: float = -1e-10) -> "DensityMatrix":
        defect = float(np.max(np.abs(self.data - self.data.conj().T)))
        if defect > herm_tol:
            raise HermiticityError(f"density matrix not Hermitian: defect {defect:.3e}")
        tr = np.trace(self.data)
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {tr:.12g} deviates from 1")
        lo = self.min_eigenvalue()
        if lo < eig_floor:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
        return self


def _check_same_dim(a: Operator, b: Operator) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")


def ladder_destroy(n_levels: int) -> Operator:
    """Truncated annihilation operator: a[i, i+1] = sqrt(i+1)."""
    if n_levels < 2:
        raise DimensionError(f"ladder operator needs at least 2 levels, got {n_levels}")
    a = np.zeros((n_levels, n_levels), dtype=complex)
    idx = np.arange(n_levels - 1)
    a[idx, idx + 1] = np.sqrt(idx + 1.0)
    return Operator(a)


def ladder_create(n_levels: int) -> Operator:
    return ladder_destroy(n_levels).dagger()


def number_operator(n_levels: int) -> Operator:
    return Operator(np.diag(np.arange(n_levels, dtype=float)))


def identity(n_levels: int) -> Operator:
    return Operator(np.eye(n_levels, dtype=complex))


def basis_state(n_levels: int, k: int) -> StateVector:
    if not 0 <= k < n_levels:
        raise DimensionError(f"basis index {k} outside 0..{n_levels - 1}")
    vec = np.zeros(n_levels, dtype=complex)
    vec[k] = 1.0
    return StateVector(vec)


def projector(n_levels: int, k: int) -> Operator:
    mat = np.zeros((n_levels, n_levels), dtype=complex)
    mat[k, k] = 1.0
    return Operator(mat)


def tensor(ops: Sequence[Operator]) -> Operator:
    """Kronecker product in the given order (qubit (x) resonator (x) TLS)."""
    if len(ops) == 0:
        raise DimensionError("tensor() needs at least one operator")
    out = ops[0].data
    for op in ops[1:]:
        out = np.kron(out, op.data)
    return Operator(out)


def embed(op: Operator, slot: int, dims: Sequence[int]) -> Operator:
    """Place a subsystem operator into the composite space.

    `dims` lists the subsystem dimensions in the fixed global ordering and
    `slot` indexes the factor that `op` acts on; all other factors get
    identities.
    """
    if not 0 <= slot < len(dims):
        raise DimensionError(f"slot {slot} outside 0..{len(dims) - 1}")
    if op.dim != dims[slot]:
        raise DimensionError(f"operator dim {op.dim} does not match slot dim {dims[slot]}")
    factors = [identity(d) if i != slot else op for i, d in enumerate(dims)]
    return tensor(factors)


def is_hermitian(op: Operator, tol: float) -> bool:
    """True iff max|A - A^dagger| <= tol elementwise."""
    return op.hermiticity_defect() <= tol


def eigh(op: Operator, rtol: float = 1e-9):
    """Hermitian eigendecomposition with ascending eigenvalues.

    Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns.
    Rejects operators whose hermiticity defect exceeds `rtol` relative to
    the operator norm.
    """
    scale = max(op.norm(), 1.0)
    defect = op.hermiticity_defect()
    if defect > rtol * scale:
        raise HermiticityError(
            f"eigh() requires a Hermitian operator: defect {defect:.3e} "
            f"exceeds {rtol:.1e} * norm ({rtol * scale:.3e})"
        )
    w, v = np.linalg.eigh(0.5 * (op.data + op.data.conj().T))
    return w.astype(float), v


def expm(op: Operator) -> Operator:
    return Operator(scipy.linalg.expm(op.data))


def expect(op: Operator, state: State, imag_tol: float = 1e-10) -> float:
    """<psi|A|psi> or Tr(rho A); asserts the imaginary residue is negligible."""
    if op.dim != state.dim:
        raise DimensionError(f"operator dim {op.dim} does not match state dim {state.dim}")
    if isinstance(state, StateVector):
        val = complex(np.vdot(state.amplitudes, op.data @ state.amplitudes))
    else:
        val = complex(np.trace(state.data @ op.data))
    scale = max(abs(val), 1.0)
    if abs(val.imag) > imag_tol * scale:
        raise ValueError(f"expectation value has imaginary residue {val.imag:.3e}")
    return val.real


def expect_raw(op_data: np.ndarray, rho_data: np.ndarray) -> float:
    """Fast path used by the evolution engine: Tr(rho A).real, no checks."""
    return float(np.einsum("ij,ji->", rho_data, op_data).real)
