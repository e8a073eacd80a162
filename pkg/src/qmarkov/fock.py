"""Operator algebra on truncated oscillator spaces, qubits, and their tensor products.

Everything is a dense complex matrix.  A Fock space truncated at ``n_max``
has dimension ``n_max + 1`` and the creation operator annihilates the top
state ``|n_max>``, so infinite-dimensional identities hold only on a
low-excitation "guarded" subspace.  Coherent amplitudes are kept inside the
guard band ``|alpha|^2 <= n_max / 4`` so that the Poisson tail lost to
truncation stays negligible at the tested tolerances.

Tensor products follow the ``numpy.kron`` convention: for a composite
``tensor_space(s, m)`` the basis index is ``i_s * dim_m + i_m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DimensionError,
    InvalidPropagatorError,
    InvalidStateError,
    TruncationOverflowError,
)

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
NORM_TOL = 1e-12
EIGEN_FLOOR = -1e-10
WIGNER_BOUND_SLACK = 1e-9


# ---------------------------------------------------------------------------
# Spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HilbertSpace:
    """Finite Hilbert space: a truncated Fock space, a qubit, or a tensor pair."""

    kind: str  # "fock" | "qubit" | "tensor"
    dim: int
    factors: tuple["HilbertSpace", ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError(f"dimension must be >= 1, got {self.dim}")
        if self.kind == "tensor":
            prod = math.prod(f.dim for f in self.factors)
            if len(self.factors) != 2 or prod != self.dim:
                raise DimensionError(
                    f"tensor space needs two factors with product {self.dim}"
                )
        elif self.factors:
            raise DimensionError(f"{self.kind} space takes no factors")


def fock_space(n_max: int) -> HilbertSpace:
    """Oscillator space truncated at photon number ``n_max`` (dimension n_max+1)."""
    if n_max < 0:
        raise DimensionError(f"n_max must be >= 0, got {n_max}")
    return HilbertSpace("fock", n_max + 1)


def qubit_space() -> HilbertSpace:
    return HilbertSpace("qubit", 2)


def tensor_space(first: HilbertSpace, second: HilbertSpace) -> HilbertSpace:
    return HilbertSpace("tensor", first.dim * second.dim, (first, second))


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=complex)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Operators and states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Operator:
    """Dense complex matrix attached to its Hilbert space."""

    space: HilbertSpace
    mat: np.ndarray

    def __post_init__(self):
        m = _frozen(self.mat)
        if m.shape != (self.space.dim, self.space.dim):
            raise DimensionError(
                f"operator shape {m.shape} does not match dimension {self.space.dim}"
            )
        object.__setattr__(self, "mat", m)

    def dag(self) -> "Operator":
        return Operator(self.space, self.mat.conj().T)

    def __matmul__(self, other: "Operator") -> "Operator":
        if self.space != other.space:
            raise DimensionError("operator spaces do not match")
        return Operator(self.space, self.mat @ other.mat)

    def __add__(self, other: "Operator") -> "Operator":
        if self.space != other.space:
            raise DimensionError("operator spaces do not match")
        return Operator(self.space, self.mat + other.mat)

    def __sub__(self, other: "Operator") -> "Operator":
        if self.space != other.space:
            raise DimensionError("operator spaces do not match")
        return Operator(self.space, self.mat - other.mat)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.space, self.mat * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.mat)


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.dim))


@dataclass(frozen=True)
class StateVector:
    """Unit-norm complex amplitude vector on its Hilbert space."""

    space: HilbertSpace
    vec: np.ndarray

    def __post_init__(self):
        v = np.array(self.vec, dtype=complex).reshape(-1)
        if v.shape != (self.space.dim,):
            raise DimensionError(
                f"state length {v.shape} does not match dimension {self.space.dim}"
            )
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"state norm {nrm} deviates from 1 beyond {NORM_TOL}")
        v.setflags(write=False)
        object.__setattr__(self, "vec", v)

    def to_density(self) -> "DensityOperator":
        rho = np.outer(self.vec, self.vec.conj())
        return DensityOperator(self.space, rho / np.trace(rho).real)


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, positive semidefinite, trace-one matrix on its space."""

    space: HilbertSpace
    mat: np.ndarray

    def __post_init__(self):
        m = _frozen(self.mat)
        if m.shape != (self.space.dim, self.space.dim):
            raise DimensionError(
                f"density shape {m.shape} does not match dimension {self.space.dim}"
            )
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITICITY_TOL:
            raise InvalidStateError(f"Hermiticity residual {herm:.3e} beyond tolerance")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace {tr} deviates from 1 beyond tolerance")
        lo = np.linalg.eigvalsh(m)[0]
        if lo < EIGEN_FLOOR:
            raise InvalidStateError(f"minimum eigenvalue {lo:.3e} below {EIGEN_FLOOR}")
        object.__setattr__(self, "mat", m)

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityOperator":
        return state.to_density()

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.mat)).copy()

    def expect(self, op: Operator) -> complex:
        if op.space != self.space:
            raise DimensionError("operator space does not match state space")
        return complex(np.trace(op.mat @ self.mat))

    def purity(self) -> float:
        return float(np.real(np.trace(self.mat @ self.mat)))


def maximally_mixed(space: HilbertSpace) -> DensityOperator:
    return DensityOperator(space, np.eye(space.dim) / space.dim)


def fock_state(n: int, n_max: int) -> StateVector:
    space = fock_space(n_max)
    if not 0 <= n <= n_max:
        raise DimensionError(f"photon number {n} outside 0..{n_max}")
    v = np.zeros(space.dim, dtype=complex)
    v[n] = 1.0
    return StateVector(space, v)


def fock_projector(n: int, n_max: int) -> DensityOperator:
    return fock_state(n, n_max).to_density()


def tensor_op(first: Operator, second: Operator) -> Operator:
    space = tensor_space(first.space, second.space)
    return Operator(space, np.kron(first.mat, second.mat))


def tensor_state(first: StateVector, second: StateVector) -> StateVector:
    space = tensor_space(first.space, second.space)
    return StateVector(space, np.kron(first.vec, second.vec))


# ---------------------------------------------------------------------------
# Oscillator operators
# ---------------------------------------------------------------------------

def ladder_ops(n_max: int) -> tuple[Operator, Operator, Operator]:
    """Annihilation a, creation a-dagger, and number operator on dimension n_max+1.

    a|n> = sqrt(n)|n-1>,  a†|n> = sqrt(n+1)|n+1> for n < n_max, and
    a†|n_max> = 0 by truncation.  [a, a†] = I holds on span{|0>..|n_max-1>}.
    """
    if n_max < 1:
        raise DimensionError(f"ladder operators need n_max >= 1, got {n_max}")
    space = fock_space(n_max)
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1)
    num = np.diag(np.arange(n_max + 1, dtype=float))
    return Operator(space, a), Operator(space, a.conj().T), Operator(space, num)


def check_guard_band(alpha: complex, n_max: int) -> None:
    """Raise unless |alpha|^2 <= n_max / 4 (keeps the truncated Poisson tail tiny)."""
    if abs(alpha) ** 2 > n_max / 4 + 1e-12:
        raise TruncationOverflowError(
            f"|alpha|^2 = {abs(alpha)**2:.4f} exceeds guard band n_max/4 = {n_max / 4}"
        )


def coherent_state(alpha: complex, n_max: int) -> StateVector:
    """Coherent state with amplitudes e^(-|a|^2/2) a^n / sqrt(n!), renormalized."""
    check_guard_band(alpha, n_max)
    space = fock_space(n_max)
    amps = np.empty(space.dim, dtype=complex)
    amps[0] = 1.0
    for n in range(1, space.dim):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    amps *= math.exp(-abs(alpha) ** 2 / 2)
    amps /= np.linalg.norm(amps)
    return StateVector(space, amps)


def _unitary_from_skew(skew: np.ndarray) -> np.ndarray:
    # exp(K) for anti-Hermitian K, via eigendecomposition of the Hermitian iK.
    w, v = np.linalg.eigh(1j * skew)
    return (v * np.exp(-1j * w)) @ v.conj().T


def displacement(alpha: complex, n_max: int) -> Operator:
    """Displacement exp(alpha a† - alpha* a) on the truncated space (unitary)."""
    check_guard_band(alpha, n_max)
    a, adag, _ = ladder_ops(max(n_max, 1))
    gen = alpha * adag.mat - np.conj(alpha) * a.mat
    return Operator(fock_space(n_max), _unitary_from_skew(gen))


def func_of_number(f: Callable[[int], complex], n_max: int) -> Operator:
    """Diagonal operator diag(f(0), ..., f(n_max))."""
    vals = np.array([f(n) for n in range(n_max + 1)], dtype=complex)
    return Operator(fock_space(n_max), np.diag(vals))


def parity_op(n_max: int) -> Operator:
    """exp(i pi N) = diag((-1)^n)."""
    signs = np.where(np.arange(n_max + 1) % 2 == 0, 1.0, -1.0)
    return Operator(fock_space(n_max), np.diag(signs.astype(complex)))


# ---------------------------------------------------------------------------
# Qubit
# ---------------------------------------------------------------------------

_G = np.array([1.0, 0.0], dtype=complex)  # ground |g>
_E = np.array([0.0, 1.0], dtype=complex)  # excited |e>


def qubit_state(label: str) -> StateVector:
    if label not in ("g", "e"):
        raise DimensionError(f"unknown qubit label {label!r}")
    return StateVector(qubit_space(), _G if label == "g" else _E)


def pauli_ops() -> tuple[Operator, Operator, Operator, Operator, Operator]:
    """(sigma_x, sigma_y, sigma_z, sigma_minus, sigma_plus) in the (|g>, |e>) basis.

    sigma_minus = |g><e|, sigma_plus = |e><g|, sigma_z = |e><e| - |g><g|.
    """
    sp = qubit_space()
    sm = np.outer(_G, _E.conj())
    splus = np.outer(_E, _G.conj())
    sx = sm + splus
    sy = 1j * sm - 1j * splus
    sz = np.outer(_E, _E.conj()) - np.outer(_G, _G.conj())
    return (
        Operator(sp, sx),
        Operator(sp, sy),
        Operator(sp, sz),
        Operator(sp, sm),
        Operator(sp, splus),
    )


def bloch_coordinates(rho: DensityOperator) -> tuple[float, float, float]:
    """Coordinates solving rho = (I + x sx + y sy + z sz) / 2."""
    if rho.space.dim != 2:
        raise DimensionError("Bloch coordinates need a qubit state")
    sx, sy, sz, _, _ = pauli_ops()
    return (
        float(np.real(np.trace(sx.mat @ rho.mat))),
        float(np.real(np.trace(sy.mat @ rho.mat))),
        float(np.real(np.trace(sz.mat @ rho.mat))),
    )


# ---------------------------------------------------------------------------
# Jaynes-Cummings propagators on fock (x) qubit
# ---------------------------------------------------------------------------

_P_GG = np.outer(_G, _G.conj())
_P_EE = np.outer(_E, _E.conj())
_P_EG = np.outer(_E, _G.conj())  # |e><g|
_P_GE = np.outer(_G, _E.conj())  # |g><e|


def _sin_over_sqrt(theta: float, n_max: int) -> np.ndarray:
    # sin(theta sqrt(n) / 2) / sqrt(n), continued to theta/2 at n = 0.  The
    # value at n = 0 is never reached by the flanking ladder operators.
    n = np.arange(n_max + 1, dtype=float)
    out = np.full(n_max + 1, theta / 2.0)
    root = np.sqrt(n[1:])
    out[1:] = np.sin(theta * root / 2.0) / root
    return out


def jc_resonant_propagator(theta: float, n_max: int) -> Operator:
    """Resonant exchange propagator on fock (x) qubit.

    Block form: cos(T sqrt(N)/2) ⊗ |g><g| + cos(T sqrt(N+1)/2) ⊗ |e><e|
    - a sin(T sqrt(N)/2)/sqrt(N) ⊗ |e><g| + sin(T sqrt(N)/2)/sqrt(N) a† ⊗ |g><e|,
    unitary on the guarded span {|n> : n <= n_max - 2} of the oscillator factor.
    """
    if n_max < 2:
        raise DimensionError(f"resonant propagator needs n_max >= 2, got {n_max}")
    a, adag, _ = ladder_ops(n_max)
    n = np.arange(n_max + 1, dtype=float)
    cos_g = np.diag(np.cos(theta * np.sqrt(n) / 2.0)).astype(complex)
    cos_e = np.diag(np.cos(theta * np.sqrt(n + 1.0) / 2.0)).astype(complex)
    s = np.diag(_sin_over_sqrt(theta, n_max)).astype(complex)
    u = (
        np.kron(cos_g, _P_GG)
        + np.kron(cos_e, _P_EE)
        + np.kron(-(a.mat @ s), _P_EG)
        + np.kron(s @ adag.mat, _P_GE)
    )
    return Operator(tensor_space(fock_space(n_max), qubit_space()), u)


def jc_dispersive_propagator(theta: float, n_max: int) -> Operator:
    """Dispersive propagator exp(iNT) ⊗ |g><g| + exp(-iNT) ⊗ |e><e| (exactly unitary)."""
    n = np.arange(n_max + 1, dtype=float)
    u = np.kron(np.diag(np.exp(1j * n * theta)), _P_GG) + np.kron(
        np.diag(np.exp(-1j * n * theta)), _P_EE
    )
    return Operator(tensor_space(fock_space(n_max), qubit_space()), u)


# ---------------------------------------------------------------------------
# Measurement-operator extraction from a composite propagator
# ---------------------------------------------------------------------------

def measurement_ops_from_propagator(
    propagator: Operator,
    pointer_state: StateVector,
    basis: Sequence[StateVector],
    guard_dim: int | None = None,
    tol: float = 1e-8,
) -> list[Operator]:
    """Kraus operators M_mu with U(|psi> ⊗ |pointer>) = sum_mu (M_mu|psi>) ⊗ |b_mu>.

    The propagator must act on tensor_space(system, meter) and be unitary
    within ``tol`` on the guarded system columns (first ``guard_dim`` system
    basis vectors); then sum_mu M_mu† M_mu = I holds on that block.
    """
    space = propagator.space
    if space.kind != "tensor":
        raise DimensionError("propagator must act on a tensor space")
    sys_space, meter_space = space.factors
    if pointer_state.space != meter_space:
        raise DimensionError("pointer state must live on the meter factor")
    d_s, d_m = sys_space.dim, meter_space.dim
    for b in basis:
        if b.space != meter_space:
            raise DimensionError("basis states must live on the meter factor")
    gram = np.array([[np.vdot(x.vec, y.vec) for y in basis] for x in basis])
    if np.max(np.abs(gram - np.eye(len(basis)))) > 1e-12:
        raise InvalidStateError("meter basis is not orthonormal within 1e-12")

    guard = d_s if guard_dim is None else guard_dim
    gap = propagator.mat.conj().T @ propagator.mat - np.eye(d_s * d_m)
    cols = (np.arange(d_s * d_m) // d_m) < guard
    worst = np.max(np.abs(gap[:, cols]))
    if worst > tol:
        raise InvalidPropagatorError(
            f"propagator deviates from unitarity by {worst:.3e} on guarded columns"
        )

    u4 = propagator.mat.reshape(d_s, d_m, d_s, d_m)
    contracted = np.einsum("ikjl,l->ikj", u4, pointer_state.vec)
    return [
        Operator(sys_space, np.einsum("k,ikj->ij", b.vec.conj(), contracted))
        for b in basis
    ]


# ---------------------------------------------------------------------------
# Wigner function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WignerGrid:
    """Phase-space samples W(x + ip) on a rectangular grid (rows indexed by p)."""

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (p.size, x.size):
            raise DimensionError(f"samples shape {v.shape} != (n_p, n_x)")
        bound = 2.0 / math.pi + WIGNER_BOUND_SLACK
        if np.max(np.abs(v)) > bound:
            raise InvalidStateError("Wigner samples exceed the 2/pi bound")
        for name, arr in (("x", x), ("p", p), ("values", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def resolution(self) -> float:
        return float(self.x[1] - self.x[0]) if self.x.size > 1 else 0.0

    def integral(self) -> float:
        inner = np.trapezoid(self.values, self.x, axis=1)
        return float(np.trapezoid(inner, self.p))


def wigner(
    rho: DensityOperator,
    x_range: tuple[float, float] = (-2.5, 2.5),
    p_range: tuple[float, float] = (-2.5, 2.5),
    resolution: float = 0.1,
) -> WignerGrid:
    """Sample W(alpha) = (2/pi) tr(e^{i pi N} D_{-alpha} rho D_alpha) on a grid.

    The grid corners must stay inside the displacement guard band.  The
    imaginary residue of each trace must stay below 1e-9.
    """
    if rho.space.kind != "fock":
        raise DimensionError("Wigner sampling expects an oscillator state")
    n_max = rho.space.dim - 1
    xs = _axis(x_range, resolution)
    ps = _axis(p_range, resolution)
    corner = math.hypot(max(abs(xs[0]), abs(xs[-1])), max(abs(ps[0]), abs(ps[-1])))
    check_guard_band(corner, n_max)

    a, adag, _ = ladder_ops(max(n_max, 1))
    signs = np.where(np.arange(n_max + 1) % 2 == 0, 1.0, -1.0)
    values = np.empty((ps.size, xs.size))
    worst_imag = 0.0
    for i, p in enumerate(ps):
        for j, x in enumerate(xs):
            alpha = x + 1j * p
            disp = _unitary_from_skew(alpha * adag.mat - np.conj(alpha) * a.mat)
            diag = np.einsum("kn,kn->n", disp.conj(), rho.mat @ disp)
            w = (2.0 / math.pi) * np.sum(signs * diag)
            worst_imag = max(worst_imag, abs(w.imag))
            values[i, j] = w.real
    if worst_imag >= 1e-9:
        raise InvalidStateError(f"Wigner imaginary residue {worst_imag:.3e} >= 1e-9")
    return WignerGrid(xs, ps, values)


def _axis(bounds: tuple[float, float], resolution: float) -> np.ndarray:
    lo, hi = bounds
    if hi <= lo or resolution <= 0:
        raise DimensionError(f"bad axis spec {bounds} at resolution {resolution}")
    n = int(round((hi - lo) / resolution)) + 1
    return np.linspace(lo, hi, n)


def write_wigner(grid: WignerGrid, path) -> None:
    """Plain-text matrix file: header `x_min x_max p_min p_max n_x n_p`, then rows."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            f"{grid.x[0]!r} {grid.x[-1]!r} {grid.p[0]!r} {grid.p[-1]!r} "
            f"{grid.x.size} {grid.p.size}\n"
        )
        for row in grid.values:
            fh.write(" ".join(repr(v) for v in row) + "\n")


def read_wigner(path) -> WignerGrid:
    with open(path, "r", encoding="ascii") as fh:
        head = fh.readline().split()
        x_min, x_max, p_min, p_max = (float(t) for t in head[:4])
        n_x, n_p = int(head[4]), int(head[5])
        values = np.array(
            [[float(t) for t in fh.readline().split()] for _ in range(n_p)]
        )
    return WignerGrid(np.linspace(x_min, x_max, n_x), np.linspace(p_min, p_max, n_p), values)
