"""Kraus channels, their dual maps, contraction metrics, and fixed-point iteration."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, InvalidModelError, InvalidStateError
from .fock import DensityOperator, HilbertSpace, Operator

log = logging.getLogger(__name__)

CLIP_FLOOR = -1e-10


# ---------------------------------------------------------------------------
# Channel and imperfection types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KrausChannel:
    """Finite operator family {M_mu} with sum_mu M_mu† M_mu = I on its guard block.

    ``guard_dim`` restricts the completeness check to the leading basis
    vectors (truncated reservoir operators lose completeness at the boundary);
    ``None`` checks the full space.
    """

    operators: tuple[Operator, ...]
    tolerance: float = 1e-10
    guard_dim: int | None = None

    def __post_init__(self):
        ops = tuple(self.operators)
        if not ops:
            raise InvalidModelError("a channel needs at least one operator")
        space = ops[0].space
        for op in ops:
            if op.space != space:
                raise DimensionError("all Kraus operators must share one space")
        total = sum(op.mat.conj().T @ op.mat for op in ops)
        g = space.dim if self.guard_dim is None else self.guard_dim
        gap = np.max(np.abs((total - np.eye(space.dim))[:g, :g]))
        if gap > self.tolerance:
            raise InvalidModelError(
                f"partition of unity violated by {gap:.3e} on the guarded block"
            )
        object.__setattr__(self, "operators", ops)

    @property
    def space(self) -> HilbertSpace:
        return self.operators[0].space

    def __len__(self) -> int:
        return len(self.operators)


@dataclass(frozen=True)
class ImperfectionMatrix:
    """Left-stochastic matrix eta[reading, outcome] mixing detector readings."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2:
            raise DimensionError("imperfection matrix must be two-dimensional")
        if np.any(m < 0):
            raise InvalidModelError("imperfection entries must be non-negative")
        col = np.abs(m.sum(axis=0) - 1.0)
        if np.max(col) > 1e-12:
            raise InvalidModelError(
                f"imperfection columns must sum to 1 (worst deviation {np.max(col):.3e})"
            )
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def perfect(cls, m: int) -> "ImperfectionMatrix":
        return cls(np.eye(m))

    @property
    def n_readings(self) -> int:
        return self.entries.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.entries.shape[1]


# ---------------------------------------------------------------------------
# Channel application
# ---------------------------------------------------------------------------

def apply_channel(channel: KrausChannel, rho: DensityOperator) -> DensityOperator:
    """sum_mu M_mu rho M_mu†, renormalized by its trace to absorb truncation leakage."""
    if channel.space != rho.space:
        raise DimensionError("channel and state spaces do not match")
    out = sum(op.mat @ rho.mat @ op.mat.conj().T for op in channel.operators)
    tr = np.trace(out).real
    if abs(tr - 1.0) > channel.tolerance:
        log.debug("channel leakage: trace %.6e before renormalization", tr)
    out = (out + out.conj().T) / (2.0 * tr)
    return DensityOperator(rho.space, out)


def channel_trace(channel: KrausChannel, rho: DensityOperator) -> float:
    """Trace of sum_mu M_mu rho M_mu† before renormalization (1 minus leakage)."""
    return float(
        sum(
            np.sum((op.mat @ rho.mat) * op.mat.conj()).real
            for op in channel.operators
        )
    )


def apply_dual(channel: KrausChannel, op: Operator) -> Operator:
    """Heisenberg map sum_mu M_mu† A M_mu (unital)."""
    if channel.space != op.space:
        raise DimensionError("channel and operator spaces do not match")
    out = sum(m.mat.conj().T @ op.mat @ m.mat for m in channel.operators)
    return Operator(op.space, out)


def compose_channels(outer: KrausChannel, inner: KrausChannel) -> KrausChannel:
    """Channel with Kraus family {M_out M_in} (applies ``inner`` first)."""
    if outer.space != inner.space:
        raise DimensionError("channel spaces do not match")
    ops = tuple(
        Operator(outer.space, mo.mat @ mi.mat)
        for mo in outer.operators
        for mi in inner.operators
    )
    guard = None
    if outer.guard_dim is not None or inner.guard_dim is not None:
        guard = min(
            g for g in (outer.guard_dim, inner.guard_dim) if g is not None
        )
    return KrausChannel(
        ops, tolerance=2 * (outer.tolerance + inner.tolerance), guard_dim=guard
    )


# ---------------------------------------------------------------------------
# Distance and fidelity
# ---------------------------------------------------------------------------

def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    if w[0] < CLIP_FLOOR:
        raise InvalidStateError(f"matrix eigenvalue {w[0]:.3e} below clip threshold")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def trace_distance(rho: DensityOperator, sigma: DensityOperator) -> float:
    """D = tr|rho - sigma| (no 1/2 factor)."""
    if rho.space != sigma.space:
        raise DimensionError("states live on different spaces")
    w = np.linalg.eigvalsh(rho.mat - sigma.mat)
    return float(np.sum(np.abs(w)))


def fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """F = [tr sqrt(sqrt(rho) sigma sqrt(rho))]^2, in [0, 1]."""
    if rho.space != sigma.space:
        raise DimensionError("states live on different spaces")
    root = _psd_sqrt(rho.mat)
    inner = root @ sigma.mat @ root
    w = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
    if w[0] < CLIP_FLOOR:
        raise InvalidStateError(f"fidelity kernel eigenvalue {w[0]:.3e} below threshold")
    # Clipped square roots overshoot by O(sqrt(eps)) near rank deficiency;
    # clamp into the mathematically guaranteed range.
    val = float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
    return min(max(val, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Contraction diagnostics and fixed points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionReport:
    distance_before: float
    distance_after: float
    fidelity_before: float
    fidelity_after: float
    tolerance: float = 1e-10

    @property
    def distance_contracts(self) -> bool:
        return self.distance_after <= self.distance_before + self.tolerance

    @property
    def fidelity_grows(self) -> bool:
        return self.fidelity_after >= self.fidelity_before - self.tolerance

    @property
    def passed(self) -> bool:
        return self.distance_contracts and self.fidelity_grows


def contraction_check(
    channel: KrausChannel, rho: DensityOperator, sigma: DensityOperator
) -> ContractionReport:
    """Check D(K rho, K sigma) <= D(rho, sigma) and F non-decreasing."""
    krho = apply_channel(channel, rho)
    ksigma = apply_channel(channel, sigma)
    return ContractionReport(
        distance_before=trace_distance(rho, sigma),
        distance_after=trace_distance(krho, ksigma),
        fidelity_before=fidelity(rho, sigma),
        fidelity_after=fidelity(krho, ksigma),
    )


@dataclass(frozen=True)
class FixedPointResult:
    state: DensityOperator
    iterations: int
    converged: bool


def iterate_to_fixed_point(
    channel: KrausChannel,
    rho0: DensityOperator,
    tol: float = 1e-10,
    max_iter: int = 1000,
) -> FixedPointResult:
    """Plain power iteration of the channel until the Frobenius step-change < tol."""
    rho = rho0
    for k in range(1, max_iter + 1):
        nxt = apply_channel(channel, rho)
        step = float(np.linalg.norm(nxt.mat - rho.mat))
        rho = nxt
        if step < tol:
            return FixedPointResult(rho, k, True)
    return FixedPointResult(rho, max_iter, False)


# ---------------------------------------------------------------------------
# Random instances (tests and the verify suite)
# ---------------------------------------------------------------------------

def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(dim: int, rng: np.random.Generator, space: HilbertSpace | None = None) -> DensityOperator:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    m /= np.trace(m).real
    return DensityOperator(space or HilbertSpace("fock", dim), (m + m.conj().T) / 2)


def random_channel(
    dim: int, n_ops: int, rng: np.random.Generator, space: HilbertSpace | None = None
) -> KrausChannel:
    """Random channel from a Haar unitary on system ⊗ ancilla (exact partition)."""
    space = space or HilbertSpace("fock", dim)
    u = haar_unitary(dim * n_ops, rng).reshape(dim, n_ops, dim, n_ops)
    # Kraus operators from the ancilla started in its first basis state.
    ops = tuple(
        Operator(space, u[:, k, :, 0]) for k in range(n_ops)
    )
    return KrausChannel(ops, tolerance=1e-9)
