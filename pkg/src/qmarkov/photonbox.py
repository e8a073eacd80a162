"""Photon-box case study: QND measurement, Lyapunov feedback, reservoir cats.

A dispersive probe realizes the quantum non-demolition measurement pair

    M_g = cos((phi0 N + phi_r) / 2),   M_e = sin((phi0 N + phi_r) / 2),

diagonal in the photon-number basis, so every Fock projector is a steady
state and diagonal expectations tr(g(N) rho) are martingales.  Feedback
stabilizes a chosen Fock state by displacing the cavity after each
measurement, steering a strict Lyapunov function downhill; reservoir
engineering instead pumps the cavity toward a phase-cat without any
measurement record.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .channels import ImperfectionMatrix, KrausChannel
from .errors import IncompatibleOutcomeError, InvalidModelError
from .fock import (
    DensityOperator,
    Operator,
    StateVector,
    coherent_state,
    displacement,
    fock_space,
    ladder_ops,
)
from .trajectories import ControlledMarkovModel, MarkovModel

DEGENERATE_TRACE = 1e-14


# ---------------------------------------------------------------------------
# Dispersive QND measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DispersiveParams:
    """Probe phases phi0 (per photon) and phi_r (reference) on dimension n_max+1.

    Warns when n -> cos^2((phi0 n + phi_r)/2) is not injective over the
    truncated range: measurement outcomes then cannot distinguish some
    photon numbers.
    """

    phi0: float
    phi_r: float
    n_max: int

    def __post_init__(self):
        if self.n_max < 1:
            raise InvalidModelError("dispersive params need n_max >= 1")
        c2 = np.cos(self.angles()) ** 2
        gaps = np.abs(c2[:, None] - c2[None, :])
        np.fill_diagonal(gaps, 1.0)
        if gaps.min() < 1e-9:
            warnings.warn(
                "cos^2((phi0 n + phi_r)/2) is not injective on 0..n_max; "
                "QND outcomes cannot separate all photon numbers",
                stacklevel=2,
            )

    def angles(self) -> np.ndarray:
        n = np.arange(self.n_max + 1, dtype=float)
        return (self.phi0 * n + self.phi_r) / 2.0


def default_dispersive_params(n_max: int = 15) -> DispersiveParams:
    # phi0 ~ irrational multiple of pi; phi_r chosen so cos^2 stays injective.
    return DispersiveParams(phi0=0.61, phi_r=0.4, n_max=n_max)


def qnd_ops(params: DispersiveParams) -> tuple[Operator, Operator]:
    """Diagonal measurement pair (M_g, M_e) = (cos, sin) of (phi0 N + phi_r)/2."""
    space = fock_space(params.n_max)
    ang = params.angles()
    return (
        Operator(space, np.diag(np.cos(ang)).astype(complex)),
        Operator(space, np.diag(np.sin(ang)).astype(complex)),
    )


def qnd_channel(params: DispersiveParams) -> KrausChannel:
    return KrausChannel(qnd_ops(params), tolerance=1e-12)


def qnd_model(
    params: DispersiveParams, errors: "DetectionErrorParams | None" = None
) -> MarkovModel:
    """Markov model of the probe with (optionally) imperfect detection."""
    eta = detection_matrix(errors) if errors else ImperfectionMatrix.perfect(2)
    return MarkovModel(qnd_channel(params), eta)


# ---------------------------------------------------------------------------
# Detection errors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionErrorParams:
    """eta_g = P(read e | outcome g), eta_e = P(read g | outcome e)."""

    eta_g: float
    eta_e: float

    def __post_init__(self):
        for name, v in (("eta_g", self.eta_g), ("eta_e", self.eta_e)):
            if not 0.0 <= v <= 1.0:
                raise InvalidModelError(f"{name} = {v} outside [0, 1]")


def detection_matrix(errors: DetectionErrorParams) -> ImperfectionMatrix:
    return ImperfectionMatrix(
        np.array(
            [
                [1.0 - errors.eta_g, errors.eta_e],
                [errors.eta_g, 1.0 - errors.eta_e],
            ]
        )
    )


def error_update(
    rho: DensityOperator,
    reading: int,
    params: DispersiveParams,
    errors: DetectionErrorParams,
) -> DensityOperator:
    """Bayes update conditioned on a possibly erroneous detector reading.

    reading 0 (g): ((1-eta_g) M_g rho M_g† + eta_e M_e rho M_e†) / trace;
    reading 1 (e): (eta_g M_g rho M_g† + (1-eta_e) M_e rho M_e†) / trace.
    """
    mg, me = qnd_ops(params)
    g_term = mg.mat @ rho.mat @ mg.mat.conj().T
    e_term = me.mat @ rho.mat @ me.mat.conj().T
    if reading == 0:
        out = (1.0 - errors.eta_g) * g_term + errors.eta_e * e_term
    elif reading == 1:
        out = errors.eta_g * g_term + (1.0 - errors.eta_e) * e_term
    else:
        raise InvalidModelError(f"reading must be 0 (g) or 1 (e), got {reading}")
    tr = np.trace(out).real
    if tr < DEGENERATE_TRACE:
        raise IncompatibleOutcomeError(f"update trace {tr:.3e} below 1e-14")
    out = (out + out.conj().T) / (2.0 * tr)
    return DensityOperator(rho.space, out)


# ---------------------------------------------------------------------------
# Lyapunov feedback
# ---------------------------------------------------------------------------

def sigma_weights(n_target: int, n_max: int) -> np.ndarray:
    """Weights vanishing at the target and growing away from it.

    sigma_0 = 1/4 + sum_{v=1..n_target} (1/v - 1/v^2); for 0 < n < n_target,
    sigma_n = sum_{v=n+1..n_target} (1/v - 1/v^2); sigma_{n_target} = 0; above
    the target, sigma_n = sum_{v=n_target+1..n} (1/v + 1/v^2).
    """
    if not 0 <= n_target <= n_max:
        raise InvalidModelError(f"target {n_target} outside 0..{n_max}")
    sig = np.zeros(n_max + 1)
    for n in range(n_max + 1):
        if n == n_target:
            continue
        if n < n_target:
            sig[n] = sum(1.0 / v - 1.0 / v**2 for v in range(n + 1, n_target + 1))
            if n == 0:
                sig[n] += 0.25
        else:
            sig[n] = sum(1.0 / v + 1.0 / v**2 for v in range(n_target + 1, n + 1))
    return sig


@dataclass(frozen=True)
class LyapunovParams:
    """Target Fock level, mixing weight, control bound, grid size, and weights."""

    n_target: int
    epsilon: float
    u_bound: float
    grid_count: int = 41
    sigma: tuple[float, ...] = ()

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvalidModelError("epsilon must be > 0")
        if self.u_bound < 0:
            raise InvalidModelError("control bound must be >= 0")
        if self.grid_count < 1 or self.grid_count % 2 == 0:
            raise InvalidModelError("control grid count must be a positive odd number")
        sig = np.asarray(self.sigma, dtype=float)
        if sig.size <= self.n_target:
            raise InvalidModelError("sigma weights must cover the target level")
        if sig[self.n_target] != 0.0 or np.any(sig < 0):
            raise InvalidModelError("sigma must vanish at the target and be >= 0")
        left, right = sig[: self.n_target + 1], sig[self.n_target :]
        if np.any(np.diff(left) >= 0) and left.size > 1:
            raise InvalidModelError("sigma must strictly decrease up to the target")
        if np.any(np.diff(right) <= 0) and right.size > 1:
            raise InvalidModelError("sigma must strictly increase above the target")


def lyapunov_params(
    n_target: int,
    n_max: int,
    epsilon: float = 0.1,
    u_bound: float = 1.0,
    grid_count: int = 41,
) -> LyapunovParams:
    return LyapunovParams(
        n_target, epsilon, u_bound, grid_count, tuple(sigma_weights(n_target, n_max))
    )


def control_grid(params: LyapunovParams) -> np.ndarray:
    """Uniform symmetric grid on [-u_bound, u_bound] containing exact 0."""
    if params.grid_count == 1 or params.u_bound == 0.0:
        return np.zeros(1)
    half = params.grid_count // 2
    pos = np.linspace(0.0, params.u_bound, half + 1)[1:]
    return np.concatenate([-pos[::-1], [0.0], pos])


def lyapunov_value(rho: DensityOperator, params: LyapunovParams) -> float:
    """V(rho) = sum_n (-epsilon <n|rho|n>^2 + sigma_n <n|rho|n>)."""
    pops = rho.populations()
    sig = np.asarray(params.sigma)
    return float(np.sum(-params.epsilon * pops**2 + sig[: pops.size] * pops))


class LyapunovController:
    """Grid argmin of the Lyapunov expectation after the averaged QND step.

    Minimizes V(D_u (M_g rho M_g† + M_e rho M_e†) D_u†) over the control
    grid; ties break toward the smallest |u|, then toward negative u.
    """

    def __init__(self, params: LyapunovParams, qnd: DispersiveParams):
        if len(params.sigma) != qnd.n_max + 1:
            raise InvalidModelError("sigma weights must match the truncated dimension")
        self.params = params
        self.qnd = qnd
        self.grid = control_grid(params)
        mg, me = qnd_ops(qnd)
        self._mg, self._me = mg.mat, me.mat
        dim = qnd.n_max + 1
        self._disp = np.empty((self.grid.size, dim, dim), dtype=complex)
        for i, u in enumerate(self.grid):
            self._disp[i] = (
                np.eye(dim) if u == 0.0 else displacement(u, qnd.n_max).mat
            )
        self._sigma = np.asarray(params.sigma)
        # Tie order: by |u| then preferring the negative sign.
        self._tie_rank = np.lexsort((self.grid, np.abs(self.grid)))

    def averaged_state(self, rho: DensityOperator) -> np.ndarray:
        return (
            self._mg @ rho.mat @ self._mg.conj().T
            + self._me @ rho.mat @ self._me.conj().T
        )

    def values(self, rho: DensityOperator) -> np.ndarray:
        avg = self.averaged_state(rho)
        vals = np.empty(self.grid.size)
        for i, d in enumerate(self._disp):
            pops = np.einsum("ij,ij->i", d @ avg, d.conj()).real
            vals[i] = np.sum(-self.params.epsilon * pops**2 + self._sigma * pops)
        return vals

    def __call__(self, rho: DensityOperator) -> float:
        vals = self.values(rho)
        ranked = self._tie_rank[np.argsort(vals[self._tie_rank], kind="stable")]
        return float(self.grid[ranked[0]])


@lru_cache(maxsize=8)
def _controller(params: LyapunovParams, qnd: DispersiveParams) -> LyapunovController:
    return LyapunovController(params, qnd)


def feedback(
    rho: DensityOperator, params: LyapunovParams, qnd: DispersiveParams
) -> float:
    """Control minimizing the post-displacement Lyapunov value (see controller)."""
    return _controller(params, qnd)(rho)


def supermartingale_gap(
    rho: DensityOperator, qnd: DispersiveParams
) -> tuple[float, float]:
    """Expected one-step decrease of V(rho) = -sum_n <n|rho|n>^2 under QND sampling.

    Returns (Q, residual) where Q = p_g p_e sum_n (q_g(n) - q_e(n))^2 with
    q_y the conditioned population distributions, and residual is
    |E[V(rho+)] - V(rho) + Q| from the exact two-outcome expectation.
    A branch whose probability falls below 1e-14 is omitted (its limit
    contribution vanishes with the prefactor).
    """
    pops = rho.populations()
    c2 = np.cos(qnd.angles()) ** 2
    s2 = np.sin(qnd.angles()) ** 2
    p_g = float(np.sum(c2 * pops))
    p_e = float(np.sum(s2 * pops))

    value = -float(np.sum(pops**2))
    expect = 0.0
    q_g = np.zeros_like(pops)
    q_e = np.zeros_like(pops)
    if p_g > DEGENERATE_TRACE:
        q_g = c2 * pops / p_g
        expect += p_g * -float(np.sum(q_g**2))
    if p_e > DEGENERATE_TRACE:
        q_e = s2 * pops / p_e
        expect += p_e * -float(np.sum(q_e**2))
    gap = p_g * p_e * float(np.sum((q_g - q_e) ** 2))
    residual = abs(expect - value + gap)
    return gap, residual


def controlled_photonbox_model(
    qnd: DispersiveParams,
    errors: DetectionErrorParams,
    params: LyapunovParams,
) -> ControlledMarkovModel:
    """Post-measurement displacement channels {D_u M_g, D_u M_e} over the grid."""
    mg, me = qnd_ops(qnd)

    def factory(u: float) -> KrausChannel:
        d = displacement(u, qnd.n_max) if u != 0.0 else None
        ops = (
            (mg, me)
            if d is None
            else (Operator(mg.space, d.mat @ mg.mat), Operator(me.space, d.mat @ me.mat))
        )
        return KrausChannel(ops, tolerance=1e-10)

    return ControlledMarkovModel(
        controls=tuple(float(u) for u in control_grid(params)),
        channel_factory=factory,
        imperfection=detection_matrix(errors),
        u_nominal=0.0,
    )


# ---------------------------------------------------------------------------
# Reservoir engineering
# ---------------------------------------------------------------------------

def default_theta(n: int) -> float:
    """(pi/2)(1 - 1/(n+1)): zero at 0, in (0, pi), strictly increasing to pi/2."""
    return (math.pi / 2.0) * (1.0 - 1.0 / (n + 1))


def default_kerr_phase(n: int) -> float:
    """h(n) = pi n^2 / 2, the frame whose removal turns the pump into a cat."""
    return math.pi * n * n / 2.0


@dataclass(frozen=True)
class ReservoirParams:
    """Composite pump: partial excitation u, exchange angle theta(n), frame h(n)."""

    u: float
    n_max: int
    theta: Callable[[int], float] = default_theta
    sign: int = +1
    frame_phase: Callable[[int], float] = default_kerr_phase

    def __post_init__(self):
        if not 0.0 <= self.u < math.pi / 2.0:
            raise InvalidModelError("pulse angle must lie in [0, pi/2)")
        if self.sign not in (+1, -1):
            raise InvalidModelError("sign must be +1 or -1")
        if self.theta(0) != 0.0:
            raise InvalidModelError("theta(0) must vanish")
        for n in range(1, self.n_max + 2):
            t = self.theta(n)
            if not 0.0 < t < math.pi:
                raise InvalidModelError(f"theta({n}) = {t} outside (0, pi)")


def reservoir_ops(params: ReservoirParams) -> tuple[Operator, Operator]:
    """Rotating-frame pump operators.

    M_g = cos(u/2) cos(theta(N)/2) + sign sin(u/2) [sin(theta(N)/2)/sqrt(N)] a†,
    M_e = sin(u/2) cos(theta(N+1)/2) - sign cos(u/2) a [sin(theta(N)/2)/sqrt(N)],
    with the n = 0 entry of the bracketed factor set to its (never reached)
    limit 0.  Completeness holds exactly below the truncation boundary.
    """
    n_max = params.n_max
    a, adag, _ = ladder_ops(n_max)
    th = np.array([params.theta(n) for n in range(n_max + 2)])
    cos_half = np.cos(th / 2.0)
    g = np.zeros(n_max + 1)
    roots = np.sqrt(np.arange(1, n_max + 1, dtype=float))
    g[1:] = np.sin(th[1 : n_max + 1] / 2.0) / roots
    gd = np.diag(g).astype(complex)

    cu, su = math.cos(params.u / 2.0), math.sin(params.u / 2.0)
    m_g = cu * np.diag(cos_half[: n_max + 1]) + params.sign * su * (gd @ adag.mat)
    m_e = su * np.diag(cos_half[1:]) - params.sign * cu * (a.mat @ gd)
    space = fock_space(n_max)
    return Operator(space, m_g), Operator(space, m_e)


def reservoir_channel(params: ReservoirParams) -> KrausChannel:
    """Unread pump channel; completeness guarded below the truncation boundary."""
    return KrausChannel(
        reservoir_ops(params), tolerance=1e-10, guard_dim=params.n_max
    )


def reservoir_frame(rho_rotating: DensityOperator, params: ReservoirParams) -> DensityOperator:
    """Map a rotating-frame state back to the lab frame: e^{-ih(N)} rho e^{+ih(N)}."""
    phases = np.exp(
        -1j * np.array([params.frame_phase(n) for n in range(params.n_max + 1)])
    )
    out = (phases[:, None] * rho_rotating.mat) * phases.conj()[None, :]
    return DensityOperator(rho_rotating.space, out)


def kerr_cat(alpha: float, n_max: int) -> tuple[StateVector, StateVector, float]:
    """Check e^{-i pi N^2/2}|alpha> against (e^{-i pi/4}/sqrt2)(|alpha> + i|-alpha>).

    Returns (lhs, rhs, residual); the identity is exact termwise, so the
    residual is bounded by the truncated Poisson tail.
    """
    base = coherent_state(alpha, n_max)
    flipped = coherent_state(-alpha, n_max)
    n = np.arange(n_max + 1)
    lhs = np.exp(-1j * math.pi * n * n / 2.0) * base.vec
    rhs = (np.exp(-1j * math.pi / 4.0) / math.sqrt(2.0)) * (
        base.vec + 1j * flipped.vec
    )
    residual = float(np.linalg.norm(lhs - rhs))
    space = base.space
    return StateVector(space, lhs), StateVector(space, rhs), residual
