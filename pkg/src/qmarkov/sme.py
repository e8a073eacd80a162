"""Continuous-time dynamics: Lindblad generator, diffusive and jump-diffusive
stochastic master equations, Belavkin filtering, and steady-state oracles.

The integrator is the positivity-preserving Euler-Milstein form: one step is

    rho' ∝ M rho M† + sum_nu (1 - eta_nu) L_nu rho L_nu† dt,
    M = I - dt (iH + 1/2 sum L†L) + sum_nu sqrt(eta_nu) dy_nu L_nu
        + sum_nu (eta_nu / 2)(dW_nu^2 - dt) L_nu^2,

a sum of positive terms divided by its trace, so rho stays a density
operator at every step.  hbar = 1 throughout; Hamiltonians are in angular
frequency units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    DimensionError,
    InvalidModelError,
    InvalidStateError,
    StepSizeError,
)
from .fock import DensityOperator, Operator, coherent_state, fock_space, ladder_ops, parity_op
from .trajectories import SeedPolicy

HERMITICITY_TOL = 1e-12


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusiveSMEModel:
    """Hamiltonian plus decoherence channels (L_nu, eta_nu), eta in [0, 1].

    Channels with eta = 0 are unmeasured: they contribute dissipation but no
    measurement back-action or record.
    """

    hamiltonian: Operator
    channels: tuple[tuple[Operator, float], ...]

    def __post_init__(self):
        h = self.hamiltonian
        if np.max(np.abs(h.mat - h.mat.conj().T)) > HERMITICITY_TOL:
            raise InvalidModelError("Hamiltonian is not Hermitian within 1e-12")
        chans = tuple((op, float(eta)) for op, eta in self.channels)
        for op, eta in chans:
            if op.space != h.space:
                raise DimensionError("channel operators must share the model space")
            if not 0.0 <= eta <= 1.0:
                raise InvalidModelError(f"efficiency {eta} outside [0, 1]")
        object.__setattr__(self, "channels", chans)

    @property
    def space(self):
        return self.hamiltonian.space

    @cached_property
    def _ls(self) -> list[np.ndarray]:
        return [op.mat for op, _ in self.channels]

    @cached_property
    def _etas(self) -> np.ndarray:
        return np.array([eta for _, eta in self.channels])

    @cached_property
    def _drift(self) -> np.ndarray:
        # -iH - (1/2) sum L†L over every channel.
        out = -1j * self.hamiltonian.mat.astype(complex)
        for l in self._ls:
            out = out - 0.5 * (l.conj().T @ l)
        return out

    @cached_property
    def _lsq(self) -> list[np.ndarray]:
        return [l @ l for l in self._ls]


@dataclass(frozen=True)
class JumpDiffusiveSMEModel:
    """Diffusive base plus Poisson counters: jump ops V_mu, dark rates
    theta_mu >= 0, and crosstalk matrix eta_bar[mu, mu'] with column sums <= 1."""

    base: DiffusiveSMEModel
    jumps: tuple[tuple[Operator, float], ...]
    crosstalk: np.ndarray

    def __post_init__(self):
        jumps = tuple((op, float(th)) for op, th in self.jumps)
        for op, th in jumps:
            if op.space != self.base.space:
                raise DimensionError("jump operators must share the model space")
            if th < 0:
                raise InvalidModelError(f"dark rate {th} must be >= 0")
        xt = np.array(self.crosstalk, dtype=float)
        n = len(jumps)
        if xt.shape != (n, n):
            raise DimensionError(f"crosstalk must be {n}x{n}, got {xt.shape}")
        if np.any(xt < 0):
            raise InvalidModelError("crosstalk entries must be non-negative")
        cols = xt.sum(axis=0)
        if np.any(cols > 1.0 + 1e-12):
            raise InvalidModelError("crosstalk column sums must be <= 1")
        xt.setflags(write=False)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "crosstalk", xt)

    @property
    def space(self):
        return self.base.space

    @cached_property
    def _vs(self) -> list[np.ndarray]:
        return [op.mat for op, _ in self.jumps]

    @cached_property
    def _thetas(self) -> np.ndarray:
        return np.array([th for _, th in self.jumps])

    @cached_property
    def _col_eff(self) -> np.ndarray:
        # eta_bar_{mu'} = sum_mu eta_bar[mu, mu']: total detection efficiency
        # of jumps produced by V_{mu'}.
        return self.crosstalk.sum(axis=0)

    @cached_property
    def _drift(self) -> np.ndarray:
        out = self.base._drift.copy()
        for v in self._vs:
            out -= 0.5 * (v.conj().T @ v)
        return out


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size, horizon, optional snapshot stride and per-trajectory seeding."""

    dt: float
    horizon: float
    snapshot_stride: int = 0
    seeds: SeedPolicy | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.dt > self.horizon:
            raise InvalidModelError(f"need 0 < dt <= horizon, got dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

def _dissipator(l: np.ndarray, rho: np.ndarray) -> np.ndarray:
    anti = l.conj().T @ l
    return l @ rho @ l.conj().T - 0.5 * (anti @ rho + rho @ anti)


def lindblad_rhs(model, rho: DensityOperator) -> Operator:
    """-i[H, rho] + sum_nu D[L_nu](rho) (+ sum_mu D[V_mu](rho) for jump models)."""
    base = model.base if isinstance(model, JumpDiffusiveSMEModel) else model
    h = base.hamiltonian.mat
    out = -1j * (h @ rho.mat - rho.mat @ h)
    for l in base._ls:
        out = out + _dissipator(l, rho.mat)
    if isinstance(model, JumpDiffusiveSMEModel):
        for v in model._vs:
            out = out + _dissipator(v, rho.mat)
    return Operator(rho.space, out)


# ---------------------------------------------------------------------------
# Positivity-preserving steps
# ---------------------------------------------------------------------------

def _measurement_means(model: DiffusiveSMEModel, rho: np.ndarray) -> np.ndarray:
    return np.array(
        [np.trace((l + l.conj().T) @ rho).real for l in model._ls]
    )


def _step_matrix(
    model: DiffusiveSMEModel,
    drift: np.ndarray,
    rho: np.ndarray,
    dt: float,
    dw: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """(M, dy): the one-step matrix and the signals dy = sqrt(eta) m dt + dW."""
    means = _measurement_means(model, rho)
    roots = np.sqrt(model._etas)
    dy = roots * means * dt + dw
    m = np.eye(rho.shape[0], dtype=complex) + dt * drift
    for l, lsq, eta, root, dy_nu, dw_nu in zip(
        model._ls, model._lsq, model._etas, roots, dy, dw
    ):
        if eta == 0.0:
            continue
        m = m + (root * dy_nu) * l + (0.5 * eta * (dw_nu**2 - dt)) * lsq
    return m, dy


def _normalize(out: np.ndarray, space) -> DensityOperator:
    out = (out + out.conj().T) / 2.0
    tr = np.trace(out).real
    if tr <= 0:
        raise InvalidStateError(f"step produced non-positive trace {tr:.3e}")
    return DensityOperator(space, out / tr)


def euler_milstein_step(
    model: DiffusiveSMEModel,
    rho: DensityOperator,
    dt: float,
    dw: float | Sequence[float],
) -> DensityOperator:
    """One positivity-preserving step driven by Wiener increments dw (one per channel)."""
    if dt <= 0:
        raise InvalidModelError("dt must be > 0")
    dw = np.broadcast_to(np.atleast_1d(np.asarray(dw, dtype=float)), (len(model.channels),))
    m, _ = _step_matrix(model, model._drift, rho.mat, dt, dw)
    out = m @ rho.mat @ m.conj().T
    for l, eta in zip(model._ls, model._etas):
        out = out + (1.0 - eta) * dt * (l @ rho.mat @ l.conj().T)
    return _normalize(out, rho.space)


def belavkin_filter_step(
    model: DiffusiveSMEModel,
    rho_hat: DensityOperator,
    dy: float,
    dt: float,
) -> DensityOperator:
    """Filter step for a single measured channel, driven by the innovation
    dy - sqrt(eta) tr((L + L†) rho_hat) dt in place of the Wiener increment."""
    measured = [i for i, (_, eta) in enumerate(model.channels) if eta > 0.0]
    if len(measured) != 1:
        raise InvalidModelError("the filter step expects exactly one measured channel")
    idx = measured[0]
    l, eta = model._ls[idx], model._etas[idx]
    mean = np.trace((l + l.conj().T) @ rho_hat.mat).real
    innovation = dy - math.sqrt(eta) * mean * dt
    dw = np.zeros(len(model.channels))
    dw[idx] = innovation
    return euler_milstein_step(model, rho_hat, dt, dw)


# ---------------------------------------------------------------------------
# Trajectory simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuousRecord:
    """One integrator step: time, measured signals, jump counts, diagnostics."""

    time: float
    dy: np.ndarray
    dn: np.ndarray
    populations: np.ndarray
    state: DensityOperator | None = None


def continuous_header(n_dy: int, n_dn: int, dim: int) -> str:
    cols = ["time"]
    cols += [f"dy{i}" for i in range(n_dy)]
    cols += [f"dN{i}" for i in range(n_dn)]
    cols += [f"p{n}" for n in range(dim)]
    return "# fields: " + " ".join(cols)


def continuous_record_line(rec: ContinuousRecord) -> str:
    parts = [repr(float(rec.time))]
    parts += [repr(float(v)) for v in rec.dy]
    parts += [str(int(v)) for v in rec.dn]
    parts += [repr(float(p)) for p in rec.populations]
    return " ".join(parts)


def write_continuous_records(records: Sequence[ContinuousRecord], path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        first = records[0]
        fh.write(
            continuous_header(first.dy.size, first.dn.size, first.populations.size)
            + "\n"
        )
        for rec in records:
            fh.write(continuous_record_line(rec) + "\n")


def simulate_diffusive(
    model: DiffusiveSMEModel,
    rho0: DensityOperator,
    cfg: IntegratorConfig,
    rng: np.random.Generator,
) -> list[ContinuousRecord]:
    """Sample one diffusive trajectory, recording dy_nu per measured channel."""
    rho = rho0
    records = []
    sqrt_dt = math.sqrt(cfg.dt)
    n_chan = len(model.channels)
    for k in range(cfg.n_steps):
        dw = rng.normal(0.0, sqrt_dt, n_chan)
        means = _measurement_means(model, rho.mat)
        dy = np.sqrt(model._etas) * means * cfg.dt + dw
        try:
            rho = euler_milstein_step(model, rho, cfg.dt, dw)
        except InvalidStateError as exc:
            raise InvalidStateError(
                f"invariant violation at t = {(k + 1) * cfg.dt:.6f}: {exc}"
            ) from exc
        take = cfg.snapshot_stride and (k + 1) % cfg.snapshot_stride == 0
        records.append(
            ContinuousRecord(
                (k + 1) * cfg.dt,
                dy,
                np.zeros(0, dtype=int),
                rho.populations(),
                state=rho if take else None,
            )
        )
    return records


def simulate_jump(
    model: JumpDiffusiveSMEModel,
    rho0: DensityOperator,
    cfg: IntegratorConfig,
    rng: np.random.Generator,
) -> list[ContinuousRecord]:
    """Sample one jump-diffusive trajectory.

    Per step the Gaussian increments are drawn first; then the jump
    configuration (no jump, or a single jump of label mu) from one uniform.
    Multi-jump configurations carry O(dt^2) probability and are dropped.
    """
    base = model.base
    rho = rho0
    records = []
    sqrt_dt = math.sqrt(cfg.dt)
    n_chan = len(base.channels)
    n_jump = len(model.jumps)
    for k in range(cfg.n_steps):
        dw = rng.normal(0.0, sqrt_dt, n_chan)
        means = _measurement_means(base, rho.mat)
        dy = np.sqrt(base._etas) * means * cfg.dt + dw
        dn = np.zeros(n_jump, dtype=int)

        work = rho.mat
        if n_jump:
            v_weights = np.array(
                [np.trace(v @ rho.mat @ v.conj().T).real for v in model._vs]
            )
            rates = model._thetas + model.crosstalk @ v_weights
            p_no_jump = 1.0 - float(rates.sum()) * cfg.dt
            if not 0.0 < p_no_jump <= 1.0:
                raise StepSizeError(
                    f"no-jump probability {p_no_jump:.6f} outside (0, 1]; reduce dt"
                )
            u = rng.random()
            if u >= p_no_jump:
                edges = p_no_jump + np.cumsum(rates * cfg.dt)
                label = int(np.searchsorted(edges, u, side="left"))
                label = min(label, n_jump - 1)
                dn[label] = 1
                jumped = model._thetas[label] * rho.mat
                for w, v in zip(model.crosstalk[label], model._vs):
                    if w:
                        jumped = jumped + w * (v @ rho.mat @ v.conj().T)
                work = jumped

        m, _ = _step_matrix(base, model._drift, rho.mat, cfg.dt, dw)
        out = m @ work @ m.conj().T
        for l, eta in zip(base._ls, base._etas):
            out = out + (1.0 - eta) * cfg.dt * (l @ work @ l.conj().T)
        for v, col_eff in zip(model._vs, model._col_eff):
            out = out + (1.0 - col_eff) * cfg.dt * (v @ work @ v.conj().T)
        rho = _normalize(out, rho.space)

        take = cfg.snapshot_stride and (k + 1) % cfg.snapshot_stride == 0
        records.append(
            ContinuousRecord(
                (k + 1) * cfg.dt, dy, dn, rho.populations(), state=rho if take else None
            )
        )
    return records


# ---------------------------------------------------------------------------
# Deterministic reference (oracle for weak-convergence checks)
# ---------------------------------------------------------------------------

def rk4_lindblad(
    model, rho0: DensityOperator, horizon: float, n_steps: int
) -> DensityOperator:
    """Classic fourth-order integration of the Lindblad equation."""
    dt = horizon / n_steps
    rho = rho0.mat.copy()
    space = rho0.space

    def rhs(m: np.ndarray) -> np.ndarray:
        wrapped = DensityOperator.__new__(DensityOperator)
        object.__setattr__(wrapped, "space", space)
        object.__setattr__(wrapped, "mat", m)
        return lindblad_rhs(model, wrapped).mat

    for _ in range(n_steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    rho = (rho + rho.conj().T) / 2.0
    return DensityOperator(space, rho / np.trace(rho).real)


# ---------------------------------------------------------------------------
# Model zoo
# ---------------------------------------------------------------------------

def damped_oscillator_model(
    drive: float, kappa: float, n_max: int, efficiency: float = 0.0
) -> DiffusiveSMEModel:
    """Resonantly driven, damped cavity: H = i u (a† - a), L = sqrt(kappa) a.

    Steady state of the averaged dynamics: the coherent state of amplitude
    2 u / kappa.
    """
    a, adag, _ = ladder_ops(n_max)
    h = Operator(a.space, 1j * drive * (adag.mat - a.mat))
    return DiffusiveSMEModel(h, ((Operator(a.space, math.sqrt(kappa) * a.mat), efficiency),))


def catkerr_model(u: float, kappa: float, kappa_c: float, n_max: int) -> DiffusiveSMEModel:
    """Two-channel cat pump: plain photon loss plus parity-conjugated loss."""
    a, adag, _ = ladder_ops(n_max)
    h = Operator(a.space, 1j * u * (adag.mat - a.mat))
    par = parity_op(n_max)
    return DiffusiveSMEModel(
        h,
        (
            (Operator(a.space, math.sqrt(kappa) * a.mat), 0.0),
            (Operator(a.space, math.sqrt(kappa_c) * (par.mat @ a.mat)), 0.0),
        ),
    )


def cat_qubit_model(u: float, kappa: float, r: int, n_max: int) -> DiffusiveSMEModel:
    """r-photon drive and dissipation: H = i u ((a†)^r - a^r), L = sqrt(kappa) a^r.

    Every coherent state of amplitude (2u/kappa)^(1/r) e^{2 i pi s / r} is
    steady, as is any density operator supported on their span.
    """
    if r < 1:
        raise InvalidModelError("photon order r must be >= 1")
    a, adag, _ = ladder_ops(n_max)
    ar = np.linalg.matrix_power(a.mat, r)
    adr = np.linalg.matrix_power(adag.mat, r)
    h = Operator(a.space, 1j * u * (adr - ar))
    return DiffusiveSMEModel(h, ((Operator(a.space, math.sqrt(kappa) * ar), 0.0),))


# ---------------------------------------------------------------------------
# Coherent-feedback steady state (quadrature oracle)
# ---------------------------------------------------------------------------

def catkerr_steady_state(
    u: float, kappa: float, kappa_c: float, n_max: int, nodes: int = 400
) -> DensityOperator:
    """Steady state of the two-channel cat pump from its P distribution.

    rho = integral of mu(x) |x><x| over x in (-A, A), A = 2u/(kappa+kappa_c),
    with weight mu(x) ∝ ((A^2 - x^2)^{A^2} e^{x^2})^{r_c} / (A - x) and
    r_c = 2 kappa_c / (kappa + kappa_c).  The substitution x = A tanh(s)
    absorbs the endpoint factor; Gauss-Legendre nodes never touch x = ±A.
    """
    if min(u, kappa, kappa_c) <= 0:
        raise InvalidModelError("u, kappa, kappa_c must be > 0")
    amp = 2.0 * u / (kappa + kappa_c)
    r_c = 2.0 * kappa_c / (kappa + kappa_c)
    space = fock_space(n_max)
    # Tail of the transformed integrand decays like exp(-2 r_c A^2 s).
    span = max(10.0, 18.0 / (r_c * amp * amp))
    t, w = np.polynomial.legendre.leggauss(nodes)
    s = span * t
    x = amp * np.tanh(s)
    sech2 = 1.0 / np.cosh(s) ** 2
    log_density = r_c * (amp * amp * np.log(amp * amp * sech2) + x * x)
    weights = span * w * np.exp(log_density) * (1.0 + np.tanh(s))

    out = np.zeros((space.dim, space.dim), dtype=complex)
    for wi, xi in zip(weights, x):
        vec = coherent_state(float(xi), n_max).vec
        out += wi * np.outer(vec, vec.conj())
    out = (out + out.conj().T) / 2.0
    return DensityOperator(space, out / np.trace(out).real)
