"""Discrete-time quantum Markov chain sampling, filtering, and the closed loop.

The hidden state rho evolves by the transition rule

    rho' = sum_mu eta[y, mu] M_mu rho M_mu† / trace,   y drawn with
    P_y(rho) = tr(sum_mu eta[y, mu] M_mu rho M_mu†),

and the filter runs the identical recursion driven by the observed y.
Trajectories are reproducible jobs keyed by (master seed, index).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .channels import ImperfectionMatrix, KrausChannel
from .errors import (
    DegenerateOutcomeError,
    DimensionError,
    IncompatibleOutcomeError,
    InvalidModelError,
)
from .fock import DensityOperator

PROB_CLIP = 1e-12
PROB_SUM_TOL = 1e-10
DEGENERATE_TRACE = 1e-14


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkovModel:
    """Kraus channel plus the left-stochastic detector imperfection matrix."""

    channel: KrausChannel
    imperfection: ImperfectionMatrix

    def __post_init__(self):
        if self.imperfection.n_outcomes != len(self.channel):
            raise InvalidModelError(
                f"imperfection has {self.imperfection.n_outcomes} columns for "
                f"{len(self.channel)} Kraus operators"
            )

    @property
    def n_readings(self) -> int:
        return self.imperfection.n_readings


@dataclass(frozen=True)
class ControlledMarkovModel:
    """Finite control set with one Kraus channel per control value.

    Channels are built eagerly so every control's partition of unity is
    validated up front; ``u_nominal`` seeds the delay buffer of the loop.
    """

    controls: tuple[float, ...]
    channel_factory: Callable[[float], KrausChannel]
    imperfection: ImperfectionMatrix
    u_nominal: float = 0.0
    _channels: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.controls:
            raise InvalidModelError("control set must be non-empty")
        if self.u_nominal not in self.controls:
            raise InvalidModelError("nominal control must belong to the control set")
        for u in self.controls:
            ch = self.channel_factory(u)
            if self.imperfection.n_outcomes != len(ch):
                raise InvalidModelError("imperfection shape incompatible with channel")
            self._channels[u] = ch

    def channel(self, u: float) -> KrausChannel:
        try:
            return self._channels[u]
        except KeyError:
            raise InvalidModelError(f"control {u} is not in the control set") from None

    def model_for(self, u: float) -> MarkovModel:
        return MarkovModel(self.channel(u), self.imperfection)


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class SeedPolicy:
    """Derives one independent, reproducible stream per trajectory index."""

    master_seed: int

    def stream_seed(self, index: int) -> int:
        return splitmix64((self.master_seed + index) & _MASK64)

    def stream(self, index: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.stream_seed(index)))


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    """One step of a sampled trajectory with its diagnostics."""

    step: int
    outcome: int
    control: float
    fidelity: float
    lyapunov: float
    populations: np.ndarray
    state: DensityOperator | None = None
    filter_state: DensityOperator | None = None


def record_header(dim: int) -> str:
    pops = " ".join(f"p{n}" for n in range(dim))
    return f"# fields: step outcome control fidelity lyapunov {pops}"


def record_line(rec: TrajectoryRecord) -> str:
    pops = " ".join(repr(float(p)) for p in rec.populations)
    return (
        f"{rec.step} {rec.outcome} {rec.control!r} "
        f"{rec.fidelity!r} {rec.lyapunov!r} {pops}"
    )


def write_records(records: Sequence[TrajectoryRecord], path) -> None:
    """Line-delimited decimal text with the field set declared in the header."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(record_header(len(records[0].populations)) + "\n")
        for rec in records:
            fh.write(record_line(rec) + "\n")


def read_records(path) -> np.ndarray:
    """Numeric record matrix (one row per step, columns per the header)."""
    return np.loadtxt(path, comments="#", ndmin=2)


# ---------------------------------------------------------------------------
# Transition kernel
# ---------------------------------------------------------------------------

def outcome_probabilities(model: MarkovModel, rho: DensityOperator) -> np.ndarray:
    """P_y(rho) = tr(sum_mu eta[y, mu] M_mu rho M_mu†), clipped to [0, 1]."""
    if model.channel.space != rho.space:
        raise DimensionError("model and state spaces do not match")
    weights = np.array(
        [
            np.sum((op.mat @ rho.mat) * op.mat.conj()).real
            for op in model.channel.operators
        ]
    )
    probs = model.imperfection.entries @ weights
    probs = np.clip(probs, 0.0, 1.0)
    total = probs.sum()
    slack = max(PROB_SUM_TOL, 10.0 * model.channel.tolerance)
    if abs(total - 1.0) > slack:
        raise InvalidModelError(
            f"outcome probabilities sum to {total:.12f}, beyond tolerance {slack:.1e}"
        )
    return probs


def _conditioned_update(
    model: MarkovModel, rho: DensityOperator, reading: int
) -> tuple[np.ndarray, float]:
    eta_row = model.imperfection.entries[reading]
    out = None
    for w, op in zip(eta_row, model.channel.operators):
        if w == 0.0:
            continue
        term = w * (op.mat @ rho.mat @ op.mat.conj().T)
        out = term if out is None else out + term
    if out is None:
        out = np.zeros_like(rho.mat)
    tr = np.trace(out).real
    return out, tr


def sample_step(
    model: MarkovModel, rho: DensityOperator, rng: np.random.Generator
) -> tuple[DensityOperator, int]:
    """Draw a detector reading by inverse CDF and apply the conditioned update."""
    probs = outcome_probabilities(model, rho)
    total = probs.sum()
    if np.all(probs < DEGENERATE_TRACE):
        raise DegenerateOutcomeError("all outcome probabilities below 1e-14")
    u = rng.random() * total
    cdf = np.cumsum(probs)
    reading = int(np.searchsorted(cdf, u, side="left"))
    reading = min(reading, probs.size - 1)
    out, tr = _conditioned_update(model, rho, reading)
    if tr < DEGENERATE_TRACE:
        raise DegenerateOutcomeError(f"conditioned trace {tr:.3e} below 1e-14")
    out = (out + out.conj().T) / (2.0 * tr)
    return DensityOperator(rho.space, out), reading


def filter_step(
    model: MarkovModel, rho_hat: DensityOperator, reading: int
) -> DensityOperator:
    """Same algebraic update as sample_step, driven by an external reading."""
    if not 0 <= reading < model.n_readings:
        raise DimensionError(f"reading {reading} outside 0..{model.n_readings - 1}")
    out, tr = _conditioned_update(model, rho_hat, reading)
    if tr < DEGENERATE_TRACE:
        raise IncompatibleOutcomeError(
            f"filter assigns probability {tr:.3e} to reading {reading}"
        )
    out = (out + out.conj().T) / (2.0 * tr)
    return DensityOperator(rho_hat.space, out)


# ---------------------------------------------------------------------------
# Loops
# ---------------------------------------------------------------------------

def _diagnose(
    rho: DensityOperator,
    fidelity_fn: Callable[[DensityOperator], float] | None,
    lyapunov_fn: Callable[[DensityOperator], float] | None,
) -> tuple[float, float]:
    fid = float(fidelity_fn(rho)) if fidelity_fn is not None else math.nan
    lyap = float(lyapunov_fn(rho)) if lyapunov_fn is not None else math.nan
    return fid, lyap


def run_chain(
    model: MarkovModel,
    rho0: DensityOperator,
    steps: int,
    rng: np.random.Generator,
    fidelity_fn: Callable[[DensityOperator], float] | None = None,
    lyapunov_fn: Callable[[DensityOperator], float] | None = None,
    snapshot_stride: int = 0,
) -> list[TrajectoryRecord]:
    """Open-loop sampling of the Markov chain for a fixed number of steps."""
    rho = rho0
    records = []
    for k in range(steps):
        rho, y = sample_step(model, rho, rng)
        fid, lyap = _diagnose(rho, fidelity_fn, lyapunov_fn)
        snap = rho if snapshot_stride and (k + 1) % snapshot_stride == 0 else None
        records.append(
            TrajectoryRecord(k, y, 0.0, fid, lyap, rho.populations(), state=snap)
        )
    return records


def _predict_through_pending(
    model: ControlledMarkovModel, rho_hat: DensityOperator, pending: Iterable[float]
) -> DensityOperator:
    # Expected filter state after the queued controls are applied: unknown
    # future readings are averaged out, i.e. each pending step contributes
    # the unconditioned Kraus map of its channel.
    out = rho_hat.mat
    for u in pending:
        ops = model.channel(u).operators
        out = sum(op.mat @ out @ op.mat.conj().T for op in ops)
    out = (out + out.conj().T) / 2.0
    return DensityOperator(rho_hat.space, out / np.trace(out).real)


def run_closed_loop(
    model: ControlledMarkovModel,
    feedback: Callable[[DensityOperator], float],
    rho0: DensityOperator,
    rho_hat0: DensityOperator,
    steps: int,
    delay: int = 0,
    rng: np.random.Generator | None = None,
    u_init: float | None = None,
    fidelity_fn: Callable[[DensityOperator], float] | None = None,
    lyapunov_fn: Callable[[DensityOperator], float] | None = None,
    snapshot_stride: int = 0,
) -> list[TrajectoryRecord]:
    """Observer/controller loop with a control pipeline of length ``delay``.

    The control applied at step k was computed ``delay`` steps earlier, from
    the filter state available then (readings through k - delay - 1)
    propagated through the controls already queued in the pipeline (their
    readings averaged out).  The first ``delay`` steps apply ``u_init``
    (default: the model's nominal control).  The true state evolves under
    the channel for u_k with a sampled reading; the filter evolves under the
    same control and the observed reading.  With delay = 0 this reduces to
    u_k = feedback(rho_hat_k).
    """
    if delay < 0:
        raise InvalidModelError(f"delay must be >= 0, got {delay}")
    if rng is None:
        raise InvalidModelError("run_closed_loop needs an explicit rng stream")
    u_init = model.u_nominal if u_init is None else u_init

    rho, rho_hat = rho0, rho_hat0
    pending = deque([u_init] * delay)
    records = []
    for k in range(steps):
        outlook = (
            rho_hat if not pending else _predict_through_pending(model, rho_hat, pending)
        )
        pending.append(float(feedback(outlook)))
        u_k = pending.popleft()
        step_model = model.model_for(u_k)
        rho, y = sample_step(step_model, rho, rng)
        rho_hat = filter_step(step_model, rho_hat, y)
        fid, lyap = _diagnose(rho, fidelity_fn, lyapunov_fn)
        take = snapshot_stride and (k + 1) % snapshot_stride == 0
        records.append(
            TrajectoryRecord(
                k,
                y,
                u_k,
                fid,
                lyap,
                rho.populations(),
                state=rho if take else None,
                filter_state=rho_hat if take else None,
            )
        )
    return records


def expected_update(
    model: MarkovModel, rho: DensityOperator
) -> list[tuple[float, DensityOperator]]:
    """All (probability, conditioned state) pairs: the exact one-step expectation.

    Readings with probability below the degeneracy threshold are skipped.
    """
    probs = outcome_probabilities(model, rho)
    branches = []
    for reading, p in enumerate(probs):
        if p < DEGENERATE_TRACE:
            continue
        out, tr = _conditioned_update(model, rho, reading)
        out = (out + out.conj().T) / (2.0 * tr)
        branches.append((float(p), DensityOperator(rho.space, out)))
    return branches
