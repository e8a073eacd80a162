"""Exception types shared across the toolkit."""


class DimensionError(ValueError):
    """Hilbert-space dimensions are invalid or do not match."""


class TruncationOverflowError(ValueError):
    """An amplitude violates the truncation guard band |alpha|^2 <= n_max / 4."""


class InvalidStateError(ValueError):
    """A state fails its invariants (norm, Hermiticity, trace, positivity)."""


class InvalidModelError(ValueError):
    """A channel, imperfection matrix, or model violates its invariants."""


class InvalidPropagatorError(ValueError):
    """A propagator is not unitary within tolerance on its guarded subspace."""


class DegenerateOutcomeError(RuntimeError):
    """All outcome probabilities vanish; the state cannot be sampled."""


class IncompatibleOutcomeError(RuntimeError):
    """The filter assigns ~zero probability to the observed outcome."""


class StepSizeError(ValueError):
    """The integration step is too large for the jump outcome probabilities."""


class ConfigError(ValueError):
    """Configuration parsing or validation failed; carries every problem found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
