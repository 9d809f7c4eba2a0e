"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A constructor argument is outside its admissible range."""


class DimensionError(ValueError):
    """Matrix/sequence sizes are inconsistent (e.g. N < 2u)."""


class DegenerateChannelError(RuntimeError):
    """A link matrix is numerically singular; the trial cannot proceed."""


class DegenerateReceiverError(RuntimeError):
    """The stacked desired/interference basis at a receiver is rank deficient."""


class DegenerateMimoError(RuntimeError):
    """The per-node antenna mixing matrix is numerically singular."""


class ConfigError(ValueError):
    """Experiment configuration failed validation."""
