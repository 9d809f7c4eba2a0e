"""Delay-driven interference alignment on the symbol-asynchronous K-user
channel: waveforms, circulant channel models, precoder synthesis, link
simulation, and the experiment driver."""

__version__ = "0.1.0"

from .aligner import (  # noqa: F401
    AlignmentReport,
    Generators,
    PrecoderSet,
    SchemeDims,
    VandermondeProbe,
    alignment_residual,
    build_generators,
    build_precoders,
    full_rank_check,
    scheme_dims,
    vandermonde_probe,
)
from .channel import (  # noqa: F401
    ChannelRealization,
    CirculantLink,
    LinkSet,
    approximation_error,
    build_circulant,
    build_toeplitz,
    channel_links,
    draw_realization,
    noise_covariance,
    phase_model,
    phase_model_error,
    phase_truncation_error,
    spread_delay_realization,
    strong_norm,
    synchronous_realization,
    tx_delay_realization,
    weak_norm,
)
from .errors import (  # noqa: F401
    ConfigError,
    DegenerateChannelError,
    DegenerateMimoError,
    DegenerateReceiverError,
    DimensionError,
    ParameterError,
)
from .linksim import (  # noqa: F401
    Frame,
    LinkSetup,
    MimoResult,
    RunResult,
    apply_channel,
    encode_frame,
    mimo_run,
    rate_sweep,
    zero_force,
)
from .waveform import (  # noqa: F401
    GeneratorSequence,
    Waveform,
    autocorrelation,
    gamma_sequence,
    make_waveform,
)
