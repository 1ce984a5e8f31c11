"""Workbench for coding over AWGN channels with passive feedback.

Analytic codecs (SK, GN, PowerBlast) with their closed-form error
expressions, a deterministic parallel Monte Carlo BLER harness, and a
small neural feedback code trained with a built-in reverse-mode autodiff
engine.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402,F401
    ChannelSpec,
    ConfigurationError,
    MessageBlock,
    NumericError,
    PamConstellation,
    RateSpec,
    RngStream,
    UnsupportedConfigurationError,
    awgn,
    bits_to_symbol,
    make_constellation,
    nearest_symbol,
)
from .formulas import (  # noqa: E402,F401
    Variant,
    compose_block_bler,
    effective_snr,
    gn_power_split,
    map_gamma,
    p_final_round,
    p_gn,
    p_gn_phase1,
    p_pam_at_snr,
    p_pb,
    p_sk,
    q_function,
)
from .harness import BlerEstimate, StopRule, estimate_bler, sweep_bler  # noqa: E402,F401
from .codecs import (  # noqa: E402,F401
    FinalRoundDetector,
    GnCodec,
    PbCodec,
    SkCodec,
    UncodedPamCodec,
    get_codec,
)
from .lightcode import (  # noqa: E402,F401
    ArchitectureConfig,
    LightCodeCodec,
    LightCodeModel,
    TrainConfig,
    calibrate,
    load_model,
    save_model,
    train,
)
