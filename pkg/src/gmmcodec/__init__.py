"""Image codec with a mixture-model entropy stage and exact rate control."""

from .allocate import (
    Allocation,
    AllocationProblem,
    ImageOptions,
    RdPoint,
    allocate_bruteforce,
    allocate_dp,
    read_problem,
    summarize,
    write_allocation,
)
from .container import BitstreamContainer
from .context import (
    EntropyParamWeights,
    MaskedConvWeights,
    causal_mask,
    decode_latents,
    encode_latents,
    entropy_params,
    entropy_params_at,
    entropy_params_full,
    masked_conv_at,
    masked_conv_full,
    masked_conv_window,
    window_extract,
    zero_channel_flags,
    zero_channel_mask,
)
from .errors import (
    CodecError,
    CorruptStream,
    DecodeError,
    InvalidDistribution,
    InvalidInput,
    InvalidSymbol,
    ModelMismatch,
    ResourceLimit,
    ShapeError,
    TruncatedStream,
    UnsupportedVersion,
)
from .gmm import (
    ALPHABET_SIZE,
    MIN_PMF,
    SIGMA_FLOOR,
    SYMBOL_HI,
    SYMBOL_LO,
    GmmParams,
    GmmParamTensor,
    discretized_pmf,
    estimate_rate_bits,
    pmf_at_symbols,
    pmf_table,
    pmf_tables,
    quantize_latent,
    std_normal_cdf,
)
from .metrics import MsSsimConfig, RdReport, distortion, ms_ssim, rd_loss
from .modelfile import (
    BLOCK_DIM,
    BLOCK_SIDE,
    CodecModel,
    load_model,
    load_model_bytes,
    read_tensors,
    save_model,
    write_tensors,
)
from .pipeline import (
    analysis_transform,
    bpp,
    decode_image,
    encode_image,
    pad_image,
    synthesis_transform,
)
from .rangecoder import (
    FREQ_TOTAL,
    Bitstream,
    QuantizedCdf,
    RangeDecoder,
    RangeEncoder,
    decode,
    encode,
    quantize_cdf,
    quantize_freqs,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
