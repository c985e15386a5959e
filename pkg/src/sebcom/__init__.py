"""Semantic-base image communication: explicit KB, semantic codec,
importance-driven unequal error protection, and KB synchronization."""

from .channel import (
    ChannelConfig,
    LdpcCode,
    assign_labels,
    awgn,
    compute_cbr,
    construct_ldpc,
    ldpc_decode,
    ldpc_encode,
    measure_ber,
    qpsk_llr,
    qpsk_modulate,
    uep_frame,
)
from .estimator import SemanticCodec
from .importance import builtin_saliency, cell_importance, load_heatmap
from .kb import (
    Granularity,
    KbParams,
    KnowledgeBase,
    Seb,
    apply_update,
    check_poset_axioms,
    decay_and_refresh,
    empirical_mutual_information,
    generate_candidates,
    prune,
    refine,
)
from .metrics import psnr, ssim, weighted_mse
from .semcodec import (
    CodecConfig,
    ImageGray,
    SemanticFrame,
    build_kb,
    decode,
    deserialize_frame,
    encode,
    extract_patches,
    load_image,
    quantization_distortion,
    serialize_frame,
    train_codebook,
)
from .syncproto import (
    SyncMessage,
    TriggerState,
    apply_message,
    decode_message,
    encode_message,
    kb_hash,
    should_request_update,
)

__version__ = "0.1.0"
