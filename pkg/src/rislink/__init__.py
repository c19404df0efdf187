"""Link-level simulator and detectors for RIS-assisted received SM/SSK."""

from .channel import (
    ChannelRealization,
    EffectiveChannel,
    NoiseSpec,
    RisPhaseProfile,
    align_phases,
    effective_channel,
    hypothesis_gains,
    instantaneous_snr,
    sample_channel,
    sample_weibull_amplitude,
    transmit,
    weibull_scale,
)
from .modulation import (
    BPSK,
    MODE_SM,
    MODE_SSK,
    MQAM,
    QPSK,
    Constellation,
    Frame,
    bits_to_frame,
    build_constellation,
    frame_to_bits,
)
from .detectors import DetectionResult, greedy_detect, ml_detect
from .bdnn import (
    FEATURE_ABS,
    FEATURE_SIGNED,
    LabeledExample,
    MlpParams,
    ModelMeta,
    TrainingConfig,
    bdnn_detect,
    block_features,
    build_network,
    cross_entropy_loss,
    generate_training_set,
    load_model,
    mlp_backward,
    mlp_forward,
    save_model,
    sfvg,
    sgd_epoch,
    train_network,
)
from .harness import (
    DETECTOR_BDNN,
    DETECTOR_GREEDY,
    DETECTOR_ML,
    BerRecord,
    Scenario,
    StoppingRule,
    run_ber_point,
    sweep,
)
from .errors import (
    ConfigurationError,
    FormatError,
    ParameterError,
    RislinkError,
    ShapeError,
)

__version__ = "0.1.0"
