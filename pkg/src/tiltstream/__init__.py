"""Streaming tilt-series acquisition, reconstruction, and stop recommendation."""

from .errors import (
    ConfigError,
    DegenerateDataError,
    InvalidArgumentError,
    ParseError,
    TiltStreamError,
    UndefinedSNRError,
)
from .geometry import (
    GOLDEN_RATIO,
    ProjectionGeometry,
    TiltScheme,
    angular_coverage,
    grs_angles,
    is_angles,
)
from .phantom import VoxelVolume, nanocage, shepp_logan_3d
from .damage import (
    DAMAGE_PRESETS,
    DamageParams,
    IterationSchedule,
    damage_preset,
    damage_sequence,
    elastic_deform,
    iter_damage_states,
    iteration_schedule,
    knockon_deform,
    neighbor_counts,
)
from .projector import (
    ParallelProjector,
    Projection,
    TiltSeries,
    default_times,
    forward_project,
    iter_acquisition,
    projector_for,
    simulate_acquisition,
)
from .recon import (
    DEFAULT_SLICE_SPECS,
    OrthosliceSet,
    OrthosliceStream,
    SliceSpec,
    binarize,
    em_reconstruct,
    fbp_slice,
    otsu_threshold,
    ramp_filter,
    streaming_orthoslices,
)
from .metrics import (
    MetricTrace,
    StopRecommendation,
    shape_error,
    snr,
    srod,
    stop_decision,
)
from .align import (
    AlignmentResult,
    align_series,
    align_translation,
    mask_largest_particle,
    shift_image,
)
from .events import (
    EVENT_KINDS,
    EventPublisher,
    FrameDecoder,
    encode_frame,
    make_event,
    read_events,
)
from .pipeline import (
    AnalyzeResult,
    SessionConfig,
    SessionConsumer,
    SessionResult,
    analyze,
    build_damage,
    build_phantom,
    build_scheme,
    run_session,
)

__version__ = "0.1.0"
