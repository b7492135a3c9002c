"""Indoor sound source localization over a discretized room grid.

Pipeline: image-source room simulation -> phase-transform cross-correlation
features -> stored-exemplar Gaussian-kernel classification over the grid ->
weighted refinement to a continuous position and direction of arrival.
"""

from .audio import Signal, load_wav, synth_speechband, write_wav
from .experiment import (
    ExperimentConfig, TrainingPlan, localize_pipeline, sweep, train_pipeline,
)
from .features import (
    FrameSpec, GccFeature, frame_signal, frame_weights, gcc_feature, gcc_pair,
    mic_pairs,
)
from .geometry import (
    ClusterGrid, Doa, MicArray, RoomSpec, axial_mic_array, cartesian_to_doa,
    center_of, cluster_of, doa_to_cartesian, make_cluster_grid, sphere_grid,
    vertexes_of,
)
from .locate import (
    LocalizationResult, LocateConfig, cluster_weights, finalize, localize,
    preliminary_estimate, sample_point_weights, select_clusters,
)
from .metrics import (
    EnvTag, Report, TrialOutcome, bound_check, doa_error, doa_success_rate,
    localization_error,
)
from .pnn import (
    ClusterProbs, FeatureRecipe, PnnModel, classify, cluster_probabilities,
    cluster_scores, kernel, load_model, read_model_header, save_model, train,
)
from .roomsim import (
    AcousticEnv, CaptureSet, Rir, absorption_for_decay, absorption_from_t60,
    compute_rir, compute_rirs, simulate_capture,
)

__version__ = "0.1.0"
