"""Sequence-based visual place recognition with multi-channel fusion.

The public surface: frame/tensor ingestion (`dataset_io`), per-frame
descriptors and distances (`descriptors`), observation fusion and sequence
decoding (`fusion`), the stateful per-frame localizer (`controller`),
channel/database plumbing (`channels`), scoring and synthetic benchmarks
(`evaluation`), and the CLI (`cli`).
"""

from .channels import (FrameBundle, TemplateDatabase, build_database,
                       channels_from_db, localize_frames, make_channels)
from .config import ConfigError, RunConfig, load_config
from .controller import MatchDecision, SequenceLocalizer
from .dataset_io import (NOVEL, FormatError, FrameSource, GroundTruth,
                         IngestionError, load_frame, load_ground_truth,
                         read_tensor, write_tensor)
from .descriptors import (KeypointSet, RunningStats, cnn_argmax_keypoints,
                          cnn_pyramid_descriptor, cosine_distance_column,
                          hog_descriptor, keypoint_distance, sad_descriptor)
from .evaluation import (PRCurve, SyntheticWorld, generate_synthetic,
                         run_synthetic, score_decisions, sweep_pr)
from .fusion import (TransitionModel, ViterbiResult, column_quality,
                     dynamic_sequence_start, normalize_observation,
                     transition_term, viterbi_decode, vote_exclude_channel)

__version__ = "0.1.0"

__all__ = [
    "FrameBundle", "TemplateDatabase", "build_database", "channels_from_db",
    "localize_frames", "make_channels", "ConfigError", "RunConfig",
    "load_config", "MatchDecision", "SequenceLocalizer", "NOVEL",
    "FormatError", "FrameSource", "GroundTruth", "IngestionError",
    "load_frame", "load_ground_truth", "read_tensor", "write_tensor",
    "KeypointSet", "RunningStats", "cnn_argmax_keypoints",
    "cnn_pyramid_descriptor", "cosine_distance_column", "hog_descriptor",
    "keypoint_distance", "sad_descriptor", "PRCurve", "SyntheticWorld",
    "generate_synthetic", "run_synthetic", "score_decisions", "sweep_pr",
    "TransitionModel", "ViterbiResult", "column_quality",
    "dynamic_sequence_start", "normalize_observation", "transition_term",
    "viterbi_decode", "vote_exclude_channel", "__version__",
]
