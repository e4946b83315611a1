"""Learn static attractive areas from agent trajectories.

The pipeline runs a random-walk Kalman filter over each trajectory, splits
the resulting control stream into quasilinear segments, fits a near-range
deceleration law per segment and clusters the fitted centres into an atlas.
"""
from .atlas import (Atlas, AttractorLetter, BankModel, build_filter_bank, cluster_attractors,
                    load_atlas, rasterize_field_map, save_atlas)
from .field import (FarFieldParams, NearFieldParams, SwitchingField, classify_phase,
                    eval_field, eval_near_speed, fit_far_lognormal)
from .fitter import FitterConfig, estimate_segment_field, fit_segment, fuse_estimates
from .pipeline import LearnConfig, LearnResult, learn
from .rwfilter import FilterConfig, run_rw_pass
from .segmenter import Segment, Segmenter, SegmenterConfig, segment_stream
from .synthetic import (Scenario, SimConfig, default_scenario, generate_dataset,
                        normalized_error)
from .trajectory import ControlSample, Trajectory, parse_trajectories, write_trajectories

__version__ = "0.1.0"

__all__ = [
    "Atlas", "AttractorLetter", "BankModel", "ControlSample", "FarFieldParams",
    "FilterConfig", "FitterConfig", "LearnConfig", "LearnResult", "NearFieldParams",
    "Scenario", "Segment", "Segmenter", "SegmenterConfig", "SimConfig", "SwitchingField",
    "Trajectory", "build_filter_bank", "classify_phase", "cluster_attractors",
    "default_scenario", "estimate_segment_field", "eval_field", "eval_near_speed",
    "fit_far_lognormal", "fit_segment", "fuse_estimates", "generate_dataset", "learn",
    "load_atlas", "normalized_error", "parse_trajectories", "rasterize_field_map",
    "run_rw_pass", "save_atlas", "segment_stream", "write_trajectories",
]
