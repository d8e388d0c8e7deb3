"""Joint detection and tracking on crowd density maps via a count-constrained network-flow MILP."""

from .bbox import BBox, BBoxParams, estimate_box
from .config import ConfigError, load_config, make_config
from .density import (DensityVideo, PerspectiveMap, build_perspective, load_density_csv, load_density_video,
                      region_sum, render_from_points, save_density_video)
from .graph import CandidateGraph, CandidateNode, EdgeCostParams, build_graph, edge_cost, extract_candidates
from .metrics import EvalReport, GroundTruth, evaluate
from .model import DetectionAugmentation, MilpModel, build_ft, build_tbc, build_tbc_det, plan_batches
from .pipeline import run_tracking
from .solver import Solution, SolveConfig, branch_and_bound, brute_force, export_lp
from .synth import SceneSpec, generate_scene
from .tracks import TrackSet, Trajectory, chain_batches, decode_tracks
from .windows import WindowSet, count_residual, generate_windows

__version__ = "0.1.0"
