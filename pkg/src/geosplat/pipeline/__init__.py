"""End-to-end orchestration: planning, generation, trajectory QA, reconstruction, export."""

from .adapters import (AdapterFailure, ExternalGenerator, ExternalPoses, GenerationRequest,
                       OraclePoses, PrecomputedPoses)
from .manifest import (IllegalTransition, ManifestError, ManifestWriter, Role, SceneManifest, Segment,
                       SegmentStatus, new_manifest)
from .oracle import OracleConfig, SyntheticOracle, synthetic_oracle
from .planner import CannedPlanner, CommandPlanner, run_plan
from .stages import (ExportTarget, MissingInputs, PreconditionError, ReconstructConfig,
                     RetriesExhausted, RetryStats, make_generator, make_pose_source, render_manifest,
                     run_export, run_generate, run_qa_loop, run_reconstruct)

__all__ = [
    "AdapterFailure", "ExternalGenerator", "ExternalPoses", "GenerationRequest", "OraclePoses",
    "PrecomputedPoses", "IllegalTransition", "ManifestError", "ManifestWriter", "Role",
    "SceneManifest", "Segment", "SegmentStatus", "new_manifest", "OracleConfig", "SyntheticOracle",
    "synthetic_oracle", "CannedPlanner", "CommandPlanner", "run_plan", "ExportTarget",
    "MissingInputs", "PreconditionError", "ReconstructConfig", "RetriesExhausted", "RetryStats",
    "make_generator", "make_pose_source", "render_manifest", "run_export", "run_generate",
    "run_qa_loop", "run_reconstruct",
]
