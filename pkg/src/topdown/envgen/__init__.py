from .world import (
    Box, EnvironmentSpec, GenerationConfig, Pose, PlacementError, sample_environment,
    OBJECT_PALETTE, WALL_COLOR, FLOOR_COLOR, SKY_COLOR, UNKNOWN_COLOR, MARKER_COLOR, to_float,
)
from .render import (
    InvalidPoseError, render_first_person, render_topdown, line_of_sight, frustum_wedge,
    agent_cell, cell_centers,
)
from .episode import Episode, simulate_episode, rotation_yaws
from .io import (
    DatasetError, write_dataset, read_dataset, read_manifest, generate_dataset,
    split_seed_ranges, encode_pbm, decode_pbm,
)

__all__ = [
    "Box", "EnvironmentSpec", "GenerationConfig", "Pose", "PlacementError", "sample_environment",
    "OBJECT_PALETTE", "WALL_COLOR", "FLOOR_COLOR", "SKY_COLOR", "UNKNOWN_COLOR", "MARKER_COLOR",
    "to_float", "InvalidPoseError", "render_first_person", "render_topdown", "line_of_sight",
    "frustum_wedge", "agent_cell", "cell_centers", "Episode", "simulate_episode", "rotation_yaws",
    "DatasetError", "write_dataset", "read_dataset", "read_manifest", "generate_dataset",
    "split_seed_ranges", "encode_pbm", "decode_pbm",
]
