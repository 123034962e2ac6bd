"""Python access to the evb metrics core."""
import json

from ._evb import (
    DegenerateInput,
    Error,
    InvalidArgument,
    ParseError,
    __version__,
    acc_cmp,
    classify_overlap,
    depth_metrics,
    evaluate_pose,
    evaluate_recon,
    fixed_layer_set,
    geodesic_deg,
    median_scale_factor,
    read_model,
    relative_pose,
    rotation_loss,
    rotation_loss_grad,
    select_layers,
    summarize,
    translation_angle_deg,
    umeyama,
    yaw_pitch_deg,
)
from ._evb import curate_scene as _curate_scene


def curate_scene(scene_dir, scene_id=None, k=5, max_pairs=40, seed=0):
    """Curated image pairs of one scene as dicts."""
    if scene_id is None:
        scene_id = str(scene_dir).rstrip("/").rsplit("/", 1)[-1]
    return [json.loads(p) for p in _curate_scene(str(scene_dir), scene_id, k, max_pairs, seed)]


__all__ = [n for n in dir() if not n.startswith("_")]
