"""Minecraft face textures from photos and text prompts.

Faces are (8, 8, 3) float arrays in [0, 1], latents are (2, 512) arrays
(one style row per synthesis level) and skins are (H, 64, 4) uint8 arrays.
"""

import json as _json

from . import _skinforge
from ._skinforge import (
    ChecksumError,
    DecodeError,
    EmptyCorpus,
    FileNotFound,
    GeneratorWeights,
    InvalidArgument,
    IoError,
    NonFiniteLoss,
    ScorerFailure,
    ShapeMismatch,
    SkinforgeError,
    TooSmall,
    VersionMismatch,
    average_latent,
    default_base_skin,
    downsample_to_face,
    embed_face,
    extract_face,
    invert,
    load_face,
    load_image,
    load_latent,
    load_skin,
    map_latent,
    refine_corpus,
    sample_random_latent,
    save_face,
    save_latent,
    save_skin,
    scorer_names,
    stat_loss,
    synthesize,
)

__version__ = "0.1.0"


def edit(weights, latent, prompt, scorer="color_target", scorer_params=None, **options):
    """Push `latent` towards `prompt`; options: lambda_l2, steps, learning_rate, seed."""
    params = _json.dumps(scorer_params) if scorer_params else ""
    return _skinforge.edit(weights, latent, prompt, scorer=scorer, scorer_params=params, **options)


def train(corpus_dir, config=None):
    """Train on a refined corpus. Returns (weights, log) with one dict per iteration."""
    weights, log = _skinforge.train(str(corpus_dir), _json.dumps(config) if config else "")
    return weights, [_json.loads(line) for line in log]


__all__ = [name for name in dir() if not name.startswith("_")]
