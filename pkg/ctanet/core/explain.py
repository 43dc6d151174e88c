"""Gradient-weighted class activation maps for every temporal branch.

For a clip and a class the class score is back-propagated to each branch's
head input ``A`` (the self-attention output). Per frame the map is
``relu(sum_k mean_xy(dscore/dA_k) * A_k)``; the maps of the frames routed to a
branch are averaged, min-max normalised to ``[0, 1]`` and resized to the frame
resolution.
"""
import logging
import os
from typing import List, Optional

import numpy as np
from PIL import Image

from ctanet.core import numerics as nx
from ctanet.core.config import config_for_checkpoint
from ctanet.core.dataset import read_dataset
from ctanet.core.errors import ContractError
from ctanet.core.evaluator import build_model
from ctanet.core.glimpse import branch_label
from ctanet.core.model import CTANet
from ctanet.core.progress_logger import log_progress
from ctanet.core.train import clip_frames


logger = logging.getLogger(__name__)


def activation_map(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """Unnormalised map of one ``C×h×w`` activation and its gradient."""
    weights = gradients.mean(axis=(-2, -1))
    return np.maximum(np.tensordot(weights, activations, axes=(0, 0)), 0.0)


def normalize_map(saliency: np.ndarray) -> np.ndarray:
    """Min-max scale to ``[0, 1]``; a constant map becomes all ones if positive, else all zeros."""
    low, high = float(saliency.min()), float(saliency.max())
    if high - low <= 0.0:
        return np.full_like(saliency, 1.0 if high > 0.0 else 0.0, dtype=np.float64)
    return (saliency - low) / (high - low)


def gradcam_map(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """Normalised map averaged over a stack of ``N×C×h×w`` activations (or a single ``C×h×w``)."""
    if activations.ndim == 3:
        activations, gradients = activations[None], gradients[None]
    maps = [activation_map(a, g) for a, g in zip(activations, gradients)]
    return normalize_map(np.mean(maps, axis=0))


def resize_map(saliency: np.ndarray, size: int) -> np.ndarray:
    image = Image.fromarray(saliency.astype(np.float32))
    resized = image.resize((size, size), Image.Resampling.BILINEAR)
    return np.clip(np.asarray(resized, dtype=np.float64), 0.0, 1.0)


def write_pgm(saliency: np.ndarray, path: str) -> str:
    """Write a ``[0, 1]`` map as an 8-bit binary PGM."""
    pixels = np.rint(np.clip(saliency, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path)
    return path


def explain_clip(model: CTANet, frames: np.ndarray, class_id: int) -> List[np.ndarray]:
    """One ``S×S`` saliency map per branch for ``class_id``.

    Raises
    ------
    ContractError
        If ``class_id`` is outside ``[0, K)``.
    """
    if not 0 <= class_id < model.num_classes:
        raise ContractError(f"class id {class_id} out of range for {model.num_classes} classes")
    model.zero_grad()
    head_inputs: List[nx.Tensor] = []
    logits = model.logits(nx.Tensor(frames), head_inputs)
    nx.backward(logits[class_id])
    size = model.glimpse.config.image_size
    return [resize_map(gradcam_map(t.data, t.grad), size) for t in head_inputs]  # type: ignore


def explain_video(checkpoint: str,
                  data_dir: str,
                  video_id: int,
                  out_dir: str,
                  class_id: Optional[int] = None,
                  config_path: Optional[str] = None,
                  overrides: Optional[List[str]] = None) -> List[str]:
    """
    Write one saliency PGM per branch for a video of a dataset

    Parameters
    ----------
    checkpoint: str
        model checkpoint
    data_dir: str
        dataset directory holding the video
    video_id: int
        id of the video in the dataset manifest
    out_dir: str
        destination of ``branch_<c>_<name>.pgm``
    class_id: int, optional
        class to explain; defaults to the predicted class
    config_path: str, optional
        architecture config; defaults to the ``run_config.txt`` beside the checkpoint

    Returns
    -------
    List[str]
        written paths, in branch order
    """
    run_config = config_for_checkpoint(checkpoint, config_path, overrides)
    model = build_model(run_config, checkpoint)
    videos = read_dataset(data_dir).by_id()
    if video_id not in videos:
        raise ContractError(f"video {video_id} not found in {data_dir}")
    frames = clip_frames(videos[video_id], model.num_frames)
    if class_id is None:
        class_id = model.predict(frames)
        logger.info(f"explaining predicted class {class_id}")
    log_progress('explain', 10, f"computing saliency of video {video_id} for class {class_id}")
    maps = explain_clip(model, frames, class_id)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for c, saliency in enumerate(maps):
        path = os.path.join(out_dir, f"branch_{c}_{branch_label(c, len(maps))}.pgm")
        paths.append(write_pgm(saliency, path))
    log_progress('explain', 100, f"wrote {len(paths)} saliency maps to '{out_dir}'")
    return paths
