import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, confusion_matrix

from ctanet.core.checkpoint import load_parameters
from ctanet.core.config import RunConfig, config_for_checkpoint
from ctanet.core.dataset import VideoDataset, read_dataset
from ctanet.core.errors import ConfigurationError
from ctanet.core.model import CTANet
from ctanet.core.progress_logger import log_progress
from ctanet.core.splitter import train_valid_test_split
from ctanet.core.train import clip_frames


logger = logging.getLogger(__name__)

CONFUSION_FILE = 'confusion.csv'
SPLITS = ('all', 'train', 'valid', 'test')


@dataclass
class EvaluationReport:
    """Top-1 accuracy and the confusion matrix (rows = true class, columns = predicted)."""
    accuracy: float
    confusion: pd.DataFrame

    @property
    def num_videos(self) -> int:
        return int(self.confusion.values.sum())


def confusion_frame(y_true: Sequence[int], y_pred: Sequence[int], num_classes: int) -> pd.DataFrame:
    """
    Confusion counts as a dataframe

    Parameters
    ----------
    y_true: Sequence[int]
        true class of every video
    y_pred: Sequence[int]
        predicted class of every video
    num_classes: int
        number of classes K; the frame is always K×K

    Return
    ------
    df: pd.DataFrame
        index ``true_<c>``, columns ``pred_<c>``
    """
    counts = confusion_matrix(y_true, y_pred, labels=list(range(num_classes)))
    return pd.DataFrame(counts,
                        index=pd.Index([f"true_{c}" for c in range(num_classes)], name='true_class'),
                        columns=[f"pred_{c}" for c in range(num_classes)])


def evaluate_predictions(y_true: Sequence[int], y_pred: Sequence[int], num_classes: int) -> EvaluationReport:
    if len(y_true) != len(y_pred):
        raise ValueError(f"{len(y_true)} labels but {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise ValueError("nothing to evaluate")
    return EvaluationReport(accuracy=float(accuracy_score(y_true, y_pred)),
                            confusion=confusion_frame(y_true, y_pred, num_classes))


def shuffled_order(num_frames: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(num_frames)


def predict(model: CTANet, dataset: VideoDataset, shuffle_seed: Optional[int] = None) -> np.ndarray:
    """Arg-max class of every video.

    With ``shuffle_seed`` the sampled frames of each video are fed in a seeded
    random order, which removes temporal structure but keeps frame content.
    """
    rng = None if shuffle_seed is None else np.random.default_rng(shuffle_seed)
    predictions = []
    for sample in dataset:
        frames = clip_frames(sample, model.num_frames)
        if rng is not None:
            frames = frames[shuffled_order(len(frames), rng)]
        predictions.append(model.predict(frames))
    return np.array(predictions, dtype=np.int64)


def pair_accuracy(y_true: np.ndarray, y_pred: np.ndarray, pair: Tuple[int, int]) -> float:
    """Accuracy over the videos whose true class is in ``pair``."""
    mask = np.isin(y_true, pair)
    if not mask.any():
        return float('nan')
    return float(accuracy_score(y_true[mask], y_pred[mask]))


def order_sensitivity(model: CTANet,
                      dataset: VideoDataset,
                      pairs: Sequence[Tuple[int, int]],
                      shuffle_seed: int = 0,
                      ordered: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Accuracy on every phase-order class pair with ordered and with shuffled frames.

    Returns
    -------
    pd.DataFrame
        Columns ``class_a, class_b, videos, ordered_acc, shuffled_acc, drop``.
    """
    y_true = dataset.labels
    y_ordered = predict(model, dataset) if ordered is None else ordered
    y_shuffled = predict(model, dataset, shuffle_seed=shuffle_seed)
    rows = []
    for a, b in pairs:
        ordered_acc = pair_accuracy(y_true, y_ordered, (a, b))
        shuffled_acc = pair_accuracy(y_true, y_shuffled, (a, b))
        rows.append([a, b, int(np.isin(y_true, (a, b)).sum()), ordered_acc, shuffled_acc, ordered_acc - shuffled_acc])
    return pd.DataFrame(rows, columns=['class_a', 'class_b', 'videos', 'ordered_acc', 'shuffled_acc', 'drop'])


def build_model(run_config: RunConfig, checkpoint: Optional[str] = None) -> CTANet:
    """CTANet with the configured architecture, loaded from ``checkpoint`` when given."""
    model = CTANet(run_config.glimpse, run_config.sequence, np.random.default_rng(0), run_config.train.switches)
    if checkpoint is not None:
        load_parameters(model, checkpoint)
    return model


def select_split(dataset: VideoDataset, run_config: RunConfig, split: str) -> VideoDataset:
    """The videos of one split, recomputed with the run's seed and fractions."""
    if split not in SPLITS:
        raise ConfigurationError(f"split must be one of {SPLITS}, got '{split}'")
    if split == 'all':
        return dataset
    cfg = run_config.train
    parts = train_valid_test_split(dataset, cfg.frac_train, cfg.frac_valid, cfg.frac_test, cfg.data_split_seed)
    return getattr(parts, split)


def model_evaluator(data_dir: str,
                    checkpoint: str,
                    out_dir: Optional[str] = None,
                    config_path: Optional[str] = None,
                    overrides: Optional[List[str]] = None,
                    split: str = 'test') -> Dict:
    """
    Evaluate a checkpoint on a dataset directory

    Parameters
    ----------
    data_dir: str
        dataset directory written by ``write_dataset``
    checkpoint: str
        path of a ``.ctak`` checkpoint
    out_dir: str, optional
        where ``confusion.csv`` is written; defaults to the checkpoint's directory
    config_path: str, optional
        architecture config; defaults to the ``run_config.txt`` beside the checkpoint
    overrides: List[str], optional
        ``section.key=value`` overrides
    split: str
        ``all`` or one of the seeded ``train``/``valid``/``test`` partitions

    Returns
    -------
    Dict
        ``accuracy``, ``videos`` and the ``confusion`` csv path
    """
    run_config = config_for_checkpoint(checkpoint, config_path, overrides)
    log_progress('evaluation', 0, f"loading checkpoint '{checkpoint}'")
    model = build_model(run_config, checkpoint)
    dataset = select_split(read_dataset(data_dir), run_config, split)
    if len(dataset) == 0:
        raise ConfigurationError(f"the '{split}' split of {data_dir} is empty")
    log_progress('evaluation', 20, f"predicting {len(dataset)} videos")
    report = evaluate_predictions(dataset.labels, predict(model, dataset), model.num_classes)
    out_dir = out_dir or os.path.dirname(os.path.abspath(checkpoint))
    os.makedirs(out_dir, exist_ok=True)
    confusion_path = os.path.join(out_dir, CONFUSION_FILE)
    report.confusion.to_csv(confusion_path)
    log_progress('evaluation', 100, f"top-1 accuracy {report.accuracy:.4f} on {len(dataset)} videos")
    return {'accuracy': report.accuracy, 'videos': len(dataset), 'confusion': confusion_path}
