import logging
import os
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional

import numpy as np
import pandas as pd

from ctanet.core import numerics as nx
from ctanet.core.checkpoint import save_checkpoint
from ctanet.core.dataset import VideoDataset, VideoSample, dataset_fingerprint, read_dataset
from ctanet.core.errors import ConfigurationError, ContractError, NumericError
from ctanet.core.glimpse import GlimpseConfig
from ctanet.core.model import CTANet, Switches
from ctanet.core.numerics import Tensor
from ctanet.core.optimizer import OptimizerState, adam_step, clip_grad_norm
from ctanet.core.progress_logger import log_progress
from ctanet.core.sequence import SequenceConfig
from ctanet.core.splitter import train_valid_test_split

if TYPE_CHECKING:
    from ctanet.core.config import RunConfig


logger = logging.getLogger(__name__)

METRICS_COLUMNS = ['epoch', 'step', 'lr', 'train_loss', 'train_acc', 'val_acc']
METRICS_FILE = 'metrics.csv'
PROVENANCE_FILE = 'provenance.txt'
BEST_CHECKPOINT = 'best.ctak'
FINAL_CHECKPOINT = 'final.ctak'
PROBABILITY_FLOOR = 1e-12


@dataclass
class TrainConfig:
    """Optimiser, schedule, sampling and ablation settings of one training run."""
    lr0: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    decay_factor: float = 0.1
    decay_every: int = 25
    batch_size: int = 4
    frames_per_video: int = 12
    epochs: int = 60
    seed: int = 0
    use_branches: bool = True
    use_temporal_attention: bool = True
    use_self_attention: bool = True
    clip_norm: float = 5.0
    sample_jitter: bool = False
    frac_train: float = 0.6
    frac_valid: float = 0.2
    frac_test: float = 0.2
    split_seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.lr0 <= 0:
            raise ConfigurationError(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.beta1 < self.beta2 < 1:
            raise ConfigurationError(f"need 0 < beta1 < beta2 < 1, got {self.beta1} and {self.beta2}")
        if self.adam_eps <= 0 or not 0 < self.decay_factor <= 1 or self.decay_every < 1:
            raise ConfigurationError("adam_eps, decay_factor and decay_every must be positive (decay_factor <= 1)")
        if self.batch_size < 1 or self.frames_per_video < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size and frames_per_video must be >= 1 and epochs >= 0")
        if self.clip_norm < 0:
            raise ConfigurationError(f"clip_norm must be >= 0, got {self.clip_norm}")

    @property
    def switches(self) -> Switches:
        return Switches(use_branches=self.use_branches,
                        use_temporal_attention=self.use_temporal_attention,
                        use_self_attention=self.use_self_attention)

    @property
    def data_split_seed(self) -> int:
        """Seed of the train/valid/test partition; ``split_seed`` when set, else ``seed``."""
        return self.seed if self.split_seed is None else self.split_seed

    def lr_at(self, epoch: int) -> float:
        return lr_at(epoch, self.lr0, self.decay_factor, self.decay_every)


def lr_at(epoch: int, lr0: float = 0.001, decay_factor: float = 0.1, decay_every: int = 25) -> float:
    """Step schedule ``lr0 * decay_factor ** floor(epoch / decay_every)``."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return lr0 * decay_factor**(epoch // decay_every)


def sample_frames(num_frames: int, count: int, rng: Optional[np.random.Generator] = None) -> List[int]:
    """Pick ``count`` frame indices spread uniformly over a clip of ``num_frames``.

    Index ``i`` is ``floor(i * L / T)``. With ``rng`` each index is instead
    drawn uniformly from its bucket ``[floor(i L / T), floor((i + 1) L / T))``.
    Clips shorter than ``count`` repeat frames.
    """
    if num_frames < 1:
        raise ContractError(f"cannot sample from a clip of {num_frames} frames")
    indices = []
    for i in range(count):
        low = i * num_frames // count
        if rng is None:
            indices.append(low)
        else:
            high = max(low + 1, (i + 1) * num_frames // count)
            indices.append(low + int(rng.integers(high - low)))
    return indices


def clip_frames(sample: VideoSample, count: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """The sampled ``T×C×S×S`` frames of ``sample`` as float64."""
    return sample.frames[sample_frames(sample.num_frames, count, rng)].astype(np.float64)


def cross_entropy(probabilities: Tensor, label: int) -> Tensor:
    """``-log(p[label])`` with ``p[label]`` floored at 1e-12.

    Raises
    ------
    ContractError
        If ``label`` is outside ``[0, K)`` or the probabilities do not sum to 1.
    """
    num_classes = probabilities.shape[-1]
    if not 0 <= label < num_classes:
        raise ContractError(f"label {label} out of range for {num_classes} classes")
    if abs(float(probabilities.data.sum()) - 1.0) > 1e-6:
        raise ContractError(f"probabilities sum to {probabilities.data.sum()}, expected 1")
    return -nx.log(nx.clamp_min(probabilities[label], PROBABILITY_FLOOR))


def accuracy(model: CTANet, dataset: VideoDataset) -> float:
    """Top-1 accuracy with deterministic frame sampling."""
    if len(dataset) == 0:
        return float('nan')
    correct = sum(model.predict(clip_frames(s, model.num_frames)) == s.label for s in dataset)
    return correct / len(dataset)


@dataclass
class TrainResult:
    """Trained model (best parameters restored) and the per-epoch metrics."""
    model: CTANet
    metrics: pd.DataFrame
    best_epoch: int
    best_val_acc: float
    checkpoints: Dict[str, str] = field(default_factory=dict)


def write_metrics(metrics: pd.DataFrame, path: str) -> str:
    metrics.to_csv(path, index=False, float_format='%.8g')
    return path


def read_metrics(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


def write_provenance(path: str, dataset_hash: Optional[str] = None, split_hash: Optional[str] = None) -> str:
    """Record the dataset and split hashes a run was trained on as ``key=value`` lines."""
    with open(path, 'w') as f:
        if dataset_hash:
            f.write(f"dataset_sha256={dataset_hash}\n")
        if split_hash:
            f.write(f"split_sha256={split_hash}\n")
    return path


def read_provenance(path: str) -> Dict[str, str]:
    with open(path) as f:
        return dict(line.strip().split('=', 1) for line in f if '=' in line)


def check_geometry(dataset: VideoDataset, glimpse: GlimpseConfig) -> None:
    expected = (glimpse.image_channels, glimpse.image_size, glimpse.image_size)
    if len(dataset) and tuple(dataset.frame_shape) != expected:
        raise ConfigurationError(f"dataset frames have shape {dataset.frame_shape}, "
                                 f"the glimpse sensor expects {expected}")


def _snapshot(model: CTANet) -> Dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.named_parameters().items()}


def train(dataset: VideoDataset,
          config: TrainConfig,
          glimpse: GlimpseConfig,
          sequence: SequenceConfig,
          val_set: Optional[VideoDataset] = None,
          out_dir: Optional[str] = None,
          dataset_hash: Optional[str] = None,
          split_hash: Optional[str] = None,
          model: Optional[CTANet] = None) -> TrainResult:
    """Train a CTANet end to end with Adam on mean batch cross-entropy.

    Parameters
    ----------
    dataset: VideoDataset
        Training videos; must be nonempty.
    config: TrainConfig
        Optimiser, schedule and ablation switches.
    glimpse: GlimpseConfig
        Glimpse sensor architecture; its ``frames_per_video`` must equal the
        training one.
    sequence: SequenceConfig
        Recurrent head architecture.
    val_set: VideoDataset, optional
        Validation videos used to pick the best epoch. Without it the final
        epoch is kept and ``val_acc`` is left empty.
    out_dir: str, optional
        When given, receives ``metrics.csv``, ``provenance.txt``, ``best.ctak`` and ``final.ctak``.
    dataset_hash: str, optional
        Recorded in ``provenance.txt`` beside the metrics file.
    split_hash: str, optional
        Hash of the train/valid/test partition, recorded the same way.
    model: CTANet, optional
        Start from this model instead of a freshly seeded one.

    Returns
    -------
    TrainResult
        Every source of randomness (initialisation, shuffling, jitter) derives
        from ``config.seed``, so equal inputs give equal metrics.

    Raises
    ------
    NumericError
        If the loss or a gradient turns non-finite; the message names the
        epoch and step.
    """
    if len(dataset) == 0:
        raise ContractError("cannot train on an empty dataset")
    check_geometry(dataset, glimpse)
    if glimpse.frames_per_video != config.frames_per_video:
        raise ConfigurationError(f"glimpse frames_per_video ({glimpse.frames_per_video}) differs from training "
                                 f"frames_per_video ({config.frames_per_video})")
    init_seq, shuffle_seq, jitter_seq = np.random.SeedSequence(config.seed).spawn(3)
    if model is None:
        model = CTANet(glimpse, sequence, np.random.default_rng(init_seq), config.switches)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    jitter_rng = np.random.default_rng(jitter_seq) if config.sample_jitter else None
    params = model.named_parameters()
    state = OptimizerState.for_parameters(params)
    num_classes = model.num_classes
    for sample in dataset:
        if not 0 <= sample.label < num_classes:
            raise ContractError(f"video {sample.video_id} has label {sample.label}, model has {num_classes} classes")

    rows = []
    best_val, best_epoch, best_params = float('nan'), -1, _snapshot(model)
    step = 0
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = shuffle_rng.permutation(len(dataset))
        total_loss, correct = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [dataset[int(i)] for i in order[start:start + config.batch_size]]
            model.zero_grad()
            try:
                losses = []
                for sample in batch:
                    _, probabilities = model.forward(Tensor(clip_frames(sample, config.frames_per_video, jitter_rng)))
                    losses.append(cross_entropy(probabilities, sample.label))
                    correct += int(np.argmax(probabilities.data) == sample.label)
                loss = nx.tensor_mean(nx.stack(losses))
                nx.backward(loss)
                grads = {name: p.grad.copy() for name, p in params.items()}  # type: ignore
                clip_grad_norm(grads, config.clip_norm)
                adam_step(params, grads, state, lr, config.beta1, config.beta2, config.adam_eps)
            except NumericError as e:
                raise NumericError(f"training diverged at epoch {epoch}, step {step}: {e}")
            total_loss += loss.item() * len(batch)
            step += 1
        train_loss = total_loss / len(dataset)
        train_acc = correct / len(dataset)
        val_acc = accuracy(model, val_set) if val_set is not None and len(val_set) else float('nan')
        rows.append([epoch, step, lr, train_loss, train_acc, val_acc])
        logger.info(f"epoch {epoch}: lr={lr:.3g} loss={train_loss:.5f} train_acc={train_acc:.4f} val_acc={val_acc:.4f}")
        log_progress('training', int(100 * (epoch + 1) / config.epochs),
                     f"epoch {epoch + 1}/{config.epochs} loss {train_loss:.4f}")
        if not np.isnan(val_acc) and (best_epoch < 0 or val_acc > best_val):
            best_val, best_epoch, best_params = val_acc, epoch, _snapshot(model)

    final_params = _snapshot(model)
    if best_epoch < 0:
        best_epoch, best_params = config.epochs - 1, final_params
    else:
        for name, p in params.items():
            p.data[...] = best_params[name]
    metrics = pd.DataFrame(rows, columns=METRICS_COLUMNS)
    result = TrainResult(model=model, metrics=metrics, best_epoch=best_epoch, best_val_acc=best_val)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_metrics(metrics, os.path.join(out_dir, METRICS_FILE))
        write_provenance(os.path.join(out_dir, PROVENANCE_FILE), dataset_hash, split_hash)
        result.checkpoints['best'] = save_checkpoint(best_params, os.path.join(out_dir, BEST_CHECKPOINT))
        result.checkpoints['final'] = save_checkpoint(final_params, os.path.join(out_dir, FINAL_CHECKPOINT))
    return result


def train_model(data_dir: str, out_dir: str, run_config: 'RunConfig') -> str:
    """Split a dataset directory, train on it and write the run directory.

    Parameters
    ----------
    data_dir: str
        Directory written by ``write_dataset``.
    out_dir: str
        Run directory; receives ``run_config.txt``, ``metrics.csv`` and the
        checkpoints. Earlier outputs there are overwritten.
    run_config: RunConfig
        Effective configuration.

    Returns
    -------
    str
        Path of the best-validation checkpoint.
    """
    log_progress('training', 0, f"loading dataset '{data_dir}'")
    dataset = read_dataset(data_dir)
    fingerprint = dataset_fingerprint(data_dir)
    cfg = run_config.train
    split = train_valid_test_split(dataset, cfg.frac_train, cfg.frac_valid, cfg.frac_test, cfg.data_split_seed)
    os.makedirs(out_dir, exist_ok=True)
    run_config.save(out_dir)
    logger.info(f"dataset sha256 {fingerprint}, split hash {split.split_hash}")
    result = train(split.train,
                   cfg,
                   run_config.glimpse,
                   run_config.sequence,
                   val_set=split.valid,
                   out_dir=out_dir,
                   dataset_hash=fingerprint,
                   split_hash=split.split_hash)
    log_progress('training', 100, f"best epoch {result.best_epoch}, checkpoints in '{out_dir}'")
    return result.checkpoints['best']
