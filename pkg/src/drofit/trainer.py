"""Adam training loop over (clean, mixture) examples."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError
from .loss import LossWeights, total_loss
from .metrics import si_sdr_metric
from .model import Model, load_checkpoint, save_checkpoint
from .spectral import stft


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    epochs: int = 1
    batch_size: int = 4
    seed: int = 0
    alpha: float = 0.5
    beta: float = 0.7
    val_every: int = 1  # epochs between validation passes
    max_steps: int | None = None
    grad_clip: float | None = None  # global-norm clipping, off by default

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.epochs < 1 or self.batch_size < 1 or self.val_every < 1:
            raise ConfigError("epochs, batch_size and val_every must be >= 1")
        if not (0 <= self.betas[0] < 1 and 0 <= self.betas[1] < 1) or self.eps <= 0:
            raise ConfigError(f"invalid Adam hyperparameters betas={self.betas} eps={self.eps}")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(alpha=self.alpha, beta=self.beta)


@dataclass
class Example:
    id: str
    clean: np.ndarray
    mixture: np.ndarray


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {f"adam.m.{k}": a for k, a in self.m.items()}
        out.update({f"adam.v.{k}": a for k, a in self.v.items()})
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], step: int) -> "AdamState":
        m = {k[len("adam.m."):]: a.copy() for k, a in arrays.items() if k.startswith("adam.m.")}
        v = {k[len("adam.v."):]: a.copy() for k, a in arrays.items() if k.startswith("adam.v.")}
        return cls(m, v, step)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              cfg: TrainConfig) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    b1, b2 = cfg.betas
    state.step += 1
    c1, c2 = 1.0 - b1 ** state.step, 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


@dataclass
class TrainLogRow:
    step: int
    epoch: int
    total: float
    mag: float
    complex: float
    sisdr: float
    grad_norm: float
    val_loss: float | None = None
    val_si_sdr: float | None = None


@dataclass
class TrainResult:
    log: list[TrainLogRow]
    optimizer: AdamState
    best_val_loss: float | None = None
    best_step: int | None = None
    best_params: dict[str, np.ndarray] | None = None


def examples_from_manifest(manifest, sample_rate: int = 16000) -> list[Example]:
    from .data import materialize

    out = []
    for entry in manifest:
        clean, mixture, _ = materialize(entry, sample_rate)
        out.append(Example(entry.id, clean, mixture))
    return out


def example_loss(model: Model, ex: Example, weights: LossWeights, train: bool = False, rng=None):
    cfg = model.config
    wave, spec = model.forward(ex.mixture, train=train, rng=rng)
    ref = stft(ex.clean.astype(model.dtype), cfg.fft_size, cfg.hop, cfg.sample_rate)
    return total_loss(spec, ref, wave, ex.clean.astype(model.dtype), weights), wave


def evaluate_loss(model: Model, examples: list[Example], weights: LossWeights) -> tuple[float, float]:
    """Mean total loss and mean SI-SDR (dB) in eval mode."""
    losses, scores = [], []
    for ex in examples:
        parts, wave = example_loss(model, ex, weights)
        losses.append(parts.total.item())
        scores.append(si_sdr_metric(wave.data, ex.clean))
    return float(np.mean(losses)), float(np.mean(scores))


def _params(model: Model) -> dict[str, np.ndarray]:
    return {n: leaf.tensor.data for n, leaf in model.params.items() if leaf.trainable}


def train(model: Model, train_set: list[Example], cfg: TrainConfig, val_set: list[Example] | None = None,
          log_path=None, ckpt_dir=None, resume: AdamState | None = None) -> TrainResult:
    """Minibatch Adam on the total loss; deterministic for a given seed.

    Dropout and shuffling draw from generators keyed on (seed, epoch/step),
    so resuming from a checkpoint replays the same subsequent updates.
    """
    if not train_set:
        raise ConfigError("empty training set")
    state = resume or AdamState()
    weights = cfg.weights
    model.requires_grad_(True)
    log: list[TrainLogRow] = []
    result = TrainResult(log, state)
    batches_per_epoch = -(-len(train_set) // cfg.batch_size)
    first_epoch = state.step // batches_per_epoch
    log_file = _open_log(log_path, append=resume is not None)
    try:
        for epoch in range(first_epoch, cfg.epochs):
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_set))
            batches = [order[i: i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
            skip = state.step - epoch * batches_per_epoch if epoch == first_epoch else 0
            epoch_rows = []
            for batch in batches[skip:]:
                if cfg.max_steps is not None and state.step >= cfg.max_steps:
                    break
                epoch_rows.append(_train_step(model, [train_set[i] for i in batch], state, cfg, weights, epoch))
            log.extend(epoch_rows)
            stop = cfg.max_steps is not None and state.step >= cfg.max_steps
            if val_set and ((epoch + 1) % cfg.val_every == 0 or stop or epoch + 1 == cfg.epochs):
                val_loss, val_sdr = evaluate_loss(model, val_set, weights)
                if epoch_rows:
                    epoch_rows[-1].val_loss, epoch_rows[-1].val_si_sdr = val_loss, val_sdr
                if result.best_val_loss is None or val_loss < result.best_val_loss:
                    result.best_val_loss, result.best_step = val_loss, state.step
                    result.best_params = {n: a.copy() for n, a in _params(model).items()}
                    if ckpt_dir is not None:
                        _save(Path(ckpt_dir) / "best.ckpt", model, state, val_loss)
            for row in epoch_rows:
                _write_row(log_file, row)
            if stop:
                break
    finally:
        if log_file is not None:
            log_file.close()
    if ckpt_dir is not None:
        _save(Path(ckpt_dir) / "last.ckpt", model, state, None)
    return result


def _train_step(model: Model, batch: list[Example], state: AdamState, cfg: TrainConfig,
                weights: LossWeights, epoch: int) -> TrainLogRow:
    model.zero_grad()
    sums = np.zeros(4)
    for j, ex in enumerate(batch):
        rng = np.random.default_rng([cfg.seed, state.step, j])
        try:
            parts, _ = example_loss(model, ex, weights, train=True, rng=rng)
        except NumericError as exc:
            raise NumericError(f"non-finite value at step {state.step} on example {ex.id!r}: {exc}") from exc
        if not np.isfinite(parts.total.item()):
            raise NumericError(f"non-finite loss at step {state.step} on example {ex.id!r}")
        (parts.total * (1.0 / len(batch))).backward()
        sums += (parts.total.item(), parts.mag, parts.complex, parts.time)
    params = _params(model)
    grads = {n: (model.p(n).grad if model.p(n).grad is not None else np.zeros_like(p))
             for n, p in params.items()}
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
    if not np.isfinite(norm):
        raise NumericError(f"non-finite gradient at step {state.step} on batch {[ex.id for ex in batch]}")
    if cfg.grad_clip is not None and norm > cfg.grad_clip:
        grads = {n: g * (cfg.grad_clip / norm) for n, g in grads.items()}
    adam_step(params, grads, state, cfg)
    mean = sums / len(batch)
    return TrainLogRow(state.step, epoch, *map(float, mean), norm)


def _save(path: Path, model: Model, state: AdamState, val_loss) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(path, model, step=state.step, optimizer=state.to_arrays(),
                    meta={"val_loss": val_loss})


def resume_from(path) -> tuple[Model, AdamState]:
    ckpt = load_checkpoint(path)
    return ckpt.model, AdamState.from_arrays(ckpt.optimizer, ckpt.step)


_LOG_FIELDS = [f.name for f in dataclasses.fields(TrainLogRow)]


def _open_log(path, append: bool):
    if path is None:
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not append or not path.exists()
    fh = open(path, "w" if fresh else "a", newline="")
    if fresh:
        fh.write("\t".join(_LOG_FIELDS) + "\n")
    return fh


def _write_row(fh, row: TrainLogRow) -> None:
    if fh is None:
        return
    writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
    writer.writerow(["" if v is None else v for v in dataclasses.astuple(row)])
    fh.flush()
