"""Training loop: sample triplets, backpropagate, Adam-update both branches.

Each batch samples triplets from the train split only, embeds anchors
through the tag branch and songs through the song branch, averages the
triplet-loss gradients over the batch, and applies one Adam step per
branch. Validation metrics run the full retrieval pipeline on the
validation split every ``validation_every`` epochs and at the final epoch,
writing a checkpoint alongside each report.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import RetrievalDataset, SplitAssignment
from .errors import DomainError, NumericalError
from .core import split_rng
from .net import (
    AdamState,
    MlpBranch,
    adam_step,
    backward_batch,
    forward_batch,
    new_adam_state,
    new_branch,
)
from .retrieval import evaluate
from .triplet import (
    SamplerConfig,
    SamplerView,
    sample_balanced,
    sample_balanced_weighted,
    sample_random,
    triplet_loss_grad_batch,
)

# rng stream indices derived from the config seed
_STREAM_INIT = 0
_STREAM_SAMPLER = 1


@dataclass
class TrainConfig:
    epochs: int = 200
    triplets_per_epoch: int = 10000
    batch_size: int = 128
    lr: float = 1e-4
    weight_decay: float = 1e-4
    margin: float = 0.2
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    seed: int = 0
    validation_every: int = 10

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise DomainError(f"epochs must be >= 0, got {self.epochs}")
        if self.triplets_per_epoch < 1 or self.batch_size < 1 or self.validation_every < 1:
            raise DomainError("triplets_per_epoch, batch_size, validation_every must be >= 1")
        if self.lr <= 0.0 or self.margin <= 0.0:
            raise DomainError("lr and margin must be positive")


@dataclass
class ReportRow:
    epoch: int
    loss: float
    map: float
    p_at_10: float
    seconds: float


@dataclass
class TrainReport:
    rows: list[ReportRow] = field(default_factory=list)

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch\tloss\tmap\tp10\tseconds\n")
            for r in self.rows:
                fh.write(
                    f"{r.epoch}\t{r.loss:.9g}\t{r.map:.9g}\t{r.p_at_10:.9g}\t{r.seconds:.3f}\n"
                )


def _save_state(path, tag_branch, song_branch, tag_state, song_state) -> None:
    from .net import save_checkpoint

    save_checkpoint(
        path,
        {"tag": tag_branch, "song": song_branch},
        {"tag": tag_state, "song": song_state},
    )


def init_branches(dataset: RetrievalDataset, seed: int) -> tuple[MlpBranch, MlpBranch]:
    """Freshly initialized tag and song branches for this dataset's dims."""
    if dataset.tag_vectors is None:
        raise DomainError("dataset has no tag vectors attached")
    rng = split_rng(seed, _STREAM_INIT)
    tag_branch = new_branch(dataset.tag_vectors.shape[1], rng)
    song_branch = new_branch(dataset.inputs.shape[1], rng)
    return tag_branch, song_branch


def train(
    dataset: RetrievalDataset,
    split: SplitAssignment,
    config: TrainConfig,
    out_dir=None,
    batch_callback=None,
) -> tuple[MlpBranch, MlpBranch, TrainReport]:
    """Run the full training loop; returns both branches and the report.

    With ``out_dir`` set, a checkpoint is written at every validation
    report plus ``final.ckpt`` and ``best.ckpt`` (highest validation MAP).
    ``batch_callback(epoch, batch_index, batch, mean_loss)`` is invoked
    after every batch when given. A non-finite loss aborts with
    NumericalError after writing ``diagnostic.ckpt``.
    """
    tag_branch, song_branch = init_branches(dataset, config.seed)
    tag_state = new_adam_state(tag_branch)
    song_state = new_adam_state(song_branch)
    report = TrainReport()
    if config.epochs == 0:
        return tag_branch, song_branch, report

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    view = SamplerView.build(dataset, split.train)
    sample_rng = split_rng(config.seed, _STREAM_SAMPLER)
    strategy = config.sampler.strategy
    start = time.perf_counter()
    best_map = -1.0

    def draw(batch_size: int):
        if strategy == "random":
            return sample_random(view, batch_size, sample_rng)
        if strategy == "balanced":
            return sample_balanced(view, batch_size, sample_rng)
        return sample_balanced_weighted(
            view, batch_size, tag_branch, song_branch, config.sampler, sample_rng, dataset=dataset
        )

    for epoch in range(1, config.epochs + 1):
        loss_sum = 0.0
        done = 0
        batch_index = 0
        while done < config.triplets_per_epoch:
            bs = min(config.batch_size, config.triplets_per_epoch - done)
            batch = draw(bs)
            Xa = dataset.tag_vectors[batch.anchors]
            Xp = dataset.inputs[batch.positives]
            Xn = dataset.inputs[batch.negatives]
            Ea, cache_a = forward_batch(tag_branch, Xa)
            Ep, cache_p = forward_batch(song_branch, Xp)
            En, cache_n = forward_batch(song_branch, Xn)
            losses, Ga, Gp, Gn = triplet_loss_grad_batch(Ea, Ep, En, config.margin)
            mean_loss = float(losses.mean())
            if not np.isfinite(mean_loss):
                if out_path is not None:
                    _save_state(out_path / "diagnostic.ckpt", tag_branch, song_branch, tag_state, song_state)
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            grads_tag, _ = backward_batch(tag_branch, cache_a, Ga / bs)
            grads_p, _ = backward_batch(song_branch, cache_p, Gp / bs)
            grads_n, _ = backward_batch(song_branch, cache_n, Gn / bs)
            grads_song = grads_p.add_(grads_n)
            adam_step(tag_branch, grads_tag, tag_state, config.lr, config.weight_decay)
            adam_step(song_branch, grads_song, song_state, config.lr, config.weight_decay)
            loss_sum += mean_loss * bs
            done += bs
            if batch_callback is not None:
                batch_callback(epoch, batch_index, batch, mean_loss)
            batch_index += 1
        if epoch % config.validation_every == 0 or epoch == config.epochs:
            epoch_loss = loss_sum / config.triplets_per_epoch
            val = evaluate(tag_branch, song_branch, dataset, split.valid)
            row = ReportRow(
                epoch=epoch,
                loss=epoch_loss,
                map=val.map,
                p_at_10=val.p_at_10,
                seconds=time.perf_counter() - start,
            )
            report.rows.append(row)
            if out_path is not None:
                _save_state(
                    out_path / f"epoch_{epoch:04d}.ckpt", tag_branch, song_branch, tag_state, song_state
                )
                if val.map > best_map:
                    best_map = val.map
                    _save_state(out_path / "best.ckpt", tag_branch, song_branch, tag_state, song_state)
    if out_path is not None:
        _save_state(out_path / "final.ckpt", tag_branch, song_branch, tag_state, song_state)
    return tag_branch, song_branch, report
