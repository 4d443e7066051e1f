"""Two-stage training loop: grayscale+infrared warm-up, then visible+infrared.

Epochs ``[0, stage1_epochs)`` sample grayscale+infrared batches and minimize
the within-modality triplet plus identity loss; the remaining epochs sample
visible+infrared batches and minimize the global triplet plus the weighted
enhancement and center terms. ``schedule="rgb_first"`` plays the two phases
in the opposite order (visible+infrared first), which is only useful as an
ablation baseline.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from .batch import BatchSpec, LabeledBatch, Modality, Stage, sample_batch
from .core import RngStream
from .errors import ConfigError, CrossmodalError
from .evalkit import EvalReport, evaluate
from .losses import LossConfig, stage1_objective, stage2_objective
from .model import (
    TRAIN,
    ModelParams,
    backward,
    extract_test_features,
    forward,
    init_params,
    update_bn_stats,
)
from .optim import cosine_lr, init_optim_state, step
from .synthdata import SynthDataset

SCHEDULES = ("gray_first", "rgb_first")
DIRECTIONS = ("t2v", "v2t")


@dataclass
class TrainConfig:
    """Everything that determines a run, apart from the dataset itself."""

    p: int = 8
    k: int = 4
    hidden_dim: int = 32
    embed_dim: int = 16
    activation: str = "relu"
    bn_momentum: float = 0.1
    epochs: int = 40
    stage1_epochs: int = 10
    schedule: str = "gray_first"
    loss: LossConfig = field(default_factory=LossConfig)
    base_lr: float = 3e-4
    min_lr: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    per_step_schedule: bool = False
    reset_optimizer_at_switch: bool = False
    seed: int = 0
    eval_every: int = 0
    eval_direction: str = "t2v"

    def resolved_min_lr(self) -> float:
        return self.base_lr / 100.0 if self.min_lr is None else self.min_lr

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not 0 <= self.stage1_epochs <= self.epochs:
            raise ConfigError("need 0 <= stage1_epochs <= epochs")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}")
        if self.eval_direction not in DIRECTIONS:
            raise ConfigError(f"eval_direction must be one of {DIRECTIONS}")
        if self.eval_every < 0:
            raise ConfigError("eval_every must be >= 0")
        if self.base_lr < 0 or self.resolved_min_lr() > self.base_lr:
            raise ConfigError("need 0 <= min_lr <= base_lr")
        BatchSpec(self.p, self.k)
        self.loss.validate()
        return self


@dataclass
class EpochLog:
    """Per-epoch record: stage, mean loss terms over batches, lr, optional eval."""

    epoch: int
    stage: int
    lr: float
    terms: dict[str, float]
    n_batches: int
    eval: EvalReport | None = None


def stage_for_epoch(cfg: TrainConfig, epoch: int) -> Stage:
    """Which stage the schedule assigns to this epoch.

    Stage 1 always receives exactly ``stage1_epochs`` epochs: at the start
    under ``gray_first``, at the end under ``rgb_first``. Both schedules
    therefore spend identical per-stage budgets and differ only in order.
    """
    if cfg.schedule == "gray_first":
        return Stage.STAGE1 if epoch < cfg.stage1_epochs else Stage.STAGE2
    return Stage.STAGE2 if epoch < cfg.epochs - cfg.stage1_epochs else Stage.STAGE1


def evaluate_params(
    params: ModelParams,
    dataset: SynthDataset,
    direction: str = "t2v",
    metric: str = "euclid",
    bins: int = 30,
) -> EvalReport:
    """Score retrieval on a dataset with the post-norm test features.

    ``t2v`` queries infrared rows against the visible gallery; ``v2t`` swaps
    the roles.
    """
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}")
    ir_rows = dataset.modality_rows(Modality.IR)
    vis_rows = dataset.modality_rows(Modality.VIS)
    if ir_rows.size == 0 or vis_rows.size == 0:
        raise ConfigError("evaluation needs both visible and infrared rows")
    q_rows, g_rows = (ir_rows, vis_rows) if direction == "t2v" else (vis_rows, ir_rows)
    q_tag, g_tag = ("ir", "vis") if direction == "t2v" else ("vis", "ir")
    qf = extract_test_features(params, dataset.features[q_rows])
    gf = extract_test_features(params, dataset.features[g_rows])
    return evaluate(
        qf,
        dataset.labels[q_rows],
        gf,
        dataset.labels[g_rows],
        query_tag=q_tag,
        gallery_tag=g_tag,
        metric=metric,
        bins=bins,
    )


def _check_dataset(dataset: SynthDataset, cfg: TrainConfig, stages: set[Stage]) -> None:
    spec = BatchSpec(cfg.p, cfg.k)
    ids = dataset.identities
    if len(ids) < spec.p:
        raise ConfigError(f"dataset has {len(ids)} identities, batches need {spec.p}")
    for stage in stages:
        for mod in stage.modality_pair:
            short = [i for i in ids if dataset.count_of(int(i), mod) < spec.k]
            if short:
                raise ConfigError(
                    f"{stage.name} needs {spec.k} {mod!r} rows per identity; "
                    f"identities {short[:4]} fall short"
                )


def steps_per_epoch(dataset: SynthDataset, cfg: TrainConfig) -> int:
    """ceil(visible+infrared row count / batch size); grayscale mirrors visible."""
    n = dataset.modality_rows(Modality.VIS).size + dataset.modality_rows(Modality.IR).size
    return max(1, math.ceil(n / (2 * cfg.p * cfg.k)))


def train(
    dataset: SynthDataset,
    cfg: TrainConfig,
    eval_dataset: SynthDataset | None = None,
    on_epoch=None,
) -> tuple[ModelParams, list[EpochLog]]:
    """Run the full schedule and return the final parameters plus per-epoch logs.

    Identical ``(dataset, cfg)`` pairs reproduce identical parameters and logs.
    The final epoch always evaluates (on ``eval_dataset`` when given, else on
    the training set); ``eval_every=n`` adds an evaluation after every n-th
    epoch. ``on_epoch(epoch, params, log)`` is called after each epoch when
    provided, e.g. to stream logs or save checkpoints.
    """
    cfg.validate()
    stages = {stage_for_epoch(cfg, e) for e in range(cfg.epochs)}
    _check_dataset(dataset, cfg, stages)
    classes = dataset.identities
    spec = BatchSpec(cfg.p, cfg.k)
    root = RngStream(cfg.seed)
    params = init_params(
        dataset.dim,
        cfg.hidden_dim,
        cfg.embed_dim,
        n_classes=len(classes),
        rng=root.child(0),
        activation=cfg.activation,
    )
    opt = init_optim_state(
        params, cfg.base_lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay
    )
    n_steps = steps_per_epoch(dataset, cfg)
    min_lr = cfg.resolved_min_lr()
    eval_ds = eval_dataset if eval_dataset is not None else dataset
    logs: list[EpochLog] = []
    prev_stage: Stage | None = None
    for epoch in range(cfg.epochs):
        stage = stage_for_epoch(cfg, epoch)
        if cfg.reset_optimizer_at_switch and prev_stage is not None and stage != prev_stage:
            opt = init_optim_state(
                params, cfg.base_lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay
            )
        prev_stage = stage
        lr_epoch = cosine_lr(epoch, cfg.epochs, cfg.base_lr, min_lr)
        sums: dict[str, float] = defaultdict(float)
        for b in range(n_steps):
            try:
                batch = sample_batch(dataset, spec, stage, root.child(1, epoch, b))
                emb, _, logits, trace = forward(params, batch.features, TRAIN)
                emb_batch = replace(batch, features=emb)
                y = np.searchsorted(classes, batch.labels)
                if stage is Stage.STAGE1:
                    out = stage1_objective(emb_batch, logits, y, cfg.loss)
                else:
                    out = stage2_objective(emb_batch, logits, y, cfg.loss)
                grads = backward(
                    trace,
                    params,
                    d_embeddings=out.grad_embeddings,
                    d_logits=out.grad_logits,
                )
                if cfg.per_step_schedule:
                    lr = cosine_lr(epoch + b / n_steps, cfg.epochs, cfg.base_lr, min_lr)
                else:
                    lr = lr_epoch
                step(opt, params, grads, lr)
                update_bn_stats(params, trace, cfg.bn_momentum)
            except CrossmodalError as exc:
                raise type(exc)(f"epoch {epoch}, batch {b}: {exc}") from exc
            for key, val in out.terms.items():
                sums[key] += val
        terms = {key: val / n_steps for key, val in sums.items()}
        report = None
        last = epoch == cfg.epochs - 1
        if last or (cfg.eval_every > 0 and (epoch + 1) % cfg.eval_every == 0):
            report = evaluate_params(params, eval_ds, cfg.eval_direction)
        log = EpochLog(epoch, stage.value, lr_epoch, terms, n_steps, report)
        logs.append(log)
        if on_epoch is not None:
            on_epoch(epoch, params, log)
    return params, logs


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def ablate(
    dataset: SynthDataset,
    base_cfg: TrainConfig,
    variants: list[tuple[str, dict[str, str]]],
    seeds: list[int],
    eval_dataset: SynthDataset | None = None,
) -> list[dict]:
    """Train every config variant over the seed list; summarize final metrics.

    ``variants`` maps a name to dotted config-key overrides (see
    :mod:`crossmodal.config`); an empty list runs the base config alone. One
    failing variant is recorded as an error row and the rest still run.
    """
    from .config import apply_train_overrides

    if not seeds:
        raise ConfigError("ablation needs at least one seed")
    if not variants:
        variants = [("base", {})]
    rows: list[dict] = []
    for name, delta in variants:
        try:
            cfg = apply_train_overrides(base_cfg, delta)
            metrics: dict[str, list[float]] = defaultdict(list)
            for seed in seeds:
                run_cfg = replace(cfg, seed=int(seed))
                _, logs = train(dataset, run_cfg, eval_dataset)
                report = logs[-1].eval
                metrics["rank1"].append(report.rank1)
                metrics["mean_ap"].append(report.mean_ap)
                metrics["minp"].append(report.minp)
                metrics["gap_ratio"].append(report.gap_ratio)
                metrics["pos_sim"].append(report.pos_sim_mean)
        except CrossmodalError as exc:
            rows.append({"variant": name, "error": str(exc)})
            continue
        row: dict = {"variant": name, "seeds": len(seeds)}
        for key, values in metrics.items():
            mean, std = _mean_std(values)
            row[f"{key}_mean"] = mean
            row[f"{key}_std"] = std
            row[f"{key}_values"] = values
        rows.append(row)
    return rows


def ablation_table(rows: list[dict]) -> str:
    """Delimiter-separated summary of :func:`ablate` rows."""
    cols = [
        "variant",
        "seeds",
        "rank1_mean",
        "rank1_std",
        "mean_ap_mean",
        "mean_ap_std",
        "minp_mean",
        "minp_std",
        "gap_ratio_mean",
        "gap_ratio_std",
        "pos_sim_mean",
        "pos_sim_std",
    ]
    lines = [",".join(cols)]
    for row in rows:
        if "error" in row:
            lines.append(f"{row['variant']},error: {row['error']}")
            continue
        cells = [str(row["variant"]), str(row["seeds"])]
        for key in ("rank1", "mean_ap", "minp", "gap_ratio", "pos_sim"):
            cells.append(f"{row[f'{key}_mean']:.6f}")
            cells.append(f"{row[f'{key}_std']:.6f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
