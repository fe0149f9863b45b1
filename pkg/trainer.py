"""
Desk-scale PBO Trainer

Synthetic motion classification with a minimal spiking model:

    clip -> PBO pre-filter -> per-frame flatten -> frozen random projection
         -> LIF layer over T steps (surrogate spikes) -> mean rate -> linear readout

Only mu_raw, sigma_raw and the readout are trained, with momentum SGD on
cross-entropy plus the weighted consistency loss. Gradients come from the
`tape` module through the readout, the spikes, the LIF recursion, the
pre-filter and the lambda schedule.

Prefilter modes:
- "pbo": lambda[t] = mu + A sin(omega t + phi) (set A = 0 for the
  time-invariant ablation)
- "lif-only": lambda = 0 (no pre-filter)
- "highpass": lambda = 1 (frame difference)
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import tape as ops
from consistency import DEFAULT_CONSISTENCY_WEIGHT, consistency_value
from core import DivergedError, FrameClip, InvalidInput, make_rng
from lif import DEFAULT_SURROGATE_SHARPNESS, LifParams
from pbo import DEFAULT_AMPLITUDE, DEFAULT_PHASE, PboParams, init_params

logger = logging.getLogger(__name__)

PREFILTER_MODES = ("pbo", "lif-only", "highpass")
TRAIN_FRACTION = 0.8


# ============================================================================
# CONFIGURATION RECORDS
# ============================================================================

class SyntheticTaskSpec(BaseModel):
    """
    DC-dominated motion classification task.

    Every clip shares one spatial background of power `dc_background_power`;
    class k adds its own random spatial pattern modulated by a sinusoid at
    `class_tones[k]` with power `tone_power` (amplitude sqrt(2 * tone_power)).
    A positive `scene_std` adds a static random scene per clip, a
    class-independent nuisance that lives entirely at DC.
    """

    model_config = ConfigDict(frozen=True)

    n_classes: int = Field(default=2, ge=2)
    T: int = Field(default=16, ge=4)
    C: int = Field(default=1, ge=1)
    H: int = Field(default=4, ge=1)
    W: int = Field(default=4, ge=1)
    class_tones: List[float] = Field(default_factory=lambda: [math.pi / 2, 3 * math.pi / 4])
    dc_background_power: float = Field(default=1.0, ge=0.0)
    tone_power: float = Field(default=0.05, ge=0.0)
    noise_std: float = Field(default=0.05, ge=0.0)
    scene_std: float = Field(default=0.0, ge=0.0)
    clips_per_class: int = Field(default=20, ge=2)
    stride: int = Field(default=1, ge=1)
    seed: int = 20260118

    @field_validator("class_tones")
    @classmethod
    def _check_tones(cls, tones):
        if any(not 0.0 < tone <= math.pi for tone in tones):
            raise ValueError(f"class tones must lie in (0, pi], got {tones}")
        if len(set(tones)) != len(tones):
            raise ValueError(f"class tones must be pairwise distinct, got {tones}")
        return tones

    @model_validator(mode="after")
    def _check_task(self):
        if len(self.class_tones) != self.n_classes:
            raise ValueError(
                f"{self.n_classes} classes need as many tones, got {len(self.class_tones)}"
            )
        if self.tone_power > 0.0 and self.dc_background_power < 10.0 * self.tone_power:
            raise ValueError("the DC background must carry at least 10x the tone power")
        return self


class TrainConfig(BaseModel):
    """Optimization and model settings of one training run."""

    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=30, ge=0)
    batch_size: int = Field(default=8, ge=1)
    learning_rate: float = Field(default=0.05, gt=0.0)
    readout_learning_rate: float = Field(default=0.01, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    alpha_weight: float = Field(default=DEFAULT_CONSISTENCY_WEIGHT, ge=0.0)
    surrogate_k: float = Field(default=DEFAULT_SURROGATE_SHARPNESS, gt=0.0)
    seed: int = 20260118
    hidden: int = Field(default=32, ge=1)
    projection_gain: float = Field(default=4.0, gt=0.0)
    tau: float = Field(default=0.7, gt=0.0, lt=1.0)
    v_th: float = 1.0
    A: float = Field(default=DEFAULT_AMPLITUDE, ge=0.0)
    mu_init: float = Field(default=0.5, gt=0.0, lt=1.0)
    phi: float = DEFAULT_PHASE
    mode: str = "pbo"
    learn_pbo: bool = True
    use_intensity: bool = True
    use_gradient: bool = True
    smooth: bool = False

    @field_validator("mode")
    @classmethod
    def _check_mode(cls, mode):
        if mode not in PREFILTER_MODES:
            raise ValueError(f"mode must be one of {PREFILTER_MODES}, got '{mode}'")
        return mode


class SpikeStats(BaseModel):
    """Firing ratio per (layer, step)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    firing_ratio: np.ndarray
    layers: List[str] = Field(default_factory=lambda: ["lif"])

    @field_validator("firing_ratio", mode="before")
    @classmethod
    def _check_ratio(cls, value):
        ratio = np.atleast_2d(np.asarray(value, dtype=np.float64))
        if ratio.ndim != 2 or np.any(ratio < 0.0) or np.any(ratio > 1.0):
            raise ValueError("firing ratios must form a layer x step matrix within [0, 1]")
        return ratio


class Dataset(BaseModel):
    """Train/validation tensors of shape (N, T, C, H, W) with integer labels."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray

    def clips(self, split: str = "train") -> List[Tuple[FrameClip, int]]:
        x, y = (self.train_x, self.train_y) if split == "train" else (self.val_x, self.val_y)
        return [(FrameClip(data=clip), int(label)) for clip, label in zip(x, y)]


class TinyModel(BaseModel):
    """Two PBO scalars, frozen projection, shared LIF parameters and readout."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pbo: PboParams
    proj: np.ndarray
    lif: LifParams
    readout_w: np.ndarray
    readout_b: np.ndarray
    mode: str = "pbo"


class ForwardResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    logits: np.ndarray
    stats: SpikeStats
    ym: np.ndarray
    currents: np.ndarray


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_acc: float
    mu: float
    omega: float


class TrainReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    history: List[EpochRecord]
    lambda_trajectory: List[List[float]]
    final_stats: SpikeStats
    final_params: Dict[str, float]
    final_val_acc: float


# ============================================================================
# DATASET
# ============================================================================

def gen_dataset(spec: SyntheticTaskSpec) -> Dataset:
    """
    Generate the labeled clips and split them 80/20 per class.

    Deterministic given spec.seed.
    """
    rng = make_rng(spec.seed)
    shape = (spec.C, spec.H, spec.W)
    dc_level = math.sqrt(spec.dc_background_power)
    background = dc_level * (1.0 + 0.1 * rng.standard_normal(shape))
    patterns = [rng.standard_normal(shape) for _ in range(spec.n_classes)]
    amplitude = math.sqrt(2.0 * spec.tone_power)
    t = (spec.stride * np.arange(spec.T, dtype=np.float64))[:, None, None, None]

    clips, labels = [], []
    for label, (tone, pattern) in enumerate(zip(spec.class_tones, patterns)):
        for _ in range(spec.clips_per_class):
            phase = rng.uniform(0.0, 2.0 * math.pi)
            clip = background + amplitude * np.sin(tone * t + phase) * pattern
            if spec.scene_std > 0.0:
                clip = clip + spec.scene_std * rng.standard_normal(shape)
            if spec.noise_std > 0.0:
                clip = clip + spec.noise_std * rng.standard_normal(clip.shape)
            clips.append(clip)
            labels.append(label)
    clips = np.stack(clips)
    labels = np.array(labels, dtype=np.int64)

    train_idx, val_idx = [], []
    n_train = min(int(round(TRAIN_FRACTION * spec.clips_per_class)), spec.clips_per_class - 1)
    for label in range(spec.n_classes):
        members = rng.permutation(np.flatnonzero(labels == label))
        train_idx.extend(members[:n_train])
        val_idx.extend(members[n_train:])
    train_idx, val_idx = np.array(train_idx), np.array(val_idx)
    logger.info("Generated %d train / %d val clips", train_idx.size, val_idx.size)
    return Dataset(train_x=clips[train_idx], train_y=labels[train_idx],
                   val_x=clips[val_idx], val_y=labels[val_idx])


# ============================================================================
# MODEL
# ============================================================================

def init_model(spec: SyntheticTaskSpec, cfg: TrainConfig) -> TinyModel:
    """Seeded model with the PBO initialized for clip length T at mu = cfg.mu_init."""
    rng = make_rng(cfg.seed)
    chw = spec.C * spec.H * spec.W
    proj = cfg.projection_gain * rng.standard_normal((chw, cfg.hidden)) / math.sqrt(chw)
    return TinyModel(
        pbo=init_params(spec.T, A=cfg.A, phi=cfg.phi, mu=cfg.mu_init),
        proj=proj,
        lif=LifParams(tau=cfg.tau, v_th=cfg.v_th),
        readout_w=np.zeros((cfg.hidden, spec.n_classes)),
        readout_b=np.zeros(spec.n_classes),
        mode=cfg.mode,
    )


def _schedule(model: TinyModel, params: Dict, T: int):
    if model.mode == "lif-only":
        return np.zeros(T)
    if model.mode == "highpass":
        return np.ones(T)
    t = np.arange(T, dtype=np.float64)
    mu = ops.sigmoid(params["mu_raw"])
    omega = math.pi * ops.sigmoid(params["sigma_raw"])
    return mu + model.pbo.A * ops.sin(omega * t + model.pbo.phi)


def _run(model: TinyModel, x: np.ndarray, params: Dict, k: float, smooth: bool):
    """
    Forward pass on a batch (N, T, C, H, W); `params` values may be tape variables.

    Returns:
        tuple: (logits, per-step spikes, ym, currents, lambdas)
    """
    N, T = x.shape[:2]
    lambdas = _schedule(model, params, T)
    previous = np.concatenate([x[:, :1], x[:, :-1]], axis=1)
    ym = x - ops.reshape(lambdas, (1, T, 1, 1, 1)) * previous
    currents = ops.reshape(ym, (N, T, -1)) @ model.proj

    lif = model.lif
    v = np.full((N, model.proj.shape[1]), lif.v_reset)
    spikes = []
    for step in range(T):
        u = v + lif.tau * (currents[:, step, :] - (v - lif.v_reset))
        s = ops.spike(u, lif.v_th, k, smooth)
        v = u * (1.0 - s) + lif.v_reset * s
        spikes.append(s)
    rates = ops.mean(ops.stack(spikes, axis=1), axis=1)
    logits = rates @ params["readout_w"] + params["readout_b"]
    return logits, spikes, ym, currents, lambdas


def _param_values(model: TinyModel) -> Dict[str, np.ndarray]:
    return {
        "mu_raw": np.asarray(model.pbo.mu_raw),
        "sigma_raw": np.asarray(model.pbo.sigma_raw),
        "readout_w": model.readout_w,
        "readout_b": model.readout_b,
    }


def _stats(spikes) -> SpikeStats:
    ratio = [float(np.mean(ops.value_of(s))) for s in spikes]
    return SpikeStats(firing_ratio=[ratio])


def forward(model: TinyModel, clip, k: float = DEFAULT_SURROGATE_SHARPNESS,
            smooth: bool = False) -> ForwardResult:
    """
    Run one clip (FrameClip or T x C x H x W array) through the model.

    Raises:
        InvalidInput: if the clip's C*H*W does not match the projection
    """
    x = clip.data if isinstance(clip, FrameClip) else np.asarray(clip, dtype=np.float64)
    if x.ndim != 4 or int(np.prod(x.shape[1:])) != model.proj.shape[0]:
        raise InvalidInput(f"clip shape {x.shape} does not match the model")
    logits, spikes, ym, currents, _ = _run(model, x[None], _param_values(model), k, smooth)
    return ForwardResult(logits=logits[0], stats=_stats(spikes), ym=ym[0], currents=currents[0])


def _cross_entropy(logits, labels: np.ndarray, n_classes: int):
    onehot = np.eye(n_classes)[labels]
    picked = ops.sum(logits * onehot, axis=1)
    return ops.mean(ops.logsumexp(logits, axis=1) - picked)


def _objective(model: TinyModel, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, params: Dict):
    n_classes = model.readout_w.shape[1]
    logits, spikes, ym, _, lambdas = _run(model, x, params, cfg.surrogate_k, cfg.smooth)
    ce = _cross_entropy(logits, y, n_classes)
    loss = ce
    if cfg.alpha_weight > 0.0:
        previous = np.concatenate([x[:, :1], x[:, :-1]], axis=1)
        consist = consistency_value(ym, x, x - previous, lambdas,
                                    cfg.use_intensity, cfg.use_gradient)
        loss = ce + cfg.alpha_weight * consist
    return loss, logits, spikes


def loss_and_grads(model: TinyModel, batch: Tuple[np.ndarray, np.ndarray],
                   cfg: TrainConfig) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Loss and gradients for mu_raw, sigma_raw, readout_w and readout_b.

    Args:
        model (TinyModel): current parameters
        batch (tuple): clips (N, T, C, H, W) and labels (N,)
        cfg (TrainConfig): loss weights and surrogate settings

    Returns:
        tuple: (loss, gradient per parameter name)
    """
    x, y = batch
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 1:
        raise InvalidInput("loss_and_grads needs a non-empty batch")
    tape = ops.Tape()
    params = {name: tape.var(value) for name, value in _param_values(model).items()}
    loss, _, _ = _objective(model, x, np.asarray(y), cfg, params)
    names = list(params)
    grads = tape.gradient(loss, [params[name] for name in names])
    return float(ops.value_of(loss)), dict(zip(names, grads))


def evaluate(model: TinyModel, x: np.ndarray, y: np.ndarray,
             cfg: TrainConfig) -> Tuple[float, float, SpikeStats]:
    """Loss, accuracy and spike statistics without updates."""
    loss, logits, spikes = _objective(model, np.asarray(x, dtype=np.float64),
                                      np.asarray(y), cfg, _param_values(model))
    accuracy = float(np.mean(np.argmax(logits, axis=1) == np.asarray(y)))
    return float(loss), accuracy, _stats(spikes)


def _with_params(model: TinyModel, values: Dict[str, np.ndarray]) -> TinyModel:
    pbo = model.pbo.model_copy(update={"mu_raw": float(values["mu_raw"]),
                                       "sigma_raw": float(values["sigma_raw"])})
    return model.model_copy(update={"pbo": pbo, "readout_w": values["readout_w"],
                                    "readout_b": values["readout_b"]})


def current_lambdas(model: TinyModel, T: int) -> np.ndarray:
    return np.asarray(_schedule(model, _param_values(model), T), dtype=np.float64)


# ============================================================================
# TRAINING
# ============================================================================

def train(cfg: TrainConfig, spec: SyntheticTaskSpec,
          dataset: Optional[Dataset] = None) -> TrainReport:
    """
    Momentum SGD on the PBO scalars and the readout.

    Epoch 0 records the initial metrics; each later record follows one pass
    over the shuffled training split.

    Raises:
        DivergedError: if a loss becomes non-finite
    """
    dataset = dataset or gen_dataset(spec)
    model = init_model(spec, cfg)
    rng = make_rng(cfg.seed + 1)
    trainable = ["readout_w", "readout_b"]
    if cfg.learn_pbo and cfg.mode == "pbo":
        trainable = ["mu_raw", "sigma_raw"] + trainable
    rates = {"mu_raw": cfg.learning_rate, "sigma_raw": cfg.learning_rate,
             "readout_w": cfg.readout_learning_rate, "readout_b": cfg.readout_learning_rate}
    velocity = {name: np.zeros_like(value) for name, value in _param_values(model).items()}

    def record(epoch: int, train_loss: float) -> EpochRecord:
        _, val_acc, _ = evaluate(model, dataset.val_x, dataset.val_y, cfg)
        entry = EpochRecord(epoch=epoch, train_loss=train_loss, val_acc=val_acc,
                            mu=model.pbo.mu, omega=model.pbo.omega)
        logger.info("epoch %d loss %.5f val_acc %.3f mu %.4f omega %.4f",
                    epoch, train_loss, val_acc, entry.mu, entry.omega)
        return entry

    initial_loss, _, _ = evaluate(model, dataset.train_x, dataset.train_y, cfg)
    if not math.isfinite(initial_loss):
        raise DivergedError(f"initial loss is {initial_loss}")
    history = [record(0, initial_loss)]
    trajectory = [current_lambdas(model, spec.T).tolist()]

    n_train = dataset.train_x.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_train)
        losses = []
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model, (dataset.train_x[idx], dataset.train_y[idx]), cfg)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergedError(f"non-finite loss {loss} at epoch {epoch}")
            values = _param_values(model)
            for name in trainable:
                velocity[name] = cfg.momentum * velocity[name] + grads[name]
                values[name] = values[name] - rates[name] * velocity[name]
            model = _with_params(model, values)
            losses.append(loss)
        history.append(record(epoch, float(np.mean(losses))))
        trajectory.append(current_lambdas(model, spec.T).tolist())

    _, final_acc, final_stats = evaluate(model, dataset.val_x, dataset.val_y, cfg)
    return TrainReport(history=history, lambda_trajectory=trajectory,
                       final_stats=final_stats, final_params=model.pbo.to_json_dict(),
                       final_val_acc=final_acc)


def mechanism_check(cfg: TrainConfig, spec: SyntheticTaskSpec,
                    seeds: Sequence[int]) -> Dict[str, Dict]:
    """
    Final validation accuracy of the learnable PBO, the lambda = 0 baseline and
    the A = 0 ablation over several seeds.
    """
    variants = {
        "pbo": cfg,
        "lif-only": cfg.model_copy(update={"mode": "lif-only"}),
        "A=0": cfg.model_copy(update={"A": 0.0}),
    }
    summary = {}
    for name, variant in variants.items():
        accuracies = []
        for seed in seeds:
            run_spec = spec.model_copy(update={"seed": int(seed)})
            run_cfg = variant.model_copy(update={"seed": int(seed)})
            accuracies.append(train(run_cfg, run_spec).final_val_acc)
        summary[name] = {"accuracies": accuracies, "median": float(np.median(accuracies))}
        logger.info("mechanism %s median val_acc %.3f", name, summary[name]["median"])
    return summary


def spike_report(stats: SpikeStats) -> pd.DataFrame:
    """Layer x step firing-ratio table."""
    ratio = stats.firing_ratio
    return pd.DataFrame(ratio, index=pd.Index(stats.layers, name="layer"),
                        columns=[f"t{step}" for step in range(ratio.shape[1])])


def write_spike_csv(stats: SpikeStats, path) -> None:
    spike_report(stats).to_csv(path, float_format="%.12g", lineterminator="\n")
