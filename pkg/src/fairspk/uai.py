"""Split-representation embedding transforms trained with an alternating schedule.

The encoder maps an input embedding ``x`` to ``[e1 | e2]``. The primary
branch (encoder, speaker predictor, decoder) learns ``e1`` as the speaker
code and reconstructs ``x`` from ``e2`` and a dropout-perturbed ``e1``. The
secondary branch (two disentanglers) tries to predict each code from the
other, while the encoder is pushed to make those predictions uninformative.
A group discriminator on ``e1`` is attached to either branch: trained jointly
with the predictor (multi-task) or adversarially against the encoder.

Six modes select which blocks take part:

========  =======  =========  =======  ============  =============
mode      encoder  predictor  decoder  disentangler  discriminator
========  =======  =========  =======  ============  =============
nldr      yes      yes
uai       yes      yes        yes      yes
mtl       yes      yes                               primary
at        yes      yes                               secondary
uai-at    yes      yes        yes      yes           secondary
uai-mtl   yes      yes        yes      yes           primary
========  =======  =========  =======  ============  =============
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DataError, DatasetSplit, Group
from .nn import AdamState, DenseNet, adam_step, dropout_mask, mse, softmax_xent

log = logging.getLogger(__name__)

MODULES = ("encoder", "predictor", "decoder", "dis1", "dis2", "discriminator")
DEFAULT_DELTAS = (10.0, 30.0, 50.0, 70.0, 100.0, 150.0, 200.0)


class Mode(str, enum.Enum):
    NLDR = "nldr"
    UAI = "uai"
    AT = "at"
    MTL = "mtl"
    UAI_AT = "uai-at"
    UAI_MTL = "uai-mtl"

    @classmethod
    def parse(cls, value: "str | Mode") -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(value.strip().lower().replace("_", "-"))
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown mode {value!r} (choose from {choices})") from None


class Placement(str, enum.Enum):
    NONE = "none"
    PRIMARY = "primary_branch"
    SECONDARY = "secondary_branch"


@dataclass(frozen=True)
class ModeActivity:
    encoder: bool
    predictor: bool
    decoder: bool
    disentangler: bool
    discriminator: bool
    placement: Placement

    @property
    def has_secondary(self) -> bool:
        return self.disentangler or self.placement is Placement.SECONDARY

    def primary_modules(self) -> tuple[str, ...]:
        mods = ["encoder", "predictor"]
        if self.decoder:
            mods.append("decoder")
        if self.placement is Placement.PRIMARY:
            mods.append("discriminator")
        return tuple(mods)

    def secondary_modules(self) -> tuple[str, ...]:
        if not self.has_secondary:
            return ()
        mods = ["encoder"]
        if self.disentangler:
            mods += ["dis1", "dis2"]
        if self.placement is Placement.SECONDARY:
            mods.append("discriminator")
        return tuple(mods)


MODE_ACTIVITY = {
    Mode.NLDR: ModeActivity(True, True, False, False, False, Placement.NONE),
    Mode.UAI: ModeActivity(True, True, True, True, False, Placement.NONE),
    Mode.MTL: ModeActivity(True, True, False, False, True, Placement.PRIMARY),
    Mode.AT: ModeActivity(True, True, False, False, True, Placement.SECONDARY),
    Mode.UAI_AT: ModeActivity(True, True, True, True, True, Placement.SECONDARY),
    Mode.UAI_MTL: ModeActivity(True, True, True, True, True, Placement.PRIMARY),
}


@dataclass
class TrainConfig:
    mode: Mode = Mode.UAI_MTL
    alpha: float = 100.0
    beta: float = 5.0
    gamma: float = 100.0
    delta: float = 10.0
    p_drop: float = 0.75
    batch: int = 128
    lr_primary: float = 1e-3
    lr_secondary: float = 1e-4
    weight_decay: float = 1e-4
    secondary_steps_per_primary: int = 10
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    dim_e1: int = 128
    dim_e2: int = 32
    encoder_hidden: tuple[int, ...] = (512, 512)
    decoder_hidden: tuple[int, ...] = (512, 512)
    disentangler_hidden: tuple[int, ...] = (128, 128)
    predictor_hidden: tuple[int, ...] = (256, 512)
    discriminator_hidden: tuple[int, ...] = (64,)
    val_fraction: float = 0.2

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        for name in ("encoder_hidden", "decoder_hidden", "disentangler_hidden",
                     "predictor_hidden", "discriminator_hidden"):
            setattr(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        for name in ("alpha", "beta", "gamma", "delta", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("batch", "secondary_steps_per_primary", "max_epochs", "patience",
                     "dim_e1", "dim_e2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError("p_drop must lie in [0, 1)")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.lr_primary <= 0 or self.lr_secondary <= 0:
            raise ValueError("learning rates must be positive")

    @property
    def activity(self) -> ModeActivity:
        return MODE_ACTIVITY[self.mode]

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["mode"] = self.mode.value
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class LossReport:
    l_pred: float = 0.0
    l_recon: float = 0.0
    l_dis1: float = 0.0
    l_dis2: float = 0.0
    l_bias: float = 0.0
    l_prim: float = 0.0
    l_sec: float = 0.0


# --------------------------------------------------------------------------- model

class UaiModel:
    """Parameter groups: encoder, predictor, decoder, two disentanglers, discriminator.

    Every block is built regardless of mode so checkpoints share one layout;
    blocks inactive in a mode are never updated.
    """

    N_GROUPS = 2

    def __init__(self, nets: dict[str, DenseNet], dim_e1: int, dim_e2: int):
        missing = set(MODULES) - set(nets)
        if missing:
            raise ValueError(f"missing modules {sorted(missing)}")
        if nets["encoder"].out_dim != dim_e1 + dim_e2:
            raise ValueError("encoder output must equal dim_e1 + dim_e2")
        self.nets = nets
        self.dim_e1 = dim_e1
        self.dim_e2 = dim_e2

    @classmethod
    def build(cls, in_dim: int, n_speakers: int, config: TrainConfig, rng=None) -> "UaiModel":
        if rng is None:
            rng = np.random.default_rng(config.seed)
        d1, d2 = config.dim_e1, config.dim_e2
        nets = {
            "encoder": DenseNet.build([in_dim, *config.encoder_hidden, d1 + d2], rng),
            "predictor": DenseNet.build([d1, *config.predictor_hidden, n_speakers], rng),
            "decoder": DenseNet.build([d1 + d2, *config.decoder_hidden, in_dim], rng),
            "dis1": DenseNet.build([d2, *config.disentangler_hidden, d1], rng),
            "dis2": DenseNet.build([d1, *config.disentangler_hidden, d2], rng),
            "discriminator": DenseNet.build([d1, *config.discriminator_hidden, cls.N_GROUPS], rng),
        }
        return cls(nets, d1, d2)

    @property
    def in_dim(self) -> int:
        return self.nets["encoder"].in_dim

    @property
    def n_speakers(self) -> int:
        return self.nets["predictor"].out_dim

    def params(self, module: str) -> list[np.ndarray]:
        return self.nets[module].params()

    def param_list(self, modules: Sequence[str]) -> list[np.ndarray]:
        return [p for m in modules for p in self.params(m)]

    def copy(self) -> "UaiModel":
        return UaiModel({k: v.copy() for k, v in self.nets.items()}, self.dim_e1, self.dim_e2)

    def snapshot(self) -> dict[str, list[np.ndarray]]:
        return {m: [p.copy() for p in self.params(m)] for m in MODULES}

    def split(self, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return e[:, : self.dim_e1], e[:, self.dim_e1:]

    def to_dict(self) -> dict:
        return {
            "format": "fairspk-uai",
            "version": 1,
            "dim_e1": self.dim_e1,
            "dim_e2": self.dim_e2,
            "modules": {m: self.nets[m].to_dict() for m in MODULES},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "UaiModel":
        if payload.get("format") != "fairspk-uai" or payload.get("version") != 1:
            raise ValueError("not a version-1 model checkpoint")
        nets = {m: DenseNet.from_dict(payload["modules"][m]) for m in MODULES}
        return cls(nets, payload["dim_e1"], payload["dim_e2"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "UaiModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ForwardOutputs:
    e1: np.ndarray
    e2: np.ndarray
    e1_perturbed: np.ndarray | None = None
    speaker_logits: np.ndarray | None = None
    reconstruction: np.ndarray | None = None
    e1_hat: np.ndarray | None = None
    e2_hat: np.ndarray | None = None
    group_logits: np.ndarray | None = None
    losses: LossReport | None = None


def forward_pass(
    model: UaiModel,
    config: TrainConfig,
    x: np.ndarray,
    s: np.ndarray | None = None,
    b: np.ndarray | None = None,
    train: bool = False,
    rng=None,
) -> ForwardOutputs:
    """Run every block active in ``config.mode``; losses are filled when labels are given.

    With ``train`` the decoder sees ``e1`` through a dropout mask drawn from
    ``rng``; otherwise it sees ``e1`` unchanged.
    """
    act = config.activity
    e1, e2 = model.split(model.nets["encoder"](x))
    out = ForwardOutputs(e1, e2)
    out.speaker_logits = model.nets["predictor"](e1)
    if act.decoder:
        if train:
            e1p = e1 * dropout_mask(e1.shape, config.p_drop, rng)
        else:
            e1p = e1
        out.e1_perturbed = e1p
        out.reconstruction = model.nets["decoder"](np.hstack([e1p, e2]))
    if act.disentangler:
        out.e1_hat = model.nets["dis1"](e2)
        out.e2_hat = model.nets["dis2"](e1)
    if act.discriminator:
        out.group_logits = model.nets["discriminator"](e1)

    if s is not None:
        rep = LossReport()
        rep.l_pred = softmax_xent(out.speaker_logits, s)[0]
        if act.decoder:
            rep.l_recon = mse(out.reconstruction, x)[0]
        if act.disentangler:
            rep.l_dis1 = mse(out.e1_hat, e1)[0]
            rep.l_dis2 = mse(out.e2_hat, e2)[0]
        if act.discriminator and b is not None:
            rep.l_bias = softmax_xent(out.group_logits, b)[0]
        rep.l_prim = config.alpha * rep.l_pred + config.beta * rep.l_recon
        rep.l_sec = rep.l_dis1 + rep.l_dis2
        out.losses = rep
    return out


# --------------------------------------------------------------------------- objectives

def primary_objective(model: UaiModel, config: TrainConfig, x, s, b, mask=None):
    """Primary-branch objective and its gradients for every primary module.

    Objective: alpha*L_pred + beta*L_recon (+ delta*L_bias when the
    discriminator sits in the primary branch). ``mask`` is the dropout mask
    applied to e1 before the decoder; ``None`` means no perturbation.
    Returns ``(value, report, grads)`` with ``grads[module]`` aligned to
    ``model.params(module)``.
    """
    act = config.activity
    nets = model.nets
    d1 = model.dim_e1
    enc = nets["encoder"].forward(x)
    e1, e2 = model.split(enc.output)
    ge1 = np.zeros_like(e1)
    ge2 = np.zeros_like(e2)
    grads: dict[str, list[np.ndarray]] = {}
    rep = LossReport()

    pred = nets["predictor"].forward(e1)
    rep.l_pred, g = softmax_xent(pred.output, s)
    grads["predictor"], gin = nets["predictor"].backward(pred, config.alpha * g)
    ge1 += gin
    value = config.alpha * rep.l_pred

    if act.decoder:
        e1p = e1 if mask is None else e1 * mask
        dec = nets["decoder"].forward(np.hstack([e1p, e2]))
        rep.l_recon, g = mse(dec.output, x)
        grads["decoder"], gin = nets["decoder"].backward(dec, config.beta * g)
        ge1 += gin[:, :d1] if mask is None else gin[:, :d1] * mask
        ge2 += gin[:, d1:]
        value += config.beta * rep.l_recon

    if act.placement is Placement.PRIMARY:
        disc = nets["discriminator"].forward(e1)
        rep.l_bias, g = softmax_xent(disc.output, b)
        grads["discriminator"], gin = nets["discriminator"].backward(disc, config.delta * g)
        ge1 += gin
        value += config.delta * rep.l_bias

    grads["encoder"], _ = nets["encoder"].backward(enc, np.hstack([ge1, ge2]), need_input=False)
    rep.l_prim = config.alpha * rep.l_pred + config.beta * rep.l_recon
    return value, rep, grads


@dataclass
class ConfusionTargets:
    """Targets the encoder chases in the secondary step, held fixed for one step."""

    e1: np.ndarray | None = None
    e2: np.ndarray | None = None
    groups: np.ndarray | None = None


def draw_confusion_targets(config: TrainConfig, e1, e2, rng, group_prior) -> ConfusionTargets:
    """Codes of a shuffled batch for the disentanglers, resampled labels for the discriminator."""
    act = config.activity
    n = e1.shape[0]
    targets = ConfusionTargets()
    if act.disentangler:
        perm = rng.permutation(n)
        targets.e1, targets.e2 = e1[perm], e2[perm]
    if act.placement is Placement.SECONDARY:
        targets.groups = rng.choice(len(group_prior), size=n, p=group_prior)
    return targets


def secondary_objectives(
    model: UaiModel,
    config: TrainConfig,
    x,
    b,
    targets: ConfusionTargets | None = None,
    rng=None,
    group_prior=(0.5, 0.5),
):
    """Secondary-branch objectives.

    The disentanglers minimize gamma*(L_dis1 + L_dis2) on the true codes and
    an adversarial discriminator minimizes delta*L_bias on the true group
    labels; neither term reaches the encoder. The encoder instead minimizes
    the same losses against ``targets`` (codes from a shuffled batch, group
    labels resampled from the training prior), with the secondary blocks
    held fixed.

    Returns ``(branch_value, encoder_value, report, grads)``.
    """
    act = config.activity
    nets = model.nets
    enc = nets["encoder"].forward(x)
    e1, e2 = model.split(enc.output)
    if targets is None:
        targets = draw_confusion_targets(config, e1, e2, rng, group_prior)
    ge1 = np.zeros_like(e1)
    ge2 = np.zeros_like(e2)
    grads: dict[str, list[np.ndarray]] = {}
    rep = LossReport()
    branch_value = 0.0
    encoder_value = 0.0

    if act.disentangler:
        gamma = config.gamma
        for name, src, dst, tgt, gsrc in (
            ("dis1", e2, e1, targets.e1, ge2),
            ("dis2", e1, e2, targets.e2, ge1),
        ):
            tr = nets[name].forward(src)
            loss, g = mse(tr.output, dst)
            grads[name], _ = nets[name].backward(tr, gamma * g)
            conf, gc = mse(tr.output, tgt)
            gsrc += nets[name].input_grad(tr, gamma * gc)
            branch_value += gamma * loss
            encoder_value += gamma * conf
            if name == "dis1":
                rep.l_dis1 = loss
            else:
                rep.l_dis2 = loss

    if act.placement is Placement.SECONDARY:
        delta = config.delta
        disc = nets["discriminator"].forward(e1)
        rep.l_bias, g = softmax_xent(disc.output, b)
        grads["discriminator"], _ = nets["discriminator"].backward(disc, delta * g)
        conf, gc = softmax_xent(disc.output, targets.groups)
        ge1 += nets["discriminator"].input_grad(disc, delta * gc)
        branch_value += delta * rep.l_bias
        encoder_value += delta * conf

    grads["encoder"], _ = nets["encoder"].backward(enc, np.hstack([ge1, ge2]), need_input=False)
    rep.l_sec = rep.l_dis1 + rep.l_dis2
    return branch_value, encoder_value, rep, grads


# --------------------------------------------------------------------------- steps

class Trainer:
    """Holds one model, its two optimizers and the RNG streams of a training run."""

    def __init__(self, model: UaiModel, config: TrainConfig, group_prior=(0.5, 0.5), rng=None):
        self.model = model
        self.config = config
        self.group_prior = np.asarray(group_prior, dtype=np.float64)
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        act = config.activity
        self.primary_modules = act.primary_modules()
        self.secondary_modules = act.secondary_modules()
        self.opt_primary = AdamState.for_params(
            model.param_list(self.primary_modules), config.lr_primary, config.weight_decay
        )
        self.opt_secondary = AdamState.for_params(
            model.param_list(self.secondary_modules), config.lr_secondary, config.weight_decay
        )

    def primary_step(self, x, s, b) -> LossReport:
        mask = None
        if self.config.activity.decoder:
            mask = dropout_mask((x.shape[0], self.model.dim_e1), self.config.p_drop, self.rng)
        _, rep, grads = primary_objective(self.model, self.config, x, s, b, mask)
        flat = [g for m in self.primary_modules for g in grads[m]]
        adam_step(self.opt_primary, self.model.param_list(self.primary_modules), flat)
        return rep

    def secondary_step(self, x, b) -> LossReport:
        if not self.secondary_modules:
            raise ValueError(f"mode {self.config.mode.value} has no secondary branch")
        _, _, rep, grads = secondary_objectives(
            self.model, self.config, x, b, rng=self.rng, group_prior=self.group_prior
        )
        flat = [g for m in self.secondary_modules for g in grads[m]]
        adam_step(self.opt_secondary, self.model.param_list(self.secondary_modules), flat)
        return rep


def primary_step(trainer: Trainer, x, s, b) -> LossReport:
    return trainer.primary_step(x, s, b)


def secondary_step(trainer: Trainer, x, b) -> LossReport:
    return trainer.secondary_step(x, b)


# --------------------------------------------------------------------------- data

@dataclass
class TrainingData:
    x: np.ndarray
    speakers: np.ndarray
    groups: np.ndarray
    speaker_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.speakers = np.asarray(self.speakers, dtype=np.int64)
        self.groups = np.asarray(self.groups, dtype=np.int64)
        n = self.x.shape[0]
        if self.speakers.shape != (n,) or self.groups.shape != (n,):
            raise DataError("labels must have one entry per embedding")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_speakers(self) -> int:
        return int(self.speakers.max()) + 1 if len(self) else 0

    def subset(self, idx) -> "TrainingData":
        return TrainingData(self.x[idx], self.speakers[idx], self.groups[idx], self.speaker_names)

    def group_prior(self) -> np.ndarray:
        counts = np.bincount(self.groups, minlength=UaiModel.N_GROUPS).astype(np.float64)
        return counts / counts.sum()

    def majority_rate(self) -> float:
        return float(self.group_prior().max())

    @classmethod
    def from_split(cls, split: DatasetSplit) -> "TrainingData":
        names = tuple(sorted(split.speaker_index))
        code = {name: i for i, name in enumerate(names)}
        speakers = np.array([code[s] for s in split.speaker_ids], dtype=np.int64)
        groups = np.array([0 if g is Group.G1 else 1 for g in split.groups], dtype=np.int64)
        return cls(split.vectors.copy(), speakers, groups, names)


def split_train_val(data: TrainingData, val_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Hold out ``val_fraction`` of each speaker's utterances (at least one if it has two)."""
    train_idx, val_idx = [], []
    for spk in np.unique(data.speakers):
        idx = np.flatnonzero(data.speakers == spk)
        idx = idx[rng.permutation(idx.size)]
        n_val = int(round(val_fraction * idx.size))
        if idx.size >= 2:
            n_val = min(max(n_val, 1), idx.size - 1)
        else:
            n_val = 0
        val_idx.append(idx[:n_val])
        train_idx.append(idx[n_val:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(val_idx))


# --------------------------------------------------------------------------- training

HISTORY_FIELDS = ("epoch", "l_pred", "l_recon", "l_dis1", "l_dis2", "l_bias",
                  "val_speaker_acc", "val_group_acc")


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels)) if labels.size else float("nan")


def evaluate(model: UaiModel, config: TrainConfig, data: TrainingData) -> dict:
    out = forward_pass(model, config, data.x, data.speakers, data.groups, train=False)
    rep = out.losses
    group_acc = _accuracy(out.group_logits, data.groups) if out.group_logits is not None else float("nan")
    return {
        "l_pred": rep.l_pred,
        "l_recon": rep.l_recon,
        "l_dis1": rep.l_dis1,
        "l_dis2": rep.l_dis2,
        "l_bias": rep.l_bias,
        "val_speaker_acc": _accuracy(out.speaker_logits, data.speakers),
        "val_group_acc": group_acc,
    }


@dataclass
class TrainResult:
    model: UaiModel
    history: list[dict]
    best_epoch: int
    config: TrainConfig
    train_idx: np.ndarray = field(repr=False)
    val_idx: np.ndarray = field(repr=False)

    @property
    def best_val_accuracy(self) -> float:
        return self.history[self.best_epoch - 1]["val_speaker_acc"]


def _batches(n: int, size: int, rng):
    order = rng.permutation(n)
    for start in range(0, n, size):
        yield order[start:start + size]


def _stream(n: int, size: int, rng):
    while True:
        yield from _batches(n, size, rng)


def train(data: TrainingData, config: TrainConfig, model: UaiModel | None = None) -> TrainResult:
    """Alternating minimax training with early stopping on validation speaker accuracy.

    Each primary minibatch is followed by ``secondary_steps_per_primary``
    secondary steps, each on a fresh minibatch from an independent stream.
    Returns the checkpoint with the best validation speaker accuracy.
    """
    if len(data) == 0:
        raise DataError("empty training set")
    if np.unique(data.speakers).size < 2:
        raise DataError("training needs at least two speakers")
    root = np.random.default_rng(config.seed)
    init_rng, split_rng, primary_rng, secondary_rng, step_rng = root.spawn(5)
    if model is None:
        model = UaiModel.build(data.x.shape[1], data.n_speakers, config, init_rng)
    elif model.n_speakers < data.n_speakers or model.in_dim != data.x.shape[1]:
        raise DataError("model does not match the training data")
    train_idx, val_idx = split_train_val(data, config.val_fraction, split_rng)
    tr = data.subset(train_idx)
    va = data.subset(val_idx) if val_idx.size else tr
    trainer = Trainer(model, config, tr.group_prior(), step_rng)
    secondary = _stream(len(tr), config.batch, secondary_rng) if trainer.secondary_modules else None

    history: list[dict] = []
    best_acc, best_epoch, best_state, stale = -1.0, 0, model.copy(), 0
    for epoch in range(1, config.max_epochs + 1):
        for idx in _batches(len(tr), config.batch, primary_rng):
            trainer.primary_step(tr.x[idx], tr.speakers[idx], tr.groups[idx])
            if secondary is not None:
                for _ in range(config.secondary_steps_per_primary):
                    sidx = next(secondary)
                    trainer.secondary_step(tr.x[sidx], tr.groups[sidx])
        row = {"epoch": epoch, **evaluate(model, config, va)}
        history.append(row)
        log.debug("epoch %d: %s", epoch, row)
        if row["val_speaker_acc"] > best_acc:
            best_acc, best_epoch, best_state, stale = row["val_speaker_acc"], epoch, model.copy(), 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return TrainResult(best_state, history, best_epoch, config, train_idx, val_idx)


def transform(model: UaiModel, embeddings: np.ndarray) -> np.ndarray:
    """Speaker code e1 of each embedding (no dropout)."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise DataError(f"expected embeddings of dimension {model.in_dim}, got shape {x.shape}")
    return model.split(model.nets["encoder"](x))[0]


def transform_split(model: UaiModel, split: DatasetSplit) -> DatasetSplit:
    return split.with_vectors(transform(model, split.vectors))


# --------------------------------------------------------------------------- probes

@dataclass
class ProbeReport:
    speaker_acc: float
    group_acc: float
    majority_rate: float
    group_source: str


def train_group_probe(
    features: np.ndarray,
    groups: np.ndarray,
    hidden: Sequence[int] = (64,),
    epochs: int = 30,
    batch: int = 128,
    lr: float = 1e-3,
    seed: int = 0,
) -> DenseNet:
    """Fit a fresh discriminator-shaped classifier on frozen features."""
    rng = np.random.default_rng(seed)
    net = DenseNet.build([features.shape[1], *hidden, UaiModel.N_GROUPS], rng)
    opt = AdamState.for_params(net.params(), lr)
    for _ in range(epochs):
        for idx in _batches(features.shape[0], batch, rng):
            trace = net.forward(features[idx])
            _, g = softmax_xent(trace.output, groups[idx])
            grads, _ = net.backward(trace, g)
            adam_step(opt, net.params(), grads)
    return net


def probe_accuracy(
    model: UaiModel,
    config: TrainConfig,
    held_out: TrainingData,
    probe_train: TrainingData | None = None,
    fresh_probe: bool = False,
    probe_epochs: int = 30,
) -> ProbeReport:
    """Speaker accuracy of the predictor and group accuracy on ``held_out``.

    Group accuracy comes from the model's own discriminator when the mode
    trains one. Otherwise, or with ``fresh_probe``, a new discriminator-shaped
    network is fit on ``probe_train`` codes from the frozen encoder.
    """
    if len(held_out) == 0:
        raise DataError("empty held-out set")
    out = forward_pass(model, config, held_out.x, train=False)
    speaker_acc = _accuracy(out.speaker_logits, held_out.speakers)
    if config.activity.discriminator and not fresh_probe:
        group_acc = _accuracy(out.group_logits, held_out.groups)
        source = "discriminator"
    else:
        if probe_train is None:
            raise ValueError("a fresh probe needs probe_train data")
        probe = train_group_probe(
            transform(model, probe_train.x), probe_train.groups,
            config.discriminator_hidden, epochs=probe_epochs, seed=config.seed,
        )
        group_acc = _accuracy(probe(out.e1), held_out.groups)
        source = "probe"
    return ProbeReport(speaker_acc, group_acc, held_out.majority_rate(), source)


# --------------------------------------------------------------------------- delta sweep

@dataclass
class SweepRow:
    delta: float
    speaker_acc: float
    group_acc: float
    eer: float
    au_fadr: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    best_delta: float
    best: TrainResult


def select_delta(rows: Sequence[SweepRow]) -> float:
    """Largest auFaDR wins; ties go to the smaller delta."""
    if not rows:
        raise ValueError("empty sweep")
    return min(rows, key=lambda r: (-r.au_fadr, r.delta)).delta


def _sweep_one(data, dev_split, dev_trials, cfg, omega, grid):
    from . import metrics
    from .scoring import partition_scores, score_trials

    result = train(data, cfg)
    probe = probe_accuracy(result.model, cfg, data.subset(result.val_idx),
                           probe_train=data.subset(result.train_idx))
    part = partition_scores(score_trials(transform_split(result.model, dev_split), dev_trials))
    e, _ = metrics.eer(part.pooled_genuine, part.pooled_impostor)
    area = metrics.au_fadr(metrics.fadr_curve(part, metrics.FadrParams(omega), grid))
    return SweepRow(cfg.delta, probe.speaker_acc, probe.group_acc, e, area), result


def delta_sweep(
    data: TrainingData,
    dev_split: DatasetSplit,
    dev_trials,
    template: TrainConfig,
    delta_values: Sequence[float] = DEFAULT_DELTAS,
    omega: float = 1.0,
    far_grid=None,
    workers: int = 1,
) -> SweepResult:
    """Train one model per delta and score it on held-out development trials.

    Runs are independent; ``workers > 1`` spreads them over processes with
    identical results.
    """
    from . import metrics

    if not delta_values:
        raise ValueError("delta list is empty")
    grid = metrics.DEFAULT_FAR_GRID if far_grid is None else far_grid
    configs = [template.replace(delta=float(d)) for d in delta_values]
    args = [(data, dev_split, dev_trials, cfg, omega, grid) for cfg in configs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_one, *zip(*args)))
    else:
        outcomes = [_sweep_one(*a) for a in args]
    rows = [row for row, _ in outcomes]
    for row in rows:
        log.info("delta=%g: eer=%.4f au_fadr=%.2f", row.delta, row.eer, row.au_fadr)
    best = select_delta(rows)
    results = {row.delta: res for row, res in outcomes}
    return SweepResult(rows, best, results[best])
