"""Shared helpers for checking the split-representation trainer on tiny models."""

import numpy as np

from fairspk import uai
from fairspk.nn import dropout_mask, grad_check
from fairspk.uai import MODULES, Mode, Placement, TrainConfig, UaiModel

IN_DIM, N_SPK, BATCH = 5, 3, 6


def tiny_config(mode, **kw) -> TrainConfig:
    base = dict(mode=mode, dim_e1=3, dim_e2=2, encoder_hidden=(6,), decoder_hidden=(5,),
                disentangler_hidden=(4,), predictor_hidden=(4, 5), discriminator_hidden=(4,),
                batch=BATCH, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def tiny_model(config, seed):
    rng = np.random.default_rng(seed)
    model = UaiModel.build(IN_DIM, N_SPK, config, rng)
    for net in model.nets.values():
        for layer in net.layers:
            layer.bias[:] = rng.normal(0, 0.1, layer.bias.shape)
    x = rng.normal(size=(BATCH, IN_DIM))
    s = rng.integers(0, N_SPK, BATCH)
    b = rng.integers(0, 2, BATCH)
    return model, x, s, b, rng


def _primary_path(model, config, x, s, b, mask, modules):
    def closure():
        value, _, grads = uai.primary_objective(model, config, x, s, b, mask)
        return value, [g for m in modules for g in grads[m]]
    return closure


def _secondary_paths(model, config, x, b, targets, branch_mods):
    def branch():
        value, _, _, grads = uai.secondary_objectives(model, config, x, b, targets)
        return value, [g for m in branch_mods for g in grads[m]]

    def encoder():
        _, value, _, grads = uai.secondary_objectives(model, config, x, b, targets)
        return value, grads["encoder"]
    return branch, encoder


def gradient_paths(mode, seed):
    """Relative gradient error of every loss path a mode uses, keyed by path name."""
    mode = Mode.parse(mode)
    cfg = tiny_config(mode)
    act = cfg.activity
    out = {}
    model, x, s, b, rng = tiny_model(cfg, seed)
    mask = dropout_mask((BATCH, cfg.dim_e1), cfg.p_drop, rng) if act.decoder else None

    def check(name, closure, modules):
        out[name] = grad_check(closure, model.param_list(modules))

    check("speaker_ce", _primary_path(model, cfg.replace(beta=0.0, delta=0.0), x, s, b, mask,
                                      ("encoder", "predictor")), ("encoder", "predictor"))
    if act.decoder:
        mods = ("encoder", "decoder")
        check("reconstruction_mse_dropout", _primary_path(model, cfg.replace(alpha=0.0, delta=0.0), x, s, b,
                                                          mask, mods), mods)
    if act.placement is Placement.PRIMARY:
        mods = ("encoder", "discriminator")
        check("discriminator_primary", _primary_path(model, cfg.replace(alpha=0.0, beta=0.0), x, s, b,
                                                     mask, mods), mods)
    prim = act.primary_modules()
    check("primary_total", _primary_path(model, cfg, x, s, b, mask, prim), prim)

    if act.has_secondary:
        e1, e2 = model.split(model.nets["encoder"](x))
        targets = uai.draw_confusion_targets(cfg, e1, e2, rng, (0.5, 0.5))
        if act.disentangler:
            c = cfg.replace(delta=0.0)
            branch, enc = _secondary_paths(model, c, x, b, targets, ("dis1", "dis2"))
            check("disentangler_branch", branch, ("dis1", "dis2"))
            check("disentangler_confusion", enc, ("encoder",))
        if act.placement is Placement.SECONDARY:
            c = cfg.replace(gamma=0.0)
            branch, enc = _secondary_paths(model, c, x, b, targets, ("discriminator",))
            check("discriminator_adversary", branch, ("discriminator",))
            check("discriminator_confusion", enc, ("encoder",))
        sec = [m for m in act.secondary_modules() if m != "encoder"]
        branch, enc = _secondary_paths(model, cfg, x, b, targets, sec)
        check("secondary_branch_total", branch, sec)
        check("secondary_encoder_total", enc, ("encoder",))
    return out


def _frozen_digest(model, modules):
    return {m: b"".join(p.tobytes() for p in model.params(m)) for m in modules}


def partition_violations(mode, steps=50, seed=0):
    """Run alternating steps; list every parameter group that moved when it should not."""
    mode = Mode.parse(mode)
    cfg = tiny_config(mode, lr_primary=1e-2, lr_secondary=1e-2)
    act = cfg.activity
    model, _, _, _, rng = tiny_model(cfg, seed)
    trainer = uai.Trainer(model, cfg, (0.5, 0.5), np.random.default_rng(seed))
    prim, sec = set(act.primary_modules()), set(act.secondary_modules())
    frozen_in_primary = [m for m in MODULES if m not in prim]
    frozen_in_secondary = [m for m in MODULES if m not in sec]
    never = [m for m in MODULES if m not in prim | sec]
    start_never = _frozen_digest(model, never)
    moved = set()
    problems = []
    for step in range(steps):
        x = rng.normal(size=(BATCH, IN_DIM))
        s, b = rng.integers(0, N_SPK, BATCH), rng.integers(0, 2, BATCH)
        before = _frozen_digest(model, MODULES)
        trainer.primary_step(x, s, b)
        after = _frozen_digest(model, MODULES)
        problems += [f"step {step}: primary moved {m}" for m in frozen_in_primary if before[m] != after[m]]
        moved |= {m for m in MODULES if before[m] != after[m]}
        if sec:
            before = after
            trainer.secondary_step(x, b)
            after = _frozen_digest(model, MODULES)
            problems += [f"step {step}: secondary moved {m}" for m in frozen_in_secondary if before[m] != after[m]]
            moved |= {m for m in MODULES if before[m] != after[m]}
    if _frozen_digest(model, never) != start_never:
        problems.append("an inactive module changed")
    missing = (prim | sec) - moved
    if missing:
        problems.append(f"active modules never updated: {sorted(missing)}")
    return problems
