"""Command-line front end.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
``fairspk rerun --manifest M --out DIR`` replays a run from its manifest.

Exit codes: 0 success, 1 data or runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, data, kernels, metrics, scoring, stats, synth, uai

log = logging.getLogger("fairspk")

MANIFEST = "manifest.json"
MANIFEST_FORMAT = "fairspk-run"


class UsageError(Exception):
    pass


def _f(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _abs(path) -> str | None:
    return None if path is None else str(Path(path).resolve())


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise UsageError("config file must hold a JSON object")
    return payload


def _merge_flags(ns, config: dict, defaults: dict) -> None:
    """Fill unset flags from the config file, then from ``defaults``."""
    for key in config:
        if key not in defaults:
            raise UsageError(f"unknown config key {key!r}")
    for key, value in defaults.items():
        if getattr(ns, key, None) is None:
            setattr(ns, key, config.get(key, value))


# --------------------------------------------------------------------------- synth

SYNTH_FLAGS = {
    "dim": "dim", "speakers_g1": "speakers_g1", "speakers_g2": "speakers_g2",
    "utts_per_speaker": "utts_per_speaker", "rho_g1": "rho_g1", "rho_g2": "rho_g2",
    "noise_sigma": "noise_sigma", "strength": "group_direction_strength",
}


def _resolve_synth(ns) -> None:
    if ns.preset is not None:
        base = synth.make_scenarios(ns.seed or 0)[ns.preset].to_dict()
    else:
        base = synth.SynthConfig().to_dict()
    extra = _read_config(ns.config)
    known = set(base) | {"fractions", "max_trials"}
    unknown = set(extra) - known
    if unknown:
        raise UsageError(f"unknown config keys {sorted(unknown)}")
    base.update({k: v for k, v in extra.items() if k in base})
    for flag, field in SYNTH_FLAGS.items():
        if getattr(ns, flag) is not None:
            base[field] = getattr(ns, flag)
    if ns.seed is not None:
        base["seed"] = ns.seed
    try:
        ns.synth_config = synth.SynthConfig(**base).to_dict()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    _merge_flags(ns, {k: v for k, v in extra.items() if k in ("fractions", "max_trials")},
                 {"fractions": [0.6, 0.2, 0.2], "max_trials": 5000})
    ns.seed = base["seed"]


def cmd_synth(ns, out: Path) -> dict:
    cfg = synth.SynthConfig(**ns.synth_config)
    full = synth.generate(cfg)
    data.save_embeddings(full, out / "embeddings.csv")
    parts = synth.split_speakers(full, tuple(ns.fractions), seed=cfg.seed)
    for name, part, offset in zip(("train", "dev", "test"), parts, range(len(parts))):
        data.save_embeddings(part, out / f"{name}.csv")
        if name != "train":
            trials = data.generate_trials(part, ns.max_trials, seed=cfg.seed + offset)
            data.save_trials(trials, out / f"{name}_trials.csv")
    return {"config": ns.synth_config, "inputs": []}


# --------------------------------------------------------------------------- train / sweep

TRAIN_FLAGS = (
    "mode", "alpha", "beta", "gamma", "delta", "p_drop", "batch", "lr_primary", "lr_secondary",
    "weight_decay", "secondary_steps_per_primary", "max_epochs", "patience", "dim_e1", "dim_e2",
    "val_fraction",
)


def _add_train_flags(p, mode_default=None):
    p.add_argument("--mode", choices=[m.value for m in uai.Mode], default=mode_default)
    for name in TRAIN_FLAGS[1:]:
        kind = int if name in ("batch", "secondary_steps_per_primary", "max_epochs", "patience",
                               "dim_e1", "dim_e2") else float
        p.add_argument("--" + name.replace("_", "-"), type=kind, default=None, dest=name)


def _resolve_train(ns, cfg: dict | None = None) -> None:
    cfg = _read_config(ns.config) if cfg is None else cfg
    try:
        base = uai.TrainConfig.from_dict(cfg).to_dict() if cfg else uai.TrainConfig().to_dict()
        for name in TRAIN_FLAGS:
            if getattr(ns, name) is not None:
                base[name] = getattr(ns, name)
        if ns.seed is not None:
            base["seed"] = ns.seed
        ns.train_config = uai.TrainConfig.from_dict(base).to_dict()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    ns.seed = ns.train_config["seed"]


def _write_history(path: Path, history) -> None:
    _write_csv(path, uai.HISTORY_FIELDS, ([row[k] for k in uai.HISTORY_FIELDS] for row in history))


def cmd_train(ns, out: Path) -> dict:
    cfg = uai.TrainConfig.from_dict(ns.train_config)
    split = data.load_embeddings(ns.data)
    result = uai.train(uai.TrainingData.from_split(split), cfg)
    result.model.save(out / "model.json")
    _write_history(out / "history.csv", result.history)
    _write_json(out / "summary.json", {"best_epoch": result.best_epoch, "epochs_run": len(result.history),
                                       "speakers": len(split.speaker_index)})
    return {"config": ns.train_config, "inputs": [ns.data]}


def cmd_sweep_delta(ns, out: Path) -> dict:
    template = uai.TrainConfig.from_dict(ns.train_config)
    train_split = data.load_embeddings(ns.data)
    dev = data.load_embeddings(ns.dev)
    trials = (data.load_trials(ns.dev_trials) if ns.dev_trials
              else data.generate_trials(dev, ns.max_trials, seed=template.seed))
    result = uai.delta_sweep(uai.TrainingData.from_split(train_split), dev, trials, template,
                             ns.deltas, omega=ns.omega, workers=ns.threads)
    _write_csv(out / "sweep.csv", ("delta", "speaker_acc", "group_acc", "eer", "au_fadr"),
               ((r.delta, r.speaker_acc, r.group_acc, r.eer, r.au_fadr) for r in result.rows))
    result.best.model.save(out / "model.json")
    _write_history(out / "history.csv", result.best.history)
    _write_json(out / "selection.json", {"best_delta": result.best_delta, "omega": ns.omega})
    inputs = [ns.data, ns.dev] + ([ns.dev_trials] if ns.dev_trials else [])
    return {"config": ns.train_config, "inputs": inputs}


# --------------------------------------------------------------------------- score

def cmd_score(ns, out: Path) -> dict:
    split = data.load_embeddings(ns.embeddings)
    if ns.trials:
        trials = data.load_trials(ns.trials)
    else:
        trials = data.generate_trials(split, ns.max_trials, seed=ns.seed)
    if ns.model:
        try:
            model = uai.UaiModel.load(ns.model)
        except (OSError, ValueError, KeyError) as exc:
            raise data.DataError(f"cannot load model {ns.model}: {exc}") from exc
        split = uai.transform_split(model, split)
    data.save_scores(scoring.score_trials(split, trials), out / "scores.csv")
    inputs = [p for p in (ns.embeddings, ns.trials, ns.model) if p]
    return {"config": {"max_trials": ns.max_trials}, "inputs": inputs}


# --------------------------------------------------------------------------- eval

def far_grid(far_min: float, far_max: float, far_step: float) -> np.ndarray:
    if far_step <= 0 or far_max <= far_min or far_min <= 0 or far_max > 100:
        raise UsageError("FAR grid needs 0 < far-min < far-max <= 100 and a positive step")
    count = (far_max - far_min) / far_step
    if abs(count - round(count)) > 1e-9:
        raise UsageError("FAR step must divide the grid range")
    return np.linspace(far_min, far_max, int(round(count)) + 1)


def _evaluate_system(path, label: str, grid, omegas, out: Path) -> dict:
    part = scoring.partition_scores(data.load_scores(path))
    e, tau = metrics.eer(part.pooled_genuine, part.pooled_impostor)
    areas = {}
    for omega in omegas:
        curve = metrics.fadr_curve(part, metrics.FadrParams(omega), grid)
        areas[f"{omega:.2f}"] = metrics.au_fadr(curve)
        _write_csv(out / f"fadr_{label}_omega{omega:.2f}.csv", ("far_percent", "fadr_percent"),
                   curve.points.tolist())
    gc = metrics.group_error_curves(part, grid)
    _write_csv(out / f"group_curves_{label}.csv", ("far_percent", "far_g1", "far_g2", "frr_g1", "frr_g2"),
               zip(gc.far_percent.tolist(), gc.far_g1.tolist(), gc.far_g2.tolist(),
                   gc.frr_g1.tolist(), gc.frr_g2.tolist()))
    return {"eer": e, "eer_threshold": tau, "au_fadr": areas,
            "trials": {"genuine_g1": int(part.genuine_g1.size), "genuine_g2": int(part.genuine_g2.size),
                       "impostor_g1": int(part.impostor_g1.size), "impostor_g2": int(part.impostor_g2.size)}}


def cmd_eval(ns, out: Path) -> dict:
    grid = far_grid(ns.far_min, ns.far_max, ns.far_step)
    for omega in ns.omega:
        if not 0.0 <= omega <= 1.0:
            raise UsageError(f"omega must lie in [0, 1], got {omega}")
    systems = {"a": ns.scores_a}
    if ns.scores_b:
        systems["b"] = ns.scores_b
    report = {label: _evaluate_system(path, label, grid, ns.omega, out) for label, path in systems.items()}
    report["far_grid_percent"] = grid.tolist()
    _write_json(out / "metrics.json", report)
    config = {"omega": ns.omega, "far_min": ns.far_min, "far_max": ns.far_max, "far_step": ns.far_step}
    return {"config": config, "inputs": list(systems.values())}


# --------------------------------------------------------------------------- permtest / kde

def cmd_permtest(ns, out: Path) -> dict:
    a = data.load_scores(ns.scores_a)
    b = data.load_scores(ns.scores_b)
    if ns.stat == "aufadr":
        rep = stats.perm_test_aufadr(a, b, metrics.FadrParams(ns.omega), n=ns.n,
                                     subsample=ns.subsample, seed=ns.seed)
    else:
        rep = stats.perm_test_eer(a, b, n=ns.n, seed=ns.seed)
    payload = rep.to_json()
    payload["omega"] = ns.omega if ns.stat == "aufadr" else None
    _write_json(out / "permtest.json", payload)
    config = {"stat": ns.stat, "n": ns.n, "subsample": ns.subsample, "omega": ns.omega}
    return {"config": config, "inputs": [ns.scores_a, ns.scores_b]}


def cmd_kde(ns, out: Path) -> dict:
    part = scoring.partition_scores(data.load_scores(ns.scores))
    splits = ("genuine", "impostor") if ns.split == "both" else (ns.split,)
    summary = {}
    for name in splits:
        g1, g2 = getattr(part, f"{name}_g1"), getattr(part, f"{name}_g2")
        ka, kb = stats.kde(g1, ns.grid_size), stats.kde(g2, ns.grid_size)
        grid = stats.shared_grid(ka, kb)
        _write_csv(out / f"kde_{name}.csv", ("x", "density_g1", "density_g2"),
                   zip(grid.tolist(), ka.evaluate(grid).tolist(), kb.evaluate(grid).tolist()))
        summary[name] = {"overlap_percent": stats.overlap_percent(ka, kb),
                         "bandwidth_g1": ka.bandwidth, "bandwidth_g2": kb.bandwidth,
                         "n_g1": int(g1.size), "n_g2": int(g2.size)}
    _write_json(out / "overlap.json", summary)
    return {"config": {"split": ns.split, "grid_size": ns.grid_size}, "inputs": [ns.scores]}


# --------------------------------------------------------------------------- parser

def _common(p, out_required=True):
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker processes where runs are independent (default 1)")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--config", default=None, help="JSON file with defaults; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairspk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fairspk {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic embedding corpus")
    _common(p)
    p.add_argument("--preset", choices=sorted(synth.make_scenarios()), default=None)
    for flag in SYNTH_FLAGS:
        kind = int if flag in ("dim", "speakers_g1", "speakers_g2", "utts_per_speaker") else float
        p.add_argument("--" + flag.replace("_", "-"), type=kind, default=None, dest=flag)
    p.add_argument("--fractions", type=_float_list, default=None, help="train,dev,test speaker shares")
    p.add_argument("--max-trials", type=_positive_int, default=None, help="trials per group and label")

    p = sub.add_parser("train", help="train an embedding transform")
    _common(p)
    p.add_argument("--data", required=True, help="training embedding CSV")
    _add_train_flags(p)

    p = sub.add_parser("sweep-delta", help="train one model per delta and keep the best")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--dev", required=True, help="development embedding CSV")
    p.add_argument("--dev-trials", default=None)
    p.add_argument("--deltas", type=_float_list, default=None)
    p.add_argument("--omega", type=float, default=None, help="selection omega (default 1.0)")
    p.add_argument("--max-trials", type=_positive_int, default=None)
    _add_train_flags(p)

    p = sub.add_parser("score", help="cosine-score trials, optionally after a trained transform")
    _common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--trials", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--max-trials", type=_positive_int, default=None)

    p = sub.add_parser("eval", help="EER, FaDR curves and auFaDR")
    _common(p)
    p.add_argument("--scores-a", required=True)
    p.add_argument("--scores-b", default=None)
    p.add_argument("--omega", type=_float_list, default=None)
    p.add_argument("--far-min", type=float, default=None)
    p.add_argument("--far-max", type=float, default=None)
    p.add_argument("--far-step", type=float, default=None)

    p = sub.add_parser("permtest", help="paired permutation test between two systems")
    _common(p)
    p.add_argument("--scores-a", required=True)
    p.add_argument("--scores-b", required=True)
    p.add_argument("--stat", choices=("aufadr", "eer"), default=None)
    p.add_argument("--n", type=_positive_int, default=None)
    p.add_argument("--subsample", type=_positive_int, default=None)
    p.add_argument("--omega", type=float, default=None)

    p = sub.add_parser("kde", help="per-group score densities and their overlap")
    _common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--split", choices=("genuine", "impostor", "both"), default=None)
    p.add_argument("--grid-size", type=_positive_int, default=None)

    p = sub.add_parser("rerun", help="replay a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    return parser


# flag defaults that a config file may also supply
FLAG_DEFAULTS = {
    "score": {"max_trials": 5000},
    "eval": {"omega": list(metrics.DEFAULT_OMEGAS), "far_min": 1.0, "far_max": 10.0, "far_step": 0.25},
    "permtest": {"stat": "aufadr", "n": 10_000, "subsample": 100_000, "omega": 1.0},
    "kde": {"split": "both", "grid_size": 512},
}

HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "sweep-delta": cmd_sweep_delta,
    "score": cmd_score,
    "eval": cmd_eval,
    "permtest": cmd_permtest,
    "kde": cmd_kde,
}

PATH_ARGS = ("data", "dev", "dev_trials", "embeddings", "trials", "model", "scores", "scores_a", "scores_b")


def resolve(ns) -> dict:
    """Turn parsed flags into a self-contained argument dict (config file merged)."""
    if ns.command == "synth":
        _resolve_synth(ns)
    elif ns.command == "train":
        _resolve_train(ns)
    elif ns.command == "sweep-delta":
        if ns.mode is None:
            ns.mode = uai.Mode.UAI_MTL.value
        cfg = _read_config(ns.config)
        sweep_keys = {"deltas", "omega", "max_trials"}
        ns_cfg = {k: v for k, v in cfg.items() if k not in sweep_keys}
        _merge_flags(ns, {k: v for k, v in cfg.items() if k in sweep_keys},
                     {"deltas": list(uai.DEFAULT_DELTAS), "omega": 1.0, "max_trials": 5000})
        _resolve_train(ns, ns_cfg)
        if not ns.deltas:
            raise UsageError("delta list is empty")
    else:
        _merge_flags(ns, _read_config(ns.config), FLAG_DEFAULTS[ns.command])
    if ns.seed is None:
        ns.seed = 0
    if ns.threads is None:
        ns.threads = 1
    args = {k: v for k, v in vars(ns).items() if k not in ("out", "config", "verbose")}
    for key in PATH_ARGS:
        if key in args:
            args[key] = _abs(args[key])
    return args


def execute(args: dict, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    ns = argparse.Namespace(**args)
    start = time.perf_counter()
    info = HANDLERS[args["command"]](ns, out)
    outputs = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != MANIFEST)
    manifest = {
        "format": MANIFEST_FORMAT,
        "tool": "fairspk",
        "version": __version__,
        "backend": kernels.BACKEND,
        "command": args["command"],
        "args": args,
        "config": info["config"],
        "seed": args["seed"],
        "threads": args["threads"],
        "inputs": [_abs(p) for p in info["inputs"]],
        "outputs": outputs,
        "wall_clock_seconds": time.perf_counter() - start,
    }
    _write_json(out / MANIFEST, manifest)
    return manifest


def rerun(manifest_path, out) -> dict:
    try:
        payload = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if payload.get("format") != MANIFEST_FORMAT or payload.get("command") not in HANDLERS:
        raise UsageError("not a fairspk run manifest")
    return execute(payload["args"], Path(out))


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command == "rerun":
            rerun(ns.manifest, ns.out)
        else:
            out = Path(ns.out)
            execute(resolve(ns), out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fairspk: error: {exc}", file=sys.stderr)
        return 2
    except (data.DataError, ValueError, OSError, KeyError) as exc:
        print(f"fairspk: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
