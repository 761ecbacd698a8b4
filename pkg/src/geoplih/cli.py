"""Command line entry point: ``geoplih {synth,check,pretrain,finetune,eval}``.

Configuration comes from built-in defaults, then an optional ``--config``
file of ``key = value`` lines, then the ``GEOPLIH_SEED`` environment
variable, then command-line flags (highest precedence).

Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric abort, 4 data integrity,
5 checkpoint/transfer.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import evalmetrics, synth, trajio
from .diffcore import load_checkpoint, save_checkpoint
from .egnn import LayerConfig, init_params
from .errors import GeoplihError, IntegrityError
from .train import (
    GraphConfig,
    TrainConfig,
    affinity_sample,
    finetune_params,
    predict_all,
    pretrain_sample,
    run_training,
    write_history,
    write_run_manifest,
)

log = logging.getLogger("geoplih")

SEED_ENV = "GEOPLIH_SEED"


class UsageError(GeoplihError):
    exit_code = 1


@dataclass
class RunConfig:
    """Every configurable key with its default (see README for meanings)."""

    seed: int = 0
    threads: int = 1
    # model
    feature_dim: int = 64
    hidden_dim: int = 64
    n_layers: int = 3
    th_dist: float = 5.0
    coord_update_form: str = "relative_vector"
    attention_heads: int = 1
    freeze_coords: bool = False
    # training
    max_epochs: int = 30
    patience: int = 25
    batch_size: int = 1
    lr: float = 1e-4
    freeze_encoder: bool = False
    train_limit: int = 0
    # graphs
    protein_edge: float = 4.0
    ligand_edge: float = 2.0
    contact_dist: float = 5.0
    pocket_k: int = 2
    # data and outputs
    frames: str = ""
    labels: str = ""
    out_dir: str = "run"
    from_checkpoint: str = ""
    checkpoint: str = ""
    manifest: str = ""
    split: str = "test"
    bin_edges: str = ""

    def layer_config(self) -> LayerConfig:
        return LayerConfig(
            feature_dim=self.feature_dim, n_layers=self.n_layers, th_dist=self.th_dist,
            coord_update_form=self.coord_update_form, attention_heads=self.attention_heads,
            hidden_dim=self.hidden_dim, freeze_coords=self.freeze_coords,
        )

    def graph_config(self) -> GraphConfig:
        return GraphConfig(self.protein_edge, self.ligand_edge, self.contact_dist, self.pocket_k)

    def train_config(self, task: str, checkpoint_path=None) -> TrainConfig:
        patience = min(self.patience, self.max_epochs)
        if patience != self.patience:
            log.info("patience %d capped at max_epochs %d", self.patience, self.max_epochs)
        return TrainConfig(max_epochs=self.max_epochs, patience=patience,
                           batch_size=self.batch_size, lr=self.lr, seed=self.seed, task=task,
                           freeze_encoder=self.freeze_encoder,
                           checkpoint_path=str(checkpoint_path) if checkpoint_path else None)

    def frame_paths(self) -> list[str]:
        return [p for p in self.frames.split(",") if p]


_CONFIG_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    kind = _CONFIG_FIELDS[name].type
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{name}: expected a boolean, got {raw!r}")
    try:
        return {"int": int, "float": float}.get(kind, str)(raw.strip())
    except ValueError:
        raise UsageError(f"{name}: cannot parse {raw!r} as {kind}") from None


def read_config(path) -> dict:
    """Parse ``key = value`` lines; unknown keys are errors."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_FIELDS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(read_config(args.config))
    env_seed = os.environ.get(SEED_ENV)
    if env_seed not in (None, ""):
        merged["seed"] = _coerce("seed", env_seed)
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    cfg = RunConfig(**merged)
    if cfg.threads < 1:
        raise UsageError("--threads must be at least 1")
    return cfg


# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            p.add_argument(flag, dest=f.name, action="store_const", const=True, default=None)
            p.add_argument("--no-" + f.name.replace("_", "-"), dest=f.name,
                           action="store_const", const=False)
        else:
            p.add_argument(flag, dest=f.name, default=None,
                           type={"int": int, "float": float}.get(f.type, str))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geoplih", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic trajectory corpus and affinity set")
    s.add_argument("--out", default="synth_data")
    s.add_argument("--targets", type=int, default=3)
    s.add_argument("--frames", type=int, default=200)
    s.add_argument("--complexes", type=int, default=250)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--protein-atoms", type=int, default=synth.SynthSpec.n_protein_atoms)
    s.add_argument("--ligand-atoms", type=int, default=synth.SynthSpec.n_ligand_atoms)
    s.add_argument("--dt", type=float, default=synth.SynthSpec.dt)
    s.add_argument("--spring-constant", type=float, default=synth.SynthSpec.spring_constant)
    s.add_argument("--noise-sigma", type=float, default=synth.SynthSpec.noise_sigma)
    s.add_argument("--cross-cutoff", type=float, default=synth.SynthSpec.cross_cutoff,
                   help="protein-ligand spring cutoff in A; 0 decouples the molecules")

    c = sub.add_parser("check", help="parse frames and labels and audit split leakage")
    _add_config_flags(c)

    for name, text in (("pretrain", "next-frame coordinate pre-training"),
                       ("finetune", "affinity fine-tuning"),
                       ("eval", "evaluate a fine-tuned checkpoint")):
        _add_config_flags(sub.add_parser(name, help=text))
    return parser


# commands

def cmd_synth(args) -> int:
    if args.targets < 1 or args.frames < 1 or args.complexes < 0:
        raise UsageError("--targets and --frames must be at least 1, --complexes at least 0")
    seed = args.seed
    if seed is None:
        env_seed = os.environ.get(SEED_ENV)
        seed = int(env_seed) if env_seed else 0
    summary = synth.write_corpus(
        args.out, args.targets, args.frames, seed, n_complexes=args.complexes,
        n_protein_atoms=args.protein_atoms, n_ligand_atoms=args.ligand_atoms, dt=args.dt,
        spring_constant=args.spring_constant, noise_sigma=args.noise_sigma,
        cross_cutoff=args.cross_cutoff,
    )
    print(f"targets={summary['targets']} frames={summary['frames']} labels={summary['labels']}")
    return 0


def _load_frames(cfg: RunConfig):
    paths = cfg.frame_paths()
    if not paths:
        raise UsageError("no frame files given (--frames)")
    for p in paths:
        if not Path(p).exists():
            raise FileNotFoundError(f"frame path {p} does not exist")
    return trajio.load_frames(paths)


def _manifest_for(cfg: RunConfig, target_ids) -> trajio.SplitManifest:
    if cfg.manifest:
        m = trajio.read_manifest(cfg.manifest)
        unknown = set(m.train + m.val + m.test) - set(target_ids)
        if unknown:
            log.info("manifest lists %d targets absent from the data", len(unknown))
        return m
    return trajio.split_targets(sorted(target_ids), cfg.seed)


def cmd_check(cfg: RunConfig) -> int:
    frames = _load_frames(cfg)
    by_target = trajio.group_by_target(frames)
    stats = trajio.PairingStats()
    for group in by_target.values():
        trajio.pair_consecutive(group, stats)
    m = _manifest_for(cfg, by_target) if len(by_target) >= 3 else None
    leaked = trajio.audit_leakage(m) if m else []
    parts = [f"targets={len(by_target)}", f"frames={len(frames)}",
             f"pairs={stats.pairs}", f"gaps={stats.skipped}"]
    if m:
        parts.append(f"split={len(m.train)}/{len(m.val)}/{len(m.test)}")
        parts.append(f"leakage={len(leaked)}")
    if cfg.labels:
        labels = trajio.read_labels(cfg.labels)
        missing = sorted(set(by_target) - set(labels))
        parts.append(f"labels={len(labels)} unlabelled={len(missing)}")
    print(" ".join(parts))
    if leaked:
        raise IntegrityError(f"targets present in several splits: {leaked[:5]}")
    return 0


def cmd_pretrain(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    frames = _load_frames(cfg)
    by_target = trajio.group_by_target(frames)
    manifest = _manifest_for(cfg, by_target)
    gcfg = cfg.graph_config()
    samples = {}
    for split in ("train", "val", "test"):
        samples[split] = [pretrain_sample(pair, gcfg)
                          for tid in manifest[split] if tid in by_target
                          for pair in trajio.pair_consecutive(by_target[tid])]
    if not samples["train"] or not samples["val"]:
        raise IntegrityError("pre-training needs frame pairs in both train and val splits")
    lcfg = cfg.layer_config()
    store = init_params(lcfg, cfg.seed)
    store.meta.update(task="pretrain", layer_config=lcfg.to_dict(), graph_config=gcfg.__dict__)
    ckpt = out / "pretrain.ckpt"
    result = run_training(samples["train"], samples["val"], store, lcfg,
                          cfg.train_config("pretrain", ckpt))
    save_checkpoint(result.best, ckpt)
    write_history(result.history, out / "history.csv")
    trajio.write_manifest(manifest, out / "splits.txt")
    baseline = float(np.mean([s.identity_mse for s in samples["val"]]))
    write_run_manifest(out / "run_manifest.json", command="pretrain", config=cfg,
                       best_epoch=result.best_epoch, best_val_loss=result.best_val,
                       identity_baseline_val=baseline, seeds={"init": cfg.seed, "split": manifest.seed},
                       epochs_run=len(result.history))
    verdict = "below" if result.best_val < baseline else "not below"
    print(f"best_epoch={result.best_epoch} val_mse={result.best_val:.6e} "
          f"identity_mse={baseline:.6e} ratio={result.best_val / baseline:.4f} ({verdict} baseline)")
    return 0


def _affinity_samples(cfg: RunConfig, split_names=("train", "val", "test")):
    frames = _load_frames(cfg)
    if not cfg.labels:
        raise UsageError("no label file given (--labels)")
    labels = trajio.read_labels(cfg.labels)
    by_target = trajio.group_by_target(frames)
    manifest = _manifest_for(cfg, by_target) if cfg.split != "all" or cfg.manifest else None
    gcfg = cfg.graph_config()
    out = {}
    if manifest is None:
        ids = {"all": sorted(by_target)}
    else:
        ids = {s: [t for t in manifest[s] if t in by_target] for s in split_names}
    for split, tids in ids.items():
        out[split] = [affinity_sample(by_target[t][0], labels, gcfg) for t in tids]
    return out, manifest, labels


def _report(samples, store, lcfg, train_labels, cfg: RunConfig):
    if not samples:
        raise IntegrityError("evaluation set is empty")
    preds = predict_all(samples, store, lcfg)
    edges = [float(e) for e in cfg.bin_edges.split(",") if e] or None
    return evalmetrics.evaluate([s.target_id for s in samples], preds,
                                [s.label for s in samples], train_labels, edges)


def cmd_finetune(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    samples, manifest, labels = _affinity_samples(cfg)
    train = samples["train"]
    if cfg.train_limit > 0:
        train = train[:cfg.train_limit]
    if not train or not samples["val"]:
        raise IntegrityError("fine-tuning needs labelled train and val targets")
    lcfg = cfg.layer_config()
    pretrained = load_checkpoint(cfg.from_checkpoint) if cfg.from_checkpoint else None
    store, report = finetune_params(lcfg, cfg.seed, pretrained)
    store.meta.update(task="finetune", layer_config=lcfg.to_dict(),
                      graph_config=cfg.graph_config().__dict__)
    ckpt = out / "finetune.ckpt"
    result = run_training(train, samples["val"], store, lcfg, cfg.train_config("finetune", ckpt))
    save_checkpoint(result.best, ckpt)
    save_checkpoint(result.final, out / "final.ckpt")
    write_history(result.history, out / "history.csv")
    trajio.write_manifest(manifest, out / "splits.txt")
    train_labels = [s.label for s in train]
    metrics = _report(samples["test"], result.best, lcfg, train_labels, cfg)
    evalmetrics.write_reports(metrics, out)
    write_run_manifest(
        out / "run_manifest.json", command="finetune", config=cfg,
        mode="with_pretrain" if pretrained is not None else "without_pretrain",
        transferred=len(report.transferred) if report else 0,
        fresh=len(report.fresh) if report else len(store.names()),
        best_epoch=result.best_epoch, best_val_loss=result.best_val,
        seeds={"init": cfg.seed, "split": manifest.seed}, epochs_run=len(result.history),
        n_train=len(train),
    )
    print(metrics.summary_line())
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    if not cfg.checkpoint:
        raise UsageError("no checkpoint given (--checkpoint)")
    if cfg.split not in ("train", "val", "test", "all"):
        raise UsageError(f"--split must be train, val, test or all, got {cfg.split!r}")
    store = load_checkpoint(cfg.checkpoint)
    lcfg = LayerConfig.from_dict(store.meta.get("layer_config", {}))
    samples, manifest, _ = _affinity_samples(cfg)
    if manifest is None:
        chosen, train_labels = samples["all"], []
    else:
        train = samples["train"][:cfg.train_limit] if cfg.train_limit > 0 else samples["train"]
        chosen = {"all": train + samples["val"] + samples["test"], "train": train}.get(
            cfg.split, samples.get(cfg.split))
        train_labels = [s.label for s in train]
    metrics = _report(chosen, store, lcfg, train_labels, cfg)
    evalmetrics.write_reports(metrics, cfg.out_dir)
    print(metrics.summary_line())
    return 0


COMMANDS = {"check": cmd_check, "pretrain": cmd_pretrain, "finetune": cmd_finetune,
            "eval": cmd_eval}


def _thread_limit(n: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "synth":
            return cmd_synth(args)
        cfg = resolve_config(args)
        with _thread_limit(cfg.threads):
            return COMMANDS[args.command](cfg)
    except GeoplihError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
