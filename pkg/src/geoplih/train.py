"""Pre-training, fine-tuning, early stopping, and weight transfer."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .diffcore import ParamStore, Tape, Tensor, adam_step, bind, ops, save_checkpoint
from .egnn import LayerConfig, forward_complex, init_params, is_head_param, predict_affinity
from .errors import ContractError, EmptyPocketError, IntegrityError, NumericAbort, TransferError
from .molgraph import MolecularGraph, build_graph, crop_pocket
from .trajio import ComplexFrame, FramePair

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraphConfig:
    protein_edge: float = 4.0
    ligand_edge: float = 2.0
    contact_dist: float = 5.0
    pocket_k: int = 2  # negative disables cropping


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 30
    patience: int = 25
    batch_size: int = 1
    lr: float = 1e-4
    seed: int = 0
    task: str = "pretrain"
    freeze_encoder: bool = False
    checkpoint_path: str | None = None
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ContractError("max_epochs must be at least 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ContractError(
                f"patience ({self.patience}) must lie in [0, max_epochs={self.max_epochs}]"
            )
        if self.batch_size < 1:
            raise ContractError("batch_size must be at least 1")
        if self.task not in ("pretrain", "finetune"):
            raise ContractError(f"unknown task {self.task!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainResult:
    best: ParamStore
    history: list[EpochRecord]
    best_epoch: int
    best_val: float
    final: ParamStore


# samples

@dataclass
class ComplexGraphs:
    target_id: str
    protein: MolecularGraph
    ligand: MolecularGraph
    protein_keep: np.ndarray  # indices into the frame's protein atoms


@dataclass
class PretrainSample:
    graphs: ComplexGraphs
    next_protein: np.ndarray
    next_ligand: np.ndarray

    @property
    def identity_mse(self) -> float:
        cur = np.concatenate([self.graphs.protein.coordinates, self.graphs.ligand.coordinates])
        nxt = np.concatenate([self.next_protein, self.next_ligand])
        return float(np.mean((cur - nxt) ** 2))


@dataclass
class AffinitySample:
    graphs: ComplexGraphs
    label: float

    @property
    def target_id(self) -> str:
        return self.graphs.target_id


empty_pocket_fallbacks = 0


def frame_graphs(frame: ComplexFrame, gcfg: GraphConfig = GraphConfig()) -> ComplexGraphs:
    """Protein pocket and ligand graphs for one frame.

    When no protein atom lies within ``contact_dist`` of the ligand the
    whole protein is kept rather than failing the sample.
    """
    global empty_pocket_fallbacks
    protein = build_graph(frame.protein_atoms, gcfg.protein_edge, "protein")
    ligand = build_graph(frame.ligand_atoms, gcfg.ligand_edge, "ligand")
    keep = np.arange(protein.n_nodes)
    if gcfg.pocket_k >= 0:
        try:
            protein, mapping = crop_pocket(protein, ligand, gcfg.contact_dist, gcfg.pocket_k)
            keep = np.array(sorted(mapping), dtype=np.int64)
        except EmptyPocketError:
            empty_pocket_fallbacks += 1
            log.debug("target %s frame %d: empty pocket, using the full protein",
                        frame.target_id, frame.t_index)
    return ComplexGraphs(frame.target_id, protein, ligand, keep)


def pretrain_sample(pair: FramePair, gcfg: GraphConfig = GraphConfig()) -> PretrainSample:
    cur, nxt = pair.current, pair.next
    if len(cur.protein_atoms) != len(nxt.protein_atoms) or len(cur.ligand_atoms) != len(nxt.ligand_atoms):
        raise IntegrityError(f"target {cur.target_id!r}: atom counts differ between frames")
    g = frame_graphs(cur, gcfg)
    next_p = np.array([a.position for a in nxt.protein_atoms], dtype=np.float64)[g.protein_keep]
    next_l = np.array([a.position for a in nxt.ligand_atoms], dtype=np.float64)
    return PretrainSample(g, next_p, next_l)


def affinity_sample(frame: ComplexFrame, labels: dict, gcfg: GraphConfig = GraphConfig()) -> AffinitySample:
    if frame.target_id not in labels:
        raise IntegrityError(f"no affinity label for target {frame.target_id!r}")
    return AffinitySample(frame_graphs(frame, gcfg), float(labels[frame.target_id]))


# losses

def pretrain_loss(sample: PretrainSample, params, cfg: LayerConfig) -> Tensor:
    """Mean squared error of predicted next-frame coordinates over all atoms and axes."""
    g = sample.graphs
    state = forward_complex(g.protein, g.ligand, params, cfg)
    pred = ops.concat([state.x_P, state.x_L], axis=0)
    target = np.concatenate([sample.next_protein, sample.next_ligand])
    if pred.shape != target.shape:
        raise IntegrityError(f"prediction {pred.shape} and next frame {target.shape} disagree")
    return ops.mean_all(ops.square(ops.sub(pred, target)))


def predict_sample(sample: AffinitySample, params, cfg: LayerConfig) -> Tensor:
    g = sample.graphs
    state = forward_complex(g.protein, g.ligand, params, cfg)
    return predict_affinity(state, params, cfg)


def finetune_loss(sample: AffinitySample, params, cfg: LayerConfig) -> Tensor:
    if sample.label is None:
        raise ContractError(f"sample {sample.target_id!r} has no affinity label")
    pred = predict_sample(sample, params, cfg)
    return ops.square(ops.sum_all(ops.sub(pred, sample.label)))


def pretrain_step(pair_or_sample, params, cfg: LayerConfig, gcfg: GraphConfig = GraphConfig()) -> float:
    sample = pair_or_sample if isinstance(pair_or_sample, PretrainSample) else pretrain_sample(pair_or_sample, gcfg)
    return float(pretrain_loss(sample, bind(params) if isinstance(params, ParamStore) else params, cfg).data)


def finetune_step(sample: AffinitySample, params, cfg: LayerConfig) -> float:
    return float(finetune_loss(sample, bind(params) if isinstance(params, ParamStore) else params, cfg).data)


LOSSES: dict[str, Callable] = {"pretrain": pretrain_loss, "finetune": finetune_loss}


def mean_loss(samples: Sequence, store: ParamStore, cfg: LayerConfig, task: str) -> float:
    fn = LOSSES[task]
    p = bind(store)
    return float(np.mean([float(fn(s, p, cfg).data) for s in samples]))


def predict_all(samples: Sequence[AffinitySample], store: ParamStore, cfg: LayerConfig) -> np.ndarray:
    p = bind(store)
    return np.array([float(predict_sample(s, p, cfg).data.reshape(())) for s in samples])


# loop

def run_training(
    train: Sequence,
    val: Sequence,
    store: ParamStore,
    cfg: LayerConfig,
    tcfg: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Adam with per-sample gradient accumulation and early stopping.

    Stops once the epochs since the best validation loss exceed
    ``patience`` or ``max_epochs`` is reached. ``store`` is updated in place;
    the best-validation snapshot is returned (and written to
    ``tcfg.checkpoint_path`` whenever it improves).
    """
    if not train or not val:
        raise ContractError("training and validation sets must be non-empty")
    loss_fn = LOSSES[tcfg.task]
    trainable = [n for n in store.names() if not (tcfg.freeze_encoder and not is_head_param(n))]
    history: list[EpochRecord] = []
    best_val, best_epoch, best = math.inf, 0, store.copy()
    since_best = 0
    for epoch in range(1, tcfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = np.random.default_rng([tcfg.seed, epoch]).permutation(len(train))
        losses = []
        for b0 in range(0, len(order), tcfg.batch_size):
            batch = order[b0:b0 + tcfg.batch_size]
            acc: dict[str, np.ndarray] = {}
            for k in batch:
                tape = Tape()
                p = {n: (tape.watch(n, store.entries[n]) if n in trainable
                         else Tensor(store.entries[n], name=n)) for n in store.names()}
                loss = loss_fn(train[k], p, cfg)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NumericAbort(
                        f"non-finite loss in epoch {epoch}, batch {b0 // tcfg.batch_size} "
                        f"(sample {k})"
                    )
                losses.append(value)
                for n, g in tape.backward(loss).items():
                    acc[n] = acc[n] + g if n in acc else g
            grads = {n: g / len(batch) for n, g in acc.items()}
            adam_step(store, grads, tcfg.lr, tcfg.betas, tcfg.eps)
        val_loss = mean_loss(val, store, cfg, tcfg.task)
        if not math.isfinite(val_loss):
            raise NumericAbort(f"non-finite validation loss in epoch {epoch}")
        rec = EpochRecord(epoch, float(np.mean(losses)), val_loss, time.perf_counter() - t0)
        history.append(rec)
        log.info("epoch %d train %.6g val %.6g", epoch, rec.train_loss, rec.val_loss)
        if on_epoch:
            on_epoch(rec)
        if val_loss < best_val:
            best_val, best_epoch, best = val_loss, epoch, store.copy()
            since_best = 0
            if tcfg.checkpoint_path:
                save_checkpoint(best, tcfg.checkpoint_path)
        else:
            since_best += 1
            if since_best > tcfg.patience:
                break
    return TrainResult(best, history, best_epoch, best_val, store)


# transfer

@dataclass
class TransferReport:
    transferred: list[str] = field(default_factory=list)
    fresh: list[str] = field(default_factory=list)


def transfer_weights(source: ParamStore, target: ParamStore) -> tuple[ParamStore, TransferReport]:
    """Copy every encoder tensor from ``source`` into ``target``.

    Head tensors in ``target`` keep their fresh initialisation.
    """
    report = TransferReport()
    out = target.copy()
    for name in out.names():
        if is_head_param(name):
            report.fresh.append(name)
            continue
        if name not in source.entries:
            raise TransferError(f"checkpoint has no tensor {name!r}")
        src = source.entries[name]
        if src.shape != out.entries[name].shape:
            raise TransferError(
                f"shape mismatch for {name!r}: checkpoint {src.shape}, model {out.entries[name].shape}"
            )
        out.entries[name] = src.copy()
        report.transferred.append(name)
    out.moments = {}
    out.step = 0
    return out, report


def finetune_params(cfg: LayerConfig, seed: int, pretrained: ParamStore | None = None):
    store = init_params(cfg, seed, with_head=True)
    if pretrained is None:
        return store, None
    return transfer_weights(pretrained, store)


# artifacts

def write_history(history: Sequence[EpochRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
        for r in history:
            w.writerow([r.epoch, f"{r.train_loss:.10g}", f"{r.val_loss:.10g}", f"{r.seconds:.3f}"])


def write_run_manifest(path, **fields) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(fields, indent=2, sort_keys=True, default=_jsonable) + "\n",
                    encoding="utf-8")


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(type(obj))
