import numpy as np
import pytest

from geoplih import synth, train, trajio
from geoplih.diffcore import load_checkpoint
from geoplih.egnn import init_params, is_head_param
from geoplih.errors import ContractError, IntegrityError, NumericAbort, TransferError
from geoplih.molgraph import Atom
from geoplih.trajio import ComplexFrame

from conftest import small_cfg


@pytest.fixture(scope="module")
def affinity_samples():
    frames, recs = synth.gen_affinity_set(8, seed=1, n_protein_atoms=8, n_ligand_atoms=3)
    labels = {r.target_id: r.affinity for r in recs}
    return [train.affinity_sample(f, labels) for f in frames]


@pytest.fixture(scope="module")
def pretrain_samples():
    spec = synth.SynthSpec(n_protein_atoms=8, n_ligand_atoms=3, n_frames=6, seed=2)
    return [train.pretrain_sample(p) for p in trajio.pair_consecutive(synth.gen_trajectory(spec))]


def test_train_config_validation():
    with pytest.raises(ContractError):
        train.TrainConfig(max_epochs=3, patience=4)
    with pytest.raises(ContractError):
        train.TrainConfig(task="classify")
    with pytest.raises(ContractError):
        train.TrainConfig(batch_size=0)


def test_identity_baseline_and_target_alignment(pretrain_samples):
    s = pretrain_samples[0]
    assert s.next_protein.shape == s.graphs.protein.coordinates.shape
    cur = np.concatenate([s.graphs.protein.coordinates, s.graphs.ligand.coordinates])
    nxt = np.concatenate([s.next_protein, s.next_ligand])
    assert s.identity_mse == pytest.approx(np.mean((cur - nxt) ** 2))


def test_frozen_coordinates_give_identity_loss(pretrain_samples):
    cfg = small_cfg(freeze_coords=True)
    store = init_params(cfg, 0)
    s = pretrain_samples[0]
    assert train.pretrain_step(s, store, cfg) == pytest.approx(s.identity_mse, rel=1e-12)


def test_empty_pocket_falls_back_to_full_protein():
    prot = [Atom("C", (float(i), 0, 0), "protein", i + 1) for i in range(4)]
    lig = [Atom("O", (100.0, 0, 0), "ligand", 50)]
    before = train.empty_pocket_fallbacks
    g = train.frame_graphs(ComplexFrame("far", 0, prot, lig))
    assert g.protein.n_nodes == 4 and train.empty_pocket_fallbacks == before + 1


def test_missing_label(affinity_samples):
    frames, _ = synth.gen_affinity_set(1, seed=0)
    with pytest.raises(IntegrityError):
        train.affinity_sample(frames[0], {})


def test_training_reduces_loss_and_writes_best(tmp_path, affinity_samples):
    cfg = small_cfg()
    store, _ = train.finetune_params(cfg, 0)
    ckpt = tmp_path / "best.ckpt"
    tcfg = train.TrainConfig(max_epochs=4, patience=4, lr=1e-2, task="finetune",
                             checkpoint_path=str(ckpt))
    res = train.run_training(affinity_samples[:6], affinity_samples[6:], store, cfg, tcfg)
    assert res.history[-1].train_loss < res.history[0].train_loss
    back = load_checkpoint(ckpt)
    for n in res.best.names():
        np.testing.assert_array_equal(back[n], res.best[n])
    assert res.best_val == min(r.val_loss for r in res.history)


def test_early_stopping_counts_epochs_without_improvement(affinity_samples):
    cfg = small_cfg()
    store, _ = train.finetune_params(cfg, 0)
    tcfg = train.TrainConfig(max_epochs=10, patience=2, lr=0.0, task="finetune")
    res = train.run_training(affinity_samples[:2], affinity_samples[2:3], store, cfg, tcfg)
    assert len(res.history) == 4 and res.best_epoch == 1


def test_training_is_deterministic(affinity_samples):
    cfg = small_cfg()
    out = []
    for _ in range(2):
        store, _ = train.finetune_params(cfg, 3)
        tcfg = train.TrainConfig(max_epochs=2, patience=2, lr=1e-3, task="finetune", seed=3, batch_size=2)
        out.append(train.run_training(affinity_samples[:5], affinity_samples[5:], store, cfg, tcfg).best)
    for n in out[0].names():
        np.testing.assert_array_equal(out[0][n], out[1][n])


def test_freeze_encoder_only_moves_head(affinity_samples):
    cfg = small_cfg()
    store, _ = train.finetune_params(cfg, 0)
    before = store.copy()
    tcfg = train.TrainConfig(max_epochs=1, patience=1, lr=1e-2, task="finetune", freeze_encoder=True)
    train.run_training(affinity_samples[:3], affinity_samples[3:4], store, cfg, tcfg)
    for n in store.names():
        assert np.array_equal(store[n], before[n]) == (not is_head_param(n)), n


def test_non_finite_loss_aborts(affinity_samples):
    cfg = small_cfg()
    store, _ = train.finetune_params(cfg, 0)
    bad = train.AffinitySample(affinity_samples[0].graphs, float("inf"))
    tcfg = train.TrainConfig(max_epochs=1, patience=1, task="finetune")
    with pytest.raises(NumericAbort, match="epoch 1"):
        train.run_training([bad], affinity_samples[1:2], store, cfg, tcfg)


def test_pretraining_step_runs(pretrain_samples):
    cfg = small_cfg()
    store = init_params(cfg, 0)
    tcfg = train.TrainConfig(max_epochs=1, patience=1)
    res = train.run_training(pretrain_samples[:3], pretrain_samples[3:], store, cfg, tcfg)
    assert np.isfinite(res.best_val)


def test_transfer_copies_encoder_and_keeps_fresh_head():
    cfg = small_cfg()
    pre = init_params(cfg, 1)
    tuned, report = train.finetune_params(cfg, 2, pre)
    fresh, _ = train.finetune_params(cfg, 2)
    assert report.fresh and all(is_head_param(n) for n in report.fresh)
    assert len(report.transferred) == len(pre.names())
    for n in tuned.names():
        ref = fresh[n] if is_head_param(n) else pre[n]
        np.testing.assert_array_equal(tuned[n], ref)
    assert tuned.step == 0 and tuned.moments == {}


def test_transfer_errors():
    cfg = small_cfg()
    pre = init_params(small_cfg(feature_dim=4, hidden_dim=4), 1)
    with pytest.raises(TransferError, match="shape"):
        train.finetune_params(cfg, 0, pre)
    shallow = init_params(small_cfg(n_layers=1), 1)
    with pytest.raises(TransferError, match="layer1"):
        train.finetune_params(cfg, 0, shallow)


def test_history_csv(tmp_path):
    hist = [train.EpochRecord(1, 0.5, 0.25, 1.0)]
    train.write_history(hist, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines() == ["epoch,train_loss,val_loss,seconds",
                                                             "1,0.5,0.25,1.000"]
