import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoplih import trajio
from geoplih.errors import ContractError, IntegrityError, ParseError
from geoplih.molgraph import Atom
from geoplih.trajio import ComplexFrame


def frame(tid, t, n_p=3, n_l=2, shift=0.0):
    prot = [Atom("C", (i + shift, 0.0, 0.1 * t), "protein", i + 1, residue_index=i) for i in range(n_p)]
    lig = [Atom("O", (0.0, i + shift, 1.5), "ligand", 100 + i) for i in range(n_l)]
    return ComplexFrame(tid, t, prot, lig)


def test_frames_round_trip_exactly(tmp_path):
    fr = [frame("b", 1, shift=0.1 + 1e-13), frame("b", 0), frame("a", 0)]
    path = tmp_path / "x.frames"
    assert trajio.write_frames(fr, path) == 3
    back = trajio.parse_frames(path)
    assert [(f.target_id, f.t_index) for f in back] == [("a", 0), ("b", 0), ("b", 1)]
    assert back[2].protein_atoms[0].position == fr[0].protein_atoms[0].position
    assert back[2].protein_atoms[1].residue_index == 1


@pytest.mark.parametrize("text,line", [
    ("3 protein C 0 0 0 -1\n", 1),
    ("#target a frame 0\n1 protein C 0 0\n", 2),
    ("#target a frame 0\n1 protein C 0 x 0 -1\n", 2),
    ("#target a frame 0\n1 solvent C 0 0 0 -1\n", 2),
    ("#target a frame -1\n", 1),
    ("#target a\n", 1),
])
def test_malformed_frames_report_line(tmp_path, text, line):
    path = tmp_path / "bad.frames"
    path.write_text(text)
    with pytest.raises(ParseError) as err:
        trajio.parse_frames(path)
    assert err.value.line_number == line
    assert str(line) in str(err.value)


def test_integrity_checks(tmp_path):
    cases = {
        "repeat": [frame("a", 0), frame("a", 0)],
        "no_ligand": [frame("a", 0, n_l=0)],
        "atoms_differ": [frame("a", 0), frame("a", 1, n_p=4)],
    }
    for name, frames in cases.items():
        path = tmp_path / f"{name}.frames"
        trajio.write_frames(frames, path)
        with pytest.raises(IntegrityError):
            trajio.parse_frames(path)
    dup = frame("a", 0)
    dup.ligand_atoms[1] = Atom("O", (0, 0, 0), "ligand", 100)
    with pytest.raises(IntegrityError):
        trajio.check_frames([dup])


def test_load_frames_from_directory(tmp_path):
    trajio.write_frames([frame("a", 0), frame("a", 1)], tmp_path / "a.frames")
    trajio.write_frames([frame("b", 0)], tmp_path / "b.frames")
    (tmp_path / "notes.txt").write_text("ignored")
    assert len(trajio.load_frames(tmp_path)) == 3


def test_pairing_counts_and_gaps():
    frames = [frame("a", t) for t in (0, 1, 2, 4, 5)]
    stats = trajio.PairingStats()
    pairs = trajio.pair_consecutive(frames, stats)
    assert [(p.current.t_index, p.next.t_index) for p in pairs] == [(0, 1), (1, 2), (4, 5)]
    assert (stats.pairs, stats.skipped) == (3, 1)


def test_frame_pair_validates():
    with pytest.raises(IntegrityError):
        trajio.FramePair(frame("a", 0), frame("a", 2))
    with pytest.raises(IntegrityError):
        trajio.FramePair(frame("a", 0), frame("b", 1))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 40), unique=True, min_size=0, max_size=25))
def test_pairs_are_exactly_consecutive_indices(ts):
    frames = [frame("a", t, n_p=1, n_l=1) for t in sorted(ts)]
    pairs = trajio.pair_consecutive(frames)
    expected = [(t, t + 1) for t in sorted(ts) if t + 1 in set(ts)]
    assert [(p.current.t_index, p.next.t_index) for p in pairs] == expected


def test_labels_round_trip_and_errors(tmp_path):
    recs = [trajio.AffinityRecord("a", 6.25), trajio.AffinityRecord("b", 0.1 + 0.2)]
    path = tmp_path / "labels.csv"
    trajio.write_labels(recs, path)
    assert trajio.read_labels(path) == {"a": 6.25, "b": 0.1 + 0.2}
    path.write_text("id,value\na,1\n")
    with pytest.raises(ParseError):
        trajio.read_labels(path)
    path.write_text("target_id,affinity\na,1\na,2\n")
    with pytest.raises(IntegrityError):
        trajio.read_labels(path)
    path.write_text("target_id,affinity\na,strong\n")
    with pytest.raises(ParseError):
        trajio.read_labels(path)


@pytest.mark.parametrize("n,sizes", [(33, (27, 3, 3)), (10, (8, 1, 1)), (3, (1, 1, 1)), (100, (80, 10, 10))])
def test_split_sizes(n, sizes):
    assert trajio.split_sizes(n) == sizes


def test_split_needs_three_targets():
    with pytest.raises(ContractError):
        trajio.split_targets(["a", "b"], 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 80), st.integers(0, 2**31 - 1))
def test_split_is_partition_and_deterministic(n, seed):
    ids = [f"t{k:03d}" for k in range(n)]
    m = trajio.split_targets(ids, seed)
    assert sorted(m.train + m.val + m.test) == ids
    assert trajio.audit_leakage(m) == []
    assert (len(m.train), len(m.val), len(m.test)) == trajio.split_sizes(n)
    assert m == trajio.split_targets(list(reversed(ids)), seed)


def test_manifest_round_trip_and_leak_detection(tmp_path):
    m = trajio.split_targets([f"t{k}" for k in range(12)], 5)
    path = tmp_path / "splits.txt"
    trajio.write_manifest(m, path)
    assert trajio.read_manifest(path) == m
    path.write_text("seed = 1\nratios = 0.8,0.1,0.1\ntrain = a,b\nval = b\ntest = c\n")
    with pytest.raises(IntegrityError):
        trajio.read_manifest(path)
    leaky = trajio.SplitManifest(["a", "b"], ["b"], ["c"], 0)
    assert trajio.audit_leakage(leaky) == ["b"]
