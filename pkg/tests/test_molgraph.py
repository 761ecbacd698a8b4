import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoplih.errors import ContractError, EmptyPocketError
from geoplih.molgraph import (
    ELEMENTS, N_FEATURES, SCHEMA, Atom, build_graph, crop_pocket, featurize, radius_edges,
    unknown_elements,
)

from conftest import random_atoms


def brute_edges(xyz, r):
    out = []
    for i in range(len(xyz)):
        for j in range(i + 1, len(xyz)):
            if np.sqrt(((xyz[i] - xyz[j]) ** 2).sum()) <= r:
                out.append((i, j))
    return out


def brute_hops(n, edges, seeds, k):
    """Hop distance by repeated frontier expansion over an adjacency matrix."""
    adj = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        adj[i, j] = adj[j, i] = True
    reached = np.zeros(n, dtype=bool)
    reached[list(seeds)] = True
    for _ in range(k):
        reached = reached | adj[reached].any(axis=0)
    return sorted(np.nonzero(reached)[0].tolist())


def test_schema_width_and_slots():
    assert N_FEATURES == 116 == SCHEMA.width
    offs = SCHEMA.offsets()
    assert offs["element"].stop - offs["element"].start == len(ELEMENTS) + 1
    assert offs["physchem"].stop == 116


def test_featurize_one_hots():
    atom = Atom("N", (0, 0, 0), "protein", 1, residue_name="LYS", formal_charge=1)
    ctx = [Atom("C", (1, 0, 0), "protein", 2)] * 3
    v = featurize(atom, ctx)
    offs = SCHEMA.offsets()
    assert v[offs["element"]].sum() == 1 and v[offs["element"].start + ELEMENTS.index("N")] == 1
    assert v[offs["degree"].start + 3] == 1
    assert v[offs["formal_charge"].start + 3] == 1
    assert v[offs["is_protein"].start] == 1
    assert v[offs["residue_type"]].argmax() == 11  # LYS


def test_degree_is_capped():
    v = featurize(Atom("C", (0, 0, 0), "ligand", 1), [None] * 9)
    assert v[SCHEMA.offsets()["degree"]].argmax() == 5


def test_unknown_element_goes_to_other_slot():
    before = unknown_elements["Xx"]
    v = featurize(Atom("Xx", (0, 0, 0), "ligand", 1))
    assert v[SCHEMA.offsets()["element"].stop - 1] == 1
    assert unknown_elements["Xx"] == before + 1


def test_ligand_residue_is_other():
    v = featurize(Atom("C", (0, 0, 0), "ligand", 1, residue_name="ALA"))
    assert v[SCHEMA.offsets()["residue_type"]].argmax() == 20


def test_atom_validation():
    with pytest.raises(ContractError):
        Atom("C", (0, 0, 0), "water", 1)
    with pytest.raises(ContractError):
        Atom("C", (0, float("nan"), 0), "ligand", 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 25), st.floats(0.5, 6.0), st.integers(0, 10_000))
def test_radius_edges_match_brute_force(n, r, seed):
    xyz = np.random.default_rng(seed).uniform(-4, 4, size=(n, 3))
    got = [tuple(e) for e in radius_edges(xyz, r).tolist()]
    assert got == brute_edges(xyz, r)


def test_edge_radius_is_inclusive():
    xyz = np.array([[0.0, 0, 0], [2.0, 0, 0]])
    assert radius_edges(xyz, 2.0).tolist() == [[0, 1]]


def test_build_graph_contracts():
    with pytest.raises(ContractError):
        build_graph([], 2.0)
    with pytest.raises(ContractError):
        build_graph([Atom("C", (0, 0, 0), "ligand", 1)], 0.0)
    g = build_graph([Atom("C", (0, 0, 0), "ligand", 1)], 2.0)
    assert g.n_nodes == 1 and g.edges.shape == (0, 2)


def test_directed_contains_both_directions():
    g = build_graph([Atom("C", (float(i), 0, 0), "ligand", i) for i in range(3)], 1.0)
    t, s = g.directed()
    assert sorted(zip(t.tolist(), s.tolist())) == [(0, 1), (1, 0), (1, 2), (2, 1)]


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 30), st.integers(0, 3), st.integers(0, 10_000))
def test_crop_pocket_matches_brute_force(n, k, seed):
    rng = np.random.default_rng(seed)
    prot = build_graph(random_atoms(rng, n, "protein", spread=5.0), 3.0)
    lig = build_graph(random_atoms(rng, 3, "ligand", spread=1.0, serial0=500), 2.0)
    d = np.linalg.norm(prot.coordinates[:, None] - lig.coordinates[None], axis=2).min(axis=1)
    seeds = np.nonzero(d <= 4.0)[0]
    if seeds.size == 0:
        with pytest.raises(EmptyPocketError):
            crop_pocket(prot, lig, 4.0, k)
        return
    sub, mapping = crop_pocket(prot, lig, 4.0, k)
    keep = brute_hops(n, prot.edges.tolist(), seeds, k)
    assert sorted(mapping) == keep
    assert [mapping[o] for o in keep] == list(range(len(keep)))
    np.testing.assert_array_equal(sub.coordinates, prot.coordinates[keep])
    expected = {(mapping[i], mapping[j]) for i, j in prot.edges.tolist() if i in mapping and j in mapping}
    assert {tuple(e) for e in sub.edges.tolist()} == expected


def test_empty_pocket_names_distance():
    prot = build_graph([Atom("C", (0, 0, 0), "protein", 1)], 2.0)
    lig = build_graph([Atom("C", (50, 0, 0), "ligand", 2)], 2.0)
    with pytest.raises(EmptyPocketError, match="5.0"):
        crop_pocket(prot, lig, 5.0, 2)
