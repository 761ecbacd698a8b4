from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ContractError, EmptyPocketError
from .features import N_FEATURES, featurize


@dataclass(frozen=True)
class Atom:
    element: str
    position: tuple[float, float, float]
    chain_tag: str  # "protein" | "ligand"
    serial: int
    residue_index: int = -1
    residue_name: str | None = None
    formal_charge: int = 0

    def __post_init__(self):
        if self.chain_tag not in ("protein", "ligand"):
            raise ContractError(f"chain_tag must be protein or ligand, got {self.chain_tag!r}")
        pos = tuple(float(c) for c in self.position)
        if len(pos) != 3 or not all(np.isfinite(pos)):
            raise ContractError(f"atom {self.serial} has invalid position {self.position!r}")
        object.__setattr__(self, "position", pos)


@dataclass
class MolecularGraph:
    node_features: np.ndarray  # [N, 116]
    coordinates: np.ndarray  # [N, 3]
    edges: np.ndarray  # [E, 2], i < j
    origin_tag: str
    serials: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return self.coordinates.shape[0]

    def directed(self) -> tuple[np.ndarray, np.ndarray]:
        """(target, source) index arrays with both directions of every edge."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        return np.concatenate([i, j]), np.concatenate([j, i])

    def with_coordinates(self, coords) -> "MolecularGraph":
        return MolecularGraph(self.node_features, np.asarray(coords, dtype=np.float64),
                              self.edges, self.origin_tag, self.serials)


def radius_edges(coords: np.ndarray, r_edge: float) -> np.ndarray:
    n = coords.shape[0]
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    i, j = np.nonzero(np.triu(dist <= r_edge, k=1))
    return np.stack([i, j], axis=1).astype(np.int64)


def build_graph(atoms: Sequence[Atom], r_edge: float, origin_tag: str | None = None) -> MolecularGraph:
    """Radius graph over ``atoms``: edge iff distance <= ``r_edge``."""
    if not atoms:
        raise ContractError("cannot build a graph from an empty atom list")
    if not r_edge > 0:
        raise ContractError(f"r_edge must be positive, got {r_edge}")
    coords = np.array([a.position for a in atoms], dtype=np.float64)
    edges = radius_edges(coords, r_edge)
    neighbours: list[list[int]] = [[] for _ in atoms]
    for i, j in edges:
        neighbours[i].append(j)
        neighbours[j].append(i)
    feats = np.stack([featurize(a, [atoms[k] for k in nb]) for a, nb in zip(atoms, neighbours)])
    assert feats.shape[1] == N_FEATURES
    tag = origin_tag or atoms[0].chain_tag
    serials = np.array([a.serial for a in atoms], dtype=np.int64)
    return MolecularGraph(feats, coords, edges, tag, serials)


def contact_nodes(protein: MolecularGraph, ligand: MolecularGraph, contact_dist: float) -> np.ndarray:
    diff = protein.coordinates[:, None, :] - ligand.coordinates[None, :, :]
    dmin = np.sqrt((diff * diff).sum(-1)).min(axis=1)
    return np.nonzero(dmin <= contact_dist)[0]


def crop_pocket(
    protein: MolecularGraph,
    ligand: MolecularGraph,
    contact_dist: float = 5.0,
    k: int = 2,
) -> tuple[MolecularGraph, dict[int, int]]:
    """Protein subgraph within ``k`` hops of any ligand-contact atom.

    Returns the induced subgraph (nodes in ascending original order) and
    the old-to-new index mapping.
    """
    if k < 0:
        raise ContractError(f"k must be non-negative, got {k}")
    if not contact_dist > 0:
        raise ContractError(f"contact_dist must be positive, got {contact_dist}")
    seeds = contact_nodes(protein, ligand, contact_dist)
    if seeds.size == 0:
        raise EmptyPocketError(f"no protein atom within contact_dist={contact_dist} of the ligand")

    adj: list[list[int]] = [[] for _ in range(protein.n_nodes)]
    for i, j in protein.edges:
        adj[i].append(int(j))
        adj[j].append(int(i))
    hops = {int(s): 0 for s in seeds}
    queue = deque(hops)
    while queue:
        u = queue.popleft()
        if hops[u] == k:
            continue
        for w in adj[u]:
            if w not in hops:
                hops[w] = hops[u] + 1
                queue.append(w)

    keep = np.array(sorted(hops), dtype=np.int64)
    mapping = {int(old): new for new, old in enumerate(keep)}
    e = protein.edges
    if e.size:
        inside = np.isin(e[:, 0], keep) & np.isin(e[:, 1], keep)
        new_edges = np.array([[mapping[int(a)], mapping[int(b)]] for a, b in e[inside]],
                             dtype=np.int64).reshape(-1, 2)
    else:
        new_edges = np.zeros((0, 2), dtype=np.int64)
    sub = MolecularGraph(
        protein.node_features[keep],
        protein.coordinates[keep],
        new_edges,
        protein.origin_tag,
        protein.serials[keep] if protein.serials.size else protein.serials,
    )
    return sub, mapping
