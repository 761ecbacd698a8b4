"""Seeded desk-scale corpora.

Trajectories: atom pairs interact through harmonic springs that act while
the pair is closer than a cutoff (rest length equal to the cutoff, so the
force vanishes continuously there). The cutoff depends on the pair kind:
protein-protein, ligand-ligand or protein-ligand. Frames follow explicit
Euler steps of the overdamped dynamics, each atom's step averaged over its
interacting partners, plus optional Gaussian noise.

Affinity set: random pocket/ligand arrangements labelled by a linear
function of the number of protein-ligand atom pairs within 4 A.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .molgraph import Atom
from .trajio import AffinityRecord, ComplexFrame, write_frames, write_labels

ELEMENT_CYCLE = ("C", "N", "O", "S")
CONTACT_CUTOFF = 4.0
LABEL_SLOPE = 0.5
LABEL_OFFSET = 2.0
LABEL_NOISE = 0.1
LIGAND_SERIAL_BASE = 10_000


@dataclass(frozen=True)
class SynthSpec:
    n_protein_atoms: int = 24
    n_ligand_atoms: int = 8
    n_frames: int = 200
    dt: float = 0.01
    spring_constant: float = 1.0
    noise_sigma: float = 0.0005
    seed: int = 0
    protein_cutoff: float = 4.0
    ligand_cutoff: float = 2.0
    cross_cutoff: float = 4.0  # 0 decouples protein and ligand
    bond_length: float = 1.5
    target_id: str = "synth_000"

    def __post_init__(self):
        if min(self.n_protein_atoms, self.n_ligand_atoms, self.n_frames) < 1:
            raise ContractError("atom and frame counts must be at least 1")
        if not self.dt > 0:
            raise ContractError("dt must be positive")
        if self.noise_sigma < 0:
            raise ContractError("noise_sigma must be non-negative")
        if not (self.protein_cutoff > 0 and self.ligand_cutoff > 0):
            raise ContractError("cutoffs must be positive")
        if self.cross_cutoff < 0:
            raise ContractError("cross_cutoff must be non-negative")


# geometry

def chain_positions(n: int, rng: np.random.Generator, bond: float = 1.5,
                    min_sep: float = 2.3, start=None, max_tries: int = 200) -> np.ndarray:
    """Self-avoiding random-walk chain with fixed bond length.

    Non-bonded atoms stay at least ``min_sep`` apart, which keeps i, i+2
    distances above the ligand edge radius.
    """
    pos = np.zeros((n, 3))
    if start is not None:
        pos[0] = start
    for i in range(1, n):
        for _ in range(max_tries):
            step = rng.normal(size=3)
            step *= bond / np.linalg.norm(step)
            cand = pos[i - 1] + step
            if i < 2 or np.min(np.linalg.norm(pos[:i - 1] - cand, axis=1)) >= min_sep:
                break
        pos[i] = cand
    return pos


def _pairs(x: np.ndarray, cutoff):
    d = x[:, None, :] - x[None, :, :]
    r = np.sqrt((d * d).sum(-1))
    c = np.broadcast_to(np.asarray(cutoff, dtype=np.float64), r.shape)
    i, j = np.nonzero(np.triu(r < c, k=1))
    return i, j, r[i, j], c[i, j]


def spring_energy(x: np.ndarray, k: float, cutoff) -> float:
    """Sum over pairs closer than their cutoff of k/2 (r - cutoff)^2.

    ``cutoff`` is a scalar or a symmetric per-pair matrix.
    """
    _, _, r, c = _pairs(np.asarray(x, dtype=np.float64), cutoff)
    return float(0.5 * k * ((r - c) ** 2).sum())


def spring_step(x: np.ndarray, k: float, cutoff, dt: float) -> np.ndarray:
    """One explicit Euler step.

    Atom i moves by dt * k / n_i * sum_j (c_ij - r_ij) / r_ij * (x_i - x_j)
    over its n_i partners closer than their cutoff c_ij.
    """
    x = np.asarray(x, dtype=np.float64)
    i, j, r, c = _pairs(x, cutoff)
    if i.size == 0:
        return x.copy()
    push = ((c - r) / r)[:, None] * (x[i] - x[j])
    force = np.zeros_like(x)
    np.add.at(force, i, push)
    np.add.at(force, j, -push)
    count = np.bincount(np.concatenate([i, j]), minlength=len(x)).astype(np.float64)
    return x + dt * k * force / np.maximum(count, 1.0)[:, None]


def cutoff_matrix(n_protein: int, n_ligand: int, protein: float, ligand: float,
                  cross: float) -> np.ndarray:
    """Per-pair cutoffs for a complex stacked as [protein; ligand]."""
    n = n_protein + n_ligand
    c = np.full((n, n), cross, dtype=np.float64)
    c[:n_protein, :n_protein] = protein
    c[n_protein:, n_protein:] = ligand
    return c


def _atoms(xyz, tag, serial0, residue_of=None):
    out = []
    for n, p in enumerate(xyz):
        out.append(Atom(element=ELEMENT_CYCLE[n % len(ELEMENT_CYCLE)], position=tuple(p),
                        chain_tag=tag, serial=serial0 + n,
                        residue_index=residue_of(n) if residue_of else -1))
    return out


def _place_ligand(protein_xyz, n_lig, rng, bond, offset_range, min_gap=2.5):
    centre = protein_xyz.mean(axis=0)
    for _ in range(500):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        start = centre + direction * rng.uniform(*offset_range)
        lig = chain_positions(n_lig, rng, bond=bond, start=start)
        gaps = np.linalg.norm(protein_xyz[:, None, :] - lig[None, :, :], axis=2)
        if gaps.min() >= min_gap:
            return lig
    return lig


def initial_structure(spec: SynthSpec, rng: np.random.Generator):
    prot = chain_positions(spec.n_protein_atoms, rng, bond=spec.bond_length)
    lig = _place_ligand(prot, spec.n_ligand_atoms, rng, spec.bond_length, (2.0, 5.0))
    return prot, lig


def gen_trajectory(spec: SynthSpec) -> list[ComplexFrame]:
    rng = np.random.default_rng(spec.seed)
    prot, lig = initial_structure(spec, rng)
    n_p = len(prot)
    cut = cutoff_matrix(n_p, len(lig), spec.protein_cutoff, spec.ligand_cutoff, spec.cross_cutoff)
    x = np.concatenate([prot, lig])
    frames = []
    for t in range(spec.n_frames):
        frames.append(ComplexFrame(
            spec.target_id, t,
            _atoms(x[:n_p], "protein", 1, residue_of=lambda n: n // 4),
            _atoms(x[n_p:], "ligand", LIGAND_SERIAL_BASE),
        ))
        x = spring_step(x, spec.spring_constant, cut, spec.dt)
        if spec.noise_sigma > 0:
            x = x + rng.normal(scale=spec.noise_sigma, size=x.shape)
    return frames


# affinity corpus

def count_contacts(protein_xyz, ligand_xyz, cutoff: float = CONTACT_CUTOFF) -> int:
    p = np.asarray(protein_xyz, dtype=np.float64)
    q = np.asarray(ligand_xyz, dtype=np.float64)
    d = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2)
    return int((d <= cutoff).sum())


def affinity_label(n_contacts: int, noise: float = 0.0) -> float:
    return LABEL_SLOPE * n_contacts + LABEL_OFFSET + noise


def gen_affinity_set(
    n_complexes: int,
    seed: int,
    n_protein_atoms: int = 20,
    n_ligand_atoms: int = 6,
    noise_sigma: float = LABEL_NOISE,
    offset_range: tuple[float, float] = (2.0, 9.0),
    prefix: str = "cplx",
) -> tuple[list[ComplexFrame], list[AffinityRecord]]:
    """Single-frame complexes with contact-count labels."""
    if n_complexes < 1:
        raise ContractError("n_complexes must be at least 1")
    rng = np.random.default_rng(seed)
    frames, records = [], []
    width = max(4, len(str(n_complexes - 1)))
    for c in range(n_complexes):
        tid = f"{prefix}_{c:0{width}d}"
        prot = chain_positions(n_protein_atoms, rng)
        lig = _place_ligand(prot, n_ligand_atoms, rng, 1.5, offset_range)
        noise = rng.normal(scale=noise_sigma) if noise_sigma > 0 else 0.0
        frames.append(ComplexFrame(
            tid, 0,
            _atoms(prot, "protein", 1, residue_of=lambda n: n // 4),
            _atoms(lig, "ligand", LIGAND_SERIAL_BASE),
        ))
        records.append(AffinityRecord(tid, affinity_label(count_contacts(prot, lig), noise)))
    return frames, records


def write_corpus(out_dir, n_targets: int, n_frames: int, seed: int, n_complexes: int = 0,
                 **spec_kwargs) -> dict:
    """Write trajectory files (one per target) and, optionally, the affinity set."""
    out = Path(out_dir)
    traj_dir = out / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    total = 0
    for t in range(n_targets):
        spec = SynthSpec(n_frames=n_frames, seed=seed * 1000 + t, target_id=f"synth_{t:03d}",
                         **spec_kwargs)
        total += write_frames(gen_trajectory(spec), traj_dir / f"{spec.target_id}.frames")
    summary = {"targets": n_targets, "frames": total, "labels": 0}
    if n_complexes:
        frames, records = gen_affinity_set(n_complexes, seed)
        write_frames(frames, out / "affinity.frames")
        summary["labels"] = write_labels(records, out / "labels.csv")
    return summary
