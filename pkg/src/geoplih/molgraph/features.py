"""Versioned 116-slot atom featurisation."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# symbol: (Z, mass, covalent radius [A], Pauling electronegativity, period, group, valence e-)
ELEMENT_TABLE: dict[str, tuple[int, float, float, float, int, int, int]] = {
    "H": (1, 1.008, 0.31, 2.20, 1, 1, 1),
    "Li": (3, 6.94, 1.28, 0.98, 2, 1, 1),
    "Be": (4, 9.012, 0.96, 1.57, 2, 2, 2),
    "B": (5, 10.81, 0.84, 2.04, 2, 13, 3),
    "C": (6, 12.011, 0.76, 2.55, 2, 14, 4),
    "N": (7, 14.007, 0.71, 3.04, 2, 15, 5),
    "O": (8, 15.999, 0.66, 3.44, 2, 16, 6),
    "F": (9, 18.998, 0.57, 3.98, 2, 17, 7),
    "Na": (11, 22.990, 1.66, 0.93, 3, 1, 1),
    "Mg": (12, 24.305, 1.41, 1.31, 3, 2, 2),
    "Al": (13, 26.982, 1.21, 1.61, 3, 13, 3),
    "Si": (14, 28.085, 1.11, 1.90, 3, 14, 4),
    "P": (15, 30.974, 1.07, 2.19, 3, 15, 5),
    "S": (16, 32.06, 1.05, 2.58, 3, 16, 6),
    "Cl": (17, 35.45, 1.02, 3.16, 3, 17, 7),
    "K": (19, 39.098, 2.03, 0.82, 4, 1, 1),
    "Ca": (20, 40.078, 1.76, 1.00, 4, 2, 2),
    "Ti": (22, 47.867, 1.60, 1.54, 4, 4, 4),
    "V": (23, 50.942, 1.53, 1.63, 4, 5, 5),
    "Cr": (24, 51.996, 1.39, 1.66, 4, 6, 6),
    "Mn": (25, 54.938, 1.39, 1.55, 4, 7, 7),
    "Fe": (26, 55.845, 1.32, 1.83, 4, 8, 8),
    "Co": (27, 58.933, 1.26, 1.88, 4, 9, 9),
    "Ni": (28, 58.693, 1.24, 1.91, 4, 10, 10),
    "Cu": (29, 63.546, 1.32, 1.90, 4, 11, 11),
    "Zn": (30, 65.38, 1.22, 1.65, 4, 12, 12),
    "Ga": (31, 69.723, 1.22, 1.81, 4, 13, 3),
    "Ge": (32, 72.630, 1.20, 2.01, 4, 14, 4),
    "As": (33, 74.922, 1.19, 2.18, 4, 15, 5),
    "Se": (34, 78.971, 1.20, 2.55, 4, 16, 6),
    "Br": (35, 79.904, 1.20, 2.96, 4, 17, 7),
    "Rb": (37, 85.468, 2.20, 0.82, 5, 1, 1),
    "Sr": (38, 87.62, 1.95, 0.95, 5, 2, 2),
    "Zr": (40, 91.224, 1.75, 1.33, 5, 4, 4),
    "Mo": (42, 95.95, 1.54, 2.16, 5, 6, 6),
    "Ru": (44, 101.07, 1.46, 2.20, 5, 8, 8),
    "Rh": (45, 102.91, 1.42, 2.28, 5, 9, 9),
    "Pd": (46, 106.42, 1.39, 2.20, 5, 10, 10),
    "Ag": (47, 107.87, 1.45, 1.93, 5, 11, 11),
    "Cd": (48, 112.41, 1.44, 1.69, 5, 12, 12),
    "In": (49, 114.82, 1.42, 1.78, 5, 13, 3),
    "Sn": (50, 118.71, 1.39, 1.96, 5, 14, 4),
    "Sb": (51, 121.76, 1.39, 2.05, 5, 15, 5),
    "Te": (52, 127.60, 1.38, 2.10, 5, 16, 6),
    "I": (53, 126.90, 1.39, 2.66, 5, 17, 7),
    "Cs": (55, 132.91, 2.44, 0.79, 6, 1, 1),
    "Ba": (56, 137.33, 2.15, 0.89, 6, 2, 2),
    "Gd": (64, 157.25, 1.96, 1.20, 6, 3, 3),
    "Pt": (78, 195.08, 1.36, 2.28, 6, 10, 10),
    "Au": (79, 196.97, 1.36, 2.54, 6, 11, 11),
    "Hg": (80, 200.59, 1.32, 2.00, 6, 12, 12),
    "Pb": (82, 207.2, 1.46, 2.33, 6, 14, 4),
    "Bi": (83, 208.98, 1.48, 2.02, 6, 15, 5),
}
ELEMENTS = list(ELEMENT_TABLE)

AMINO_ACIDS = [
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
]
CHARGES = [-2, -1, 0, 1, 2]
HYBRIDIZATIONS = ["sp", "sp2", "sp3", "sp3d", "sp3d2"]


@dataclass(frozen=True)
class FeatureSchema:
    """Named slot layout; widths must sum to 116."""

    version: int = SCHEMA_VERSION
    slots: tuple[tuple[str, int], ...] = (
        ("element", len(ELEMENTS) + 1),
        ("degree", 6),
        ("formal_charge", len(CHARGES)),
        ("hybridization", len(HYBRIDIZATIONS)),
        ("aromatic", 1),
        ("in_ring", 1),
        ("is_protein", 1),
        ("residue_type", len(AMINO_ACIDS) + 1),
        ("physchem", 22),
    )

    @property
    def width(self) -> int:
        return sum(n for _, n in self.slots)

    def offsets(self) -> dict[str, slice]:
        out, pos = {}, 0
        for name, n in self.slots:
            out[name] = slice(pos, pos + n)
            pos += n
        return out


SCHEMA = FeatureSchema()
N_FEATURES = SCHEMA.width
assert N_FEATURES == 116, N_FEATURES
_OFF = SCHEMA.offsets()

# unknown element symbols seen by featurize(), for reporting
unknown_elements: Counter = Counter()


def _hybridization(degree: int) -> str:
    # no bond-order perception; coordination count stands in
    if degree >= 6:
        return "sp3d2"
    if degree == 5:
        return "sp3d"
    if degree == 4:
        return "sp3"
    if degree == 3:
        return "sp2"
    return "sp"


def featurize(atom, context: Sequence = ()) -> np.ndarray:
    """116-vector for ``atom`` given its graph neighbours ``context``."""
    v = np.zeros(N_FEATURES)
    sym = normalize_element(atom.element)
    if sym in ELEMENT_TABLE:
        v[_OFF["element"].start + ELEMENTS.index(sym)] = 1.0
    else:
        unknown_elements[atom.element] += 1
        log.warning("unknown element %r featurised into the 'other' slot", atom.element)
        v[_OFF["element"].stop - 1] = 1.0

    degree = len(context)
    v[_OFF["degree"].start + min(degree, 5)] = 1.0

    charge = int(getattr(atom, "formal_charge", 0) or 0)
    charge = max(min(charge, 2), -2)
    v[_OFF["formal_charge"].start + CHARGES.index(charge)] = 1.0

    v[_OFF["hybridization"].start + HYBRIDIZATIONS.index(_hybridization(degree))] = 1.0
    v[_OFF["aromatic"].start] = 1.0 if getattr(atom, "aromatic", False) else 0.0
    v[_OFF["in_ring"].start] = 1.0 if getattr(atom, "in_ring", False) else 0.0

    is_protein = atom.chain_tag == "protein"
    v[_OFF["is_protein"].start] = 1.0 if is_protein else 0.0

    res = (getattr(atom, "residue_name", None) or "").upper()
    res_slot = AMINO_ACIDS.index(res) if (is_protein and res in AMINO_ACIDS) else len(AMINO_ACIDS)
    v[_OFF["residue_type"].start + res_slot] = 1.0

    z, mass, rcov, chi, period, group, valence = ELEMENT_TABLE.get(sym, (0, 0.0, 0.0, 0.0, 0, 0, 0))
    phys = _OFF["physchem"].start
    v[phys:phys + 7] = (z / 100.0, mass / 100.0, rcov, chi / 4.0, period / 7.0,
                        group / 18.0, valence / 12.0)
    # remaining physchem slots are reserved padding
    return v


def normalize_element(symbol: str) -> str:
    s = symbol.strip()
    return s[:1].upper() + s[1:].lower() if s else s
