"""Trajectory frame files, affinity labels, frame pairing and target splits.

Frame file layout (UTF-8, LF)::

    #target <id> frame <t>
    <serial> <chain_tag> <element> <x> <y> <z> <residue_index>
    ...

Label files are CSV with a ``target_id,affinity`` header.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, IntegrityError, ParseError
from .molgraph import Atom

FRAME_SUFFIX = ".frames"
RATIOS = (0.8, 0.1, 0.1)


@dataclass
class ComplexFrame:
    target_id: str
    t_index: int
    protein_atoms: list[Atom]
    ligand_atoms: list[Atom]

    def atoms(self) -> list[Atom]:
        return self.protein_atoms + self.ligand_atoms

    def serials(self) -> list[int]:
        return [a.serial for a in self.atoms()]


@dataclass
class FramePair:
    current: ComplexFrame
    next: ComplexFrame

    def __post_init__(self):
        c, n = self.current, self.next
        if c.target_id != n.target_id:
            raise IntegrityError(f"pair spans targets {c.target_id!r} and {n.target_id!r}")
        if n.t_index != c.t_index + 1:
            raise IntegrityError(f"frames {c.t_index} and {n.t_index} are not consecutive")
        if c.serials() != n.serials():
            raise IntegrityError(
                f"target {c.target_id!r}: atoms differ between frames {c.t_index} and {n.t_index}"
            )


@dataclass
class AffinityRecord:
    target_id: str
    affinity: float


@dataclass
class SplitManifest:
    train: list[str]
    val: list[str]
    test: list[str]
    seed: int
    ratios: tuple[float, float, float] = RATIOS

    def split_of(self, target_id: str) -> str | None:
        for name in ("train", "val", "test"):
            if target_id in getattr(self, name):
                return name
        return None

    def __getitem__(self, name: str) -> list[str]:
        if name not in ("train", "val", "test"):
            raise KeyError(name)
        return getattr(self, name)


# frames

def format_frame(frame: ComplexFrame) -> str:
    lines = [f"#target {frame.target_id} frame {frame.t_index}"]
    for a in frame.atoms():
        x, y, z = a.position
        lines.append(f"{a.serial} {a.chain_tag} {a.element} {x!r} {y!r} {z!r} {a.residue_index}")
    return "\n".join(lines) + "\n"


def write_frames(frames: Iterable[ComplexFrame], path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for fr in frames:
            fh.write(format_frame(fr))
            n += 1
    return n


def _parse_atom(parts: list[str], lineno: int, path) -> Atom:
    if len(parts) != 7:
        raise ParseError(f"expected 7 fields, got {len(parts)}", lineno, path)
    serial, tag, element, x, y, z, res = parts
    try:
        pos = (float(x), float(y), float(z))
        return Atom(element=element, position=pos, chain_tag=tag, serial=int(serial),
                    residue_index=int(res))
    except (ValueError, ContractError) as exc:
        raise ParseError(str(exc), lineno, path) from None


def parse_frames(path) -> list[ComplexFrame]:
    """Read one frame file; frames come back sorted by (target_id, t_index)."""
    frames: list[ComplexFrame] = []
    current: ComplexFrame | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if line.startswith("#"):
                if len(parts) != 4 or parts[0] != "#target" or parts[2] != "frame":
                    raise ParseError(f"malformed header {line!r}", lineno, path)
                try:
                    t = int(parts[3])
                except ValueError:
                    raise ParseError(f"bad frame index {parts[3]!r}", lineno, path) from None
                if t < 0:
                    raise ParseError(f"negative frame index {t}", lineno, path)
                current = ComplexFrame(parts[1], t, [], [])
                frames.append(current)
                continue
            if current is None:
                raise ParseError("atom line before any #target header", lineno, path)
            atom = _parse_atom(parts, lineno, path)
            (current.protein_atoms if atom.chain_tag == "protein" else current.ligand_atoms).append(atom)
    frames.sort(key=lambda f: (f.target_id, f.t_index))
    check_frames(frames, path)
    return frames


def check_frames(frames: Sequence[ComplexFrame], source=None) -> None:
    where = f" in {source}" if source is not None else ""
    for tid, group in groupby(frames, key=lambda f: f.target_id):
        group = list(group)
        ref = group[0]
        ref_serials = ref.serials()
        seen = set()
        for fr in group:
            if fr.t_index in seen:
                raise IntegrityError(f"target {tid!r} repeats frame {fr.t_index}{where}")
            seen.add(fr.t_index)
            if not fr.ligand_atoms:
                raise IntegrityError(f"target {tid!r} frame {fr.t_index} has no ligand atoms{where}")
            s = fr.serials()
            if len(s) != len(set(s)):
                raise IntegrityError(f"target {tid!r} frame {fr.t_index} repeats atom serials{where}")
            if s != ref_serials:
                missing = sorted(set(ref_serials) - set(s))
                extra = sorted(set(s) - set(ref_serials))
                raise IntegrityError(
                    f"target {tid!r} frame {fr.t_index}: atoms differ from frame {ref.t_index} "
                    f"(missing {missing[:5]}, extra {extra[:5]}){where}"
                )


def load_frames(paths) -> list[ComplexFrame]:
    """Parse frame files and/or directories of ``*.frames`` files."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob(f"*{FRAME_SUFFIX}")) if p.is_dir() else [p])
    frames: list[ComplexFrame] = []
    for f in files:
        frames.extend(parse_frames(f))
    frames.sort(key=lambda f: (f.target_id, f.t_index))
    check_frames(frames)
    return frames


def group_by_target(frames: Iterable[ComplexFrame]) -> dict[str, list[ComplexFrame]]:
    out: dict[str, list[ComplexFrame]] = {}
    for fr in frames:
        out.setdefault(fr.target_id, []).append(fr)
    for v in out.values():
        v.sort(key=lambda f: f.t_index)
    return out


@dataclass
class PairingStats:
    pairs: int = 0
    skipped: int = 0


def pair_consecutive(frames: Sequence[ComplexFrame], stats: PairingStats | None = None) -> list[FramePair]:
    """Pairs (t, t+1) from one target's sorted frames; gaps are counted, not raised."""
    stats = stats if stats is not None else PairingStats()
    out = []
    for a, b in zip(frames, frames[1:]):
        if a.target_id == b.target_id and b.t_index == a.t_index + 1:
            out.append(FramePair(a, b))
        else:
            stats.skipped += 1
    stats.pairs += len(out)
    return out


# labels

def read_labels(path) -> dict[str, float]:
    labels: dict[str, float] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["target_id", "affinity"]:
            raise ParseError("label file must start with 'target_id,affinity'", 1, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", lineno, path)
            tid = row[0].strip()
            try:
                value = float(row[1])
            except ValueError:
                raise ParseError(f"bad affinity {row[1]!r}", lineno, path) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite affinity for {tid!r}", lineno, path)
            if tid in labels:
                raise IntegrityError(f"duplicate label for target {tid!r} in {path}")
            labels[tid] = value
    return labels


def write_labels(records: Iterable[AffinityRecord], path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target_id", "affinity"])
        for r in records:
            w.writerow([r.target_id, repr(float(r.affinity))])
            n += 1
    return n


# splits

def split_sizes(n: int) -> tuple[int, int, int]:
    if n < 3:
        raise ContractError(f"need at least 3 targets to split, got {n}")
    held = max(1, round(RATIOS[1] * n))
    return n - 2 * held, held, held


def split_targets(target_ids: Sequence[str], seed: int) -> SplitManifest:
    ids = sorted(set(target_ids))
    if len(ids) != len(target_ids):
        raise ContractError("target ids must be unique")
    n_train, n_val, n_test = split_sizes(len(ids))
    order = np.random.default_rng(int(seed)).permutation(len(ids))
    shuffled = [ids[k] for k in order]
    return SplitManifest(
        train=sorted(shuffled[:n_train]),
        val=sorted(shuffled[n_train:n_train + n_val]),
        test=sorted(shuffled[n_train + n_val:]),
        seed=int(seed),
    )


def audit_leakage(manifest: SplitManifest) -> list[str]:
    """Target ids appearing in more than one split (empty when clean)."""
    seen: dict[str, int] = {}
    for name in ("train", "val", "test"):
        for tid in manifest[name]:
            seen[tid] = seen.get(tid, 0) + 1
    return sorted(t for t, c in seen.items() if c > 1)


def write_manifest(manifest: SplitManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"seed = {manifest.seed}",
        "ratios = " + ",".join(repr(r) for r in manifest.ratios),
        "train = " + ",".join(manifest.train),
        "val = " + ",".join(manifest.val),
        "test = " + ",".join(manifest.test),
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> SplitManifest:
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", lineno, path)
        k, v = (s.strip() for s in line.split("=", 1))
        fields[k] = v
    try:
        ids = {k: [t for t in fields[k].split(",") if t] for k in ("train", "val", "test")}
        m = SplitManifest(seed=int(fields["seed"]),
                          ratios=tuple(float(r) for r in fields["ratios"].split(",")),
                          **ids)
    except KeyError as exc:
        raise ParseError(f"manifest is missing {exc.args[0]!r}", None, path) from None
    leaked = audit_leakage(m)
    if leaked:
        raise IntegrityError(f"split manifest {path} leaks targets across splits: {leaked[:5]}")
    return m
