"""Tagged histogram feature vectors and their binary container format.

Container layout, repeated per record: one JSON header line (kind, dim,
sample id, optional extras) terminated by a newline, then ``dim``
little-endian float64 values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KIND_HINGE = "hinge"
KIND_COHINGE = "cohinge"
KIND_QUADHINGE = "quadhinge"
KIND_DELTAHINGE = "deltahinge"
KIND_TCC = "tcc"
KIND_JUNCLETS = "junclets"
KIND_JUNCLETS_RAW = "junclets-raw"

TEXTURAL_KINDS = (KIND_HINGE, KIND_COHINGE, KIND_QUADHINGE, KIND_DELTAHINGE, KIND_TCC)
ALL_KINDS = TEXTURAL_KINDS + (KIND_JUNCLETS,)

# Fixed dimensionalities; junclets depends on the codebook size.
FIXED_DIMS = {
    KIND_HINGE: 253,
    KIND_COHINGE: 10000,
    KIND_QUADHINGE: 5184,
    KIND_DELTAHINGE: 529,
    KIND_TCC: 512,
    KIND_JUNCLETS_RAW: 120,
}


@dataclass
class FeatureVector:
    """Nonnegative histogram: L1-normalized, or all-zero with ``empty`` set."""

    kind: str
    values: np.ndarray
    empty: bool = False

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def normalized(kind: str, counts: np.ndarray) -> FeatureVector:
    """L1-normalize an event-count histogram; flag all-zero inputs."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return FeatureVector(kind=kind, values=np.zeros_like(counts), empty=True)
    return FeatureVector(kind=kind, values=counts / total)


def check_contract(vec: FeatureVector, tol: float = 1e-9) -> None:
    """Raise unless the vector is nonnegative and unit-sum (or flagged zero)."""
    if (vec.values < 0).any():
        raise ValueError(f"{vec.kind}: negative histogram entries")
    total = float(vec.values.sum())
    if vec.empty:
        if total != 0.0:
            raise ValueError(f"{vec.kind}: flagged empty but has mass")
    elif abs(total - 1.0) > tol:
        raise ValueError(f"{vec.kind}: histogram sums to {total}, expected 1")


def write_records(path: str | Path, records: list[tuple[dict, np.ndarray]]) -> None:
    """Write (header, values) records to the flat binary container."""
    with open(path, "wb") as fh:
        for header, values in records:
            values = np.asarray(values, dtype="<f8")
            meta = dict(header)
            meta["dim"] = int(values.shape[0])
            fh.write(json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n")
            fh.write(values.tobytes())


def read_records(path: str | Path) -> list[tuple[dict, np.ndarray]]:
    """Read every (header, values) record from a container file."""
    records = []
    blob = Path(path).read_bytes()
    pos = 0
    while pos < len(blob):
        end = blob.index(b"\n", pos)
        header = json.loads(blob[pos:end].decode("utf-8"))
        dim = int(header["dim"])
        start = end + 1
        stop = start + dim * 8
        if stop > len(blob):
            raise ValueError(f"truncated record in {path}")
        values = np.frombuffer(blob[start:stop], dtype="<f8").copy()
        records.append((header, values))
        pos = stop
    return records


def write_csv(path: str | Path, records: list[tuple[dict, np.ndarray]]) -> None:
    """Inspection-friendly CSV mirror of a container file."""
    lines = ["sample,kind,dim,values"]
    for header, values in records:
        joined = ";".join(format(v, ".9g") for v in values)
        lines.append(f"{header.get('sample', '')},{header.get('kind', '')},{len(values)},{joined}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
