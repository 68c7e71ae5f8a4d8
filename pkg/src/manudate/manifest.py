"""Dataset manifests: one JSON object per line, one line per sample."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass
class ManifestEntry:
    """One sample: image reference, key-year label, optional provenance.

    ``label_year`` is a calendar year; BCE years are negative so error
    metrics stay uniform across corpora.  ``source_id`` is set only on
    augmented variants and names the sample they were distorted from.
    """

    id: str
    path: str
    label_year: int
    writer: str | None = None
    source_id: str | None = None
    seed: int | None = None

    @property
    def is_augmented(self) -> bool:
        return self.source_id is not None


def validate(entries: list[ManifestEntry]) -> None:
    """Check id uniqueness and provenance closure."""
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate manifest ids: {dupes[:5]}")
    known = set(ids)
    for e in entries:
        if e.source_id is not None and e.source_id not in known:
            raise ValueError(f"entry {e.id} references unknown source {e.source_id}")


def sources(entries: list[ManifestEntry]) -> list[ManifestEntry]:
    return [e for e in entries if not e.is_augmented]


def variants_of(entries: list[ManifestEntry], source_ids: set[str]) -> list[ManifestEntry]:
    return [e for e in entries if e.source_id in source_ids]


def save(entries: list[ManifestEntry], path: str | Path) -> None:
    lines = []
    for e in entries:
        record = {k: v for k, v in asdict(e).items() if v is not None}
        lines.append(json.dumps(record, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path: str | Path) -> list[ManifestEntry]:
    entries = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            entries.append(ManifestEntry(**record))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ValueError(f"{path}:{n}: bad manifest line: {exc}") from exc
    validate(entries)
    return entries
