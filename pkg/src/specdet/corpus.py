"""Gadget corpus: ingest assembly files, preprocess, tokenize, label.

A corpus is an ordered list of labeled gadget records (1 = victim
function, 0 = benign/non-victim) persisted as one JSON object per line
so manifests stream and diff cleanly.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger("specdet.corpus")

# Assembler directives stripped during preprocessing. Closed, versioned
# list: file/section/format bookkeeping only, never instructions.
DIRECTIVE_REMOVE_LIST = (
    ".file",
    ".ident",
    ".section",
    ".text",
    ".globl",
    ".type",
    ".size",
    ".align",
    ".loc",
)
DIRECTIVE_REMOVE_PREFIXES = (".cfi_",)

# Maximal run of path-like characters containing a separator.
_PATH_RE = re.compile(r"[A-Za-z0-9_.~$%+=@\"'\-]*[/\\][A-Za-z0-9_.~$%+=@\"'\\/\-]*")
_COMMENT_RE = re.compile(r"[#;].*")
_TOKEN_SPLIT_RE = re.compile(r"[\s,()\[\]:]+")

MANIFEST_FIELDS = ("id", "label", "source", "raw_text", "clean_text", "tokens")


@dataclass(frozen=True)
class GadgetRecord:
    """One labeled assembly function."""

    id: str
    label: int
    raw_text: str
    clean_text: str
    tokens: tuple[str, ...]
    source: str

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


@dataclass
class CorpusManifest:
    """Ordered gadget records plus per-class counts."""

    records: list[GadgetRecord]
    class_counts: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise ValueError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
        counts = {0: 0, 1: 0}
        for rec in self.records:
            counts[rec.label] += 1
        self.class_counts = counts

    def __len__(self) -> int:
        return len(self.records)


def preprocess(raw_text: str) -> str:
    """Strip assembler bookkeeping directives, paths, and comments.

    Surviving lines keep their order; runs of whitespace collapse to
    single spaces; lines left empty are dropped. Idempotent.
    """
    out_lines = []
    for line in raw_text.splitlines():
        line = _COMMENT_RE.sub("", line)
        line = _PATH_RE.sub(" ", line)
        line = " ".join(line.split())
        if not line:
            continue
        head = line.split(None, 1)[0].lower()
        if head in DIRECTIVE_REMOVE_LIST or head.startswith(DIRECTIVE_REMOVE_PREFIXES):
            continue
        out_lines.append(line)
    return "\n".join(out_lines)


def tokenize(clean_text: str) -> list[str]:
    """Split preprocessed text into lowercased tokens.

    Whitespace and the separators ``, ( ) [ ] :`` delimit tokens and are
    dropped; mnemonics, registers, immediates, and symbols each become
    one token.
    """
    return [tok.lower() for tok in _TOKEN_SPLIT_RE.split(clean_text) if tok]


def make_record(record_id: str, label: int, raw_text: str, source: str) -> GadgetRecord:
    clean = preprocess(raw_text)
    return GadgetRecord(
        id=record_id,
        label=label,
        raw_text=raw_text,
        clean_text=clean,
        tokens=tuple(tokenize(clean)),
        source=source,
    )


def ingest_gadget_dir(directory: str | Path, label: int) -> list[GadgetRecord]:
    """Read every text file under ``directory`` into labeled records.

    Ordering is lexicographic by relative path regardless of filesystem
    enumeration order. Files that do not decode as UTF-8 text are
    skipped with a warning on the ingest log.
    """
    root = Path(directory)
    if not root.is_dir():
        raise OSError(f"gadget directory not readable: {root}")
    records = []
    paths = sorted(p for p in root.rglob("*") if p.is_file())
    for path in paths:
        rel = path.relative_to(root).as_posix()
        try:
            raw = path.read_text(encoding="utf-8")
        except UnicodeDecodeError:
            log.warning("skipping non-text file %s", path)
            continue
        if "\x00" in raw:
            log.warning("skipping binary file %s", path)
            continue
        records.append(make_record(f"{root.name}/{rel}", label, raw, str(path)))
    return records


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    """Write one JSON record per line, fields in fixed order, UTF-8."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in manifest.records:
            row = {
                "id": rec.id,
                "label": rec.label,
                "source": rec.source,
                "raw_text": rec.raw_text,
                "clean_text": rec.clean_text,
                "tokens": list(rec.tokens),
            }
            fh.write(json.dumps(row) + "\n")


def load_manifest(path: str | Path) -> CorpusManifest:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"malformed manifest line {lineno}: {exc}") from exc
            missing = [f for f in MANIFEST_FIELDS if f not in row]
            if missing:
                raise ValueError(
                    f"manifest line {lineno} missing fields: {', '.join(missing)}"
                )
            records.append(
                GadgetRecord(
                    id=row["id"],
                    label=int(row["label"]),
                    raw_text=row["raw_text"],
                    clean_text=row["clean_text"],
                    tokens=tuple(row["tokens"]),
                    source=row["source"],
                )
            )
    return CorpusManifest(records)


def looks_like_manifest(path: str | Path) -> bool:
    """Cheap sniff: first non-empty line is a JSON object with an id."""
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                return isinstance(row, dict) and "id" in row and "tokens" in row
    except (OSError, UnicodeDecodeError, json.JSONDecodeError):
        return False
    return False
