"""JSONL artifact persistence with provenance headers.

Every artifact written by a pipeline stage is a UTF-8 JSONL file whose first
line is a header object ``{"_header": {...}}`` carrying the producing stage,
the config hash, and the sha256 of each direct input file. Readers skip the
header by default; `verify_chain` re-hashes the recorded inputs to refuse
artifacts whose upstream files changed since they were produced.

All JSON is serialized canonically (sorted keys, compact separators) so that
a rerun with identical inputs and seed overwrites with identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import StaleArtifactError, UpstreamMissingError, ValidationError

HEADER_KEY = "_header"
GRAPH_MAGIC = b"CAG1\x00\n"


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_text(text: str) -> str:
    return sha256_bytes(text.encode("utf-8"))


def stable_u64(*parts: object) -> int:
    """Platform-stable 64-bit integer derived from the string form of `parts`."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config_dict: dict[str, Any]) -> str:
    return sha256_text(canonical_dumps(config_dict))


def make_header(stage: str, cfg_hash: str, inputs: dict[str, str | Path]) -> dict[str, Any]:
    """Build an artifact header; `inputs` maps logical name -> file path."""
    hashed = {}
    for name, path in sorted(inputs.items()):
        p = Path(path)
        if not p.exists():
            raise UpstreamMissingError(f"input '{name}' for stage '{stage}' missing: {p}")
        hashed[name] = {"path": p.name, "sha256": sha256_file(p)}
    return {"stage": stage, "config_hash": cfg_hash, "inputs": hashed}


def write_jsonl(path: str | Path, rows: Iterable[dict], header: dict[str, Any] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(canonical_dumps({HEADER_KEY: header}) + "\n")
        for row in rows:
            fh.write(canonical_dumps(row) + "\n")
    os.replace(tmp, path)


def write_json(path: str | Path, obj: dict, header: dict[str, Any] | None = None) -> None:
    payload = dict(obj)
    if header is not None:
        payload[HEADER_KEY] = header
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(payload) + "\n")
    os.replace(tmp, path)


def read_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UpstreamMissingError(f"artifact missing: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def read_jsonl(path: str | Path, skip_header: bool = True) -> Iterator[dict]:
    """Yield data rows; malformed lines raise ValidationError with the line number."""
    path = Path(path)
    if not path.exists():
        raise UpstreamMissingError(f"artifact missing: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if lineno == 1 and isinstance(obj, dict) and HEADER_KEY in obj:
                if skip_header:
                    continue
            yield obj


def read_header(path: str | Path) -> dict[str, Any] | None:
    """Provenance header of a JSONL artifact or a graph binary, if any."""
    path = Path(path)
    if not path.exists():
        raise UpstreamMissingError(f"artifact missing: {path}")
    with open(path, "rb") as fh:
        first = fh.readline()
        if first == GRAPH_MAGIC:
            first = fh.readline()  # binary layout: magic line, then the header line
            try:
                obj = json.loads(first.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                return None
            return obj if isinstance(obj, dict) and "inputs" in obj else None
    try:
        obj = json.loads(first.decode("utf-8").strip() or "null")
    except (json.JSONDecodeError, UnicodeDecodeError):
        return None
    if isinstance(obj, dict) and HEADER_KEY in obj:
        return obj[HEADER_KEY]
    return None


def verify_chain(path: str | Path) -> None:
    """Refuse an artifact whose recorded input files changed on disk.

    Inputs recorded in the header are re-hashed relative to the artifact's
    directory; files that no longer exist are ignored (they may have been
    legitimately cleaned up after the producing stage ran).
    """
    path = Path(path)
    header = read_header(path)
    if header is None:
        return
    for name, rec in header.get("inputs", {}).items():
        sibling = path.parent / rec["path"]
        if not sibling.exists():
            continue
        actual = sha256_file(sibling)
        if actual != rec["sha256"]:
            raise StaleArtifactError(
                f"{path.name}: upstream '{name}' ({rec['path']}) changed since this "
                f"artifact was produced; rerun the producing stage"
            )
