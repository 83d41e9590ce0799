"""Ground-truth files: one JSON object per line.

Each line holds ``sample_id``, ``script_path`` and a non-empty ``urls``
list.  Relative script paths resolve against the truth file's directory.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Tuple, Union

from iocs.urls import validate_url

logger = logging.getLogger(__name__)


class TruthError(Exception):
    """Base class for ground-truth problems."""


class TruthFormatError(TruthError):
    """A truth line is not a valid entry."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DuplicateSampleId(TruthError):
    def __init__(self, sample_id: str, line_number: int):
        super().__init__(f"line {line_number}: duplicate sample_id {sample_id!r}")
        self.sample_id = sample_id
        self.line_number = line_number


class EmptyCorpus(TruthError):
    """Nothing to score."""


@dataclass(frozen=True)
class GroundTruthEntry:
    """Known dropper URLs of one sample.

    Attributes:
        sample_id: Content hash of the script file
        script_path: Script location
        urls: Normalized URLs, non-empty
    """
    sample_id: str
    script_path: str
    urls: Tuple[str, ...]

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "script_path": self.script_path, "urls": list(self.urls)}


def sample_id_for(content: Union[bytes, str]) -> str:
    """SHA-256 hex digest identifying a script by its bytes."""
    if isinstance(content, str):
        content = content.encode("utf-8")
    return hashlib.sha256(content).hexdigest()


def load_ground_truth(path: Union[str, Path]) -> List[GroundTruthEntry]:
    """Read and validate a truth file.

    Args:
        path: JSON-lines file

    Returns:
        Entries in file order; blank lines are skipped

    Raises:
        TruthFormatError: A line is not JSON, lacks a field or holds an invalid URL
        DuplicateSampleId: Two lines share a sample_id
    """
    path = Path(path)
    entries: List[GroundTruthEntry] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            entry = _parse_line(line, line_number, path.parent)
            if entry.sample_id in seen:
                raise DuplicateSampleId(entry.sample_id, line_number)
            seen.add(entry.sample_id)
            entries.append(entry)
    logger.debug("loaded %d truth entries from %s", len(entries), path)
    return entries


def _parse_line(line: str, line_number: int, base_dir: Path) -> GroundTruthEntry:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TruthFormatError(f"invalid JSON ({exc.msg})", line_number) from exc
    if not isinstance(data, dict):
        raise TruthFormatError("expected a JSON object", line_number)

    sample_id, script_path, urls = data.get("sample_id"), data.get("script_path"), data.get("urls")
    if not isinstance(sample_id, str) or not sample_id:
        raise TruthFormatError("missing sample_id", line_number)
    if not isinstance(script_path, str) or not script_path:
        raise TruthFormatError("missing script_path", line_number)
    if not isinstance(urls, list) or not urls:
        raise TruthFormatError("urls must be a non-empty list", line_number)

    normalized = []
    for url in urls:
        valid = validate_url(url) if isinstance(url, str) else None
        if valid is None:
            raise TruthFormatError(f"invalid URL {url!r}", line_number)
        if valid not in normalized:
            normalized.append(valid)

    resolved = Path(script_path)
    if not resolved.is_absolute():
        resolved = base_dir / resolved
    return GroundTruthEntry(sample_id, str(resolved), tuple(normalized))


def write_ground_truth(entries: Iterable[GroundTruthEntry], path: Union[str, Path],
                       relative_to: Union[str, Path, None] = None) -> None:
    """Write entries as JSON lines, optionally with paths relative to a directory."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for entry in entries:
            record = entry.to_dict()
            if relative_to is not None:
                record["script_path"] = Path(entry.script_path).relative_to(relative_to).as_posix()
            f.write(json.dumps(record, sort_keys=True) + "\n")
