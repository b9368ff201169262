"""JSONL manifest reading, writing and validation.

Three row shapes flow through the pipeline: event-bank rows from the
clipper, scene rows from the mixer, and enriched scene rows from the
negative sampler. validate_manifest dispatches on the fields present.
"""

from __future__ import annotations

import json
from pathlib import Path


class ManifestError(Exception):
    pass


def read_jsonl(path) -> list[dict]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return rows


def write_jsonl(path, rows) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def _require(row: dict, fields: tuple, where: str, problems: list) -> bool:
    missing = [f for f in fields if f not in row]
    if missing:
        problems.append(f"{where}: missing fields {missing}")
        return False
    return True


def _check_interval(onset, offset, where: str, problems: list) -> None:
    if not isinstance(onset, (int, float)) or not isinstance(offset, (int, float)):
        problems.append(f"{where}: onset/offset must be numbers")
    elif not onset < offset:
        problems.append(f"{where}: offset_s {offset} must exceed onset_s {onset}")
    elif onset < 0:
        problems.append(f"{where}: negative onset_s {onset}")


def validate_event_row(row: dict, where: str, problems: list) -> None:
    if not _require(row, ("id", "audio", "label", "source_id", "onset_s", "offset_s",
                          "duration_s"), where, problems):
        return
    _check_interval(row["onset_s"], row["offset_s"], where, problems)


def validate_scene_row(row: dict, where: str, problems: list) -> None:
    if not _require(row, ("id", "audio", "caption", "duration_s", "events"), where,
                    problems):
        return
    if not isinstance(row["events"], list) or not row["events"]:
        problems.append(f"{where}: events must be a non-empty list")
        return
    for j, ev in enumerate(row["events"]):
        ev_where = f"{where}, event {j}"
        if not _require(ev, ("phrase", "onset_s", "offset_s"), ev_where, problems):
            continue
        _check_interval(ev["onset_s"], ev["offset_s"], ev_where, problems)
        if isinstance(ev["offset_s"], (int, float)) and ev["offset_s"] > row["duration_s"] + 1e-9:
            problems.append(f"{ev_where}: offset_s exceeds clip duration")
    if "phrase_set" in row:
        phrases = row["phrase_set"]
        positives = {e["phrase"] for e in row["events"]}
        declared = {p["phrase"] for p in phrases if p.get("positive")}
        if declared != positives:
            problems.append(f"{where}: phrase_set positives {sorted(declared)} != "
                            f"event phrases {sorted(positives)}")
        if len({p["phrase"] for p in phrases}) != len(phrases):
            problems.append(f"{where}: duplicate phrases in phrase_set")


def validate_manifest(path) -> list[str]:
    """Return a list of problems (empty when the manifest is valid)."""
    problems: list[str] = []
    rows = read_jsonl(path)
    if not rows:
        problems.append(f"{path}: empty manifest")
        return problems
    for i, row in enumerate(rows):
        where = f"row {i} (id={row.get('id', '?')})"
        if "caption" in row or "events" in row:
            validate_scene_row(row, where, problems)
        elif "source_id" in row:
            validate_event_row(row, where, problems)
        else:
            problems.append(f"{where}: unrecognized row shape")
    return problems
