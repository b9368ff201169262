"""Single-event segment extraction via windowed energy thresholding.

A sliding window measures mean energy in dBFS; windows above a threshold
are merged into runs (tolerating short dips) and the first run becomes
the event segment, kept only if its duration is in range.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import SILENCE_FLOOR_DB, AudioClip, AudioError, read_wav, write_wav

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD_DB = -20.0
DEFAULT_WINDOW_S = 0.10
DEFAULT_HOP_S = 0.05
DEFAULT_MERGE_GAP_S = 0.20
DEFAULT_MIN_DUR_S = 1.0
DEFAULT_MAX_DUR_S = 7.5


@dataclass(frozen=True)
class EnergyEnvelope:
    """Mean energy per window position, in dBFS (full scale = 0 dB)."""

    window_db: np.ndarray
    window_s: float
    hop_s: float

    def __post_init__(self):
        if not (self.window_s >= self.hop_s > 0):
            raise ValueError(f"need window_s >= hop_s > 0, got {self.window_s}, {self.hop_s}")


@dataclass(frozen=True)
class EventSegment:
    source_id: str
    onset_s: float
    offset_s: float
    audio: AudioClip
    label: str

    def __post_init__(self):
        if not (0 <= self.onset_s < self.offset_s):
            raise ValueError(f"bad segment bounds [{self.onset_s}, {self.offset_s}]")

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s


def energy_envelope(clip: AudioClip, window_s: float = DEFAULT_WINDOW_S,
                    hop_s: float = DEFAULT_HOP_S) -> EnergyEnvelope:
    """Mean energy (10*log10 of mean squared amplitude) per window position."""
    win = int(round(window_s * clip.sample_rate))
    hop = int(round(hop_s * clip.sample_rate))
    if win < 1 or hop < 1:
        raise ValueError("window and hop must span at least one sample")
    x = clip.samples
    if len(x) < win:
        raise AudioError(f"clip shorter than one window ({len(x)} < {win} samples)")
    n_windows = (len(x) - win) // hop + 1
    sq = x * x
    energies = np.empty(n_windows)
    for i in range(n_windows):
        energies[i] = sq[i * hop:i * hop + win].mean()
    db = np.full(n_windows, SILENCE_FLOOR_DB)
    nz = energies > 0
    db[nz] = 10.0 * np.log10(energies[nz])
    return EnergyEnvelope(window_db=db, window_s=window_s, hop_s=hop_s)


def extract_event_segment(clip: AudioClip, source_id: str = "", label: str = "",
                          threshold_db: float = DEFAULT_THRESHOLD_DB,
                          window_s: float = DEFAULT_WINDOW_S, hop_s: float = DEFAULT_HOP_S,
                          merge_gap_s: float = DEFAULT_MERGE_GAP_S,
                          min_dur_s: float = DEFAULT_MIN_DUR_S,
                          max_dur_s: float = DEFAULT_MAX_DUR_S) -> EventSegment | None:
    """Cut the first continuous high-energy run; None if no run of valid duration.

    Runs of active windows may bridge inactive gaps no longer than
    merge_gap_s. Boundaries snap to window edges.
    """
    env = energy_envelope(clip, window_s, hop_s)
    active = env.window_db >= threshold_db
    if not active.any():
        return None
    max_gap_windows = int(round(merge_gap_s / hop_s))
    runs = []  # (first_window, last_window) inclusive
    start = prev = None
    for i in np.flatnonzero(active):
        if start is None:
            start = prev = i
        elif i - prev - 1 <= max_gap_windows:
            prev = i
        else:
            runs.append((start, prev))
            start = prev = i
    runs.append((start, prev))

    first, last = runs[0]
    onset_s = first * hop_s
    offset_s = min(last * hop_s + window_s, clip.duration_s)
    duration = offset_s - onset_s
    if not (min_dur_s <= duration <= max_dur_s):
        return None
    i0 = int(round(onset_s * clip.sample_rate))
    i1 = int(round(offset_s * clip.sample_rate))
    cut = AudioClip(samples=clip.samples[i0:i1], sample_rate=clip.sample_rate)
    return EventSegment(source_id=source_id, onset_s=onset_s, offset_s=offset_s,
                        audio=cut, label=label)


def clip_event_bank(input_manifest, output_dir, sample_rate: int = 16000,
                    threshold_db: float = DEFAULT_THRESHOLD_DB,
                    window_s: float = DEFAULT_WINDOW_S, hop_s: float = DEFAULT_HOP_S,
                    merge_gap_s: float = DEFAULT_MERGE_GAP_S,
                    min_dur_s: float = DEFAULT_MIN_DUR_S,
                    max_dur_s: float = DEFAULT_MAX_DUR_S) -> dict:
    """Run the clipper over a source manifest; write event WAVs plus manifests.

    input_manifest is JSONL with {"id", "audio", "label"} rows, audio paths
    relative to the manifest. Writes events.jsonl and rejections.jsonl under
    output_dir. Returns {"events": [...], "rejections": [...]}.
    """
    input_manifest = Path(input_manifest)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    rows = [json.loads(line) for line in input_manifest.read_text().splitlines() if line.strip()]
    if not rows:
        raise ValueError(f"no inputs in manifest {input_manifest}")

    events, rejections = [], []
    n_readable = 0
    for row in rows:
        source_id = row["id"]
        path = input_manifest.parent / row["audio"]
        try:
            clip = read_wav(path)
        except (OSError, AudioError) as exc:
            log.warning("skipping %s: %s", source_id, exc)
            rejections.append({"source_id": source_id, "reason": f"unreadable: {exc}"})
            continue
        n_readable += 1
        if clip.sample_rate != sample_rate:
            rejections.append({"source_id": source_id,
                               "reason": f"sample rate {clip.sample_rate} != {sample_rate}"})
            continue
        try:
            seg = extract_event_segment(clip, source_id=source_id, label=row["label"],
                                        threshold_db=threshold_db, window_s=window_s,
                                        hop_s=hop_s, merge_gap_s=merge_gap_s,
                                        min_dur_s=min_dur_s, max_dur_s=max_dur_s)
        except AudioError as exc:
            rejections.append({"source_id": source_id, "reason": str(exc)})
            continue
        if seg is None:
            rejections.append({"source_id": source_id,
                               "reason": "no run above threshold with duration in range"})
            continue
        event_id = f"{source_id}_evt"
        wav_name = f"{event_id}.wav"
        write_wav(seg.audio, output_dir / wav_name)
        events.append({
            "id": event_id,
            "audio": wav_name,
            "label": seg.label,
            "source_id": source_id,
            "onset_s": round(seg.onset_s, 6),
            "offset_s": round(seg.offset_s, 6),
            "duration_s": round(seg.duration_s, 6),
        })
    if n_readable == 0:
        raise ValueError("no readable inputs in manifest")

    with open(output_dir / "events.jsonl", "w") as f:
        for ev in events:
            f.write(json.dumps(ev) + "\n")
    with open(output_dir / "rejections.jsonl", "w") as f:
        for rej in rejections:
            f.write(json.dumps(rej) + "\n")
    return {"events": events, "rejections": rejections}
