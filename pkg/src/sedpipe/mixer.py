"""Synthetic scene generation: background + SNR-scaled foreground events.

Each scene is planned from an RNG stream derived from (seed, scene_index),
so output is bit-reproducible regardless of worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioClip, AudioError, db_to_linear, read_wav, rms, write_wav

DEFAULT_TEMPLATES = ["This audio contains the sounds of {}."]


@dataclass(frozen=True)
class MixParams:
    timeline_s: float = 10.0
    max_events: int = 5
    repeat_max: int = 3
    repeat_threshold_s: float = 3.0
    snr_min_db: float = 12.0
    snr_max_db: float = 20.0
    frames_per_clip: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.snr_min_db > self.snr_max_db:
            raise ValueError("snr_min_db > snr_max_db")
        if self.max_events < 1 or self.frames_per_clip < 1 or self.timeline_s <= 0:
            raise ValueError("invalid mix parameters")


@dataclass(frozen=True)
class Placement:
    event_id: str
    phrase: str
    repeat_count: int
    onset_s: float
    offset_s: float
    snr_db: float
    gain: float


@dataclass(frozen=True)
class SceneRecipe:
    background_id: str
    placements: tuple
    rescale: float = 1.0


@dataclass(frozen=True)
class SyntheticScene:
    audio: AudioClip
    caption: str
    annotations: tuple  # of (phrase, frame label array)
    recipe: SceneRecipe


def _scene_rng(seed: int, scene_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, scene_index]))


def plan_scene(background: AudioClip, background_id: str, event_bank: list,
               audio_lookup, params: MixParams, scene_index: int) -> SceneRecipe:
    """Draw events, repeats, onsets, SNRs and gains for one scene.

    event_bank rows need "id", "label" and "duration_s"; audio_lookup maps
    event id to AudioClip (used for the RMS in the gain computation).
    """
    if not event_bank:
        raise ValueError("event bank is empty")
    if background.duration_s < params.timeline_s:
        raise AudioError(
            f"background {background_id} shorter than timeline "
            f"({background.duration_s:.2f}s < {params.timeline_s}s)")
    rng = _scene_rng(params.seed, scene_index)
    bg_rms = rms(background.samples[:int(params.timeline_s * background.sample_rate)])

    m = int(rng.integers(1, params.max_events + 1))
    # No phrase appears twice in one scene; scan a random permutation of the
    # bank and keep the first m entries with distinct labels.
    order = rng.permutation(len(event_bank))
    chosen, seen = [], set()
    for idx in order:
        entry = event_bank[idx]
        if entry["label"] in seen:
            continue
        seen.add(entry["label"])
        chosen.append(entry)
        if len(chosen) == m:
            break

    placements = []
    for entry in chosen:
        dur = float(entry["duration_s"])
        repeat = 1
        if dur < params.repeat_threshold_s:
            repeat = int(rng.integers(1, params.repeat_max + 1))
            while repeat * dur > params.timeline_s:
                repeat = int(rng.integers(1, params.repeat_max + 1))
        eff_dur = min(repeat * dur, params.timeline_s)
        onset = float(rng.uniform(0.0, params.timeline_s - eff_dur))
        snr_db = float(rng.uniform(params.snr_min_db, params.snr_max_db))
        event_rms = rms(audio_lookup(entry["id"]))
        if event_rms == 0.0:
            raise AudioError(f"event {entry['id']} has zero RMS")
        gain = (bg_rms / event_rms) * db_to_linear(snr_db)
        placements.append(Placement(event_id=entry["id"], phrase=entry["label"],
                                    repeat_count=repeat, onset_s=onset,
                                    offset_s=onset + eff_dur, snr_db=snr_db, gain=gain))
    return SceneRecipe(background_id=background_id, placements=tuple(placements))


def render_scene(recipe: SceneRecipe, background: AudioClip, audio_lookup,
                 params: MixParams) -> tuple[AudioClip, SceneRecipe]:
    """Mix the recipe into audio; peak-rescale if the sum exceeds full scale."""
    sr = background.sample_rate
    n = int(round(params.timeline_s * sr))
    if len(background.samples) < n:
        raise AudioError("background shorter than timeline")
    mix = background.samples[:n].copy()
    for p in recipe.placements:
        event = audio_lookup(p.event_id)
        if event.sample_rate != sr:
            raise AudioError(f"sample-rate mismatch for event {p.event_id}")
        tiled = np.tile(event.samples, p.repeat_count)
        start = int(round(p.onset_s * sr))
        end = min(start + len(tiled), n)
        mix[start:end] += p.gain * tiled[:end - start]
    peak = np.max(np.abs(mix))
    rescale = 1.0
    if peak > 1.0:
        rescale = 1.0 / peak
        mix *= rescale
    out = SceneRecipe(background_id=recipe.background_id,
                      placements=recipe.placements, rescale=rescale)
    return AudioClip(samples=mix, sample_rate=sr), out


def render_frame_labels(recipe: SceneRecipe, frames: int,
                        timeline_s: float = 10.0) -> dict[str, np.ndarray]:
    """Per-phrase 0/1 frame labels; frame l covers [l*T/L, (l+1)*T/L).

    A frame is positive when any placement of the phrase overlaps it with
    positive length. Placements sharing a phrase merge into one vector.
    """
    if frames < 1:
        raise ValueError("frame count must be >= 1")
    width = timeline_s / frames
    labels: dict[str, np.ndarray] = {}
    for p in recipe.placements:
        y = labels.setdefault(p.phrase, np.zeros(frames, dtype=np.int8))
        for l in range(frames):
            lo, hi = l * width, (l + 1) * width
            if min(hi, p.offset_s) - max(lo, p.onset_s) > 0:
                y[l] = 1
    return labels


def generate_caption(phrases: list[str], templates: list[str],
                     rng: np.random.Generator) -> str:
    """Join phrases (", " with a final " and ") into a random template."""
    if not phrases:
        raise ValueError("need at least one phrase")
    if not templates:
        raise ValueError("need at least one template")
    template = templates[int(rng.integers(0, len(templates)))]
    if "{}" not in template:
        raise ValueError(f"template has no {{}} slot: {template!r}")
    if len(phrases) == 1:
        joined = phrases[0]
    else:
        joined = ", ".join(phrases[:-1]) + " and " + phrases[-1]
    return template.format(joined)


def synthesize_scene(background: AudioClip, background_id: str, event_bank: list,
                     audio_lookup, params: MixParams, scene_index: int,
                     templates: list[str] | None = None) -> SyntheticScene:
    """Plan, render and label one scene deterministically."""
    recipe = plan_scene(background, background_id, event_bank, audio_lookup,
                        params, scene_index)
    audio, recipe = render_scene(recipe, background, audio_lookup, params)
    labels = render_frame_labels(recipe, params.frames_per_clip, params.timeline_s)
    # Caption phrases in placement order (first occurrence).
    ordered = []
    for p in recipe.placements:
        if p.phrase not in ordered:
            ordered.append(p.phrase)
    caption_rng = np.random.default_rng(
        np.random.SeedSequence([params.seed, scene_index, 1]))
    caption = generate_caption(ordered, templates or DEFAULT_TEMPLATES, caption_rng)
    annotations = tuple((phrase, labels[phrase]) for phrase in ordered)
    return SyntheticScene(audio=audio, caption=caption, annotations=annotations,
                          recipe=recipe)


def build_dataset(backgrounds: list[tuple[str, AudioClip]], event_bank: list,
                  audio_lookup, params: MixParams, count: int, output_dir,
                  templates: list[str] | None = None, workers: int = 1) -> list[dict]:
    """Write `count` scene WAVs plus manifest.jsonl under output_dir.

    Scene i uses background i mod len(backgrounds) and its own derived RNG
    stream, so the result is independent of worker count.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not backgrounds:
        raise ValueError("no backgrounds")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    def make(i: int) -> tuple[SyntheticScene, str]:
        bg_id, bg = backgrounds[i % len(backgrounds)]
        try:
            return synthesize_scene(bg, bg_id, event_bank, audio_lookup, params,
                                    i, templates), bg_id
        except Exception as exc:
            raise RuntimeError(f"scene {i} failed: {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(make, range(count)))
    else:
        results = [make(i) for i in range(count)]

    rows = []
    for i, (scene, bg_id) in enumerate(results):
        scene_id = f"scene_{i:06d}"
        wav_name = f"{scene_id}.wav"
        write_wav(scene.audio, output_dir / wav_name)
        rows.append({
            "id": scene_id,
            "audio": wav_name,
            "caption": scene.caption,
            "duration_s": params.timeline_s,
            "background_id": bg_id,
            "events": [{
                "phrase": p.phrase,
                "onset_s": round(p.onset_s, 6),
                "offset_s": round(p.offset_s, 6),
                "snr_db": round(p.snr_db, 6),
            } for p in scene.recipe.placements],
            "rescale": scene.recipe.rescale,
        })
    with open(output_dir / "manifest.jsonl", "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return rows


def load_event_bank(manifest_path):
    """Load an event manifest and return (rows, audio_lookup) with caching."""
    manifest_path = Path(manifest_path)
    rows = [json.loads(line) for line in manifest_path.read_text().splitlines()
            if line.strip()]
    by_id = {row["id"]: manifest_path.parent / row["audio"] for row in rows}
    cache: dict[str, AudioClip] = {}

    def lookup(event_id: str) -> AudioClip:
        if event_id not in cache:
            cache[event_id] = read_wav(by_id[event_id])
        return cache[event_id]

    return rows, lookup
