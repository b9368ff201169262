import json

import numpy as np
import pytest

from sedpipe.audio import AudioClip, AudioError, rms
from sedpipe.mixer import (MixParams, Placement, SceneRecipe, build_dataset,
                           generate_caption, load_event_bank, plan_scene,
                           render_frame_labels, render_scene, synthesize_scene)

from conftest import SR, constant, silence


def _bank_and_lookup(entries):
    bank = []
    clips = {}
    for eid, label, clip in entries:
        bank.append({"id": eid, "label": label,
                     "duration_s": clip.duration_s})
        clips[eid] = clip
    return bank, clips.__getitem__


def test_gain_formula():
    # Background RMS 0.1, event RMS 0.5, SNR 20 dB -> gain 2, scaled RMS 1.
    bg = constant(0.1, 10.0)
    ev = constant(0.5, 2.0)
    bank, lookup = _bank_and_lookup([("e", "beep", ev)])
    params = MixParams(snr_min_db=20.0, snr_max_db=20.0, max_events=1,
                       repeat_max=1, seed=0)
    recipe = plan_scene(bg, "bg", bank, lookup, params, 0)
    p = recipe.placements[0]
    assert p.gain == pytest.approx(2.0, rel=1e-9)
    assert rms(p.gain * ev.samples) == pytest.approx(1.0, rel=1e-9)


def test_zero_snr_equal_energy():
    bg = constant(0.2, 10.0)
    ev = constant(0.7, 2.0)
    bank, lookup = _bank_and_lookup([("e", "beep", ev)])
    params = MixParams(snr_min_db=0.0, snr_max_db=0.0, max_events=1,
                       repeat_max=1, seed=0)
    recipe = plan_scene(bg, "bg", bank, lookup, params, 0)
    assert rms(recipe.placements[0].gain * ev.samples) == pytest.approx(0.2, abs=1e-9)


def test_plan_scene_deterministic():
    bg = constant(0.1, 10.0)
    entries = [(f"e{i}", f"p{i}", constant(0.3, 1.5)) for i in range(6)]
    bank, lookup = _bank_and_lookup(entries)
    params = MixParams(seed=42)
    r1 = plan_scene(bg, "bg", bank, lookup, params, 7)
    r2 = plan_scene(bg, "bg", bank, lookup, params, 7)
    assert r1 == r2


def test_plan_scene_no_duplicate_phrases():
    bg = constant(0.1, 10.0)
    entries = [(f"e{i}", f"p{i % 3}", constant(0.3, 1.5)) for i in range(9)]
    bank, lookup = _bank_and_lookup(entries)
    for i in range(20):
        recipe = plan_scene(bg, "bg", bank, lookup, MixParams(seed=1), i)
        phrases = [p.phrase for p in recipe.placements]
        assert len(phrases) == len(set(phrases))


def test_plan_scene_errors():
    bank, lookup = _bank_and_lookup([("e", "p", constant(0.3, 1.5))])
    with pytest.raises(AudioError, match="shorter than timeline"):
        plan_scene(constant(0.1, 5.0), "bg", bank, lookup, MixParams(seed=0), 0)
    with pytest.raises(ValueError, match="empty"):
        plan_scene(constant(0.1, 10.0), "bg", [], lookup, MixParams(seed=0), 0)
    bank2, lookup2 = _bank_and_lookup([("z", "p", silence(1.5))])
    with pytest.raises(AudioError, match="zero RMS"):
        plan_scene(constant(0.1, 10.0), "bg", bank2, lookup2, MixParams(seed=0), 0)


def test_render_scene_additive_identity():
    bg = silence(10.0)
    ev = constant(0.4, 1.0)
    _, lookup = _bank_and_lookup([("e", "p", ev)])
    recipe = SceneRecipe(background_id="bg", placements=(
        Placement("e", "p", 1, 2.0, 3.0, 0.0, 1.0),))
    audio, out = render_scene(recipe, bg, lookup, MixParams(seed=0))
    assert out.rescale == 1.0
    assert np.allclose(audio.samples[:2 * SR], 0.0)
    assert np.allclose(audio.samples[2 * SR:3 * SR], 0.4)
    assert np.allclose(audio.samples[3 * SR:], 0.0)


def test_render_scene_superposition():
    bg = silence(10.0)
    _, lookup = _bank_and_lookup([("a", "pa", constant(0.3, 2.0)),
                                  ("b", "pb", constant(0.4, 2.0))])
    recipe = SceneRecipe(background_id="bg", placements=(
        Placement("a", "pa", 1, 1.0, 3.0, 0.0, 1.0),
        Placement("b", "pb", 1, 2.0, 4.0, 0.0, 1.0)))
    audio, _ = render_scene(recipe, bg, lookup, MixParams(seed=0))
    overlap = audio.samples[int(2.5 * SR)]
    assert overlap == pytest.approx(0.7, abs=1e-12)


def test_render_scene_overflow_rescale():
    bg = silence(10.0)
    _, lookup = _bank_and_lookup([("a", "pa", constant(1.0, 1.0))])
    recipe = SceneRecipe(background_id="bg", placements=(
        Placement("a", "pa", 1, 0.0, 1.0, 0.0, 2.0),))
    audio, out = render_scene(recipe, bg, lookup, MixParams(seed=0))
    assert out.rescale == pytest.approx(0.5, rel=1e-12)
    assert np.max(np.abs(audio.samples)) == pytest.approx(1.0, rel=1e-12)


def test_frame_labels_fixture():
    # Event [1, 2] s at L=64 over 10 s: positives on frames 6..12 inclusive.
    recipe = SceneRecipe(background_id="bg", placements=(
        Placement("e", "p", 1, 1.0, 2.0, 0.0, 1.0),))
    labels = render_frame_labels(recipe, 64, 10.0)
    y = labels["p"]
    width = 10.0 / 64
    brute = [1 if min((l + 1) * width, 2.0) - max(l * width, 1.0) > 0 else 0
             for l in range(64)]
    assert y.tolist() == brute
    assert np.flatnonzero(y).tolist() == list(range(6, 13))


def test_frame_labels_full_cover_and_absent():
    recipe = SceneRecipe(background_id="bg", placements=(
        Placement("e", "p", 1, 0.0, 10.0, 0.0, 1.0),))
    labels = render_frame_labels(recipe, 64, 10.0)
    assert labels["p"].sum() == 64
    assert "q" not in labels


def test_frame_labels_merge_same_phrase():
    recipe = SceneRecipe(background_id="bg", placements=(
        Placement("e", "p", 1, 0.0, 1.0, 0.0, 1.0),
        Placement("e2", "p", 1, 9.0, 10.0, 0.0, 1.0)))
    labels = render_frame_labels(recipe, 10, 10.0)
    assert labels["p"].tolist() == [1, 0, 0, 0, 0, 0, 0, 0, 0, 1]


def test_generate_caption():
    rng = np.random.default_rng(0)
    tmpl = ["This audio contains the sounds of {}."]
    assert generate_caption(["dog barking"], tmpl, rng) == \
        "This audio contains the sounds of dog barking."
    assert generate_caption(["rain", "thunder", "wind"], tmpl, rng) == \
        "This audio contains the sounds of rain, thunder and wind."
    with pytest.raises(ValueError):
        generate_caption([], tmpl, rng)
    with pytest.raises(ValueError, match="slot"):
        generate_caption(["x"], ["no slot"], rng)


def test_every_placement_has_positive_frame(fixture_bank, background_dir):
    from sedpipe.mixer import load_event_bank
    from sedpipe.audio import read_wav

    bank, lookup = load_event_bank(fixture_bank)
    bg = read_wav(sorted(background_dir.glob("*.wav"))[0])
    for i in range(10):
        scene = synthesize_scene(bg, "bg0", bank, lookup, MixParams(seed=3), i)
        placed = {p.phrase for p in scene.recipe.placements}
        got = {phrase for phrase, y in scene.annotations if y.sum() >= 1}
        assert placed == got


def test_build_dataset_workers_byte_identical(fixture_bank, background_dir, tmp_path):
    from sedpipe.audio import read_wav

    bank, lookup = load_event_bank(fixture_bank)
    backgrounds = [(p.stem, read_wav(p)) for p in sorted(background_dir.glob("*.wav"))]
    params = MixParams(seed=7)
    build_dataset(backgrounds, bank, lookup, params, 20, tmp_path / "w1", workers=1)
    build_dataset(backgrounds, bank, lookup, params, 20, tmp_path / "w4", workers=4)
    assert (tmp_path / "w1" / "manifest.jsonl").read_bytes() == \
        (tmp_path / "w4" / "manifest.jsonl").read_bytes()
    for wav in sorted((tmp_path / "w1").glob("*.wav")):
        assert wav.read_bytes() == (tmp_path / "w4" / wav.name).read_bytes()


def test_build_dataset_count_zero(fixture_bank, background_dir, tmp_path):
    from sedpipe.audio import read_wav

    bank, lookup = load_event_bank(fixture_bank)
    backgrounds = [(p.stem, read_wav(p)) for p in sorted(background_dir.glob("*.wav"))]
    with pytest.raises(ValueError, match="count"):
        build_dataset(backgrounds, bank, lookup, MixParams(seed=0), 0, tmp_path / "o")


def test_build_dataset_rows_validate(fixture_bank, background_dir, tmp_path):
    from sedpipe.audio import read_wav
    from sedpipe.manifests import validate_manifest

    bank, lookup = load_event_bank(fixture_bank)
    backgrounds = [(p.stem, read_wav(p)) for p in sorted(background_dir.glob("*.wav"))]
    build_dataset(backgrounds, bank, lookup, MixParams(seed=11), 10, tmp_path / "d")
    assert validate_manifest(tmp_path / "d" / "manifest.jsonl") == []
    rows = [json.loads(l) for l in (tmp_path / "d" / "manifest.jsonl").read_text().splitlines()]
    for row in rows:
        assert 1 <= len(row["events"]) <= 5
        for ev in row["events"]:
            assert 12.0 <= ev["snr_db"] <= 20.0
            assert 0 <= ev["onset_s"] < ev["offset_s"] <= 10.0 + 1e-9
