import json

import numpy as np
import pytest

from sedpipe.audio import AudioClip, write_wav

SR = 16000


def tone(freq=440.0, duration=1.0, amplitude=0.5, sr=SR):
    t = np.arange(int(duration * sr)) / sr
    return AudioClip(samples=amplitude * np.sin(2 * np.pi * freq * t), sample_rate=sr)


def silence(duration=1.0, sr=SR):
    return AudioClip(samples=np.zeros(int(duration * sr)), sample_rate=sr)


def constant(value=0.5, duration=1.0, sr=SR):
    return AudioClip(samples=np.full(int(duration * sr), value), sample_rate=sr)


def burst_clip(pre_s, burst_s, post_s, level=0.5, sr=SR):
    """Silence, then a constant-level burst, then silence."""
    parts = [np.zeros(int(pre_s * sr)), np.full(int(burst_s * sr), level),
             np.zeros(int(post_s * sr))]
    return AudioClip(samples=np.concatenate(parts), sample_rate=sr)


@pytest.fixture
def fixture_bank(tmp_path):
    """20 distinct-phrase event WAVs plus an events.jsonl manifest."""
    bank_dir = tmp_path / "bank"
    bank_dir.mkdir()
    rows = []
    rng = np.random.default_rng(1234)
    for i in range(20):
        dur = float(rng.uniform(1.0, 4.0))
        clip = tone(freq=200 + 50 * i, duration=dur, amplitude=0.3)
        name = f"event_{i:02d}.wav"
        write_wav(clip, bank_dir / name)
        rows.append({"id": f"event_{i:02d}", "audio": name, "label": f"phrase {i}",
                     "source_id": f"src_{i:02d}", "onset_s": 0.0,
                     "offset_s": round(dur, 6), "duration_s": round(dur, 6)})
    manifest = bank_dir / "events.jsonl"
    manifest.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return manifest


@pytest.fixture
def background_dir(tmp_path):
    bg_dir = tmp_path / "backgrounds"
    bg_dir.mkdir()
    rng = np.random.default_rng(99)
    for i in range(3):
        clip = AudioClip(samples=0.01 * rng.standard_normal(10 * SR), sample_rate=SR)
        write_wav(clip, bg_dir / f"ambiance_{i}.wav")
    return bg_dir


def make_cluster_space(n_clusters=8, phrases_per_cluster=6, d=16, seed=5):
    """Synthetic cluster space with orthonormal-ish centroids."""
    from sedpipe.clusters import ClusterSpace

    rng = np.random.default_rng(seed)
    emb = rng.standard_normal((n_clusters, d))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    phrases, assignments = [], []
    for c in range(n_clusters):
        for j in range(phrases_per_cluster):
            phrases.append(f"cluster{c} phrase{j}")
            assignments.append(c)
    return ClusterSpace(centroid_ids=np.arange(n_clusters),
                        centroid_names=tuple(f"c{c}" for c in range(n_clusters)),
                        centroid_embeddings=emb, phrases=tuple(phrases),
                        phrase_clusters=np.array(assignments))


def write_cluster_files(tmp_path, n_clusters=10, d=8, seed=5):
    """Centroid/phrase JSONL files covering the fixture bank's phrases.

    "phrase 0".."phrase 19" land in clusters 0-4; 60 filler phrases fill
    clusters 5-9 so the negative pool is never exhausted at N=20.
    """
    rng = np.random.default_rng(seed)
    emb = rng.standard_normal((n_clusters, d))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    centroid_path = tmp_path / "centroids.jsonl"
    with open(centroid_path, "w") as f:
        for c in range(n_clusters):
            f.write(json.dumps({"cluster_id": c, "name": f"c{c}",
                                "embedding": emb[c].tolist()}) + "\n")
    phrase_path = tmp_path / "phrases.jsonl"
    with open(phrase_path, "w") as f:
        for i in range(20):
            f.write(json.dumps({"phrase": f"phrase {i}", "cluster_id": i % 5}) + "\n")
        for j in range(60):
            f.write(json.dumps({"phrase": f"filler {j}",
                                "cluster_id": 5 + j % 5}) + "\n")
    return centroid_path, phrase_path
