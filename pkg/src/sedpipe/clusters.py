"""Cluster-based negative phrase sampling with fixed phrase set size.

Each scene's positive phrases are padded out to exactly N phrases with
negatives drawn only from clusters disjoint with the positives' clusters.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_PHRASE_SET_SIZE = 20


class ClusterError(Exception):
    pass


@dataclass(frozen=True)
class ClusterSpace:
    """Centroid set plus phrase database with cluster assignments."""

    centroid_ids: np.ndarray          # (C,) int
    centroid_names: tuple
    centroid_embeddings: np.ndarray   # (C, d) unit-norm rows
    phrases: tuple                    # phrase texts
    phrase_clusters: np.ndarray       # (P,) cluster id per phrase

    def __post_init__(self):
        norms = np.linalg.norm(self.centroid_embeddings, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ClusterError("centroid embeddings must be unit-norm")
        if len(set(self.centroid_ids.tolist())) != len(self.centroid_ids):
            raise ClusterError("duplicate cluster ids")
        known = set(self.centroid_ids.tolist())
        for phrase, cid in zip(self.phrases, self.phrase_clusters):
            if int(cid) not in known:
                raise ClusterError(f"phrase {phrase!r} assigned to unknown cluster {cid}")

    def cluster_of(self, phrase: str) -> int:
        try:
            return int(self.phrase_clusters[self.phrases.index(phrase)])
        except ValueError:
            raise ClusterError(f"unknown phrase {phrase!r}") from None


def assign_cluster(embedding: np.ndarray, space: ClusterSpace) -> int:
    """Nearest centroid by cosine similarity; ties go to the lowest cluster id."""
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.shape != (space.centroid_embeddings.shape[1],):
        raise ClusterError(
            f"embedding dim {embedding.shape} != centroid dim "
            f"{space.centroid_embeddings.shape[1]}")
    norm = np.linalg.norm(embedding)
    if norm == 0.0:
        raise ClusterError("zero-norm embedding")
    sims = space.centroid_embeddings @ (embedding / norm)
    best = np.max(sims)
    tied = space.centroid_ids[sims >= best - 1e-12]
    return int(tied.min())


def load_cluster_space(centroid_path, phrase_db_path) -> ClusterSpace:
    """Build a ClusterSpace from centroid and phrase-database JSONL files.

    Phrase rows carry "cluster_id" directly or an "embedding" to be assigned
    to the nearest centroid.
    """
    centroids = [json.loads(line) for line in Path(centroid_path).read_text().splitlines()
                 if line.strip()]
    if not centroids:
        raise ClusterError("empty centroid file")
    ids = np.array([c["cluster_id"] for c in centroids], dtype=np.int64)
    names = tuple(c.get("name", str(c["cluster_id"])) for c in centroids)
    emb = np.array([c["embedding"] for c in centroids], dtype=np.float64)
    space = ClusterSpace(centroid_ids=ids, centroid_names=names,
                         centroid_embeddings=emb, phrases=(),
                         phrase_clusters=np.empty(0, dtype=np.int64))

    phrases, clusters = [], []
    for row in (json.loads(line) for line in Path(phrase_db_path).read_text().splitlines()
                if line.strip()):
        if "cluster_id" in row and row["cluster_id"] is not None:
            cid = int(row["cluster_id"])
        elif "embedding" in row and row["embedding"] is not None:
            cid = assign_cluster(np.asarray(row["embedding"], dtype=np.float64), space)
        else:
            raise ClusterError(f"phrase {row.get('phrase')!r} has neither cluster_id "
                               "nor embedding")
        phrases.append(row["phrase"])
        clusters.append(cid)
    return ClusterSpace(centroid_ids=ids, centroid_names=names, centroid_embeddings=emb,
                        phrases=tuple(phrases),
                        phrase_clusters=np.array(clusters, dtype=np.int64))


@dataclass(frozen=True)
class EnrichedAnnotation:
    phrases: tuple
    labels: tuple          # one 0/1 array per phrase
    positive_count: int


def sample_negative_phrases(positives: list[tuple[str, np.ndarray]], space: ClusterSpace,
                            n_total: int, rng: np.random.Generator,
                            strict: bool = True) -> EnrichedAnnotation:
    """Pad positives to n_total phrases with cluster-disjoint negatives.

    Negatives are drawn uniformly without replacement from the phrase pool
    whose clusters are disjoint with the positives'. With strict=False an
    undersized pool falls back to sampling with replacement.
    """
    k = len(positives)
    if k > n_total:
        raise ClusterError(f"positive count {k} exceeds phrase set size {n_total}")
    pos_clusters = {space.cluster_of(phrase) for phrase, _ in positives}
    pool = [p for p, c in zip(space.phrases, space.phrase_clusters)
            if int(c) not in pos_clusters]
    needed = n_total - k
    if needed > len(pool):
        if strict:
            raise ClusterError(
                f"candidate pool has {len(pool)} phrases, need {needed}")
        picks = [pool[int(i)] for i in rng.integers(0, len(pool), size=needed)]
        log.warning("pool exhausted (%d < %d): sampled with replacement", len(pool), needed)
    else:
        idx = rng.choice(len(pool), size=needed, replace=False)
        picks = [pool[int(i)] for i in idx]

    label_len = len(positives[0][1]) if positives else 0
    phrases = tuple(p for p, _ in positives) + tuple(picks)
    labels = tuple(np.asarray(y, dtype=np.int8) for _, y in positives) + tuple(
        np.zeros(label_len, dtype=np.int8) for _ in picks)
    return EnrichedAnnotation(phrases=phrases, labels=labels, positive_count=k)


def _scene_seed(seed: int, scene_id: str) -> np.random.SeedSequence:
    digest = hashlib.sha256(scene_id.encode("utf-8")).digest()
    return np.random.SeedSequence([seed, int.from_bytes(digest[:8], "big")])


def enrich_manifest(manifest_rows: list[dict], space: ClusterSpace,
                    n_total: int = DEFAULT_PHRASE_SET_SIZE, seed: int = 0,
                    frames: int = 64, strict: bool = True) -> list[dict]:
    """Add a "phrase_set" of exactly n_total phrases to every manifest row.

    Deterministic per (seed, scene id). Positive labels are re-derived from
    the row's events over `frames` frames.
    """
    from .mixer import Placement, SceneRecipe, render_frame_labels

    out = []
    for row in manifest_rows:
        rng = np.random.default_rng(_scene_seed(seed, row["id"]))
        recipe = SceneRecipe(
            background_id=row.get("background_id", ""),
            placements=tuple(Placement(event_id="", phrase=e["phrase"], repeat_count=1,
                                       onset_s=e["onset_s"], offset_s=e["offset_s"],
                                       snr_db=e.get("snr_db", 0.0), gain=1.0)
                             for e in row["events"]))
        labels = render_frame_labels(recipe, frames, row.get("duration_s", 10.0))
        ordered = []
        for e in row["events"]:
            if e["phrase"] not in ordered:
                ordered.append(e["phrase"])
        positives = [(phrase, labels[phrase]) for phrase in ordered]
        ann = sample_negative_phrases(positives, space, n_total, rng, strict=strict)
        enriched = dict(row)
        enriched["phrase_set"] = [
            {"phrase": p, "positive": i < ann.positive_count}
            for i, p in enumerate(ann.phrases)]
        out.append(enriched)
    return out
