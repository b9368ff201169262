"""Synthetic strong-label SED data pipeline, contrastive sigmoid objectives
with verified analytic gradients, and event-based evaluation metrics."""

from .audio import AudioClip, db_to_linear, read_wav, rms, write_wav
from .clipper import EnergyEnvelope, EventSegment, clip_event_bank, energy_envelope, extract_event_segment
from .clusters import ClusterSpace, assign_cluster, enrich_manifest, load_cluster_space, sample_negative_phrases
from .losses import (EmbeddingBatch, LossOutput, LossParams, clip_sigmoid_loss,
                     cosine_matrix, frame_sigmoid_loss, gradient_check, infonce_loss,
                     total_loss)
from .metrics import (LabeledEvent, PsdsConfig, binarize_scores, match_events, psds,
                      recall_at_k, zero_shot_accuracy)
from .mixer import (MixParams, SceneRecipe, SyntheticScene, build_dataset,
                    generate_caption, plan_scene, render_frame_labels, render_scene,
                    synthesize_scene)

__version__ = "0.1.0"
