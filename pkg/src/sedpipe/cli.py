"""Command-line entry point tying the pipeline stages together.

Subcommands: clip, mix, enrich, loss, eval (psds|retrieval|accuracy),
validate. Every command prints its resolved configuration (seed included)
before running, and failures exit nonzero with a JSON error report on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import clipper, clusters, figures, losses, manifests, metrics, mixer, tensorio
from .audio import read_wav
from .config import load_config, resolve


def _fail(message: str, code: int = 1):
    print(json.dumps({"error": message}), file=sys.stderr)
    raise SystemExit(code)


def _print_resolved(command: str, resolved: dict) -> None:
    print(json.dumps({"command": command, "resolved_config": resolved}))


def _read_event_tsv(path, with_scores: bool) -> list[metrics.LabeledEvent]:
    events = []
    with open(path) as f:
        reader = csv.DictReader(f, delimiter="\t")
        for row in reader:
            score = float(row["score"]) if with_scores and "score" in row else None
            events.append(metrics.LabeledEvent(
                clip_id=row["clip_id"], label=row["label"],
                onset_s=float(row["onset_s"]), offset_s=float(row["offset_s"]),
                score=score))
    return events


def cmd_clip(args) -> int:
    cfg = load_config(args.config)
    params = {k: resolve(cfg, "clipper", k, getattr(args, k, None))
              for k in cfg["clipper"]}
    params["sample_rate"] = resolve(cfg, "pipeline", "sample_rate", args.sample_rate)
    _print_resolved("clip", {**params, "manifest": args.manifest, "out": args.out})
    result = clipper.clip_event_bank(args.manifest, args.out, **params)
    print(json.dumps({"events": len(result["events"]),
                      "rejections": len(result["rejections"])}))
    return 0


def _load_backgrounds(spec_path, sample_rate):
    path = Path(spec_path)
    if path.is_dir():
        wavs = sorted(path.glob("*.wav"))
    else:
        wavs = [path]
    if not wavs:
        raise ValueError(f"no background WAVs under {spec_path}")
    out = []
    for wav in wavs:
        clip = read_wav(wav)
        if clip.sample_rate != sample_rate:
            raise ValueError(f"background {wav} rate {clip.sample_rate} != {sample_rate}")
        out.append((wav.stem, clip))
    return out


def cmd_mix(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["mixer"].get("seed")
    if seed is None:
        _fail("mix requires --seed (or a seed in the [mixer] config section)")
    mix_keys = ("timeline_s", "max_events", "repeat_max", "repeat_threshold_s",
                "snr_min_db", "snr_max_db", "frames_per_clip")
    mp = {k: resolve(cfg, "mixer", k, getattr(args, k, None)) for k in mix_keys}
    params = mixer.MixParams(seed=int(seed), **mp)
    workers = resolve(cfg, "pipeline", "workers", args.workers)
    sample_rate = resolve(cfg, "pipeline", "sample_rate", args.sample_rate)
    _print_resolved("mix", {**mp, "seed": int(seed), "count": args.count,
                            "workers": workers})
    bank, lookup = mixer.load_event_bank(args.bank)
    backgrounds = _load_backgrounds(args.backgrounds, sample_rate)
    templates = None
    if args.templates:
        templates = [line for line in Path(args.templates).read_text().splitlines()
                     if line.strip()]
    mixer.build_dataset(backgrounds, bank, lookup, params, args.count, args.out,
                        templates=templates, workers=int(workers))
    print(json.dumps({"scenes": args.count, "out": str(args.out)}))
    return 0


def cmd_enrich(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["sampler"].get("seed")
    if seed is None:
        _fail("enrich requires --seed (or a seed in the [sampler] config section)")
    n = int(resolve(cfg, "sampler", "n_phrases", args.n))
    strict = not args.lenient if args.lenient else bool(cfg["sampler"]["strict"])
    frames = int(resolve(cfg, "mixer", "frames_per_clip", args.frames_per_clip))
    _print_resolved("enrich", {"n_phrases": n, "seed": int(seed), "strict": strict,
                               "frames": frames})
    space = clusters.load_cluster_space(args.centroids, args.phrases)
    rows = manifests.read_jsonl(args.manifest)
    enriched = clusters.enrich_manifest(rows, space, n_total=n, seed=int(seed),
                                        frames=frames, strict=strict)
    manifests.write_jsonl(args.out, enriched)
    print(json.dumps({"scenes": len(enriched), "out": str(args.out)}))
    return 0


_LOSS_FIXTURES = {
    # B=1, s11=1 under the default t=10, b=-10.
    "b1_s1": {"G": [[1.0, 0.0]], "T": [[1.0, 0.0]]},
    # B=1, s11=0.
    "b1_s0": {"G": [[1.0, 0.0]], "T": [[0.0, 1.0]]},
    # B=2, orthonormal G = T.
    "b2_ortho": {"G": [[1.0, 0.0], [0.0, 1.0]], "T": [[1.0, 0.0], [0.0, 1.0]]},
}


def cmd_loss(args) -> int:
    cfg = load_config(args.config)
    p = losses.LossParams(
        t=float(resolve(cfg, "loss", "t", args.t)),
        b=float(resolve(cfg, "loss", "b", args.b)),
        t_frame=float(resolve(cfg, "loss", "t_frame", args.t_frame)),
        b_frame=float(resolve(cfg, "loss", "b_frame", args.b_frame)))
    _print_resolved("loss", {"kind": args.kind, "t": p.t, "b": p.b,
                             "t_frame": p.t_frame, "b_frame": p.b_frame})
    if args.fixture:
        if args.fixture not in _LOSS_FIXTURES:
            _fail(f"unknown fixture {args.fixture!r}; have {sorted(_LOSS_FIXTURES)}")
        fx = _LOSS_FIXTURES[args.fixture]
        g = np.array(fx["G"])
        t_emb = np.array(fx["T"])
        b, d = g.shape
        batch = losses.EmbeddingBatch(G=g, T=t_emb, F=np.zeros((b, 1, d)) + g[:, None, :],
                                      P=g[:, None, :], Y=np.ones((b, 1, 1), dtype=np.int8))
    else:
        if not (args.g and args.t_emb):
            _fail("loss needs --fixture or --g/--t-emb tensor files")
        g = tensorio.load_matrix(args.g)
        t_emb = tensorio.load_matrix(args.t_emb)
        if args.f and args.p and args.y:
            f = tensorio.load_tensor(args.f)
            pm = tensorio.load_tensor(args.p)
            y = tensorio.load_tensor(args.y).astype(np.int8)
        else:
            b, d = g.shape
            f = g[:, None, :]
            pm = g[:, None, :]
            y = np.ones((b, 1, 1), dtype=np.int8)
        batch = losses.EmbeddingBatch(G=g, T=t_emb, F=f, P=pm, Y=y)
    if args.siglip_convention and args.kind in ("clip", "frame", "total"):
        clip_out = losses.clip_sigmoid_loss(batch.G, batch.T, batch.match, p.t, p.b,
                                            siglip_convention=True)
        frame_out = losses.frame_sigmoid_loss(batch.F, batch.P, batch.Y, p.t_frame,
                                              p.b_frame, batch.phrase_counts,
                                              siglip_convention=True)
        out = {"clip": clip_out, "frame": frame_out,
               "total": losses.LossOutput(value=clip_out.value + frame_out.value,
                                          grads={})}[args.kind]
    else:
        out = losses.compute_loss(args.kind, batch, p)
    report = {
        "kind": args.kind,
        "convention": "siglip" if args.siglip_convention else "printed",
        "value": out.value,
        "grad_norms": {k: (float(np.linalg.norm(v)) if isinstance(v, np.ndarray)
                           else abs(float(v))) for k, v in out.grads.items()},
        "params": {"t": p.t, "b": p.b, "t_frame": p.t_frame, "b_frame": p.b_frame},
    }
    if args.grad_check:
        report["grad_check_max_rel_error"] = losses.gradient_check(args.kind, batch, p)
    text = json.dumps(report, indent=2)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    if args.metric == "psds":
        pcfg = metrics.PsdsConfig(
            dtc=float(resolve(cfg, "psds", "dtc", args.dtc)),
            gtc=float(resolve(cfg, "psds", "gtc", args.gtc)),
            alpha_st=float(resolve(cfg, "psds", "alpha_st", args.alpha_st)),
            e_max=float(resolve(cfg, "psds", "e_max", args.e_max)))
        _print_resolved("eval psds", {"dtc": pcfg.dtc, "gtc": pcfg.gtc,
                                      "alpha_st": pcfg.alpha_st, "e_max": pcfg.e_max,
                                      "hours": args.hours})
        dets = _read_event_tsv(args.detections, with_scores=True)
        gts = _read_event_tsv(args.ground_truth, with_scores=False)
        report = metrics.psds(dets, gts, args.hours, pcfg)
        base = Path(args.report)
        base.parent.mkdir(parents=True, exist_ok=True)
        base.write_text(json.dumps(report, indent=2) + "\n")
        with open(base.with_suffix(".tsv"), "w") as f:
            f.write("tau\tefpr\teff_tpr\n")
            for pt in report["per_threshold"]:
                f.write(f"{pt['tau']:.6f}\t{pt['efpr']:.6f}\t{pt['eff_tpr']:.6f}\n")
        figures.plot_psds_curve(report, base.with_suffix(".png"))
        print(json.dumps({"psds": report["psds"]}))
    elif args.metric == "retrieval":
        ks = [int(k) for k in args.k.split(",")]
        _print_resolved("eval retrieval", {"k": ks})
        sim = tensorio.load_matrix(args.similarity)
        recalls = {k: metrics.recall_at_k(sim, k) for k in ks}
        base = Path(args.report)
        base.parent.mkdir(parents=True, exist_ok=True)
        base.write_text(json.dumps({"recall_at_k": recalls}, indent=2) + "\n")
        with open(base.with_suffix(".tsv"), "w") as f:
            f.write("k\trecall\n")
            for k in ks:
                f.write(f"{k}\t{recalls[k]:.4f}\n")
        figures.plot_recall_bars(recalls, base.with_suffix(".png"))
        print(json.dumps({"recall_at_k": recalls}))
    else:  # accuracy
        _print_resolved("eval accuracy", {})
        audio = tensorio.load_matrix(args.audio)
        class_emb = tensorio.load_matrix(args.classes)
        labels = np.loadtxt(args.labels, dtype=np.int64, ndmin=1)
        acc = metrics.zero_shot_accuracy(audio, class_emb, labels)
        base = Path(args.report)
        base.parent.mkdir(parents=True, exist_ok=True)
        base.write_text(json.dumps({"accuracy": acc}, indent=2) + "\n")
        print(json.dumps({"accuracy": acc}))
    return 0


def cmd_validate(args) -> int:
    _print_resolved("validate", {"manifest": args.manifest})
    problems = manifests.validate_manifest(args.manifest)
    if problems:
        print(json.dumps({"valid": False, "problems": problems}, indent=2),
              file=sys.stderr)
        return 2
    print(json.dumps({"valid": True}))
    return 0


def _path_arg(parser, flag: str, **kwargs) -> None:
    # Paths (and only paths) can come from SEDPIPE_<FLAG> environment vars.
    env = "SEDPIPE_" + flag.lstrip("-").replace("-", "_").upper()
    default = os.environ.get(env)
    parser.add_argument(flag, default=default, required=default is None, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sedpipe")
    parser.add_argument("--config", default=None, help="INI config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clip", help="extract single-event segments from a source bank")
    _path_arg(p, "--manifest")
    _path_arg(p, "--out")
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--threshold-db", dest="threshold_db", type=float)
    p.add_argument("--window-s", dest="window_s", type=float)
    p.add_argument("--hop-s", dest="hop_s", type=float)
    p.add_argument("--merge-gap-s", dest="merge_gap_s", type=float)
    p.add_argument("--min-dur-s", dest="min_dur_s", type=float)
    p.add_argument("--max-dur-s", dest="max_dur_s", type=float)
    p.set_defaults(func=cmd_clip)

    p = sub.add_parser("mix", help="synthesize scenes from events and backgrounds")
    _path_arg(p, "--bank", help="event manifest JSONL")
    _path_arg(p, "--backgrounds", help="background WAV dir or file")
    _path_arg(p, "--out")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--templates", help="caption template file, one per line")
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--timeline-s", dest="timeline_s", type=float)
    p.add_argument("--max-events", dest="max_events", type=int)
    p.add_argument("--repeat-max", dest="repeat_max", type=int)
    p.add_argument("--repeat-threshold-s", dest="repeat_threshold_s", type=float)
    p.add_argument("--snr-min-db", dest="snr_min_db", type=float)
    p.add_argument("--snr-max-db", dest="snr_max_db", type=float)
    p.add_argument("--frames-per-clip", dest="frames_per_clip", type=int)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("enrich", help="pad scene phrases with cluster-disjoint negatives")
    _path_arg(p, "--manifest")
    _path_arg(p, "--centroids")
    _path_arg(p, "--phrases")
    _path_arg(p, "--out")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lenient", action="store_true",
                   help="sample with replacement when the negative pool is short")
    p.add_argument("--frames-per-clip", dest="frames_per_clip", type=int)
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("loss", help="evaluate an objective on embeddings")
    p.add_argument("--kind", choices=("clip", "frame", "total", "infonce"),
                   required=True)
    p.add_argument("--fixture", help=f"built-in fixture: {sorted(_LOSS_FIXTURES)}")
    p.add_argument("--g", help="global audio embeddings (tensor/csv)")
    p.add_argument("--t-emb", dest="t_emb", help="caption embeddings (tensor/csv)")
    p.add_argument("--f", help="frame embeddings tensor (B,L,d)")
    p.add_argument("--p", help="phrase embeddings tensor (B,N,d)")
    p.add_argument("--y", help="frame labels tensor (B,N,L)")
    p.add_argument("--t", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--t-frame", dest="t_frame", type=float)
    p.add_argument("--b-frame", dest="b_frame", type=float)
    p.add_argument("--grad-check", dest="grad_check", action="store_true")
    p.add_argument("--siglip-convention", dest="siglip_convention",
                   action="store_true",
                   help="flip the bias sign in the sigmoid exponent")
    p.add_argument("--report")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", help="evaluation metrics")
    ev = p.add_subparsers(dest="metric", required=True)

    e = ev.add_parser("psds")
    e.add_argument("--detections", required=True, help="TSV with scores")
    e.add_argument("--ground-truth", dest="ground_truth", required=True)
    e.add_argument("--hours", type=float, required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--dtc", type=float)
    e.add_argument("--gtc", type=float)
    e.add_argument("--alpha-st", dest="alpha_st", type=float)
    e.add_argument("--e-max", dest="e_max", type=float)
    e.set_defaults(func=cmd_eval)

    e = ev.add_parser("retrieval")
    e.add_argument("--similarity", required=True)
    e.add_argument("--k", default="1,5,10")
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    e = ev.add_parser("accuracy")
    e.add_argument("--audio", required=True)
    e.add_argument("--classes", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="schema and invariant checks on a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
