"""Command-line front end.

    odct synth    --kind features|proposals [--config C] [--seed S] --out DIR
    odct trackgen --proposals P [--flows F] [--config C] --out DIR
    odct train    --samples S [--config C] [--seed S] --out DIR
    odct eval     --checkpoint M --samples S [--truth T] [--out DIR]

Exit codes: 0 success, 1 input error, 2 internal error.
Every subcommand that writes files writes ``manifest.json`` first.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml

from . import io as _io
from . import metrics, synth, trackgen, trainer
from .memory import MemoryBank

log = logging.getLogger("odct")


class InputError(Exception):
    """Bad user input: config, data files or arguments."""


# configuration

@dataclasses.dataclass(frozen=True)
class SceneConfig:
    n_snippets: int = 1
    n_objects: int = 20
    n_frames: int = 60
    object_size: float = 120.0
    spacing: float = 300.0
    distractors_per_frame: float = 5.0
    distractor_size: tuple = (20.0, 80.0)
    objectness_noise: float = 0.0
    position_noise: float = 0.0
    camera_motion: tuple = (0.0, 0.0)
    seed: int = 0


SECTIONS = {
    "tracker": trackgen.TrackerConfig,
    "train": trainer.TrainConfig,
    "synth": synth.SynthSpec,
    "scene": SceneConfig,
}


def default_config() -> Dict[str, dict]:
    out = {}
    for name, cls in SECTIONS.items():
        d = dataclasses.asdict(cls())
        out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
    return out


def load_config(path: Optional[str]) -> Dict[str, dict]:
    """Defaults overlaid with the YAML file; unknown sections and keys are errors."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise InputError(f"{path}: invalid YAML ({e})") from None
    if not isinstance(raw, dict):
        raise InputError(f"{path}: top level must be a mapping of sections")
    errors = []
    for section, values in raw.items():
        if section not in cfg:
            errors.append(f"unknown section {section!r} (expected one of {', '.join(SECTIONS)})")
            continue
        if not isinstance(values, dict):
            errors.append(f"{section}: must be a mapping")
            continue
        for k, v in values.items():
            if k not in cfg[section]:
                errors.append(f"{section}.{k}: unknown field")
            else:
                cfg[section][k] = v
    if errors:
        raise InputError(f"{path}:\n  " + "\n  ".join(errors))
    return cfg


def build(section: str, values: dict):
    cls = SECTIONS[section]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kw = {}
    errors = []
    for k, v in values.items():
        want = type(fields[k].default)
        if want is tuple:
            if not isinstance(v, (list, tuple)) or len(v) != 2:
                errors.append(f"{section}.{k}: expected a pair of numbers")
                continue
            v = tuple(float(x) for x in v)
        elif want is float and isinstance(v, (int, float)) and not isinstance(v, bool):
            v = float(v)
        elif not isinstance(v, want) or isinstance(v, bool) != (want is bool):
            errors.append(f"{section}.{k}: expected {want.__name__}, got {v!r}")
            continue
        kw[k] = v
    if errors:
        raise InputError("invalid config:\n  " + "\n  ".join(errors))
    try:
        return cls(**kw)
    except ValueError as e:
        raise InputError(f"invalid {section} config: {e}") from None


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# manifest

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """Run record written before any result file and completed at the end."""

    def __init__(self, out: Path, command: str, cfg: dict, seed, inputs: List[str], outputs: List[str], variant=None):
        self.path = out / "manifest.json"
        self.data = {
            "command": command,
            "config_hash": config_hash(cfg),
            "config": cfg,
            "seed": seed,
            "variant": variant,
            "inputs": {p: _io.file_digest(p) for p in inputs},
            "outputs": [str(out / o) for o in outputs],
            "started": _now(),
            "finished": None,
        }
        out.mkdir(parents=True, exist_ok=True)
        self._write()

    def _write(self):
        with open(self.path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finish(self, **extra):
        self.data["finished"] = _now()
        self.data.update(extra)
        self._write()


# plotting

def plot_trace(csv_path, svg_path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    traces = trainer.read_trace_csv(csv_path)
    ep = [t.epoch for t in traces]
    with plt.rc_context({"svg.hashsalt": "odct"}):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3))
        axes[0].plot(ep, [t.change_ratio for t in traces], marker="o", ms=3)
        axes[0].set_xlabel("epoch")
        axes[0].set_ylabel("change ratio")
        axes[0].set_ylim(0, 1)
        axes[1].plot(ep, [t.mean_track_entropy for t in traces], marker="o", ms=3)
        axes[1].set_xlabel("epoch")
        axes[1].set_ylabel("mean track entropy")
        fig.tight_layout()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)


# subcommands

def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    if args.kind == "features":
        if args.seed is not None:
            cfg["synth"]["seed"] = args.seed
        spec = build("synth", cfg["synth"])
        man = Manifest(out, "synth", cfg, spec.seed, _inputs(args.config), ["samples.jsonl", "truth.jsonl"])
        ds = synth.gen_tracked_features(spec)
        _io.write_jsonl(out / "samples.jsonl", _io.sample_records(ds.inputs, ds.track_of))
        _io.write_jsonl(out / "truth.jsonl", ({"sample_id": i, "class": int(c)} for i, c in enumerate(ds.classes)))
        man.finish(n_samples=spec.n_samples)
        print(f"wrote {spec.n_samples} samples to {out / 'samples.jsonl'}")
        return 0

    if args.seed is not None:
        cfg["scene"]["seed"] = args.seed
    sc = build("scene", cfg["scene"])
    man = Manifest(out, "synth", cfg, sc.seed, _inputs(args.config), ["proposals.jsonl", "flows.jsonl", "truth.jsonl"])
    props, flows, truth = [], [], []
    for s in range(sc.n_snippets):
        sid = f"s{s:03d}"
        scene = synth.grid_scene(
            sc.n_objects, sc.n_frames, size=sc.object_size, spacing=sc.spacing,
            distractors_per_frame=sc.distractors_per_frame, distractor_size=sc.distractor_size,
            objectness_noise=sc.objectness_noise, position_noise=sc.position_noise,
            camera_motion=sc.camera_motion, seed=sc.seed + s,
        )
        stream = synth.gen_proposal_stream(scene)
        for fr, ids in zip(stream.frames, stream.truth):
            for b, k in zip(fr, ids):
                props.append({"snippet_id": sid, **_io.box_record(b)})
                truth.append({"snippet_id": sid, "frame_index": b.frame_index, "object": k})
        flows += [{"snippet_id": sid, "frame_index": f.frame_index, "dx": f.dx, "dy": f.dy} for f in stream.flows]
    _io.write_jsonl(out / "proposals.jsonl", props)
    _io.write_jsonl(out / "flows.jsonl", flows)
    _io.write_jsonl(out / "truth.jsonl", truth)
    man.finish(n_proposals=len(props))
    print(f"wrote {len(props)} proposals in {sc.n_snippets} snippet(s) to {out / 'proposals.jsonl'}")
    return 0


def cmd_trackgen(args) -> int:
    cfg = load_config(args.config)
    tcfg = build("tracker", cfg["tracker"])
    out = Path(args.out)
    proposals = _io.read_proposals(args.proposals)
    flows = _io.read_flows(args.flows) if args.flows else None
    inputs = [args.proposals] + ([args.flows] if args.flows else []) + _inputs(args.config)
    man = Manifest(out, "trackgen", cfg, None, inputs, ["tracks.jsonl", "summary.json"])
    tracks = trackgen.generate_tracks(proposals, flows, tcfg)
    records = []
    for t in tracks:
        rec = _io.track_record(t)
        rec["sampled_frames"] = [b.frame_index for b in trackgen.subsample_track(t, tcfg.samples_per_track)]
        records.append(rec)
    _io.write_jsonl(out / "tracks.jsonl", records)
    lengths = [len(t) for t in tracks]
    hist: Dict[str, int] = {}
    for lo in range(0, max(lengths, default=0) + 1, 10):
        n = sum(lo <= n_ < lo + 10 for n_ in lengths)
        if n:
            hist[f"{lo}-{lo + 9}"] = n
    per_snippet: Dict[str, int] = {}
    for t in tracks:
        per_snippet[t.snippet_id] = per_snippet.get(t.snippet_id, 0) + 1
    summary = {"n_tracks": len(tracks), "per_snippet": per_snippet, "length_histogram": hist}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    man.finish()
    print(f"{len(tracks)} tracks from {len(proposals)} snippet(s)")
    for k, v in hist.items():
        print(f"  length {k:>9}: {v}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["train"]["seed"] = args.seed
    tc = build("train", cfg["train"])
    X, track_of = _io.read_samples(args.samples)
    out = Path(args.out)
    outputs = ["init_memory.bin", "trace.csv", "iterations.csv", "memory.bin", "embedder.bin", "trace.svg"]
    man = Manifest(out, "train", cfg, tc.seed, [args.samples] + _inputs(args.config), outputs, tc.variant)
    try:
        res = trainer.run(X, track_of, tc, out)
    except ValueError as e:
        raise InputError(str(e)) from None
    plot_trace(out / "trace.csv", out / "trace.svg")
    man.finish(epochs=len(res.traces))
    if res.traces:
        t = res.traces[-1]
        print(f"{tc.variant}: {len(res.traces)} epochs, change ratio {t.change_ratio:.3f}, "
              f"mean track entropy {t.mean_track_entropy:.3f}")
    else:
        print(f"{tc.variant}: 0 epochs, initial memory written")
    return 0


def cmd_eval(args) -> int:
    try:
        bank = MemoryBank.load(args.checkpoint)
    except OSError as e:
        raise InputError(f"cannot read checkpoint {args.checkpoint}: {e.strerror}") from None
    X, track_of = _io.read_samples(args.samples)
    if len(track_of) != bank.n_samples:
        raise InputError(
            f"shape mismatch: checkpoint holds N={bank.n_samples} samples, dataset has N={len(track_of)}"
        )
    if not np.array_equal(track_of, bank.track_of):
        bad = int(np.flatnonzero(track_of != bank.track_of)[0])
        raise InputError(f"track ids differ from the checkpoint, first at sample {bad}")
    C = bank.n_clusters
    report = {
        "n_samples": bank.n_samples,
        "n_clusters": C,
        "upper_bound": float(np.log(C)),
        "intra_track_entropy": metrics.mean_track_entropy(bank.labels, track_of, C),
        "intra_class_entropy": None,
        "cluster_sizes": metrics.cluster_sizes(bank.labels, C).tolist(),
    }
    inputs = [args.checkpoint, args.samples]
    if args.truth:
        classes = _io.read_truth(args.truth)
        if len(classes) != bank.n_samples:
            raise InputError(f"shape mismatch: truth has N={len(classes)}, checkpoint N={bank.n_samples}")
        report["intra_class_entropy"] = metrics.intra_class_entropy(bank.labels, classes, C)
        inputs.append(args.truth)
    if args.out:
        out = Path(args.out)
        man = Manifest(out, "eval", {}, None, inputs, ["eval.json", "cluster_sizes.csv"])
        with open(out / "eval.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / "cluster_sizes.csv", "w") as fh:
            fh.write("cluster,size\n")
            for c, n in enumerate(report["cluster_sizes"]):
                fh.write(f"{c},{n}\n")
        man.finish()
    print(f"intra-track entropy {report['intra_track_entropy']:.6f} (ln C = {report['upper_bound']:.6f})")
    if report["intra_class_entropy"] is not None:
        print(f"intra-class entropy {report['intra_class_entropy']:.6f}")
    sizes = np.array(report["cluster_sizes"])
    print(f"cluster sizes: min {sizes.min()} max {sizes.max()} empty {int((sizes == 0).sum())}")
    edges = np.unique(np.linspace(0, max(1, sizes.max()) + 1, 6).astype(int))
    counts, _ = np.histogram(sizes, bins=edges)
    for lo, hi, n in zip(edges[:-1], edges[1:], counts):
        print(f"  size {lo:>4}-{hi - 1:<4} {'#' * int(n)} {n}")
    return 0


def _inputs(config_path) -> List[str]:
    return [config_path] if config_path else []


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="odct", description="Online deep clustering with track consistency.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset or proposal stream")
    s.add_argument("--kind", choices=("features", "proposals"), default="features")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("trackgen", help="build object tracks from frame-wise proposals")
    s.add_argument("--proposals", required=True)
    s.add_argument("--flows")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_trackgen)

    s = sub.add_parser("train", help="run online deep clustering on a sample file")
    s.add_argument("--samples", required=True)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="entropies and cluster sizes of a memory checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--samples", required=True)
    s.add_argument("--truth")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, _io.RecordError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e.filename}: no such file", file=sys.stderr)
        return 1
    except ValueError as e:
        # raised by the file readers for malformed content
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
