"""Batch CLI: brir-gen | scene-mix | featurize | pretrain | embed | probe |
doa-eval | stats | rt60 | pipeline.

Every stage resolves its configuration as CLI flags > --config file >
built-in defaults, freezes the effective config next to its outputs, and is
byte-reproducible from that frozen file.  Seeds derive hierarchically:
master -> per-stage -> per-item (stage_seed XOR item index), so any item can
be regenerated in isolation and results do not depend on --workers.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from pathlib import Path

import numpy as np

from . import evalstats, rooms, toydata
from .audio_io import Waveform, load_manifest, read_feature, read_wav, write_feature, write_wav
from .features import BinauralSpectrogram, logmel
from .model import GramModel, ModelConfig, TrainConfig, pretrain, toy_config
from .scenes import SNR_RANGE_DB, SceneSpec, mix_scene
from .seeds import derive_seed, item_seed


class CliError(Exception):
    def __init__(self, message, fields=None):
        super().__init__(message)
        self.fields = fields or []


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def _freeze_config(out_dir, stage, cfg):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(out_dir / f"{stage}_config.json", cfg)


def _effective_config(defaults: dict, args, keys) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}")
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise CliError(f"unknown config fields in {args.config}",
                           fields=unknown)
        cfg.update(loaded)
    for key in keys:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            cfg[key] = value
    return cfg


def _require(cfg, fields):
    missing = [f for f in fields if cfg.get(f) in (None, "")]
    if missing:
        raise CliError("missing required configuration", fields=missing)


def _workers(cfg) -> int:
    w = cfg.get("workers")
    if w in (None, 0):
        w = int(os.environ.get("GRAM_WORKERS", "1"))
    return max(1, int(w))


def _run_tasks(task_fn, work, n_workers):
    if n_workers <= 1:
        return [task_fn(item) for item in work]
    with multiprocessing.Pool(n_workers) as pool:
        return pool.map(task_fn, work)


# ---------------- brir-gen ----------------

BRIR_DEFAULTS = {
    "out": None, "scenes": 8, "seed": 0, "workers": None,
    "room_dims": None, "absorption": None, "max_order": 30,
    "listener_height": 1.5, "listener_margin": 0.5, "wall_margin": 0.3,
}


def _brir_task(item):
    i, cfg = item
    if cfg["room_dims"] is not None:
        room = rooms.RoomSpec(tuple(cfg["room_dims"]),
                              absorption=cfg["absorption"] or 0.42,
                              max_order=cfg["max_order"])
    else:
        room = rooms.sample_room(item_seed(derive_seed(cfg["seed"], "room"), i))
        room = rooms.RoomSpec(room.dims_m, room.absorption, cfg["max_order"])
    pose = rooms.sample_scene(
        item_seed(derive_seed(cfg["seed"], "pose"), i), room,
        listener_height=cfg["listener_height"],
        listener_margin=cfg["listener_margin"],
        wall_margin=cfg["wall_margin"])
    rendered = rooms.render_scene_brirs(room, pose)
    out = Path(cfg["out"])
    base = f"scene_{i:05d}"
    rooms.export_brir(out / f"{base}_source", rendered["source"], room, seed=cfg["seed"])
    noise_names = []
    for j, brir in enumerate(rendered["noise"]):
        rooms.export_brir(out / f"{base}_noise{j}", brir, room, seed=cfg["seed"])
        noise_names.append(f"{base}_noise{j}")
    return {
        "scene_index": i,
        "source": f"{base}_source",
        "noise": noise_names,
        "noise_kind": pose.noise_kind,
        "room": {"dims_m": list(room.dims_m), "absorption": room.absorption,
                 "max_order": room.max_order},
        "rt60_s": rendered["source"].meta["rt60_s"],
    }


def cmd_brir_gen(args):
    cfg = _effective_config(BRIR_DEFAULTS, args, BRIR_DEFAULTS)
    _require(cfg, ["out"])
    _freeze_config(cfg["out"], "brir_gen", cfg)
    records = _run_tasks(_brir_task, [(i, cfg) for i in range(int(cfg["scenes"]))],
                         _workers(cfg))
    with open(Path(cfg["out"]) / "brirs.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"wrote {len(records)} BRIR sets to {cfg['out']}")
    return 0


# ---------------- scene-mix ----------------

MIX_DEFAULTS = {
    "out": None, "corpus": None, "noise_corpus": None, "brirs": None,
    "scenes": 8, "seed": 0, "workers": None,
    "snr_low_db": SNR_RANGE_DB[0], "snr_high_db": SNR_RANGE_DB[1],
}


def _load_brir_set(brir_dir: Path, record: dict) -> dict:
    return {"source": rooms.load_brir(brir_dir / record["source"]),
            "noise": [rooms.load_brir(brir_dir / name) for name in record["noise"]]}


def _mix_task(item):
    i, cfg, corpus_entry, noise_entry, brir_record, snr_db = item
    brir_dir = Path(cfg["brirs"]).parent
    brirs = _load_brir_set(brir_dir, brir_record)
    scene_id = f"scene_{i:05d}"
    spec = SceneSpec(scene_id=scene_id, target_clip=corpus_entry["id"],
                     noise_clip=noise_entry["id"], brir_set=brirs,
                     snr_db=snr_db, seed=cfg["seed"])
    target = read_wav(corpus_entry["audio_path"])
    noise = read_wav(noise_entry["audio_path"])
    mixed = mix_scene(spec, target, noise)
    wav_path = Path(cfg["out"]) / f"{scene_id}.wav"
    write_wav(wav_path, mixed.audio, encoding="float32")
    rec = dict(mixed.meta)
    rec["audio_path"] = str(wav_path)
    rec["label"] = corpus_entry["label"]
    return rec


def cmd_scene_mix(args):
    cfg = _effective_config(MIX_DEFAULTS, args, MIX_DEFAULTS)
    _require(cfg, ["out", "corpus", "noise_corpus", "brirs"])
    _freeze_config(cfg["out"], "scene_mix", cfg)
    corpus = load_manifest(cfg["corpus"])
    noise_corpus = load_manifest(cfg["noise_corpus"])
    brir_records = [json.loads(line) for line in
                    Path(cfg["brirs"]).read_text(encoding="utf-8").splitlines() if line]
    if not brir_records:
        raise CliError(f"no BRIR records in {cfg['brirs']}")

    stage_seed = derive_seed(cfg["seed"], "scene")
    work = []
    for i in range(int(cfg["scenes"])):
        rng = np.random.default_rng(item_seed(stage_seed, i))
        corpus_entry = corpus.entries[int(rng.integers(len(corpus)))]
        noise_entry = noise_corpus.entries[int(rng.integers(len(noise_corpus)))]
        snr = float(rng.uniform(cfg["snr_low_db"], cfg["snr_high_db"]))
        work.append((i, cfg,
                     {"id": corpus_entry.id, "audio_path": corpus_entry.audio_path,
                      "label": corpus_entry.label},
                     {"id": noise_entry.id, "audio_path": noise_entry.audio_path},
                     brir_records[i % len(brir_records)], snr))
    records = _run_tasks(_mix_task, work, _workers(cfg))
    with open(Path(cfg["out"]) / "scenes.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"mixed {len(records)} scenes into {cfg['out']}")
    return 0


# ---------------- featurize ----------------

FEAT_DEFAULTS = {"out": None, "scenes": None, "workers": None}


def _feat_task(item):
    cfg, rec = item
    wave = read_wav(rec["audio_path"])
    spec = logmel(wave)
    path = Path(cfg["out"]) / f"{rec['scene_id']}.bsf"
    write_feature(path, spec.values.astype(np.float32))
    out = dict(rec)
    out["feature_path"] = str(path)
    return out


def cmd_featurize(args):
    cfg = _effective_config(FEAT_DEFAULTS, args, FEAT_DEFAULTS)
    _require(cfg, ["out", "scenes"])
    _freeze_config(cfg["out"], "featurize", cfg)
    records = [json.loads(line) for line in
               Path(cfg["scenes"]).read_text(encoding="utf-8").splitlines() if line]
    out_records = _run_tasks(_feat_task, [(cfg, r) for r in records], _workers(cfg))
    with open(Path(cfg["out"]) / "features.jsonl", "w", encoding="utf-8") as fh:
        for rec in out_records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"featurized {len(out_records)} clips into {cfg['out']}")
    return 0


# ---------------- pretrain ----------------

PRETRAIN_DEFAULTS = {
    "out": None, "features": None, "steps": 300, "seed": 0,
    "strategy": "patch_based", "backbone": "transformer",
    "batch_clips": 1, "segments_per_clip": 16,
    "base_lr": 1e-3, "warmup_steps": 30, "dim": 64, "depth": 2,
    "decoder_dim": 32, "heads": 4, "state_dim": 16,
    "toy": True,  # defaults above are the toy scale; recorded for the frozen config
}


def _load_features(path):
    records = [json.loads(line) for line in
               Path(path).read_text(encoding="utf-8").splitlines() if line]
    if not records:
        raise CliError(f"no feature records in {path}")
    clips = [read_feature(rec["feature_path"]).astype(np.float64) for rec in records]
    return records, clips


def _model_config_from(cfg) -> ModelConfig:
    base = toy_config(strategy=cfg["strategy"], backbone=cfg["backbone"],
                      init_seed=derive_seed(cfg["seed"], "init"))
    base.patch.embed_dim = cfg["dim"]
    base.encoder.dim = cfg["dim"]
    base.encoder.depth = cfg["depth"]
    base.encoder.heads = cfg["heads"]
    base.encoder.state_dim = cfg["state_dim"]
    base.decoder.dim = cfg["decoder_dim"]
    return base


def cmd_pretrain(args):
    cfg = _effective_config(PRETRAIN_DEFAULTS, args, PRETRAIN_DEFAULTS)
    _require(cfg, ["out", "features"])
    _freeze_config(cfg["out"], "pretrain", cfg)
    _, clips = _load_features(cfg["features"])
    model_cfg = _model_config_from(cfg)
    train_cfg = TrainConfig(steps=int(cfg["steps"]), batch_clips=int(cfg["batch_clips"]),
                            segments_per_clip=int(cfg["segments_per_clip"]),
                            base_lr=float(cfg["base_lr"]),
                            warmup_steps=int(cfg["warmup_steps"]),
                            seed=derive_seed(cfg["seed"], "train"))
    out = Path(cfg["out"])
    model, losses = pretrain(clips, model_cfg, train_cfg,
                             log_path=out / "train_log.jsonl")
    model.save(out / "checkpoint.ckpt")
    _dump_json(out / "model_config.json", model_cfg.to_dict())
    print(f"pretrained {cfg['backbone']}/{cfg['strategy']}: "
          f"loss {losses[0]:.4f} -> {losses[-1]:.4f} ({len(losses)} steps)")
    return 0


# ---------------- embed ----------------

EMBED_DEFAULTS = {"out": None, "features": None, "checkpoint": None,
                  "model_config": None, "mode": "clip_level"}


def cmd_embed(args):
    cfg = _effective_config(EMBED_DEFAULTS, args, EMBED_DEFAULTS)
    _require(cfg, ["out", "features", "checkpoint"])
    _freeze_config(cfg["out"], "embed", cfg)
    config_path = cfg["model_config"] or str(Path(cfg["checkpoint"]).parent
                                             / "model_config.json")
    model_cfg = ModelConfig.from_dict(json.loads(Path(config_path).read_text()))
    model = GramModel.load(cfg["checkpoint"], model_cfg)
    records, clips = _load_features(cfg["features"])
    embeddings = np.stack([model.extract_embedding(c, mode=cfg["mode"])
                           for c in clips])
    out = Path(cfg["out"])
    np.save(out / "embeddings.npy", embeddings)
    _dump_json(out / "embedding_ids.json", [r["scene_id"] for r in records])
    print(f"embedded {len(records)} clips ({embeddings.shape[1]} dims) into {out}")
    return 0


# ---------------- probe ----------------

PROBE_DEFAULTS = {
    "out": None, "embeddings": None, "ids": None, "features": None,
    "kind": "classification", "hidden": 256, "epochs": 200, "lr": 1e-2,
    "seed": 0, "correct_threshold_deg": 20.0,
}


def cmd_probe(args):
    cfg = _effective_config(PROBE_DEFAULTS, args, PROBE_DEFAULTS)
    _require(cfg, ["out", "embeddings", "ids", "features"])
    _freeze_config(cfg["out"], "probe", cfg)
    embeddings = np.load(cfg["embeddings"])
    ids = json.loads(Path(cfg["ids"]).read_text(encoding="utf-8"))
    records = {json.loads(line)["scene_id"]: json.loads(line) for line in
               Path(cfg["features"]).read_text(encoding="utf-8").splitlines() if line}
    missing = [i for i in ids if i not in records]
    if missing:
        raise CliError("embeddings without feature records", fields=missing[:10])

    probe_cfg = evalstats.ProbeConfig(kind=cfg["kind"], hidden=int(cfg["hidden"]),
                                      epochs=int(cfg["epochs"]), lr=float(cfg["lr"]),
                                      seed=int(cfg["seed"]))
    rng = np.random.default_rng(probe_cfg.seed)
    order = rng.permutation(len(ids))
    n_val = max(1, int(round(probe_cfg.val_fraction * len(ids))))
    val_ids = [ids[i] for i in order[:n_val]]

    if cfg["kind"] == "classification":
        names = sorted({records[i]["label"] for i in ids})
        labels = np.array([names.index(records[i]["label"]) for i in ids])
    else:
        labels = np.array([records[i]["source_unit_vector"] for i in ids])
    stats = evalstats.train_probe(embeddings, labels, probe_cfg)

    val_embed = embeddings[order[:n_val]]
    predictions = stats["predict"](val_embed)
    report = {"task": cfg["kind"], "n": len(ids), "n_val": n_val,
              "epochs_run": stats["epochs_run"]}
    if cfg["kind"] == "classification":
        truth = labels[order[:n_val]]
        correct = (predictions == truth).tolist()
        report.update({"metric": "accuracy", "value": float(np.mean(correct)),
                       "classes": names,
                       "per_item": {"ids": val_ids, "correct": correct}})
    else:
        truth = labels[order[:n_val]]
        errors = [evalstats.doa_error(v, vh) for v, vh in zip(truth, predictions)]
        correct = [e < float(cfg["correct_threshold_deg"]) for e in errors]
        report.update({"metric": "median_doa_deg",
                       "value": float(np.median(errors)),
                       "mean_doa_deg": float(np.mean(errors)),
                       "per_item": {"ids": val_ids, "error_deg": errors,
                                    "correct": correct}})
    _dump_json(Path(cfg["out"]) / "probe_results.json", report)
    print(f"probe {report['metric']} = {report['value']:.4f} (n_val={n_val})")
    return 0


# ---------------- doa-eval ----------------

DOA_DEFAULTS = {"out": None, "predictions": None, "truth": None}


def cmd_doa_eval(args):
    cfg = _effective_config(DOA_DEFAULTS, args, DOA_DEFAULTS)
    _require(cfg, ["out", "predictions", "truth"])
    _freeze_config(cfg["out"], "doa_eval", cfg)
    preds = json.loads(Path(cfg["predictions"]).read_text(encoding="utf-8"))
    truth_path = Path(cfg["truth"])
    if truth_path.suffix == ".jsonl":
        truth = {}
        for line in truth_path.read_text(encoding="utf-8").splitlines():
            if line:
                rec = json.loads(line)
                truth[rec["scene_id"]] = rec["source_unit_vector"]
    else:
        truth = json.loads(truth_path.read_text(encoding="utf-8"))
    common = sorted(set(preds) & set(truth))
    if not common:
        raise CliError("no overlapping ids between predictions and truth")
    errors = [evalstats.doa_error(truth[i], preds[i]) for i in common]
    result = evalstats.DoaResult(errors)
    report = {"n": len(common), "median_deg": result.median_deg,
              "mean_deg": result.mean_deg,
              "per_item": dict(zip(common, errors))}
    _dump_json(Path(cfg["out"]) / "doa_report.json", report)
    print(f"DoA over {len(common)} items: median {result.median_deg:.2f} deg")
    return 0


# ---------------- stats ----------------

STATS_DEFAULTS = {"out": ".", "a": None, "b": None, "pairs": None, "p": None,
                  "q": 0.05, "batch_size": None, "total_steps": None,
                  "steps_per_epoch": None, "epochs": None}


def _correctness_from(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    per_item = data.get("per_item", data)
    return dict(zip(per_item["ids"], per_item["correct"]))


def _mcnemar_pair(path_a, path_b):
    a = _correctness_from(path_a)
    b = _correctness_from(path_b)
    common = sorted(set(a) & set(b))
    if not common:
        raise CliError(f"no shared items between {path_a} and {path_b}")
    outcomes = evalstats.PairedOutcomes.from_correctness(
        [a[i] for i in common], [b[i] for i in common])
    return {"a": str(path_a), "b": str(path_b), "n": len(common),
            "n11": outcomes.n11, "n10": outcomes.n10,
            "n01": outcomes.n01, "n00": outcomes.n00,
            "raw_p": evalstats.mcnemar(outcomes)}


def cmd_stats(args):
    cfg = _effective_config(STATS_DEFAULTS, args, STATS_DEFAULTS)
    which = args.which
    out = Path(cfg["out"])
    if which == "mcnemar":
        pairs = []
        if cfg["a"] or cfg["b"]:
            _require(cfg, ["a", "b"])
            pairs.append((cfg["a"], cfg["b"]))
        if cfg["pairs"]:
            pairs.extend(tuple(p) for p in
                         json.loads(Path(cfg["pairs"]).read_text(encoding="utf-8")))
        if not pairs:
            raise CliError("mcnemar needs --a/--b or --pairs")
        _freeze_config(out, "stats_mcnemar", cfg)
        rows = [_mcnemar_pair(a, b) for a, b in pairs]
        adjusted, significant = evalstats.fdr_bh([r["raw_p"] for r in rows],
                                                 q=float(cfg["q"]))
        for row, adj, sig in zip(rows, adjusted, significant):
            row["adjusted_p"] = float(adj)
            row["significant"] = bool(sig)
            row["marker"] = evalstats.significance_marker(adj)
        report = {"q": float(cfg["q"]), "pairs": rows}
        _dump_json(out / "mcnemar_report.json", report)
        for row in rows:
            print(f"{row['a']} vs {row['b']}: raw p={row['raw_p']:.6g} "
                  f"adjusted={row['adjusted_p']:.6g} {row['marker']}")
        return 0
    if which == "fdr":
        _require(cfg, ["p"])
        values = [float(x) for x in str(cfg["p"]).split(",")]
        adjusted, significant = evalstats.fdr_bh(values, q=float(cfg["q"]))
        _freeze_config(out, "stats_fdr", cfg)
        report = {"raw_p": values, "adjusted_p": adjusted.tolist(),
                  "significant": significant.tolist(), "q": float(cfg["q"])}
        _dump_json(out / "fdr_report.json", report)
        print(json.dumps(report["adjusted_p"]))
        return 0
    if which == "samples":
        _require(cfg, ["batch_size"])
        total = evalstats.samples_seen(
            int(cfg["batch_size"]),
            steps_per_epoch=None if cfg["steps_per_epoch"] is None else int(cfg["steps_per_epoch"]),
            epochs=None if cfg["epochs"] is None else int(cfg["epochs"]),
            total_steps=None if cfg["total_steps"] is None else int(cfg["total_steps"]))
        _freeze_config(out, "stats_samples", cfg)
        _dump_json(out / "samples_report.json", {"samples_seen": total})
        print(total)
        return 0
    raise CliError(f"unknown stats mode {which!r}")


# ---------------- rt60 ----------------

RT60_DEFAULTS = {"out": ".", "wav": None, "dir": None}


def cmd_rt60(args):
    cfg = _effective_config(RT60_DEFAULTS, args, RT60_DEFAULTS)
    paths = []
    if cfg["wav"]:
        paths.extend(cfg["wav"] if isinstance(cfg["wav"], list) else [cfg["wav"]])
    if cfg["dir"]:
        paths.extend(sorted(str(p) for p in Path(cfg["dir"]).glob("*.wav")))
    if not paths:
        raise CliError("rt60 needs --wav or --dir")
    _freeze_config(cfg["out"], "rt60", cfg)
    rows = []
    for path in paths:
        wave = read_wav(path)
        if wave.channels == 2:
            brir = rooms.BinauralImpulseResponse(left=wave.data[0],
                                                 right=wave.data[1],
                                                 rate_hz=wave.rate_hz)
        else:
            brir = rooms.BinauralImpulseResponse(left=wave.data[0],
                                                 right=wave.data[0].copy(),
                                                 rate_hz=wave.rate_hz)
        rows.append({"path": path, "rt60_s": rooms.measure_rt60(brir)})
        print(f"{path}: RT60 = {rows[-1]['rt60_s']:.3f} s")
    _dump_json(Path(cfg["out"]) / "rt60_report.json", rows)
    return 0


# ---------------- pipeline ----------------

PIPE_DEFAULTS = {"out": None, "seed": 0, "scenes": 12, "steps": 40,
                 "corpus_items": 12, "noise_items": 6, "workers": None,
                 "backbone": "transformer", "strategy": "patch_based",
                 "toy": False}


def cmd_pipeline(args):
    cfg = _effective_config(PIPE_DEFAULTS, args, PIPE_DEFAULTS)
    if not cfg["toy"]:
        raise CliError("only --toy pipelines are supported")
    _require(cfg, ["out"])
    out = Path(cfg["out"])
    _freeze_config(out, "pipeline", cfg)
    seed = int(cfg["seed"])

    corpus = toydata.make_corpus(out / "corpus", int(cfg["corpus_items"]),
                                 derive_seed(seed, "corpus"))
    noise = toydata.make_noise_corpus(out / "noise", int(cfg["noise_items"]),
                                      derive_seed(seed, "noise"))

    ns = argparse.Namespace(config=None)
    stage = dict(BRIR_DEFAULTS, out=str(out / "brirs"), scenes=int(cfg["scenes"]),
                 seed=seed, workers=cfg["workers"])
    _freeze_and_run(cmd_brir_gen, ns, stage)
    stage = dict(MIX_DEFAULTS, out=str(out / "scenes"), corpus=str(corpus),
                 noise_corpus=str(noise), brirs=str(out / "brirs" / "brirs.jsonl"),
                 scenes=int(cfg["scenes"]), seed=seed, workers=cfg["workers"])
    _freeze_and_run(cmd_scene_mix, ns, stage)
    stage = dict(FEAT_DEFAULTS, out=str(out / "features"),
                 scenes=str(out / "scenes" / "scenes.jsonl"), workers=cfg["workers"])
    _freeze_and_run(cmd_featurize, ns, stage)
    stage = dict(PRETRAIN_DEFAULTS, out=str(out / "model"),
                 features=str(out / "features" / "features.jsonl"),
                 steps=int(cfg["steps"]), seed=seed,
                 backbone=cfg["backbone"], strategy=cfg["strategy"])
    _freeze_and_run(cmd_pretrain, ns, stage)
    stage = dict(EMBED_DEFAULTS, out=str(out / "embeddings"),
                 features=str(out / "features" / "features.jsonl"),
                 checkpoint=str(out / "model" / "checkpoint.ckpt"))
    _freeze_and_run(cmd_embed, ns, stage)
    stage = dict(PROBE_DEFAULTS, out=str(out / "probe"),
                 embeddings=str(out / "embeddings" / "embeddings.npy"),
                 ids=str(out / "embeddings" / "embedding_ids.json"),
                 features=str(out / "features" / "features.jsonl"),
                 epochs=60, seed=seed)
    _freeze_and_run(cmd_probe, ns, stage)
    print(f"pipeline complete; outputs under {out}")
    return 0


def _freeze_and_run(fn, ns, stage_cfg):
    for key, value in stage_cfg.items():
        setattr(ns, key.replace("-", "_"), value)
    code = fn(ns)
    if code != 0:
        raise CliError(f"pipeline stage {fn.__name__} failed")
    for key in stage_cfg:
        setattr(ns, key.replace("-", "_"), None)


# ---------------- parser ----------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gram",
        description="Binaural scene synthesis, masked pretraining, evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, options):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        for opt, kwargs in options.items():
            p.add_argument(f"--{opt}", **kwargs)
        p.set_defaults(fn=fn)
        return p

    num = {"type": float, "default": None}
    integer = {"type": int, "default": None}
    text = {"default": None}

    add("brir-gen", cmd_brir_gen, {
        "out": text, "scenes": integer, "seed": integer, "workers": integer,
        "room-dims": {"type": float, "nargs": 3, "default": None},
        "absorption": num, "max-order": integer, "listener-height": num,
        "listener-margin": num, "wall-margin": num})
    add("scene-mix", cmd_scene_mix, {
        "out": text, "corpus": text, "noise-corpus": text, "brirs": text,
        "scenes": integer, "seed": integer, "workers": integer,
        "snr-low-db": num, "snr-high-db": num})
    add("featurize", cmd_featurize, {"out": text, "scenes": text,
                                     "workers": integer})
    add("pretrain", cmd_pretrain, {
        "out": text, "features": text, "steps": integer, "seed": integer,
        "strategy": {"choices": ["patch_based", "time_based"], "default": None},
        "backbone": {"choices": ["transformer", "mamba"], "default": None},
        "batch-clips": integer, "segments-per-clip": integer, "base-lr": num,
        "warmup-steps": integer, "dim": integer, "depth": integer,
        "decoder-dim": integer, "heads": integer, "state-dim": integer,
        "toy": {"action": "store_true", "default": None}})
    add("embed", cmd_embed, {"out": text, "features": text, "checkpoint": text,
                             "model-config": text,
                             "mode": {"choices": ["clip_level", "localization"],
                                      "default": None}})
    add("probe", cmd_probe, {
        "out": text, "embeddings": text, "ids": text, "features": text,
        "kind": {"choices": ["classification", "regression_unit_sphere"],
                 "default": None},
        "hidden": integer, "epochs": integer, "lr": num, "seed": integer,
        "correct-threshold-deg": num})
    add("doa-eval", cmd_doa_eval, {"out": text, "predictions": text,
                                   "truth": text})
    stats = add("stats", cmd_stats, {
        "out": text, "a": text, "b": text, "pairs": text, "p": text, "q": num,
        "batch-size": integer, "total-steps": integer,
        "steps-per-epoch": integer, "epochs": integer})
    stats.add_argument("which", choices=["mcnemar", "fdr", "samples"])
    add("rt60", cmd_rt60, {"wav": {"nargs": "+", "default": None},
                           "dir": text, "out": text})
    add("pipeline", cmd_pipeline, {
        "out": text, "seed": integer, "scenes": integer, "steps": integer,
        "corpus-items": integer, "noise-items": integer, "workers": integer,
        "backbone": {"choices": ["transformer", "mamba"], "default": None},
        "strategy": {"choices": ["patch_based", "time_based"], "default": None},
        "toy": {"action": "store_true", "default": None}})
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(json.dumps({"error": "config", "message": str(exc),
                          "fields": exc.fields}, sort_keys=True), file=sys.stderr)
        return 1
    except (OSError, ValueError, FloatingPointError, RuntimeError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
