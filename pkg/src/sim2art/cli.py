"""Command-line interface: gen-data, train, eval, predict.

Every command takes ``--config`` (INI, see config.py) plus a few overriding
flags; ``SIM2ART_DATA`` overrides the dataset root.  All failures exit
nonzero with a single-line ``sim2art: error: [kind] ...`` reason.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np
import torch

from . import dataio, metrics
from .config import load_config, default_config_ini
from .errors import (DomainError, FormatError, GenerationError, NumericError,
                     Sim2ArtError)
from .featurize import normalize_sequence
from .model import load_model
from .render import CameraParams
from .scenegen import GenerationParams, generate_sequence
from .train import TrainConfig, prepare_dataset, prepare_sequence, run, validate

_ERROR_KINDS = {DomainError: "domain", FormatError: "format",
                GenerationError: "generation", NumericError: "numeric"}


def _fail_kind(exc: Exception) -> str:
    for cls, kind in _ERROR_KINDS.items():
        if isinstance(exc, cls):
            return kind
    return "internal"


def _data_root(args, bundle) -> str:
    if getattr(args, "data", None):
        return args.data
    env = os.environ.get("SIM2ART_DATA")
    if env:
        return env
    return bundle.data.root


def _load_split(root: str) -> dataio.DatasetSplit:
    path = os.path.join(root, "split.json")
    if not os.path.isfile(path):
        raise FormatError(f"missing split file {path}")
    with open(path) as f:
        return dataio.DatasetSplit.from_json(f.read())


def _load_items(root: str, ids) -> list:
    items = []
    for sid in ids:
        rec = dataio.read_sequence(os.path.join(root, sid))
        seq, ann = rec.to_sequence()
        items.append((seq, ann, rec.manifest["category"]))
    return items


def cmd_gen_data(args) -> int:
    bundle = load_config(args.config)
    dc = bundle.data
    if args.seed is not None:
        dc.seed = args.seed
    if args.count is not None:
        dc.count = args.count
    if args.categories:
        dc.categories = tuple(args.categories.split(","))
        dc.__post_init__()
    out = args.out or _data_root(args, bundle)
    params = GenerationParams(
        sigma_points=dc.sigma_points, sigma_flow=dc.sigma_flow,
        camera=CameraParams(arc_deg_range=(dc.arc_lo, dc.arc_hi),
                            resolution=dc.resolution))
    os.makedirs(out, exist_ok=True)
    ids = []
    for i in range(dc.count):
        category = dc.categories[i % len(dc.categories)]
        seed = dc.seed + i
        gen = generate_sequence(category, seed, T=dc.frames,
                                n_points=dc.n_points, params=params,
                                noisy=dc.noisy)
        sid = f"{category}_{seed:06d}"
        dataio.write_sequence(dataio.record_from_generated(gen),
                              os.path.join(out, sid))
        ids.append(sid)
    split = dataio.make_split(ids, dc.ratios, dc.split_seed)
    with open(os.path.join(out, "split.json"), "w") as f:
        f.write(split.to_json())
    with open(os.path.join(out, "dataset.json"), "w") as f:
        json.dump({"count": dc.count, "categories": list(dc.categories),
                   "frames": dc.frames, "n_points": dc.n_points,
                   "seed": dc.seed, "noisy": dc.noisy}, f, sort_keys=True, indent=2)
    print(f"wrote {len(ids)} sequences to {out} "
          f"(train/val/test = {len(split.train)}/{len(split.val)}/{len(split.test)})")
    return 0


def _history_to_csv(history_path: str, csv_path: str):
    rows = []
    with open(history_path) as f:
        for line in f:
            rec = json.loads(line)
            if "total" in rec:
                rows.append(rec)
    if not rows:
        return
    keys = ["step", "lr", "seg", "jointtype", "axes", "pivots", "motion", "total"]
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(keys)
        for rec in rows:
            w.writerow([rec[k] for k in keys])


def cmd_train(args) -> int:
    bundle = load_config(args.config)
    tc, mc, fc = bundle.train, bundle.model, bundle.featurize
    if args.seed is not None:
        tc.seed = args.seed
    if args.steps is not None:
        tc.steps = args.steps
    if args.ablate:
        tc.ablate = tuple(sorted(set(tc.ablate) | set(args.ablate)))
        tc.__post_init__()
    if "gamma" in tc.ablate:
        mc.no_gamma = True
    root = _data_root(args, bundle)
    if not os.path.isdir(root):
        raise FormatError(f"dataset root {root} does not exist")
    split = _load_split(root)
    train_items = _load_items(root, split.train)
    val_items = _load_items(root, split.val)
    if not train_items:
        raise DomainError("training split is empty")
    train_data = prepare_dataset(train_items, fc, ablate=tc.ablate)
    val_data = prepare_dataset(val_items, fc, ablate=tc.ablate)
    out = args.out or "runs/train"
    ckpt, history, best = run(mc, tc, train_data, val_data, out,
                              resume=args.resume)
    _history_to_csv(history, os.path.join(out, "curves.csv"))
    print(f"checkpoint: {ckpt}")
    print(f"history:    {history}")
    if best:
        print(f"best val mIoU {best['miou']:.4f} @ step {best['step']}")
    return 0


def _featurize_cfg_from_checkpoint(extra: dict, bundle) -> tuple:
    fc = bundle.featurize
    ablate = tuple(extra.get("train_config", {}).get("ablate", ()))
    return fc, ablate


def cmd_eval(args) -> int:
    bundle = load_config(args.config)
    model, extra, _ = load_model(args.checkpoint)
    fc, ablate = _featurize_cfg_from_checkpoint(extra, bundle)
    root = _data_root(args, bundle)
    split = _load_split(root)
    items = _load_items(root, split.ids(args.split))
    if not items:
        raise DomainError(f"split {args.split!r} is empty")
    data = prepare_dataset(items, fc, ablate=ablate)
    report = validate(model, data)
    out = args.out or "runs/eval"
    os.makedirs(out, exist_ok=True)
    jpath = os.path.join(out, "metrics.json")
    tpath = os.path.join(out, "metrics.txt")
    with open(jpath, "w") as f:
        f.write(report.to_json())
    with open(tpath, "w") as f:
        f.write(report.to_table())
    print(report.to_table(), end="")
    print(f"wrote {jpath} and {tpath}")
    return 0


def cmd_predict(args) -> int:
    bundle = load_config(args.config)
    model, extra, _ = load_model(args.checkpoint)
    fc, ablate = _featurize_cfg_from_checkpoint(extra, bundle)
    path = args.sequence
    if os.path.isfile(os.path.join(path, "manifest.json")):
        rec = dataio.read_sequence(path)
    else:
        rec = dataio.import_external_sequence(path, n_points=bundle.data.n_points,
                                              seed=bundle.data.seed)
    seq, ann = rec.to_sequence()
    ps = prepare_sequence(seq, ann, rec.manifest["category"], fc, ablate=ablate)
    with torch.no_grad():
        model.eval()
        bundle_pred = model.forward_single(ps.raw, ps.keypoints, ps.points)
    np_bundle = bundle_pred.detach_numpy()
    out = args.out or "runs/predict"
    os.makedirs(out, exist_ok=True)

    labels = metrics.hard_labels(np_bundle["part_dist"])
    np.save(os.path.join(out, "pred_labels.npy"), labels.astype(np.int16))

    pred_types = np.argmax(np_bundle["type_logits"], axis=-1)
    motion = np_bundle["motion"].copy()
    motion[pred_types == 2] = 0.0
    # report parts that own at least one point
    present = sorted(set(labels.reshape(-1).tolist()))
    # denormalize pivots back to meters in the first-camera frame
    _, info = normalize_sequence(seq)
    joints = []
    for m in present:
        joints.append({
            "part": int(m),
            "joint_type": ["revolute", "prismatic", "static"][int(pred_types[m])],
            "rot_axis": [float(v) for v in np_bundle["rot_axis"][m]],
            "trans_axis": [float(v) for v in np_bundle["trans_axis"][m]],
            "pivot_m": [float(v) for v in info.denormalize(np_bundle["pivot"][m])],
            "motion": [float(v) for v in motion[m]],
            "motion_unit": ["deg", "cm", "none"][int(pred_types[m])],
            "point_count": int((labels == m).sum()),
        })
    jpath = os.path.join(out, "joints.json")
    with open(jpath, "w") as f:
        json.dump({"sequence": os.path.abspath(path), "parts": joints},
                  f, sort_keys=True, indent=2)
    print(f"wrote {jpath} and pred_labels.npy ({len(present)} parts present)")
    return 0


def cmd_dump_config(args) -> int:
    print(default_config_ini(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim2art",
                                description="Articulated-object understanding "
                                            "from point-cloud videos.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="output directory")

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(g)
    g.add_argument("--count", type=int, default=None)
    g.add_argument("--categories", help="comma-separated category list")
    g.add_argument("--data", help="dataset root (alias for --out)")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    common(t)
    t.add_argument("--data", help="dataset root (or SIM2ART_DATA)")
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--ablate", action="append", default=[],
                   choices=["flow", "dino", "gamma", "tbar"])
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", help="dataset root (or SIM2ART_DATA)")
    e.add_argument("--split", choices=["train", "val", "test"], default="test")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="predict for one sequence directory")
    common(r)
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--sequence", required=True,
                   help="sequence record dir or external array dir")
    r.set_defaults(func=cmd_predict)

    d = sub.add_parser("dump-config", help="print the documented defaults")
    d.set_defaults(func=cmd_dump_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Sim2ArtError as exc:
        print(f"sim2art: error: [{_fail_kind(exc)}] {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"sim2art: error: [io] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
