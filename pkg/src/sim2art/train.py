"""Deterministic training/validation over prepared synthetic sequences.

Sequences are featurized once up front (featurization is deterministic and
reusable), then each step samples a batch, runs the batched forward, sums the
per-sequence losses and applies a clipped adaptive-moment update under a
cosine learning-rate schedule.  Checkpoints carry weights, optimizer moments
and the batch-sampler rng state, so a resumed run reproduces the uninterrupted
loss trajectory bit for bit.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass

import numpy as np
import torch

from .errors import DomainError
from .featurize import FeaturizeConfig, apply_input_ablations, featurize_sequence
from .losses import GroundTruthTensors, total_loss
from .metrics import evaluate_dataset, evaluate_sequence
from .model import ArticulationNet, ModelConfig, load_model, save_checkpoint

ABLATION_FLAGS = ("flow", "dino", "gamma", "tbar")


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    lr: float = 3e-4
    lr_min: float = 1e-5
    clip_norm: float = 1.0
    seed: int = 0
    val_every: int = 500
    checkpoint_every: int = 1000
    ablate: tuple = ()

    def __post_init__(self):
        if self.steps < 1:
            raise DomainError("steps must be >= 1")
        if self.clip_norm <= 0:
            raise DomainError("clip_norm must be positive")
        bad = set(self.ablate) - set(ABLATION_FLAGS)
        if bad:
            raise DomainError(f"unknown ablation flags {sorted(bad)}; "
                              f"valid: {ABLATION_FLAGS}")
        self.ablate = tuple(sorted(set(self.ablate)))

    def to_dict(self) -> dict:
        return {"steps": self.steps, "batch_size": self.batch_size, "lr": self.lr,
                "lr_min": self.lr_min, "clip_norm": self.clip_norm,
                "seed": self.seed, "val_every": self.val_every,
                "checkpoint_every": self.checkpoint_every,
                "ablate": list(self.ablate)}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["ablate"] = tuple(d.get("ablate", ()))
        return cls(**d)


@dataclass
class PreparedSequence:
    """Featurized tensors plus supervision for one sequence."""

    raw: torch.Tensor        # (T, K, 11)
    keypoints: torch.Tensor  # (T, K, 3)
    points: torch.Tensor     # (T, N, 3)
    gt: GroundTruthTensors | None
    annotation: object       # normalized GroundTruthAnnotation (numpy) or None
    category: str
    scale_m: float


def prepare_sequence(seq, ann, category: str, feat_cfg: FeaturizeConfig,
                     ablate=(), dtype=torch.float32) -> PreparedSequence:
    feat = featurize_sequence(seq, ann, feat_cfg)
    raw = apply_input_ablations(feat.raw_features, no_flow="flow" in ablate,
                                no_semfeat="dino" in ablate,
                                no_tbar="tbar" in ablate)
    gt = (GroundTruthTensors.from_annotation(feat.annotation, dtype)
          if feat.annotation is not None else None)
    return PreparedSequence(torch.from_numpy(raw).to(dtype),
                            torch.from_numpy(feat.keypoints).to(dtype),
                            torch.from_numpy(feat.points).to(dtype),
                            gt, feat.annotation, category, feat.norm.scale)


def prepare_dataset(items, feat_cfg: FeaturizeConfig, ablate=(),
                    dtype=torch.float32) -> list:
    """items: iterable of (PointCloudSequence, GroundTruthAnnotation, category)."""
    return [prepare_sequence(s, a, c, feat_cfg, ablate, dtype) for s, a, c in items]


def _stack_batch(data: list, ids) -> tuple:
    raw = torch.stack([data[i].raw for i in ids])
    kps = torch.stack([data[i].keypoints for i in ids])
    pts = torch.stack([data[i].points for i in ids])
    return raw, kps, pts


def train_step(model: ArticulationNet, optimizer, data: list, ids,
               clip_norm: float):
    """One forward/backward/update over the listed sequences; returns mean scalars."""
    model.train()
    optimizer.zero_grad(set_to_none=True)
    raw, kps, pts = _stack_batch(data, ids)
    bundles = model(raw, kps, pts)
    breakdowns = [total_loss(b, data[i].gt)[0] for b, i in zip(bundles, ids)]
    loss = torch.stack([bd.total for bd in breakdowns]).mean()
    loss.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), clip_norm)
    optimizer.step()
    keys = ("seg", "jointtype", "axes", "pivots", "motion", "total")
    return {k: float(np.mean([bd.scalars()[k] for bd in breakdowns])) for k in keys}


@torch.no_grad()
def validate(model: ArticulationNet, data: list):
    """MetricsReport over a prepared dataset; never touches the weights."""
    model.eval()
    results = []
    for ps in data:
        bundle = model.forward_single(ps.raw, ps.keypoints, ps.points)
        sm = evaluate_sequence(bundle.detach_numpy(), ps.annotation, ps.scale_m)
        results.append((ps.category, sm))
    return evaluate_dataset(results)


def _cosine_lr(cfg: TrainConfig, step: int) -> float:
    a = (step - 1) / max(cfg.steps - 1, 1)
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + np.cos(np.pi * a))


def _save_train_checkpoint(path, model, optimizer, cfg, step, rng, best):
    extra_arrays = {}
    adam_steps = []
    params = list(model.state_dict().keys())
    state = optimizer.state_dict()["state"]
    for i, name in enumerate(params):
        st = state.get(i)
        if st is None:
            adam_steps.append(0.0)
            continue
        adam_steps.append(float(st["step"]))
        extra_arrays[f"adam.m.{name}"] = st["exp_avg"].numpy()
        extra_arrays[f"adam.v.{name}"] = st["exp_avg_sq"].numpy()
    extra = {"step": step, "adam_steps": adam_steps,
             "rng_state": rng.bit_generator.state,
             "best": best, "train_config": cfg.to_dict()}
    save_checkpoint(path, model, extra=extra, extra_arrays=extra_arrays)


def load_train_checkpoint(path):
    """Rebuild (model, optimizer, cfg, step, rng, best) for an exact resume."""
    model, extra, leftovers = load_model(path)
    cfg = TrainConfig.from_dict(extra["train_config"])
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    names = list(model.state_dict().keys())
    state = {}
    for i, name in enumerate(names):
        m = leftovers.get(f"adam.m.{name}")
        if m is None:
            continue
        state[i] = {"step": torch.tensor(extra["adam_steps"][i]),
                    "exp_avg": torch.from_numpy(leftovers[f"adam.m.{name}"].copy()),
                    "exp_avg_sq": torch.from_numpy(leftovers[f"adam.v.{name}"].copy())}
    opt_sd = optimizer.state_dict()
    opt_sd["state"] = state
    optimizer.load_state_dict(opt_sd)
    rng = np.random.default_rng()
    rng.bit_generator.state = extra["rng_state"]
    return model, optimizer, cfg, int(extra["step"]), rng, extra.get("best")


def run(model_cfg: ModelConfig, cfg: TrainConfig, train_data: list,
        val_data: list, out_dir: str, resume: str | None = None,
        stop_after: int | None = None):
    """Full training run; returns (checkpoint path, history path, best record).

    ``stop_after`` interrupts the run at that step (checkpointing first), as
    if the process had been killed; resuming continues the same trajectory.
    """
    os.makedirs(out_dir, exist_ok=True)
    history_path = os.path.join(out_dir, "history.jsonl")
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")

    if resume is not None:
        model, optimizer, cfg, start_step, rng, best = load_train_checkpoint(resume)
        mode = "a"
    else:
        torch.manual_seed(cfg.seed)
        model = ArticulationNet(model_cfg)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        rng = np.random.default_rng(cfg.seed + 1)
        start_step = 0
        best = None
        mode = "w"

    n = len(train_data)
    t0 = time.monotonic()
    with open(history_path, mode) as hist:
        for step in range(start_step + 1, cfg.steps + 1):
            lr = _cosine_lr(cfg, step)
            for grp in optimizer.param_groups:
                grp["lr"] = lr
            ids = rng.choice(n, size=min(cfg.batch_size, n), replace=False)
            scalars = train_step(model, optimizer, train_data, ids.tolist(),
                                 cfg.clip_norm)
            rec = {"step": step, "lr": lr, **scalars,
                   "elapsed_s": round(time.monotonic() - t0, 3)}
            hist.write(json.dumps(rec) + "\n")

            if val_data and (step % cfg.val_every == 0 or step == cfg.steps):
                report = validate(model, val_data)
                vm = report.mean.get("miou")
                rec = {"step": step, "val": report.mean,
                       "elapsed_s": round(time.monotonic() - t0, 3)}
                hist.write(json.dumps(rec) + "\n")
                if vm is not None and (best is None or vm > best["miou"]):
                    best = {"step": step, "miou": vm}
            if step % cfg.checkpoint_every == 0 or step == cfg.steps \
                    or step == stop_after:
                _save_train_checkpoint(ckpt_path, model, optimizer, cfg, step,
                                       rng, best)
            if step == stop_after:
                break
    return ckpt_path, history_path, best
