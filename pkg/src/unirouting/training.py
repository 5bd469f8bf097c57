"""REINFORCE with a shared multi-start baseline over a mixed task schedule."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch

from .instance import generate_instance
from .policy import checkpoint
from .policy.model import PolicyConfig, UnifiedPolicy
from .policy.rollout import default_starts, run_policy
from .variants import SEEN_VARIANTS, make_spec

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "step", "task", "mean_reward", "loss", "lr", "wall_ms")


@dataclass
class TrainConfig:
    task_set: list = field(default_factory=lambda: list(SEEN_VARIANTS))
    n_customers: int = 100
    d: int = 128
    L: int = 12
    ff: int = 512
    d_h: int = 256
    batch_size: int = 128
    batches_per_epoch: int = 2000
    epochs: int = 500
    lr: float = 1e-4
    lr_decay_epoch: int = 451
    lr_decay_factor: float = 0.1
    weight_decay: float = 1e-6
    grad_clip: float = 1.0
    seed: int = 0
    use_xi: bool = True
    use_context: bool = True
    priors: list = field(default_factory=lambda: ["out", "in", "rel"])
    precision: str = "float32"
    max_steps: int = 0          # stop early after this many steps (0 = no cap)

    def __post_init__(self):
        if isinstance(self.task_set, str):
            self.task_set = [t for t in self.task_set.split(",") if t]
        if not self.task_set:
            raise ValueError("task_set must not be empty")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")
        for name in ("n_customers", "d", "L", "batch_size", "batches_per_epoch", "epochs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def dtype(self):
        return torch.float64 if self.precision == "float64" else torch.float32

    def policy_config(self) -> PolicyConfig:
        return PolicyConfig(d=self.d, L=self.L, ff=self.ff, d_h=self.d_h, use_xi=self.use_xi,
                            use_context=self.use_context, priors=tuple(self.priors))

    def specs(self):
        return [make_spec(t, self.n_customers) for t in self.task_set]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


PROFILES = {
    "full": {},
    "desk": {"task_set": ["TSP"], "n_customers": 10, "d": 32, "L": 3, "batch_size": 64,
             "batches_per_epoch": 200, "epochs": 10},
}


def profile(name="desk", **overrides) -> TrainConfig:
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return TrainConfig(**{**PROFILES[name], **overrides})


class TrainingAborted(RuntimeError):
    def __init__(self, msg, step, instance_seeds):
        super().__init__(msg)
        self.step = step
        self.instance_seeds = instance_seeds


def sample_task(rng: np.random.Generator, task_set):
    if not task_set:
        raise ValueError("task_set must not be empty")
    return task_set[int(rng.integers(len(task_set)))]


def lr_at(epoch: int, config: TrainConfig) -> float:
    if epoch < 1:
        raise ValueError("epochs are counted from 1")
    if epoch >= config.lr_decay_epoch:
        return config.lr * config.lr_decay_factor
    return config.lr


def instance_seeds(seed: int, step: int, count: int):
    ss = np.random.SeedSequence([int(seed) & (2 ** 63 - 1), int(step)])
    return [int(s) for s in ss.generate_state(count, dtype=np.uint64)]


def advantages(rewards, groups, valid=None):
    """Reward minus the mean reward of the same group (infeasible rows excluded)."""
    r = np.asarray(rewards, dtype=np.float64)
    g = np.asarray(groups)
    ok = np.ones(r.shape, bool) if valid is None else np.asarray(valid, bool)
    adv = np.zeros_like(r)
    excluded = 0
    for k in np.unique(g):
        sel = (g == k) & ok
        if not sel.any():
            excluded += 1
            continue
        adv[sel] = r[sel] - r[sel].mean()
    return adv, excluded


def reinforce_loss(rewards, log_probs, groups=None, valid=None):
    """Shared-baseline REINFORCE loss; returns (loss, advantages, excluded instances).

    With 2-D input, ``rewards`` and ``log_probs`` are (m starts, b instances).
    Otherwise rows are grouped by ``groups``.  Advantages are constants.
    """
    r = np.asarray(rewards.detach() if torch.is_tensor(rewards) else rewards, dtype=np.float64)
    lp = log_probs
    if r.ndim == 2:
        m, b = r.shape
        groups = np.tile(np.arange(b), m)
        r = r.reshape(-1)
        lp = lp.reshape(-1)
        valid = None if valid is None else np.asarray(valid).reshape(-1)
    elif groups is None:
        groups = np.zeros(len(r), dtype=np.int64)
    adv, excluded = advantages(r, groups, valid)
    ok = np.ones(len(r), bool) if valid is None else np.asarray(valid, bool)
    if not ok.any():
        return lp.sum() * 0.0, adv, excluded
    a = torch.as_tensor(adv[ok], dtype=lp.dtype)
    loss = -(a * lp[torch.as_tensor(np.nonzero(ok)[0])]).mean()
    return loss, adv, excluded


def _write_metrics_header(path):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(METRICS_HEADER)


def _append_metrics(path, rows):
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        for row in rows:
            w.writerow([row[k] for k in METRICS_HEADER])


@dataclass
class TrainResult:
    model: UnifiedPolicy
    metrics: list
    epochs: list
    checkpoint_path: str | None


def train(config: TrainConfig, out_dir=None, on_step=None, on_epoch=None, deterministic=True) -> TrainResult:
    """Run the training schedule; writes metrics.csv and per-epoch checkpoints to ``out_dir``."""
    if deterministic:
        torch.set_num_threads(1)
    specs = config.specs()
    names = list(config.task_set)
    model = UnifiedPolicy(config.policy_config(), seed=config.seed, dtype=config.dtype)
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr, betas=(0.9, 0.999), eps=1e-8,
                            weight_decay=config.weight_decay)
    task_rng = np.random.default_rng([int(config.seed) & (2 ** 63 - 1), 0x7A5C])
    gen = torch.Generator().manual_seed(int(config.seed) & (2 ** 63 - 1))
    metrics_path = ckpt_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.csv")
        _write_metrics_header(metrics_path)
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            json.dump(config.to_dict(), fh, indent=1, sort_keys=True)
    rows, epochs = [], []
    step = 0
    stop = False
    for epoch in range(1, config.epochs + 1):
        lr = lr_at(epoch, config)
        for group in opt.param_groups:
            group["lr"] = lr
        t_epoch = time.perf_counter()
        ep_rows = []
        feasible = total = 0
        for _ in range(config.batches_per_epoch):
            step += 1
            t0 = time.perf_counter()
            k = names.index(sample_task(task_rng, names))
            spec = specs[k]
            seeds = instance_seeds(config.seed, step, config.batch_size)
            instances = [generate_instance(spec, s) for s in seeds]
            rb = run_policy(model, instances, default_starts(instances), "sample", gen)
            valid = ~rb.dead
            loss, _, _ = reinforce_loss(rb.rewards, rb.log_probs, rb.inst, valid)
            if not torch.isfinite(loss):
                raise TrainingAborted(f"non-finite loss at step {step} ({names[k]})", step, seeds)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            opt.step()
            feasible += int(valid.sum())
            total += len(valid)
            row = {"epoch": epoch, "step": step, "task": names[k],
                   "mean_reward": float(rb.rewards[valid].mean()) if valid.any() else float("nan"),
                   "loss": float(loss.detach()), "lr": lr,
                   "wall_ms": int((time.perf_counter() - t0) * 1000)}
            ep_rows.append(row)
            if on_step is not None:
                on_step(row, rb)
            if config.max_steps and step >= config.max_steps:
                stop = True
                break
        rows += ep_rows
        summary = {"epoch": epoch, "steps": len(ep_rows),
                   "mean_reward": float(np.mean([r["mean_reward"] for r in ep_rows])),
                   "feasibility_rate": feasible / max(total, 1),
                   "wall_ms": int((time.perf_counter() - t_epoch) * 1000)}
        epochs.append(summary)
        log.info("epoch %d  reward %.4f  feasible %.3f  %d ms", epoch, summary["mean_reward"],
                 summary["feasibility_rate"], summary["wall_ms"])
        if on_epoch is not None:
            on_epoch(summary)
        if out_dir is not None:
            _append_metrics(metrics_path, ep_rows)
            ckpt_path = os.path.join(out_dir, f"epoch{epoch:04d}.ckpt")
            checkpoint.save(model, ckpt_path, extra={"epoch": epoch, "step": step, "tasks": names})
        if stop:
            break
    return TrainResult(model, rows, epochs, ckpt_path)


def load_config(path, profile_name=None, overrides=None) -> TrainConfig:
    """Flat JSON config file merged over a profile, then CLI overrides."""
    base = dict(PROFILES[profile_name]) if profile_name else {}
    if path is not None:
        with open(path) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError("config file must hold a flat JSON object")
        prof = doc.pop("profile", None)
        if prof:
            base = {**PROFILES[prof], **base} if profile_name is None else base
        base.update(doc)
    base.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return TrainConfig.from_dict(base)
