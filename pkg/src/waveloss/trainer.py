"""Supervised recurrent training loop.

Each iteration samples a batch of (sequence, start frame, tile) triples,
unrolls the generator over T frames with backpropagation through time,
evaluates the configured loss and applies one Adam step with a
piecewise-constant learning-rate schedule. Sampling draws its randomness
from a per-iteration seed sequence, so a resumed run continues exactly
where an uninterrupted one would be.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .datasets import extract_tiles
from .generator import (GeneratorConfig, init_generator,
                        load_checkpoint, rollout, save_checkpoint)
from .grid import backward
from .losses import LossWeights
from .optim import AdamState, adam_step

LR_SCHEDULE = ((0.0, 5e-4), (0.4, 2e-4), (0.7, 5e-5), (0.9, 1e-5))


@dataclass
class TrainConfig:
    iterations: int = 50000
    batch_size: int = 16
    lr_schedule: tuple = LR_SCHEDULE
    T: int = 10
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_interval: int = 1000
    loss_variant: str = "wavelet"  # mae | rfft | wavelet
    tile_size: int = 16
    tile_overlap: int = 8
    tile_band: float = 2.0
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.loss_variant not in ("mae", "rfft", "wavelet"):
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")
        lrs = [lr for _, lr in self.lr_schedule]
        if any(lr <= 0 for lr in lrs) or any(a < b for a, b in
                                             zip(lrs, lrs[1:])):
            raise ValueError("lr schedule must be positive, non-increasing")

    def lr_at(self, iteration):
        frac = iteration / self.iterations
        lr = self.lr_schedule[0][1]
        for start, value in self.lr_schedule:
            if frac >= start:
                lr = value
        return lr


def _iteration_rng(seed, iteration):
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(iteration,)))


def _batch_loss(params, gen_cfg, cfg, batch):
    """Mean loss over a batch of (low frame list, high target list)."""
    acc = None
    for low, targets in batch:
        preds = rollout(params, gen_cfg, low, T=len(low))
        if cfg.loss_variant == "mae":
            item = losses.mae_loss(targets, preds)
        elif cfg.loss_variant == "rfft":
            item = (losses.mae_loss(targets, preds)
                    + cfg.weights.alpha * losses.rfft_loss(targets, preds))
        else:
            item = losses.total_loss(targets, preds, cfg.weights)
        acc = item if acc is None else acc + item
    return acc * (1.0 / len(batch))


def train(cfg, records, out_dir=None, resume=None, eval_every=None,
          eval_records=None, eval_callback=None, stop_condition=None):
    """Train a generator on paired low/high records.

    Returns (params, log) where log is a list of per-iteration dicts.
    resume points at a trainer checkpoint written by a previous run.
    """
    if not records:
        raise ValueError("dataset is empty")
    import os

    k = records[0].low.k
    dims = records[0].low.frames[0].sdf.spatial_ndim
    gen_cfg = GeneratorConfig(dims=dims, k=k, leaky_slope=cfg.leaky_slope)

    tiles = []
    for ri, rec in enumerate(records):
        for tile in extract_tiles(rec, cfg.tile_size, cfg.tile_overlap,
                                  cfg.tile_band):
            tiles.append((ri, tile))
    if not tiles:
        raise ValueError("no tiles intersect the surface band")
    max_start = min(r.frame_count for r in records) - cfg.T
    if max_start < 0:
        raise ValueError(f"sequences shorter than T={cfg.T}")

    start_iter = 0
    state = AdamState()
    if resume is not None:
        gen_cfg, params, extra, meta = load_checkpoint(resume)
        start_iter = int(meta["iteration"])
        state.step = int(meta["adam_step"])
        for name in params:
            state.m[name] = extra["adam.m." + name]
            state.v[name] = extra["adam.v." + name]
    else:
        params = init_generator(gen_cfg, cfg.seed)

    log = []
    for it in range(start_iter, cfg.iterations):
        rng = _iteration_rng(cfg.seed, it)
        batch = []
        for _ in range(cfg.batch_size):
            ri, tile = tiles[rng.integers(len(tiles))]
            t0 = int(rng.integers(max_start + 1))
            low, targets = tile.cut(records[ri], t0=t0, T=cfg.T)
            batch.append((low, targets))

        loss = _batch_loss(params, gen_cfg, cfg, batch)
        value = loss.item()
        if not np.isfinite(value):
            raise FloatingPointError(
                f"loss diverged (non-finite) at iteration {it}; last "
                f"checkpoint retained")
        grads = backward(loss)
        lr = cfg.lr_at(it)
        params = adam_step(params, grads, state, lr)
        log.append({"iteration": it, "lr": lr, "loss": value})

        done = it + 1 == cfg.iterations
        if out_dir is not None and (done or (it + 1) % cfg.checkpoint_interval
                                    == 0):
            _save_trainer_checkpoint(
                os.path.join(out_dir, "checkpoint.wlck"),
                gen_cfg, params, state, it + 1)
        if eval_every and ((it + 1) % eval_every == 0 or done):
            if eval_callback is not None:
                eval_callback(it + 1, params, gen_cfg)
            if stop_condition is not None and stop_condition(it + 1, params,
                                                             gen_cfg):
                break
    return params, gen_cfg, log


def _save_trainer_checkpoint(path, gen_cfg, params, state, iteration):
    extra = {}
    for name in params:
        extra["adam.m." + name] = state.m.get(
            name, np.zeros(params[name].data.shape))
        extra["adam.v." + name] = state.v.get(
            name, np.zeros(params[name].data.shape))
    save_checkpoint(path, gen_cfg, params, extra=extra,
                    meta={"iteration": iteration, "adam_step": state.step})


def write_log(path, log, cfg):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "lr", "loss_total"])
        for row in log:
            w.writerow([row["iteration"], f"{row['lr']:.8g}",
                        f"{row['loss']:.12g}"])


def infer_records(params, gen_cfg, records, frames=None):
    """Full-frame rollouts; returns one list of predicted SDF grids per
    record."""
    out = []
    for rec in records:
        T = frames if frames is not None else rec.frame_count
        low = [(f.sdf, f.velocity) for f in rec.low.frames[:T]]
        out.append(rollout(params, gen_cfg, low, T=T, detach=True))
    return out


def evaluate_holdout(params, gen_cfg, records, frames=None):
    """Table-style metric report on held-out sequences (full frames)."""
    from .evaluation import evaluate_model
    preds = infer_records(params, gen_cfg, records, frames)
    return evaluate_model(preds, records, frames)
