"""Mini-batch training of one per-user receiver network."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..channel import seed_rng
from ..config import ScenarioConfig
from ..errors import ConfigError, TrainingDivergedError
from ..nn import OptimizerState, adam_step
from ..t3former import ModelConfig, T3former, forward, loss, predict_bits, preprocess
from .dataset import Dataset, load_dataset
from .simulation import TAG_INIT, TAG_SHUFFLE, codebook_for, derive_seed

LOG_COLUMNS = ("epoch", "step", "lr", "loss", "ber", "config_digest", "seed")


@dataclass
class TrainResult:
    model: T3former
    history: list = field(default_factory=list)
    best_loss: float = math.inf
    steps: int = 0
    out_dir: Path | None = None


def _snapshot(params: dict) -> dict:
    return {k: p.data.copy() for k, p in params.items()}


def _save(model: T3former, arrays: dict, directory: Path, meta: dict) -> None:
    restore = {k: p.data for k, p in model.params.items()}
    for k, p in model.params.items():
        p.data = arrays[k]
    try:
        model.save(directory, meta)
    finally:
        for k, p in model.params.items():
            p.data = restore[k]


def train(config: ScenarioConfig, dataset, seed: int, out_dir=None, max_steps: int | None = None,
          log=None) -> TrainResult:
    """Adam + cosine schedule over ``epochs * ceil(N / batch)`` steps (or ``max_steps``).

    Writes ``train_log.csv``, ``checkpoint_best/`` (lowest epoch loss) and
    ``checkpoint_final/`` under ``out_dir`` when given.
    """
    ds = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    if ds.digest != config.digest:
        raise ConfigError(f"dataset config digest {ds.digest} does not match run config {config.digest}")
    n = len(ds)
    batch = min(config.batch_size, n)
    per_epoch = math.ceil(n / batch)
    total = max_steps if max_steps is not None else config.epochs * per_epoch
    if total < 1:
        raise ConfigError("training needs at least one step")
    epochs = math.ceil(total / per_epoch)

    mcfg = ModelConfig.from_scenario(config)
    model = T3former(mcfg, seed=derive_seed(seed, TAG_INIT), norm_scale=ds.rms() or 1.0)
    names = list(model.params)
    tensors = [model.params[k] for k in names]
    opt = OptimizerState.for_params(tensors, config.learning_rate, total)
    outer = codebook_for(config).outer
    shuffle = seed_rng(seed, TAG_SHUFFLE)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"seed": int(seed), "config_digest": config.digest, "user": ds.user,
            "dataset_seed": ds.header.get("seed"), "records": n, "total_steps": total,
            "learning_rate": config.learning_rate, "batch_size": batch}

    result = TrainResult(model=model, out_dir=out_dir)
    best = None
    step = 0
    for epoch in range(epochs):
        order = shuffle.permutation(n)
        losses, errors, bits_seen = [], 0, 0
        lr = 0.0
        for start in range(0, n, batch):
            if step >= total:
                break
            idx = np.sort(order[start:start + batch])
            z1 = preprocess(ds.cubes[idx], outer, model.norm_scale)
            labels = ds.bits[idx]
            for p in tensors:
                p.grad = None
            logits = forward(model.params, z1, mcfg).logits
            value = loss(logits, labels)
            value.backward()
            grads = [p.grad for p in tensors]
            if not np.isfinite(value.data) or not all(np.all(np.isfinite(g)) for g in grads):
                diag = {"step": step, "epoch": epoch, "lr": lr, "loss": float(value.data),
                        "batch_input_mean": float(z1.mean()), "batch_input_std": float(z1.std()),
                        "grad_norm": float(math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2))
                                                         for g in grads)))}
                if out_dir is not None:
                    _save(model, _snapshot(model.params), out_dir / "checkpoint_last_good",
                          {**meta, "aborted_at_step": step})
                raise TrainingDivergedError(f"non-finite loss or gradient at step {step}", diag)
            lr = adam_step(tensors, grads, opt)
            losses.append(float(value.data))
            errors += int(np.count_nonzero(predict_bits(logits) != labels))
            bits_seen += labels.size
            step += 1
        row = {"epoch": epoch, "step": step, "lr": lr, "loss": float(np.mean(losses)),
               "ber": errors / bits_seen, "config_digest": config.digest, "seed": int(seed)}
        result.history.append(row)
        if log is not None:
            log(row)
        if row["loss"] < result.best_loss:
            result.best_loss = row["loss"]
            best = (_snapshot(model.params), epoch)

    result.steps = step
    if out_dir is not None:
        _write_log(out_dir / "train_log.csv", result.history)
        model.save(out_dir / "checkpoint_final", {**meta, "epochs_run": epochs, "steps": step})
        _save(model, best[0], out_dir / "checkpoint_best",
              {**meta, "epochs_run": epochs, "best_epoch": best[1], "best_loss": result.best_loss})
    return result


def _write_log(path: Path, history: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for row in history:
            w.writerow({**row, "lr": f"{row['lr']:.9g}", "loss": f"{row['loss']:.9g}",
                        "ber": f"{row['ber']:.9g}"})
