"""Plain gradient-descent training with the stepped learning-rate decay."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged, ValidationError
from .config import LonConfig
from .io import LonDataset
from .net import LonModel, backward_pass, forward_logits, init_model, masked_sigmoid_ce


def learning_rate_at(cfg: LonConfig, step: int) -> float:
    """lr * decay^(step // decay_every); step 11000 is the first decayed one
    under the full-scale schedule."""
    return cfg.learning_rate * cfg.lr_decay ** (step // cfg.decay_every)


def lon_train(dataset: LonDataset, cfg: LonConfig, log_every: int = 0):
    """Train a fresh model on the dataset.

    Momentum-free SGD over seeded shuffles, deterministic given cfg.seed.
    Returns (model, per-step loss trace). Raises TrainingDiverged as soon
    as the loss stops being finite.
    """
    if len(dataset) == 0:
        raise ValidationError("training needs a non-empty dataset")
    rng = np.random.default_rng(cfg.seed)
    model = init_model(cfg, rng)
    trace = []
    order = rng.permutation(len(dataset))
    cursor = 0
    for step in range(cfg.iterations):
        if cursor + cfg.batch_size > len(order):
            order = rng.permutation(len(dataset))
            cursor = 0
        idx = order[cursor:cursor + cfg.batch_size]
        cursor += cfg.batch_size
        rasters, actor, path, labels = dataset.batch(idx)
        logits, caches = forward_logits(model, rasters, actor, path, want_cache=True)
        loss, dlogits = masked_sigmoid_ce(logits, labels)
        if not np.isfinite(loss):
            raise TrainingDiverged(step, loss)
        grads = backward_pass(model, caches, dlogits)
        lr = learning_rate_at(cfg, step)
        for name, g in grads.items():
            model.params[name] -= lr * g
        trace.append(loss)
        if log_every and step % log_every == 0:
            print(f"step {step:6d}  lr {lr:.2e}  loss {loss:.4f}")
    return model, trace
