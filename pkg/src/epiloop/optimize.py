"""Projected gradient descent with central-difference gradients.

The loss callback evaluates a whole batch of parameter vectors at once, so
finite differencing all coordinates costs a single vectorized forward pass.
Backtracking line search guarantees a non-increasing loss sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class OptResult:
    x: np.ndarray
    loss: float
    history: list[float]
    iterations: int
    status: str  # "converged" | "max_iters" | "converged-early"


def fd_gradient(loss_batch, x, free_mask=None, h=1e-5):
    """Central-difference gradient; only free coordinates are perturbed."""
    p = len(x)
    if free_mask is None:
        free_mask = np.ones(p, dtype=bool)
    idx = np.flatnonzero(free_mask)
    k = len(idx)
    pert = np.tile(x, (2 * k, 1))
    pert[np.arange(k), idx] += h
    pert[k + np.arange(k), idx] -= h
    vals = loss_batch(pert)
    grad = np.zeros(p)
    grad[idx] = (vals[:k] - vals[k:]) / (2 * h)
    return grad


def projected_gradient(
    loss_batch,
    x0,
    project,
    max_iters: int = 500,
    tol: float = 1e-6,
    patience: int = 50,
    step0: float = 0.05,
    fd_step: float = 1e-5,
    free_mask=None,
    n_backtracks: int = 12,
) -> OptResult:
    x = project(np.asarray(x0, dtype=float))
    loss = float(loss_batch(x[None, :])[0])
    if not np.isfinite(loss):
        raise FloatingPointError("initial point has non-finite loss")
    history = [loss]
    lr = step0
    stalls = 0
    status = "max_iters"
    it = 0
    for it in range(1, max_iters + 1):
        grad = fd_gradient(loss_batch, x, free_mask=free_mask, h=fd_step)
        gmax = np.max(np.abs(grad))
        if gmax == 0:
            status = "converged"
            break
        # normalize so lr is measured in parameter units, not loss units
        direction = grad / gmax
        steps = lr * 0.5 ** np.arange(n_backtracks)
        cands = np.stack([project(x - a * direction) for a in steps])
        cand_losses = loss_batch(cands)
        better = np.flatnonzero(
            np.isfinite(cand_losses) & (cand_losses < loss - 1e-12)
        )
        if len(better) == 0:
            stalls += 1
            lr *= 0.25
            history.append(loss)
            if stalls >= patience or lr < 1e-14:
                status = "converged-early"
                break
            continue
        j = int(better[0])
        improvement = loss - float(cand_losses[j])
        x = cands[j]
        loss = float(cand_losses[j])
        history.append(loss)
        lr = min(steps[j] * 1.5, 1.0)
        if improvement < tol:
            stalls += 1
            if stalls >= patience:
                status = "converged"
                break
        else:
            stalls = 0
    return OptResult(x, loss, history, it, status)
