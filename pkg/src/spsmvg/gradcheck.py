"""End-to-end gradient verification against central finite differences."""

from __future__ import annotations

import numpy as np

from .model import Hyper, forward_pairs, pair_loss_and_grads, pairwise_loss
from .numerics import finite_diff_grad, relative_error
from .training import init_params

__all__ = ["make_check_setup", "run_gradcheck"]

CHECK_VIEW_DIMS = (("deep", 16), ("color", 12), ("hsv", 10), ("sift", 8))


def make_check_setup(mode: str, seed: int = 0, batch_pairs: int = 8):
    """Random tiny config: l=4, C=16, d_hidden=16, r=4, h1=32, h2=16."""
    hyper = Hyper(CHECK_VIEW_DIMS, C=16, d_hidden=16, r=4, h1=32, h2=16,
                  pooling_mode=mode)
    params = init_params(hyper, seed)
    rng = np.random.default_rng(seed + 1)
    # FC3 is zero at init, which would zero out every upstream gradient;
    # perturb it so the check exercises the whole network.
    params["fc3/w"].value[...] = rng.normal(scale=0.3, size=params["fc3/w"].value.shape)
    params["fc3/b"].value[...] = rng.normal(scale=0.1, size=2)
    raws = {
        name: rng.normal(size=(2 * batch_pairs, dim)) for name, dim in CHECK_VIEW_DIMS
    }
    y = (rng.random(batch_pairs) < 0.5).astype(np.float64)
    return hyper, params, raws, y


def run_gradcheck(mode: str, seed: int = 0, eps: float = 1e-5) -> float:
    """Max relative error between analytic and finite-difference gradients."""
    hyper, params, raws, y = make_check_setup(mode, seed)
    lam = 1.0 / hyper.l

    params.zero_grads()
    pair_loss_and_grads(raws, y, params, lam)
    analytic = {name: t.grad.copy() for name, t in params.items()}
    params.zero_grads()

    def loss_fn() -> float:
        f, _ = forward_pairs(raws, params, lam)
        return pairwise_loss(f, y)

    fd = finite_diff_grad(loss_fn, params.items(), eps)
    return max(relative_error(analytic[name], fd[name]) for name in fd)
