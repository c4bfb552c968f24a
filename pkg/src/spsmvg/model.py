"""Differentiable core: two-layer GCN, channel self-attention, siamese head.

Two parallel branches consume the projected view matrix V of each image: a
graph branch propagating V through the normalized view-graph adjacency, and
a channel-attention branch gating V with a pooled squeeze-excite vector.
Their sum is the image representation; a pair of representations is
concatenated and classified by three fully connected layers ending in a
two-way softmax whose first component is the preference probability.

Every forward has an analytic backward; the batched pipeline
(:func:`forward_pairs` / :func:`backward_pairs`) additionally backpropagates
through the graph construction itself (cosine -> softmax -> threshold mask ->
symmetric normalization) so the per-view projections are trainable end to
end. Threshold masks are captured at forward time and held fixed in the
backward pass.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, DegenerateViewError
from .numerics import ParamTensor, relu, relu_backward, sigmoid, softmax_row

__all__ = [
    "POOLING_MODES",
    "Hyper",
    "ModelParams",
    "gcn_forward",
    "gcn_backward",
    "attention_forward",
    "attention_backward",
    "fuse",
    "siamese_forward",
    "siamese_backward",
    "pairwise_loss",
    "pairwise_loss_backward",
    "forward_pairs",
    "backward_pairs",
    "pair_loss_and_grads",
]

POOLING_MODES = ("null", "max", "avg", "max_avg")


@dataclass(frozen=True)
class Hyper:
    """Model dimensions. d_out of the GCN equals C so F_G + F_S is well typed."""

    view_dims: tuple[tuple[str, int], ...]  # (extractor, raw dim), deep first
    C: int = 16
    d_hidden: int = 16
    r: int = 4
    h1: int | None = None  # default 2*l*C
    h2: int | None = None  # default l*C/2
    pooling_mode: str = "max_avg"

    def __post_init__(self) -> None:
        if not self.view_dims:
            raise ConfigurationError("at least one view is required")
        if self.C <= 0 or self.d_hidden <= 0 or self.r <= 0:
            raise ConfigurationError("all model dimensions must be positive")
        if self.C % self.r != 0:
            raise ConfigurationError(f"C={self.C} must be divisible by r={self.r}")
        if self.pooling_mode not in POOLING_MODES:
            raise ConfigurationError(
                f"pooling_mode must be one of {POOLING_MODES}, got {self.pooling_mode!r}"
            )
        if self.fc1_size <= 0 or self.fc2_size <= 0:
            raise ConfigurationError("FC hidden sizes must be positive")

    @property
    def l(self) -> int:
        return len(self.view_dims)

    @property
    def d_out(self) -> int:
        return self.C

    @property
    def fc1_size(self) -> int:
        return self.h1 if self.h1 is not None else 2 * self.l * self.C

    @property
    def fc2_size(self) -> int:
        return self.h2 if self.h2 is not None else (self.l * self.C) // 2

    @property
    def view_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.view_dims)


class ModelParams:
    """All trainable tensors keyed by canonical names, shared across branches."""

    def __init__(self, hyper: Hyper, tensors: OrderedDict[str, ParamTensor]):
        self.hyper = hyper
        self.tensors = tensors
        for name, shape in expected_shapes(hyper).items():
            if name not in tensors:
                raise ConfigurationError(f"missing parameter tensor {name}")
            if tensors[name].value.shape != shape:
                raise ConfigurationError(
                    f"parameter {name} has shape {tensors[name].value.shape}, "
                    f"expected {shape}"
                )

    def __getitem__(self, name: str) -> ParamTensor:
        return self.tensors[name]

    def items(self) -> Iterator[tuple[str, ParamTensor]]:
        return iter(self.tensors.items())

    def names(self) -> list[str]:
        return list(self.tensors)

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self) -> "ModelParams":
        tensors = OrderedDict(
            (name, ParamTensor(t.value.copy(), t.grad.copy()))
            for name, t in self.tensors.items()
        )
        return ModelParams(self.hyper, tensors)


def expected_shapes(hyper: Hyper) -> OrderedDict[str, tuple[int, ...]]:
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    for name, dim in hyper.view_dims:
        shapes[f"proj/{name}/w"] = (hyper.C, dim)
        shapes[f"proj/{name}/b"] = (hyper.C,)
    shapes["gcn/w1"] = (hyper.d_hidden, hyper.C)
    shapes["gcn/w2"] = (hyper.d_out, hyper.d_hidden)
    shapes["attn/w1"] = (hyper.C // hyper.r, hyper.C)
    shapes["attn/w2"] = (hyper.C, hyper.C // hyper.r)
    in_dim = 2 * hyper.l * hyper.C
    shapes["fc1/w"] = (hyper.fc1_size, in_dim)
    shapes["fc1/b"] = (hyper.fc1_size,)
    shapes["fc2/w"] = (hyper.fc2_size, hyper.fc1_size)
    shapes["fc2/b"] = (hyper.fc2_size,)
    shapes["fc3/w"] = (2, hyper.fc2_size)
    shapes["fc3/b"] = (2,)
    return shapes


# ---------------------------------------------------------------------------
# single-instance ops (thin wrappers over the batched kernels)

def gcn_forward(S: np.ndarray, V: np.ndarray, params: ModelParams):
    """Two GCN layers: F_G = ReLU(S ReLU(S V W1^T) W2^T). Returns (F_G, cache)."""
    cache = _gcn_forward(S[None], V[None], params)
    return cache["FG"][0], cache


def gcn_backward(cache: dict, dFG: np.ndarray, params: ModelParams):
    """Accumulate gradients for gcn/w1, gcn/w2; return (dV, dS)."""
    dV, dS = _gcn_backward(cache, dFG[None], params)
    return dV[0], dS[0]


def attention_forward(F: np.ndarray, params: ModelParams, mode: str):
    """Channel self-attention gate over the l x C feature matrix."""
    cache = _attention_forward(F[None], params, mode)
    return cache["FS"][0], cache


def attention_backward(cache: dict, dFS: np.ndarray, params: ModelParams):
    return _attention_backward(cache, dFS[None], params)[0]


def fuse(FG: np.ndarray, FS: np.ndarray) -> np.ndarray:
    if FG.shape != FS.shape:
        raise ConfigurationError(f"fuse shape mismatch: {FG.shape} vs {FS.shape}")
    return FG + FS


def siamese_forward(fused_i: np.ndarray, fused_j: np.ndarray, params: ModelParams):
    """Concat both fused matrices, run the 3-layer head, return (f, cache)."""
    z = np.concatenate([fused_i.reshape(1, -1), fused_j.reshape(1, -1)], axis=1)
    cache = _head_forward(z, params)
    return float(cache["f"][0]), cache


def siamese_backward(cache: dict, df: float, params: ModelParams):
    """Backward from d loss / d f; returns (dfused_i, dfused_j) flattened halves."""
    f = cache["f"]
    # f = softmax(logits)[0] => df/dlogits = (f(1-f), -f(1-f))
    dlogits = np.stack([df * f * (1 - f), -df * f * (1 - f)], axis=1)
    dz = _head_backward(cache, dlogits, params)
    half = dz.shape[1] // 2
    return dz[0, :half], dz[0, half:]


def pairwise_loss(f, y) -> float:
    """Mean binary cross-entropy; y=1 means the first image is preferred."""
    f = np.atleast_1d(np.asarray(f, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    fc = np.clip(f, 1e-12, 1.0 - 1e-12)
    return float(np.mean(-y * np.log(fc) - (1.0 - y) * np.log(1.0 - fc)))


def pairwise_loss_backward(f, y) -> np.ndarray:
    """d loss / d f for the mean batch loss."""
    f = np.atleast_1d(np.asarray(f, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    fc = np.clip(f, 1e-12, 1.0 - 1e-12)
    return (-y / fc + (1.0 - y) / (1.0 - fc)) / f.size


# ---------------------------------------------------------------------------
# batched kernels; leading axis is the image (or pair) batch

def _gcn_forward(S: np.ndarray, V: np.ndarray, params: ModelParams) -> dict:
    w1 = params["gcn/w1"].value
    w2 = params["gcn/w2"].value
    if V.shape[2] != w1.shape[1]:
        raise ConfigurationError(
            f"GCN W1 expects C={w1.shape[1]}, view matrix has C={V.shape[2]}"
        )
    M1 = S @ V
    Hpre = M1 @ w1.T
    H = relu(Hpre)
    M2 = S @ H
    Gpre = M2 @ w2.T
    return {"S": S, "V": V, "M1": M1, "Hpre": Hpre, "H": H, "M2": M2,
            "Gpre": Gpre, "FG": relu(Gpre)}


def _gcn_backward(cache: dict, dFG: np.ndarray, params: ModelParams):
    S, V = cache["S"], cache["V"]
    w1 = params["gcn/w1"].value
    w2 = params["gcn/w2"].value
    dGpre = relu_backward(dFG, cache["Gpre"])
    params["gcn/w2"].grad += np.einsum("bio,bih->oh", dGpre, cache["M2"])
    dM2 = dGpre @ w2
    dS = np.einsum("bih,bjh->bij", dM2, cache["H"])
    dH = np.einsum("bij,bih->bjh", S, dM2)
    dHpre = relu_backward(dH, cache["Hpre"])
    params["gcn/w1"].grad += np.einsum("bih,bic->hc", dHpre, cache["M1"])
    dM1 = dHpre @ w1
    dS += np.einsum("bic,bjc->bij", dM1, V)
    dV = np.einsum("bij,bic->bjc", S, dM1)
    return dV, dS


def _attention_forward(F: np.ndarray, params: ModelParams, mode: str) -> dict:
    if mode not in POOLING_MODES:
        raise ConfigurationError(f"invalid pooling mode {mode!r}")
    cache: dict = {"F": F, "mode": mode}
    if mode == "null":
        cache["FS"] = F
        return cache
    if mode in ("avg", "max_avg"):
        cache["avg"] = F.mean(axis=1)
    if mode in ("max", "max_avg"):
        cache["argmax"] = F.argmax(axis=1)  # ties: lowest row index
        cache["max"] = np.take_along_axis(F, cache["argmax"][:, None, :], axis=1)[:, 0, :]
    if mode == "avg":
        pooled = cache["avg"]
    elif mode == "max":
        pooled = cache["max"]
    else:
        pooled = cache["max"] + cache["avg"]
    w1 = params["attn/w1"].value
    w2 = params["attn/w2"].value
    t1 = pooled @ w1.T
    t1r = relu(t1)
    a = sigmoid(t1r @ w2.T)
    cache.update(pooled=pooled, t1=t1, t1r=t1r, a=a, FS=a[:, None, :] * F)
    return cache


def _attention_backward(cache: dict, dFS: np.ndarray, params: ModelParams) -> np.ndarray:
    F = cache["F"]
    if cache["mode"] == "null":
        return dFS
    a = cache["a"]
    da = (dFS * F).sum(axis=1)
    dF = a[:, None, :] * dFS
    dt2 = da * a * (1.0 - a)
    params["attn/w2"].grad += dt2.T @ cache["t1r"]
    dt1r = dt2 @ params["attn/w2"].value
    dt1 = relu_backward(dt1r, cache["t1"])
    params["attn/w1"].grad += dt1.T @ cache["pooled"]
    dpooled = dt1 @ params["attn/w1"].value
    mode = cache["mode"]
    if mode in ("avg", "max_avg"):
        dF += dpooled[:, None, :] / F.shape[1]
    if mode in ("max", "max_avg"):
        scatter = np.zeros_like(F)
        np.put_along_axis(scatter, cache["argmax"][:, None, :], dpooled[:, None, :], axis=1)
        dF += scatter
    return dF


def _head_forward(z: np.ndarray, params: ModelParams) -> dict:
    a1pre = z @ params["fc1/w"].value.T + params["fc1/b"].value
    a1 = relu(a1pre)
    a2pre = a1 @ params["fc2/w"].value.T + params["fc2/b"].value
    a2 = relu(a2pre)
    logits = a2 @ params["fc3/w"].value.T + params["fc3/b"].value
    probs = softmax_row(logits)
    # the pair probability is contractually strict-interior; softmax can
    # round to exactly 0 or 1 under saturation
    f = np.clip(probs[:, 0], 1e-12, 1.0 - 1e-12)
    return {"z": z, "a1pre": a1pre, "a1": a1, "a2pre": a2pre, "a2": a2,
            "logits": logits, "probs": probs, "f": f}


def _head_backward(cache: dict, dlogits: np.ndarray, params: ModelParams) -> np.ndarray:
    params["fc3/w"].grad += dlogits.T @ cache["a2"]
    params["fc3/b"].grad += dlogits.sum(axis=0)
    da2 = dlogits @ params["fc3/w"].value
    da2pre = relu_backward(da2, cache["a2pre"])
    params["fc2/w"].grad += da2pre.T @ cache["a1"]
    params["fc2/b"].grad += da2pre.sum(axis=0)
    da1 = da2pre @ params["fc2/w"].value
    da1pre = relu_backward(da1, cache["a1pre"])
    params["fc1/w"].grad += da1pre.T @ cache["z"]
    params["fc1/b"].grad += da1pre.sum(axis=0)
    return da1pre @ params["fc1/w"].value


def _graph_forward(V: np.ndarray, lam: float, central: int = 0) -> dict:
    """Batched affinity -> threshold -> symmetric normalization."""
    norms = np.linalg.norm(V, axis=2)
    if np.any(norms == 0.0):
        raise DegenerateViewError("a projected view row collapsed to zero")
    U = V / norms[:, :, None]
    cos = np.clip(np.einsum("bic,bjc->bij", U, U), -1.0, 1.0)
    A = softmax_row(cos)
    keep = A >= lam
    keep[:, central, :] = True
    keep[:, :, central] = True
    idx = np.arange(V.shape[1])
    keep[:, idx, idx] = True
    A_thr = A * keep
    A_bar = 0.5 * (A_thr + A_thr.transpose(0, 2, 1))
    A_tilde = A_bar + np.eye(V.shape[1])
    d = A_tilde.sum(axis=2)
    dm = d**-0.5
    S = dm[:, :, None] * A_tilde * dm[:, None, :]
    return {"norms": norms, "U": U, "A": A, "keep": keep,
            "A_tilde": A_tilde, "d": d, "dm": dm, "S": S}


def _graph_backward(gcache: dict, dS: np.ndarray) -> np.ndarray:
    """Gradient of the adjacency construction w.r.t. V (mask held fixed)."""
    A, keep = gcache["A"], gcache["keep"]
    A_tilde, d, dm = gcache["A_tilde"], gcache["d"], gcache["dm"]
    U, norms = gcache["U"], gcache["norms"]
    dA_tilde = dm[:, :, None] * dm[:, None, :] * dS
    ddm = (dS * A_tilde * dm[:, None, :]).sum(axis=2) \
        + (dS * A_tilde * dm[:, :, None]).sum(axis=1)
    dd = -0.5 * d**-1.5 * ddm
    dA_tilde += dd[:, :, None]
    dA_thr = 0.5 * (dA_tilde + dA_tilde.transpose(0, 2, 1))
    dA = dA_thr * keep
    dcos = A * (dA - (dA * A).sum(axis=2, keepdims=True))
    # self-similarity is identically 1; its formula gradient is spurious
    idx = np.arange(A.shape[1])
    dcos[:, idx, idx] = 0.0
    dU = np.einsum("bij,bjc->bic", dcos, U) + np.einsum("bji,bjc->bic", dcos, U)
    return (dU - (dU * U).sum(axis=2, keepdims=True) * U) / norms[:, :, None]


# ---------------------------------------------------------------------------
# full pair pipeline

def forward_pairs(
    raws: dict[str, np.ndarray],
    params: ModelParams,
    lam: float,
    mode: str | None = None,
) -> tuple[np.ndarray, dict]:
    """Forward a batch of image pairs.

    ``raws[name]`` has shape (2P, dim): the first P rows are the first images
    of each pair, the last P rows the second images. Returns (f, cache) with
    f[p] the probability that pair p's first image is preferred.
    """
    hyper = params.hyper
    mode = hyper.pooling_mode if mode is None else mode
    names = hyper.view_names
    B = raws[names[0]].shape[0]
    if B % 2 != 0:
        raise ConfigurationError("pair batch needs an even number of images")
    V = np.empty((B, hyper.l, hyper.C))
    for k, name in enumerate(names):
        x = raws[name]
        w = params[f"proj/{name}/w"].value
        if x.shape[1] != w.shape[1]:
            raise ConfigurationError(
                f"raw view '{name}' has dim {x.shape[1]}, projection expects {w.shape[1]}"
            )
        V[:, k, :] = x @ w.T + params[f"proj/{name}/b"].value
    gcache = _graph_forward(V, lam)
    gcn = _gcn_forward(gcache["S"], V, params)
    attn = _attention_forward(V, params, mode)
    fused = gcn["FG"] + attn["FS"]
    P = B // 2
    flat = fused.reshape(B, -1)
    z = np.concatenate([flat[:P], flat[P:]], axis=1)
    head = _head_forward(z, params)
    cache = {"raws": raws, "V": V, "graph": gcache, "gcn": gcn,
             "attn": attn, "head": head, "P": P}
    return head["f"], cache


def backward_pairs(cache: dict, y: np.ndarray, params: ModelParams) -> None:
    """Accumulate gradients of the mean cross-entropy loss into params."""
    head = cache["head"]
    P = cache["P"]
    y = np.asarray(y, dtype=np.float64)
    target = np.stack([y, 1.0 - y], axis=1)
    dlogits = (head["probs"] - target) / P
    dz = _head_backward(cache["head"], dlogits, params)
    lC = cache["V"].shape[1] * cache["V"].shape[2]
    dfused = np.concatenate([dz[:, :lC], dz[:, lC:]], axis=0).reshape(cache["V"].shape)
    dV = _attention_backward(cache["attn"], dfused, params)
    dV_gcn, dS = _gcn_backward(cache["gcn"], dfused, params)
    dV += dV_gcn
    dV += _graph_backward(cache["graph"], dS)
    hyper = params.hyper
    for k, name in enumerate(hyper.view_names):
        params[f"proj/{name}/w"].grad += dV[:, k, :].T @ cache["raws"][name]
        params[f"proj/{name}/b"].grad += dV[:, k, :].sum(axis=0)


def pair_loss_and_grads(
    raws: dict[str, np.ndarray],
    y: np.ndarray,
    params: ModelParams,
    lam: float,
) -> tuple[float, np.ndarray]:
    """Forward + backward for one mini-batch; returns (mean loss, f)."""
    f, cache = forward_pairs(raws, params, lam)
    backward_pairs(cache, y, params)
    return pairwise_loss(f, y), f
