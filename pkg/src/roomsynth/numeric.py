"""Dense numeric kernels: adjacency normalization, spectral embedding,
GCN/FNN layers with hand-derived backward passes, Gaussian KL, and a
finite-difference gradient checker.

Everything is float64 numpy. Networks here are tiny and fixed-shape, so
each architecture chains these layer-level primitives explicitly instead
of going through a general autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NumericError(ValueError):
    """Invalid numeric input or non-finite value where one is required."""


@dataclass
class LayerParams:
    """One affine layer. bias=None means a pure linear map."""

    weight: np.ndarray
    bias: np.ndarray | None = None


def _require_square_symmetric(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericError(f"adjacency must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12):
        raise NumericError("adjacency must be symmetric")


def normalize_adjacency(a: np.ndarray, require_binary: bool = True,
                        checked: bool = True) -> np.ndarray:
    """Symmetric normalization with self-loops: Dt^{-1/2} (A+I) Dt^{-1/2}
    where Dt is the degree matrix of A+I. With require_binary=False the
    input may hold edge probabilities in [0, 1] (used for generated
    adjacencies fed to the discriminator). checked=False skips input
    validation on hot paths that construct the matrix themselves."""
    a = np.asarray(a, dtype=np.float64)
    if checked:
        _require_square_symmetric(a)
        if require_binary:
            if not np.all((a == 0.0) | (a == 1.0)):
                raise NumericError("adjacency entries must be 0 or 1")
        elif np.any(a < 0):
            raise NumericError("adjacency entries must be >= 0")
    b = a + np.eye(a.shape[0])
    d = b.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return b * inv_sqrt[:, None] * inv_sqrt[None, :]


def normalize_adjacency_backward(a: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """d(loss)/dA for loss depending on normalize_adjacency(A) through
    grad_out, treating every entry of A as independent. Callers that tie
    symmetric entries (an edge probability feeds A[u,v] and A[v,u]) sum
    the two entries of the result.

    With B = A + I, d_i = sum_j B_ij and N_ij = B_ij (d_i d_j)^{-1/2}:
    dL/dB_ij = G_ij (d_i d_j)^{-1/2} - 1/2 d_i^{-3/2} (r_i + c_i), where
    r_i = sum_l G_il B_il d_l^{-1/2} and c_i the same on G^T; the
    correction attaches to row i only, because d is a row sum.
    """
    a = np.asarray(a, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    b = a + np.eye(a.shape[0])
    d = b.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    gb = g * b
    r = (gb * inv_sqrt[None, :]).sum(axis=1)
    c = (gb * inv_sqrt[:, None]).sum(axis=0)
    direct = g * inv_sqrt[:, None] * inv_sqrt[None, :]
    corr = 0.5 * (d ** -1.5) * (r + c)
    return direct - corr[:, None]


def spectral_embedding(a: np.ndarray, k: int, checked: bool = True) -> np.ndarray:
    """n x k matrix whose columns are unit eigenvectors of the normalized
    Laplacian L = I - D^{-1/2} A D^{-1/2} (no self-loops; zero-degree rows
    leave L at identity) for the k smallest eigenvalues after dropping the
    first one (the trivial constant direction). Columns whose index
    exceeds n-1 are zero. Column signs are canonical: the first
    largest-magnitude entry of each column is made positive, so results
    are deterministic for simple spectra."""
    a = np.asarray(a, dtype=np.float64)
    if checked:
        _require_square_symmetric(a)
    n = a.shape[0]
    if n == 0:
        raise NumericError("adjacency must have at least one node")
    if k < 1:
        raise NumericError("k must be >= 1")
    deg = a.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    lap = np.eye(n) - a * inv_sqrt[:, None] * inv_sqrt[None, :]
    lap = 0.5 * (lap + lap.T)
    _, vecs = np.linalg.eigh(lap)
    out = np.zeros((n, k), dtype=np.float64)
    usable = min(k, n - 1)
    for j in range(usable):
        col = vecs[:, j + 1]
        norm = np.linalg.norm(col)
        if norm > 0:
            col = col / norm
        out[:, j] = _canonical_sign(col)
    return out


def _canonical_sign(col: np.ndarray) -> np.ndarray:
    # first largest-magnitude entry made positive; ambiguous only when
    # magnitudes tie with opposite signs (exactly antisymmetric columns)
    idx = int(np.argmax(np.abs(col)))
    return col if col[idx] >= 0 else -col


# --- layer primitives ----------------------------------------------------

def linear_forward(x: np.ndarray, layer: LayerParams) -> np.ndarray:
    y = x @ layer.weight
    if layer.bias is not None:
        y = y + layer.bias
    return y


def linear_backward(
    x: np.ndarray, layer: LayerParams, grad_y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Returns (dX, dW, db); db is None when the layer has no bias."""
    dw = x.T @ grad_y
    dx = grad_y @ layer.weight.T
    db = grad_y.sum(axis=0) if layer.bias is not None else None
    return dx, dw, db


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(pre_act: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    return grad_y * (pre_act > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def softmax_ce(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of one logit row against a class index.
    Returns (loss, dloss/dlogits)."""
    p = softmax_rows(logits.reshape(1, -1))[0]
    loss = -float(np.log(max(p[target], 1e-300)))
    grad = p.copy()
    grad[target] -= 1.0
    return loss, grad


def gcn_forward(
    x: np.ndarray, a_norm: np.ndarray, p0: LayerParams, p1: LayerParams
) -> np.ndarray:
    """A_norm @ relu(A_norm @ X @ W0) @ W1."""
    if x.shape[0] != a_norm.shape[0]:
        raise NumericError(
            f"feature rows {x.shape[0]} != adjacency size {a_norm.shape[0]}"
        )
    if x.shape[1] != p0.weight.shape[0]:
        raise NumericError(
            f"feature cols {x.shape[1]} != W0 rows {p0.weight.shape[0]}"
        )
    h = relu(a_norm @ linear_forward(x, p0))
    return a_norm @ linear_forward(h, p1)


def gcn_forward_full(
    x: np.ndarray, a_norm: np.ndarray, p0: LayerParams, p1: LayerParams
) -> tuple[np.ndarray, dict]:
    """gcn_forward plus the intermediates gcn_backward needs, so training
    loops do not pay for a second forward pass."""
    nmat = linear_forward(x, p0)
    u = a_norm @ nmat
    h = relu(u)
    m = linear_forward(h, p1)
    out = a_norm @ m
    return out, {"nmat": nmat, "u": u, "h": h, "m": m}


def gcn_backward(
    x: np.ndarray,
    a_norm: np.ndarray,
    p0: LayerParams,
    p1: LayerParams,
    grad_y: np.ndarray,
    fwd: dict | None = None,
) -> dict:
    """Gradients of the 2-layer GCN. Returns dict with dW0, dW1 (and
    biases when present), dX, and dA for the normalized adjacency. Pass
    the cache from gcn_forward_full as fwd to skip the recomputation."""
    if fwd is None:
        _, fwd = gcn_forward_full(x, a_norm, p0, p1)
    u, h, nmat, m = fwd["u"], fwd["h"], fwd["nmat"], fwd["m"]
    da = grad_y @ m.T
    dm = a_norm.T @ grad_y
    dh, dw1, db1 = linear_backward(h, p1, dm)
    du = relu_backward(u, dh)
    da += du @ nmat.T
    dn = a_norm.T @ du
    dx, dw0, db0 = linear_backward(x, p0, dn)
    return {"dW0": dw0, "db0": db0, "dW1": dw1, "db1": db1, "dX": dx, "dA": da}


def fnn_forward(x: np.ndarray, layers: list[LayerParams]) -> np.ndarray:
    """Affine chain with ReLU between layers and none after the last.
    Accepts a vector or a matrix of row vectors."""
    h = x
    for i, layer in enumerate(layers):
        h = linear_forward(h, layer)
        if i + 1 < len(layers):
            h = relu(h)
    return h


def fnn_forward_full(
    x: np.ndarray, layers: list[LayerParams]
) -> tuple[np.ndarray, tuple[list[np.ndarray], list[np.ndarray]]]:
    """fnn_forward plus (inputs, pre-activations) for fnn_backward."""
    pre: list[np.ndarray] = []
    inputs: list[np.ndarray] = []
    h = x
    for i, layer in enumerate(layers):
        inputs.append(h)
        z = linear_forward(h, layer)
        pre.append(z)
        h = relu(z) if i + 1 < len(layers) else z
    return h, (inputs, pre)


def fnn_backward(
    x: np.ndarray, layers: list[LayerParams], grad_y: np.ndarray,
    fwd: tuple[list[np.ndarray], list[np.ndarray]] | None = None,
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray | None]]]:
    """Returns (dX, [(dW, db) per layer]). Pass the cache from
    fnn_forward_full as fwd to skip the recomputation."""
    if fwd is None:
        _, fwd = fnn_forward_full(x, layers)
    inputs, pre = fwd
    grads: list[tuple[np.ndarray, np.ndarray | None]] = [None] * len(layers)  # type: ignore
    g = grad_y
    for i in range(len(layers) - 1, -1, -1):
        if i + 1 < len(layers):
            g = relu_backward(pre[i], g)
        dx, dw, db = linear_backward(inputs[i], layers[i], g)
        grads[i] = (dw, db)
        g = dx
    return g, grads


def mean_pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=0)


def mean_pool_backward(n_rows: int, grad_y: np.ndarray) -> np.ndarray:
    return np.tile(grad_y / n_rows, (n_rows, 1))


def kl_gaussian(mu: np.ndarray, sigma2: np.ndarray) -> float:
    """KL(N(mu, diag(sigma2)) || N(0, I))."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if np.any(sigma2 <= 0):
        raise NumericError("variances must be positive")
    return float(0.5 * np.sum(sigma2 + mu ** 2 - 1.0 - np.log(sigma2)))


def grad_check(loss_and_grad, params: dict[str, np.ndarray], epsilon: float = 1e-5) -> float:
    """Compare analytic gradients with central finite differences.

    loss_and_grad(params) must return (scalar loss, {name: grad array}).
    Returns max over entries of |g_a - g_fd| / max(1, |g_a|, |g_fd|).
    """
    base_loss, grads = loss_and_grad(params)
    if not np.isfinite(base_loss):
        raise NumericError(f"loss is not finite: {base_loss}")
    worst = 0.0
    for name, value in params.items():
        ga = np.asarray(grads[name], dtype=np.float64)
        if ga.shape != value.shape:
            raise NumericError(
                f"gradient shape {ga.shape} != param shape {value.shape} for {name!r}"
            )
        flat = value.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            up, _ = loss_and_grad(params)
            flat[idx] = orig - epsilon
            down, _ = loss_and_grad(params)
            flat[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"loss is not finite near {name!r}[{idx}]")
            g_fd = (up - down) / (2.0 * epsilon)
            g_a = ga.reshape(-1)[idx]
            err = abs(g_a - g_fd) / max(1.0, abs(g_a), abs(g_fd))
            worst = max(worst, err)
    return worst
