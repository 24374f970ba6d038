"""Conditional graph generation: a graph VAE with an adversarial
discriminator, trained on typed scene graphs.

The encoder is a two-layer GCN over spectral node features concatenated
with the one-hot condition; its mean and std heads share the first-layer
weights. Per-node outputs are pooled into a single Gaussian: the mean is
the row average and the variance is sum(rows^2)/n^2, the variance of that
average under independence. The decoder maps latents through an FNN f and
scores links with sigmoid(f_i . f_j); two classification heads on top of
f features (with a one-hot node-slot input, since pooled latents carry
no node identity) emit node categories and the 9 edge types. A GCN
discriminator with mean pooling scores real adjacencies against decoded
edge-probability matrices.

Training alternates three plain-SGD steps per graph: reconstruction+prior
descent on encoder and decoder, adversarial ascent on the discriminator,
and descent of log(1 - D(A')) on the decoder. Spectral features of the
decoded adjacency are held fixed inside each step; gradients reach the
decoder through the normalized adjacency instead.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .checkpoints import load_checkpoint, save_checkpoint
from .graphs import SceneGraph, adjacency_matrix, edge_type, semantic_class
from .numeric import (
    LayerParams,
    NumericError,
    fnn_backward,
    fnn_forward_full,
    gcn_backward,
    gcn_forward_full,
    kl_gaussian,
    normalize_adjacency,
    normalize_adjacency_backward,
    relu,
    relu_backward,
    sigmoid,
    softmax_rows,
    spectral_embedding,
)
from .scenes import ConditionCode, SchemaMismatchError

PROB_CLAMP = 1e-7
SIGMA2_FLOOR = 1e-8


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss), names the offending step."""


@dataclass(frozen=True)
class LatentStats:
    mu_bar: np.ndarray
    sigma2_bar: np.ndarray


@dataclass(frozen=True)
class DecodeOutput:
    """edge_probs: (m, m) symmetric, zero diagonal; cat_probs: (m, R);
    edge_type_probs: (m, m, 9) symmetric over the first two axes, uniform
    on the diagonal (self-pairs are never scored)."""

    edge_probs: np.ndarray
    cat_probs: np.ndarray
    edge_type_probs: np.ndarray


def gan_loss(d_real: float, d_fake: float) -> float:
    """log d_real + log(1 - d_fake), inputs clamped away from 0 and 1."""
    dr = min(max(d_real, PROB_CLAMP), 1.0 - PROB_CLAMP)
    df = min(max(d_fake, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return float(np.log(dr) + np.log(1.0 - df))


def _clamped_log(p: np.ndarray | float) -> np.ndarray | float:
    return np.log(np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP))


@dataclass(frozen=True)
class _GraphData:
    """Per-graph tensors precomputed once per fit call."""

    a: np.ndarray
    a_norm: np.ndarray
    x: np.ndarray  # spectral features, (n, k)
    xc: np.ndarray  # [x | condition] rows, shared by encoder and disc
    cond_vec: np.ndarray
    cats: tuple[int, ...]
    cat_idx: np.ndarray  # categories - 1, (n,)
    edges: tuple[tuple[int, int, int], ...]
    et_idx: np.ndarray  # upper-triangle row index per edge
    et_t: np.ndarray  # edge type - 1 per edge
    label_index: int
    # reusable input buffers with the condition / position blocks
    # prefilled; each training step overwrites the leading columns
    zc_buf: np.ndarray  # (n, d_z + c) decoder input
    xcf_buf: np.ndarray  # (n, k + c) discriminator input for decoded graphs
    cat_in_buf: np.ndarray  # (n, f_dim + pos) category head input
    et_in_buf: np.ndarray  # (pairs, f_dim + pos) edge type head input


_PAIR_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pair_indices(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle index arrays (i_idx, j_idx), cached per size."""
    got = _PAIR_CACHE.get(m)
    if got is None:
        got = np.triu_indices(m, k=1)
        _PAIR_CACHE[m] = got
    return got


_POS_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _position_blocks(m: int, pos_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """(node block, pair block) of one-hot slot encodings, cached per
    size. Node i maps to slot min(i, pos_dim - 1); the pair block holds
    the elementwise sum over the upper-triangle pairs."""
    got = _POS_CACHE.get((m, pos_dim))
    if got is None:
        idx = np.minimum(np.arange(m), pos_dim - 1)
        node = np.zeros((m, pos_dim))
        node[np.arange(m), idx] = 1.0
        iu, ju = _pair_indices(m)
        got = (node, node[iu] + node[ju])
        _POS_CACHE[(m, pos_dim)] = got
    return got


class ConditionalGraphGenerator(BaseEstimator):
    """Trainable conditional generator over typed scene graphs.

    Parameters are plain float64 arrays in ``params_``; gradients are
    hand-derived, so the whole model trains without any autodiff.
    """

    def __init__(
        self,
        d_z: int = 2,
        k: int = 4,
        enc_hidden: int = 16,
        f_hidden: int = 32,
        f_dim: int = 12,
        head_hidden: int = 16,
        disc_hidden: int = 16,
        disc_dim: int = 8,
        epochs: int = 200,
        lr: float = 0.05,
        init_scale: float = 0.15,
        seed: int = 0,
    ):
        self.d_z = d_z
        self.k = k
        self.enc_hidden = enc_hidden
        self.f_hidden = f_hidden
        self.f_dim = f_dim
        self.head_hidden = head_hidden
        self.disc_hidden = disc_hidden
        self.disc_dim = disc_dim
        self.epochs = epochs
        self.lr = lr
        self.init_scale = init_scale
        self.seed = seed

    # -- setup ---------------------------------------------------------

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("model is not fitted; call fit or load first")

    def _param_shapes(self, cond_dim: int, n_cats: int,
                      pos_dim: int) -> dict[str, tuple]:
        kc = self.k + cond_dim
        return {
            "enc_W0": (kc, self.enc_hidden),
            "enc_Wmu": (self.enc_hidden, self.d_z),
            "enc_Wsig": (self.enc_hidden, self.d_z),
            "dec_f0_W": (self.d_z + cond_dim, self.f_hidden),
            "dec_f0_b": (self.f_hidden,),
            "dec_f1_W": (self.f_hidden, self.f_dim),
            "dec_f1_b": (self.f_dim,),
            "dec_cat0_W": (self.f_dim + pos_dim, self.head_hidden),
            "dec_cat0_b": (self.head_hidden,),
            "dec_cat1_W": (self.head_hidden, n_cats),
            "dec_cat1_b": (n_cats,),
            "dec_et0_W": (self.f_dim + pos_dim, self.head_hidden),
            "dec_et0_b": (self.head_hidden,),
            "dec_et1_W": (self.head_hidden, 9),
            "dec_et1_b": (9,),
            "disc_W0": (kc, self.disc_hidden),
            "disc_W1": (self.disc_hidden, self.disc_dim),
            "disc_f0_W": (self.disc_dim, self.disc_hidden // 2),
            "disc_f0_b": (self.disc_hidden // 2,),
            "disc_f1_W": (self.disc_hidden // 2, 1),
            "disc_f1_b": (1,),
        }

    def _init_params(self, rng: np.random.Generator, cond_dim: int,
                     n_cats: int, pos_dim: int) -> dict:
        # one-hot input blocks use their active-column count as fan-in,
        # else their initial contribution is drowned by the dense blocks
        # and the heads settle on ignoring them
        blocks = {
            "enc_W0": ((self.k, self.k), (cond_dim, 1)),
            "disc_W0": ((self.k, self.k), (cond_dim, 1)),
            "dec_f0_W": ((self.d_z, self.d_z), (cond_dim, 1)),
            "dec_cat0_W": ((self.f_dim, self.f_dim), (pos_dim, 1)),
            "dec_et0_W": ((self.f_dim, self.f_dim), (pos_dim, 2)),
        }
        params = {}
        for name, shape in self._param_shapes(cond_dim, n_cats, pos_dim).items():
            if name.endswith("_b"):
                params[name] = np.zeros(shape, dtype=np.float64)
            elif name in blocks:
                rows = [
                    rng.normal(0.0, self.init_scale / np.sqrt(fan),
                               size=(size, shape[1]))
                    for size, fan in blocks[name]
                ]
                params[name] = np.concatenate(rows, axis=0)
            else:
                fan_in = shape[0]
                scale = self.init_scale / np.sqrt(fan_in)
                params[name] = rng.normal(0.0, scale, size=shape)
        return params

    def _f_layers(self, p: dict) -> list[LayerParams]:
        return [
            LayerParams(p["dec_f0_W"], p["dec_f0_b"]),
            LayerParams(p["dec_f1_W"], p["dec_f1_b"]),
        ]

    def _cat_layers(self, p: dict) -> list[LayerParams]:
        return [
            LayerParams(p["dec_cat0_W"], p["dec_cat0_b"]),
            LayerParams(p["dec_cat1_W"], p["dec_cat1_b"]),
        ]

    def _et_layers(self, p: dict) -> list[LayerParams]:
        return [
            LayerParams(p["dec_et0_W"], p["dec_et0_b"]),
            LayerParams(p["dec_et1_W"], p["dec_et1_b"]),
        ]

    def _disc_fnn(self, p: dict) -> list[LayerParams]:
        return [
            LayerParams(p["disc_f0_W"], p["disc_f0_b"]),
            LayerParams(p["disc_f1_W"], p["disc_f1_b"]),
        ]

    def condition_vector(self, label_index: int) -> np.ndarray:
        self._check_fitted()
        vec = np.zeros(len(self.condition_labels_), dtype=np.float64)
        vec[label_index] = 1.0
        return vec

    # -- encoder -------------------------------------------------------

    def _encode_forward(self, p: dict, a: np.ndarray, cond_vec: np.ndarray,
                        a_norm: np.ndarray | None = None,
                        x: np.ndarray | None = None,
                        xc: np.ndarray | None = None) -> tuple[LatentStats, dict]:
        n = a.shape[0]
        if n == 0:
            raise NumericError("cannot encode an empty graph")
        if xc is None:
            if x is None:
                x = spectral_embedding(a, self.k)
            xc = np.concatenate([x, np.tile(cond_vec, (n, 1))], axis=1)
        if a_norm is None:
            a_norm = normalize_adjacency(a, require_binary=False)
        ax = a_norm @ xc
        u = ax @ p["enc_W0"]
        h = relu(u)
        ah = a_norm @ h
        g_mu = ah @ p["enc_Wmu"]
        g_sig = ah @ p["enc_Wsig"]
        mu_bar = g_mu.mean(axis=0)
        s_raw = (g_sig ** 2).sum(axis=0) / (n * n)
        sigma2_bar = np.maximum(s_raw, SIGMA2_FLOOR)
        cache = {"ax": ax, "u": u, "ah": ah, "g_sig": g_sig, "a_norm": a_norm,
                 "n": n, "s_raw": s_raw}
        return LatentStats(mu_bar, sigma2_bar), cache

    def _encode_backward(self, p: dict, cache: dict, d_mu: np.ndarray,
                         d_sig2: np.ndarray) -> dict:
        n = cache["n"]
        a_norm = cache["a_norm"]
        live = cache["s_raw"] > SIGMA2_FLOOR
        d_gmu = np.broadcast_to(d_mu / n, (n, d_mu.shape[0]))
        d_gsig = 2.0 * cache["g_sig"] * (d_sig2 * live) / (n * n)
        d_ah = d_gmu @ p["enc_Wmu"].T + d_gsig @ p["enc_Wsig"].T
        d_wmu = cache["ah"].T @ d_gmu
        d_wsig = cache["ah"].T @ d_gsig
        d_h = a_norm.T @ d_ah
        d_u = relu_backward(cache["u"], d_h)
        d_w0 = cache["ax"].T @ d_u
        return {"enc_W0": d_w0, "enc_Wmu": d_wmu, "enc_Wsig": d_wsig}

    def encode(self, a: np.ndarray, cond_vec: np.ndarray) -> LatentStats:
        """Pooled Gaussian over latents for one adjacency + condition."""
        self._check_fitted()
        stats, _ = self._encode_forward(self.params_, np.asarray(a, dtype=np.float64),
                                        np.asarray(cond_vec, dtype=np.float64))
        return stats

    def sample_latents(self, stats: LatentStats, m: int, seed: int) -> np.ndarray:
        if m < 1:
            raise ValueError("m must be >= 1")
        rng = np.random.default_rng(seed)
        eps = rng.standard_normal((m, self.d_z))
        return stats.mu_bar + np.sqrt(stats.sigma2_bar) * eps

    # -- decoder -------------------------------------------------------

    def _decode_forward(self, p: dict, z: np.ndarray, cond_vec: np.ndarray,
                        zc_buf: np.ndarray | None = None,
                        head_bufs: tuple[np.ndarray, np.ndarray] | None = None,
                        ) -> dict:
        m = z.shape[0]
        pos_dim = p["dec_cat0_W"].shape[0] - self.f_dim
        if zc_buf is None:
            zc = np.concatenate([z, np.tile(cond_vec, (m, 1))], axis=1)
        else:
            zc_buf[:, : z.shape[1]] = z
            zc = zc_buf
        feat, f_fwd = fnn_forward_full(zc, self._f_layers(p))  # (m, f_dim)
        scores = feat @ feat.T
        edge_probs = sigmoid(scores)
        np.fill_diagonal(edge_probs, 0.0)
        iu, ju = _pair_indices(m)
        if head_bufs is None:
            node_pos, pair_pos = _position_blocks(m, pos_dim)
            cat_in = np.concatenate([feat, node_pos], axis=1)
            et_in = np.concatenate([feat[iu] + feat[ju], pair_pos], axis=1)
        else:
            cat_in, et_in = head_bufs
            cat_in[:, : self.f_dim] = feat
            et_in[:, : self.f_dim] = feat[iu] + feat[ju]
        cat_logits, cat_fwd = fnn_forward_full(cat_in, self._cat_layers(p))
        cat_probs = softmax_rows(cat_logits)
        et_logits, et_fwd = fnn_forward_full(et_in, self._et_layers(p))
        et_probs_rows = softmax_rows(et_logits) if len(iu) else np.zeros((0, 9))
        return {
            "zc": zc, "feat": feat, "scores": scores, "edge_probs": edge_probs,
            "cat_in": cat_in, "cat_probs": cat_probs,
            "iu": iu, "ju": ju, "et_in": et_in, "et_probs_rows": et_probs_rows,
            "f_fwd": f_fwd, "cat_fwd": cat_fwd, "et_fwd": et_fwd,
            "m": m,
        }

    @staticmethod
    def _dense_et_probs(cache: dict) -> np.ndarray:
        """(m, m, 9) edge-type tensor from the per-pair rows; uniform on
        the diagonal since self-pairs are never scored."""
        m = cache["m"]
        et = np.full((m, m, 9), 1.0 / 9.0)
        et[cache["iu"], cache["ju"]] = cache["et_probs_rows"]
        et[cache["ju"], cache["iu"]] = cache["et_probs_rows"]
        return et

    def decode(self, z: np.ndarray, cond_vec: np.ndarray) -> DecodeOutput:
        """Edge probabilities, node category distribution and edge-type
        distribution for latent rows under one condition."""
        self._check_fitted()
        out = self._decode_forward(self.params_, np.asarray(z, dtype=np.float64),
                                   np.asarray(cond_vec, dtype=np.float64))
        return DecodeOutput(out["edge_probs"], out["cat_probs"],
                            self._dense_et_probs(out))

    # -- losses --------------------------------------------------------

    @staticmethod
    def _edge_target_arrays(m: int, edges) -> tuple[np.ndarray, np.ndarray]:
        """Upper-triangle row index and 0-based type per typed edge. Pair
        (u, v) with u < v sits at row u*m - u*(u+1)/2 + (v-u-1) of the
        ordering used by _pair_indices."""
        idx = np.fromiter(
            (u * m - u * (u + 1) // 2 + (v - u - 1) for u, v, _ in edges),
            dtype=np.intp, count=len(edges),
        )
        ts = np.fromiter((t - 1 for _, _, t in edges), dtype=np.intp,
                         count=len(edges))
        return idx, ts

    def _recon_parts(self, cache: dict, a: np.ndarray, cat_idx: np.ndarray,
                     et_idx: np.ndarray, et_t: np.ndarray) -> tuple[float, dict]:
        """Reconstruction loss pieces plus gradient seeds on the decoder
        caches. Returns (loss, seeds) with seeds holding d_scores (m, m
        upper triangle), d_cat_logits, d_et_logits."""
        m = cache["m"]
        p_edge = cache["edge_probs"]
        iu = _pair_indices(m)
        a_pairs = a[iu]
        p_pairs = p_edge[iu]
        bce = float(
            -np.sum(a_pairs * _clamped_log(p_pairs)
                    + (1.0 - a_pairs) * _clamped_log(1.0 - p_pairs))
        )
        d_scores = np.zeros((m, m))
        d_scores[iu] = p_pairs - a_pairs

        cat_probs = cache["cat_probs"]
        cat_loss = float(-np.sum(_clamped_log(cat_probs[np.arange(m), cat_idx])))
        d_cat_logits = cat_probs.copy()
        d_cat_logits[np.arange(m), cat_idx] -= 1.0

        d_et_logits = np.zeros_like(cache["et_probs_rows"])
        et_loss = 0.0
        if len(et_idx):
            # edges are unique pairs, so et_idx has no duplicates
            rows = cache["et_probs_rows"][et_idx]
            et_loss = float(-np.sum(_clamped_log(rows[np.arange(len(et_idx)), et_t])))
            d_et_logits[et_idx] = rows
            d_et_logits[et_idx, et_t] -= 1.0

        loss = bce + cat_loss + et_loss
        seeds = {"d_scores": d_scores, "d_cat_logits": d_cat_logits,
                 "d_et_logits": d_et_logits}
        return loss, seeds

    @staticmethod
    def _acc(grads: dict, name: str, value: np.ndarray) -> None:
        if name in grads:
            grads[name] += value
        else:
            grads[name] = value

    def _decoder_backward(self, p: dict, cache: dict, seeds: dict,
                          grads: dict) -> np.ndarray:
        """Accumulate decoder gradients into grads; returns dZ."""
        feat = cache["feat"]
        d_scores = seeds["d_scores"]
        d_feat = (d_scores + d_scores.T) @ feat

        if seeds.get("d_cat_logits") is not None:
            d_cat_in, cat_grads = fnn_backward(
                cache["cat_in"], self._cat_layers(p), seeds["d_cat_logits"],
                fwd=cache["cat_fwd"],
            )
            d_feat += d_cat_in[:, : self.f_dim]
            for name, (dw, db) in zip(("dec_cat0", "dec_cat1"), cat_grads):
                self._acc(grads, name + "_W", dw)
                self._acc(grads, name + "_b", db)

        d_et_logits = seeds.get("d_et_logits")
        if d_et_logits is not None and len(cache["iu"]):
            d_et_in, et_grads = fnn_backward(
                cache["et_in"], self._et_layers(p), d_et_logits,
                fwd=cache["et_fwd"],
            )
            np.add.at(d_feat, cache["iu"], d_et_in[:, : self.f_dim])
            np.add.at(d_feat, cache["ju"], d_et_in[:, : self.f_dim])
            for name, (dw, db) in zip(("dec_et0", "dec_et1"), et_grads):
                self._acc(grads, name + "_W", dw)
                self._acc(grads, name + "_b", db)

        d_zc, f_grads = fnn_backward(cache["zc"], self._f_layers(p), d_feat,
                                     fwd=cache["f_fwd"])
        for name, (dw, db) in zip(("dec_f0", "dec_f1"), f_grads):
            self._acc(grads, name + "_W", dw)
            self._acc(grads, name + "_b", db)
        return d_zc[:, : self.d_z]

    def vae_loss(self, a: np.ndarray, output: DecodeOutput, stats: LatentStats,
                 cats: list[int], edges: list[tuple[int, int, int]]
                 ) -> tuple[float, float, float]:
        """(total, reconstruction, prior) for decode output against the
        target adjacency, node categories and typed edges."""
        m = a.shape[0]
        iu = np.triu_indices(m, k=1)
        recon = float(
            -np.sum(a[iu] * _clamped_log(output.edge_probs[iu])
                    + (1.0 - a[iu]) * _clamped_log(1.0 - output.edge_probs[iu]))
        )
        for i, cat in enumerate(cats):
            recon -= float(_clamped_log(output.cat_probs[i, cat - 1]))
        for u, v, t in edges:
            recon -= float(_clamped_log(output.edge_type_probs[u, v, t - 1]))
        prior = kl_gaussian(stats.mu_bar, stats.sigma2_bar)
        return recon + prior, recon, prior

    # -- discriminator -------------------------------------------------

    def _disc_forward(self, p: dict, a_cont: np.ndarray, cond_vec: np.ndarray,
                      x: np.ndarray | None = None,
                      a_norm: np.ndarray | None = None,
                      xc: np.ndarray | None = None) -> tuple[float, dict]:
        n = a_cont.shape[0]
        if xc is None:
            if x is None:
                x = spectral_embedding(a_cont, self.k)
            xc = np.concatenate([x, np.tile(cond_vec, (n, 1))], axis=1)
        if a_norm is None:
            a_norm = normalize_adjacency(a_cont, require_binary=False)
        p0 = LayerParams(p["disc_W0"])
        p1 = LayerParams(p["disc_W1"])
        rows, gcn_fwd = gcn_forward_full(xc, a_norm, p0, p1)
        pooled = rows.mean(axis=0)
        logits, fnn_fwd = fnn_forward_full(pooled.reshape(1, -1), self._disc_fnn(p))
        logit = logits[0, 0]
        d = float(sigmoid(np.array([logit]))[0])
        cache = {"xc": xc, "a_norm": a_norm, "rows_n": n, "pooled": pooled,
                 "logit": logit, "d": d, "p0": p0, "p1": p1,
                 "gcn_fwd": gcn_fwd, "fnn_fwd": fnn_fwd}
        return d, cache

    def _disc_backward(self, p: dict, cache: dict, d_logit: float,
                       want_da: bool) -> tuple[dict, np.ndarray | None]:
        """Backprop d_logit through the discriminator. Returns
        (param grads, dA_norm or None)."""
        d_pooled, fnn_grads = fnn_backward(
            cache["pooled"].reshape(1, -1), self._disc_fnn(p),
            np.array([[d_logit]]), fwd=cache["fnn_fwd"],
        )
        n = cache["rows_n"]
        d_rows = np.broadcast_to(d_pooled / n, (n, d_pooled.shape[1]))
        g = gcn_backward(cache["xc"], cache["a_norm"], cache["p0"], cache["p1"],
                         d_rows, fwd=cache["gcn_fwd"])
        grads = {
            "disc_W0": g["dW0"], "disc_W1": g["dW1"],
            "disc_f0_W": fnn_grads[0][0], "disc_f0_b": fnn_grads[0][1],
            "disc_f1_W": fnn_grads[1][0], "disc_f1_b": fnn_grads[1][1],
        }
        return grads, (g["dA"] if want_da else None)

    def discriminate(self, a: np.ndarray, cond_vec: np.ndarray) -> float:
        """Probability the discriminator assigns to the adjacency being a
        real extracted graph. Accepts binary or probability-valued input."""
        self._check_fitted()
        d, _ = self._disc_forward(self.params_, np.asarray(a, dtype=np.float64),
                                  np.asarray(cond_vec, dtype=np.float64))
        return d

    # -- training ------------------------------------------------------

    def fit(self, graphs: list[SceneGraph], y=None):
        if not graphs:
            raise ValueError("need at least one training graph")
        room_type = graphs[0].condition.room_type
        label_counts: Counter = Counter(g.condition.label_index for g in graphs)
        n_labels = max(label_counts) + 1
        for li in range(n_labels):
            if label_counts.get(li, 0) < 2:
                raise ValueError(
                    f"need at least 2 graphs per condition label, label {li} "
                    f"has {label_counts.get(li, 0)}"
                )
        max_cat = max(cat for g in graphs for _, cat in g.nodes)
        self.room_type_ = room_type
        self.condition_labels_ = list(getattr(self, "condition_labels_", [])) or [
            str(i) for i in range(n_labels)
        ]
        if len(self.condition_labels_) != n_labels:
            self.condition_labels_ = [str(i) for i in range(n_labels)]
        self.n_categories_ = max_cat
        cond_dim = n_labels
        pos_dim = max(len(g.nodes) for g in graphs)
        self.pos_dim_ = pos_dim

        rng = np.random.default_rng(self.seed)
        params = self._init_params(rng, cond_dim, max_cat, pos_dim)

        data: list[_GraphData] = []
        hist: dict[int, Counter] = {}
        for g in graphs:
            a = adjacency_matrix(g)
            n = a.shape[0]
            cond_vec = np.zeros(cond_dim)
            cond_vec[g.condition.label_index] = 1.0
            x = spectral_embedding(a, self.k)
            cats = tuple(g.categories())
            et_idx, et_t = self._edge_target_arrays(n, g.edges)
            zc_buf = np.empty((n, self.d_z + cond_dim))
            zc_buf[:, self.d_z:] = cond_vec
            xcf_buf = np.empty((n, self.k + cond_dim))
            xcf_buf[:, self.k:] = cond_vec
            node_pos, pair_pos = _position_blocks(n, pos_dim)
            cat_in_buf = np.empty((n, self.f_dim + pos_dim))
            cat_in_buf[:, self.f_dim:] = node_pos
            et_in_buf = np.empty((pair_pos.shape[0], self.f_dim + pos_dim))
            et_in_buf[:, self.f_dim:] = pair_pos
            data.append(
                _GraphData(
                    a=a,
                    a_norm=normalize_adjacency(a),
                    x=x,
                    xc=np.concatenate([x, np.tile(cond_vec, (n, 1))], axis=1),
                    cond_vec=cond_vec,
                    cats=cats,
                    cat_idx=np.asarray(cats, dtype=np.intp) - 1,
                    edges=g.edges,
                    et_idx=et_idx,
                    et_t=et_t,
                    label_index=g.condition.label_index,
                    zc_buf=zc_buf,
                    xcf_buf=xcf_buf,
                    cat_in_buf=cat_in_buf,
                    et_in_buf=et_in_buf,
                )
            )
            hist.setdefault(g.condition.label_index, Counter())[len(g.nodes)] += 1

        curve = []
        # divergence shows up as inf/nan and is caught by the per-step
        # guards, so the intermediate overflow warnings are just noise
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(self.epochs):
                order = rng.permutation(len(data))
                epoch_vae = epoch_rec = epoch_prior = epoch_gan = 0.0
                for gi in order:
                    gd = data[gi]
                    v_total, v_rec, v_prior = self._vae_step(
                        params, gd, rng, epoch)
                    g_loss = self._adversarial_steps(params, gd, rng, epoch)
                    epoch_vae += v_total
                    epoch_rec += v_rec
                    epoch_prior += v_prior
                    epoch_gan += g_loss
                m = len(data)
                curve.append({
                    "vae": epoch_vae / m, "recon": epoch_rec / m,
                    "prior": epoch_prior / m, "gan": epoch_gan / m,
                })

        self.params_ = params
        self.histograms_ = hist
        self.loss_curve_ = curve
        return self

    def _vae_step(self, params: dict, gd: _GraphData, rng: np.random.Generator,
                  epoch: int) -> tuple[float, float, float]:
        n = gd.a.shape[0]
        stats, enc_cache = self._encode_forward(
            params, gd.a, gd.cond_vec, a_norm=gd.a_norm, xc=gd.xc
        )
        eps = rng.standard_normal((n, self.d_z))
        sigma = np.sqrt(stats.sigma2_bar)
        z = stats.mu_bar + sigma * eps
        dec_cache = self._decode_forward(params, z, gd.cond_vec, zc_buf=gd.zc_buf,
                                         head_bufs=(gd.cat_in_buf, gd.et_in_buf))
        recon, seeds = self._recon_parts(dec_cache, gd.a, gd.cat_idx,
                                         gd.et_idx, gd.et_t)
        prior = kl_gaussian(stats.mu_bar, stats.sigma2_bar)
        total = recon + prior
        if not np.isfinite(total):
            raise TrainingError(
                f"vae step diverged (loss {total}) at epoch {epoch}"
            )

        grads: dict = {}
        d_z_rows = self._decoder_backward(params, dec_cache, seeds, grads)
        d_mu = d_z_rows.sum(axis=0) + stats.mu_bar
        d_sig2 = (d_z_rows * eps).sum(axis=0) / (2.0 * sigma)
        d_sig2 += 0.5 * (1.0 - 1.0 / stats.sigma2_bar)
        enc_grads = self._encode_backward(params, enc_cache, d_mu, d_sig2)
        for name, grad in enc_grads.items():
            self._acc(grads, name, grad)
        for name, grad in grads.items():
            params[name] -= self.lr * grad
        return total, recon, prior

    def _adversarial_steps(self, params: dict, gd: _GraphData,
                           rng: np.random.Generator, epoch: int) -> float:
        n = gd.a.shape[0]
        stats, _ = self._encode_forward(
            params, gd.a, gd.cond_vec, a_norm=gd.a_norm, xc=gd.xc
        )
        eps = rng.standard_normal((n, self.d_z))
        z = stats.mu_bar + np.sqrt(stats.sigma2_bar) * eps
        dec_cache = self._decode_forward(params, z, gd.cond_vec, zc_buf=gd.zc_buf,
                                         head_bufs=(gd.cat_in_buf, gd.et_in_buf))
        a_fake = dec_cache["edge_probs"]
        if not np.all(np.isfinite(a_fake)):
            raise TrainingError(
                f"adversarial step diverged (non-finite decoded adjacency) "
                f"at epoch {epoch}"
            )
        x_fake = spectral_embedding(a_fake, self.k, checked=False)
        an_fake = normalize_adjacency(a_fake, require_binary=False, checked=False)

        d_real, real_cache = self._disc_forward(
            params, gd.a, gd.cond_vec, xc=gd.xc, a_norm=gd.a_norm
        )
        xc_fake = gd.xcf_buf
        xc_fake[:, : self.k] = x_fake
        d_fake, fake_cache = self._disc_forward(
            params, a_fake, gd.cond_vec, xc=xc_fake, a_norm=an_fake
        )
        adv = gan_loss(d_real, d_fake)
        if not np.isfinite(adv):
            raise TrainingError(
                f"discriminator step diverged (loss {adv}) at epoch {epoch}"
            )
        # Ascend log d_real + log(1 - d_fake): d/dlogit of log sigmoid is
        # (1 - d); of log(1 - sigmoid) is -d. Bounded, so no clamping here.
        real_grads, _ = self._disc_backward(params, real_cache, 1.0 - d_real, False)
        fake_grads, _ = self._disc_backward(params, fake_cache, -d_fake, False)
        for name, grad in real_grads.items():
            params[name] += self.lr * grad
        for name, grad in fake_grads.items():
            params[name] += self.lr * grad

        # Generator step: descend log(1 - D(A')) wrt the decoder, with the
        # spectral features of A' held fixed.
        d_fake3, cache3 = self._disc_forward(
            params, a_fake, gd.cond_vec, xc=xc_fake, a_norm=an_fake
        )
        gen_loss = float(_clamped_log(1.0 - d_fake3))
        if not np.isfinite(gen_loss):
            raise TrainingError(
                f"generator step diverged (loss {gen_loss}) at epoch {epoch}"
            )
        _, d_an = self._disc_backward(params, cache3, -d_fake3, True)
        d_a = normalize_adjacency_backward(a_fake, d_an)
        m = dec_cache["m"]
        p_edge = dec_cache["edge_probs"]
        d_scores = np.zeros((m, m))
        iu = _pair_indices(m)
        tied = d_a[iu] + d_a.T[iu]
        d_scores[iu] = tied * p_edge[iu] * (1.0 - p_edge[iu])
        grads: dict = {}
        self._decoder_backward(
            params, dec_cache,
            {"d_scores": d_scores, "d_cat_logits": None, "d_et_logits": None},
            grads,
        )
        for name in ("dec_f0_W", "dec_f0_b", "dec_f1_W", "dec_f1_b"):
            params[name] -= self.lr * grads[name]
        return adv

    # -- generation ----------------------------------------------------

    def generate(self, cond: ConditionCode, seed: int) -> SceneGraph:
        """Sample one typed graph for the condition: node count from the
        stored histogram, latents from the prior, adjacency by 0.5
        thresholding (pairs whose sampled categories admit no edge type
        are suppressed first), categories and edge types by argmax with
        the semantic class forced to match the endpoint categories.
        Disconnected samples are bridged at the highest-probability pair
        that admits an edge type; if no such pair exists the most likely
        pair is used with the wall-object middle type as a last resort."""
        self._check_fitted()
        if cond.room_type != self.room_type_:
            raise SchemaMismatchError(
                f"condition room type {cond.room_type!r} != model "
                f"room type {self.room_type_!r}"
            )
        if not 0 <= cond.label_index < len(self.condition_labels_):
            raise SchemaMismatchError(
                f"label index {cond.label_index} out of range for "
                f"{len(self.condition_labels_)} labels"
            )
        hist = self.histograms_.get(cond.label_index)
        if not hist:
            raise SchemaMismatchError(
                f"model holds no node-count histogram for label {cond.label_index}"
            )
        rng = np.random.default_rng(seed)
        values = sorted(hist)
        counts = np.array([hist[v] for v in values], dtype=np.float64)
        m = int(rng.choice(values, p=counts / counts.sum()))
        z = rng.standard_normal((m, self.d_z))
        cond_vec = self.condition_vector(cond.label_index)
        out = self._decode_forward(self.params_, z, cond_vec)
        out["et_probs"] = self._dense_et_probs(out)
        cats = [int(c) + 1 for c in np.argmax(out["cat_probs"], axis=1)]

        edge_probs = out["edge_probs"].copy()
        for i in range(m):
            for j in range(i + 1, m):
                if semantic_class(cats[i], cats[j]) is None:
                    edge_probs[i, j] = 0.0
                    edge_probs[j, i] = 0.0

        chosen = [(i, j) for i in range(m) for j in range(i + 1, m)
                  if edge_probs[i, j] > 0.5]

        # Bridge components, preferring typeable pairs by probability.
        parent = list(range(m))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, j in chosen:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
        while True:
            roots = {find(i) for i in range(m)}
            if len(roots) <= 1:
                break
            best = None
            best_fallback = None
            for i in range(m):
                for j in range(i + 1, m):
                    if find(i) == find(j):
                        continue
                    p = out["edge_probs"][i, j]
                    key = (p, -i, -j)
                    if semantic_class(cats[i], cats[j]) is not None:
                        if best is None or key > best[0]:
                            best = (key, i, j)
                    elif best_fallback is None or key > best_fallback[0]:
                        best_fallback = (key, i, j)
            pick = best if best is not None else best_fallback
            assert pick is not None
            _, i, j = pick
            chosen.append((i, j))
            parent[find(i)] = find(j)

        edges = []
        for i, j in sorted(chosen):
            sem = semantic_class(cats[i], cats[j])
            if sem is None:
                edges.append((i, j, edge_type(2, 2)))
                continue
            block = out["et_probs"][i, j, 3 * (sem - 1): 3 * (sem - 1) + 3]
            bucket = int(np.argmax(block)) + 1
            edges.append((i, j, edge_type(sem, bucket)))

        return SceneGraph(
            nodes=tuple(enumerate(cats)),
            edges=tuple(edges),
            condition=cond,
        )

    # -- persistence ---------------------------------------------------

    def save(self, path: str) -> None:
        self._check_fitted()
        meta = {
            "d_z": self.d_z, "k": self.k,
            "enc_hidden": self.enc_hidden, "f_hidden": self.f_hidden,
            "f_dim": self.f_dim, "head_hidden": self.head_hidden,
            "disc_hidden": self.disc_hidden, "disc_dim": self.disc_dim,
            "epochs": self.epochs, "lr": self.lr,
            "init_scale": self.init_scale, "seed": self.seed,
            "room_type": self.room_type_,
            "condition_labels": list(self.condition_labels_),
            "n_categories": self.n_categories_,
            "pos_dim": self.pos_dim_,
            "registry": {str(k): v for k, v in getattr(self, "registry_", {}).items()},
            "histograms": {
                str(li): {str(n): int(c) for n, c in counter.items()}
                for li, counter in self.histograms_.items()
            },
        }
        save_checkpoint(path, "condgen", meta, self.params_)

    @classmethod
    def load(cls, path: str) -> "ConditionalGraphGenerator":
        meta, matrices = load_checkpoint(path, "condgen")
        model = cls(
            d_z=meta["d_z"], k=meta["k"], enc_hidden=meta["enc_hidden"],
            f_hidden=meta["f_hidden"], f_dim=meta["f_dim"],
            head_hidden=meta["head_hidden"], disc_hidden=meta["disc_hidden"],
            disc_dim=meta["disc_dim"], epochs=meta["epochs"], lr=meta["lr"],
            init_scale=meta["init_scale"], seed=meta["seed"],
        )
        model.room_type_ = meta["room_type"]
        model.condition_labels_ = list(meta["condition_labels"])
        model.n_categories_ = meta["n_categories"]
        model.pos_dim_ = meta["pos_dim"]
        model.registry_ = {int(k): v for k, v in meta.get("registry", {}).items()}
        model.histograms_ = {
            int(li): Counter({int(n): int(c) for n, c in h.items()})
            for li, h in meta["histograms"].items()
        }
        model.params_ = matrices
        return model
