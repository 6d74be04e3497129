"""Predictors behind a common interface: the tensor-interaction network
(full and towerless variants) plus factorization-machine and logistic
regression baselines.

A predictor owns no state: parameters live in an ordered ``dict[str,
ndarray]`` so optimizers, gradient checking, and snapshots can treat every
model uniformly.  The dict insertion order is the declared serialization
order.

Network layout (full variant):

    embeddings  -> pairwise tensor interactions -> pooled -> tower1 -> t_h
    embeddings  -> flatten (x_v)                          -> tower2 -> x_h
    raw ids     -> per-feature wide weights (sparse one-hot dot product)

    logit = wide + w_out . concat(x_h, t_h) + b_out
    p     = sigmoid(logit)

The towerless variant drops both towers and feeds the pooled interaction
vector straight into the output, so its dense part is ``pooled`` alone.

Losses are computed in logit space (``log(1 + e^z) - y z``), so
``log(1 - p)`` is never evaluated and the loss stays finite for any finite
parameters.  The optional L1 penalty on the pair control gates is added
once per batch, not per example.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import relu, relu_deriv, sigmoid
from .errors import ConfigError, DimensionError
from .interaction import (
    InteractionParams,
    interact_backward_batch,
    interact_forward_batch,
    num_pairs,
)

__all__ = [
    "KINDS",
    "ModelConfig",
    "TFNet",
    "FactorizationMachine",
    "LogisticRegression",
    "make_model",
]

KINDS = ("tfnet", "tfnet_minus", "fm", "lr")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture choice plus hyperparameters.

    ``fm_rank`` defaults to ``embed_dim`` so the FM baseline's parameter
    budget stays comparable with the tensor model's.
    """

    kind: str
    embed_dim: int = 8
    n_slices: int = 2
    tower1: tuple[int, ...] = (32, 32)
    tower2: tuple[int, ...] = (32, 32)
    fm_rank: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}, expected one of {KINDS}")
        if self.embed_dim < 1 or self.n_slices < 1:
            raise ConfigError("embed_dim and n_slices must be positive")
        if any(w < 1 for w in self.tower1) or any(w < 1 for w in self.tower2):
            raise ConfigError("tower widths must be positive")
        if self.fm_rank is not None and self.fm_rank < 1:
            raise ConfigError("fm_rank must be positive")

    @property
    def effective_fm_rank(self) -> int:
        return self.embed_dim if self.fm_rank is None else self.fm_rank


def _bce_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy computed from logits; never takes log of 0."""
    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits))


def _check_ids(ids: np.ndarray, n_fields: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.intp)
    if ids.ndim != 2 or ids.shape[1] != n_fields:
        raise DimensionError(
            f"expected an (batch, {n_fields}) id matrix, got shape {ids.shape}"
        )
    return ids


class _PredictorBase:
    """Shared plumbing: batch prediction, per-example forward, loss."""

    kind: str

    def __init__(self, n_fields: int, vocab: int):
        if n_fields < 1:
            raise ConfigError("need at least one feature field")
        if vocab < n_fields:
            raise ConfigError("vocabulary smaller than the field count")
        self.n_fields = n_fields
        self.vocab = vocab

    def zero_grads(self, params):
        return {name: np.zeros_like(arr) for name, arr in params.items()}

    def predict_batch(self, params, ids) -> np.ndarray:
        """Vectorized forward without tape retention."""
        p, _, _ = self._forward_batch(params, ids, want_tape=False)
        return p

    def forward(self, params, instance_ids):
        """Single-example forward returning (probability, tape)."""
        ids = np.asarray(instance_ids, dtype=np.intp)
        if ids.ndim != 1:
            raise DimensionError(f"expected a flat id vector, got shape {ids.shape}")
        p, _, cache = self._forward_batch(ids[None, :], want_tape=True) \
            if False else self._forward_batch(params, ids[None, :], want_tape=True)
        return float(p[0]), cache

    def loss(self, params, ids, labels, l1_gate: float = 0.0) -> float:
        """Penalized mean cross-entropy without gradients (forward only)."""
        labels = np.asarray(labels, dtype=np.float64)
        _, logits, _ = self._forward_batch(params, ids, want_tape=False)
        loss = _bce_from_logits(logits, labels)
        if l1_gate and "pair_gates" in params:
            loss += l1_gate * float(params["pair_gates"].sum())
        return loss

    def _forward_batch(self, params, ids, want_tape):
        raise NotImplementedError


class TFNet(_PredictorBase):
    """Tensor-interaction network; ``kind='tfnet_minus'`` drops the towers."""

    def __init__(self, cfg: ModelConfig, n_fields: int, vocab: int):
        super().__init__(n_fields, vocab)
        if n_fields < 2:
            raise ConfigError("the interaction layer needs at least 2 fields")
        self.cfg = cfg
        self.kind = cfg.kind
        self.use_towers = cfg.kind == "tfnet"
        self.n_pairs = num_pairs(n_fields)
        d, m = cfg.embed_dim, cfg.n_slices
        if self.use_towers:
            self._tower1_dims = self._chain(m, cfg.tower1)
            self._tower2_dims = self._chain(n_fields * d, cfg.tower2)
            self.dense_dim = self._tower2_dims[-1][1] + self._tower1_dims[-1][1]
        else:
            self._tower1_dims = []
            self._tower2_dims = []
            self.dense_dim = m

    @staticmethod
    def _chain(in_dim, widths):
        dims, cur = [], in_dim
        for w in widths:
            dims.append((cur, w))
            cur = w
        return dims

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        """Seeded initialization; draw order matches the declared key order.

        Embeddings start small (std 0.01), operating tensors at std 1/d to
        keep bilinear outputs O(1), control gates at 1 so every pair starts
        admitted, dense weights Glorot-uniform, wide weights and biases 0.
        """
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        d, m = cfg.embed_dim, cfg.n_slices
        params: dict[str, np.ndarray] = {}
        params["embedding"] = rng.normal(0.0, 0.01, size=(self.vocab, d))
        params["op_tensor"] = rng.normal(0.0, 1.0 / d, size=(m, d, d))
        params["gate_tensor"] = rng.normal(0.0, 1.0 / d, size=(m, d, d))
        params["pair_gates"] = np.ones(self.n_pairs)
        for t, dims in (("tower1", self._tower1_dims), ("tower2", self._tower2_dims)):
            for i, (fan_in, fan_out) in enumerate(dims):
                lim = np.sqrt(6.0 / (fan_in + fan_out))
                params[f"{t}.{i}.w"] = rng.uniform(-lim, lim, size=(fan_out, fan_in))
                params[f"{t}.{i}.b"] = np.zeros(fan_out)
        params["wide"] = np.zeros(self.vocab)
        lim = np.sqrt(6.0 / (self.dense_dim + 1))
        params["w_out"] = rng.uniform(-lim, lim, size=self.dense_dim)
        params["b_out"] = np.zeros(1)
        return params

    def _interaction_params(self, params) -> InteractionParams:
        return InteractionParams(
            params["op_tensor"], params["gate_tensor"], params["pair_gates"]
        )

    def _tower_forward(self, tower, params, x):
        inputs, pres = [], []
        h = x
        for i in range(len(self._tower_dims(tower))):
            inputs.append(h)
            pre = np.einsum("bi,oi->bo", h, params[f"{tower}.{i}.w"])
            pre = pre + params[f"{tower}.{i}.b"][None, :]
            pres.append(pre)
            h = relu(pre)
        return h, inputs, pres

    def _tower_dims(self, tower):
        return self._tower1_dims if tower == "tower1" else self._tower2_dims

    def _tower_backward(self, tower, params, inputs, pres, d_out, grads):
        delta = d_out
        for i in reversed(range(len(self._tower_dims(tower)))):
            delta = delta * relu_deriv(pres[i])
            grads[f"{tower}.{i}.w"] += np.einsum("bo,bi->oi", delta, inputs[i])
            grads[f"{tower}.{i}.b"] += delta.sum(axis=0)
            delta = np.einsum("bo,oi->bi", delta, params[f"{tower}.{i}.w"])
        return delta

    def _forward_batch(self, params, ids, want_tape):
        ids = _check_ids(ids, self.n_fields)
        embeds = params["embedding"][ids]
        pooled, itape = interact_forward_batch(embeds, self._interaction_params(params))
        if self.use_towers:
            x_v = embeds.reshape(ids.shape[0], -1)
            x_h, t2_in, t2_pre = self._tower_forward("tower2", params, x_v)
            t_h, t1_in, t1_pre = self._tower_forward("tower1", params, pooled)
            dense = np.concatenate([x_h, t_h], axis=1)
        else:
            dense = pooled
        wide = params["wide"][ids].sum(axis=1)
        logits = wide + np.einsum("bd,d->b", dense, params["w_out"]) + params["b_out"][0]
        p = sigmoid(logits)
        if not want_tape:
            return p, logits, None
        cache = {
            "ids": ids, "embeds": embeds, "itape": itape, "pooled": pooled,
            "dense": dense, "logit": logits, "p": p,
        }
        if self.use_towers:
            cache.update(
                x_v=x_v, x_h=x_h, t_h=t_h,
                t1_in=t1_in, t1_pre=t1_pre, t2_in=t2_in, t2_pre=t2_pre,
            )
        return p, logits, cache

    def loss_and_grad(self, params, ids, labels, l1_gate: float = 0.0):
        """Penalized loss and exact gradients for every parameter group."""
        labels = np.asarray(labels, dtype=np.float64)
        if labels.size == 0:
            raise DimensionError("batch must be nonempty")
        p, logits, cache = self._forward_batch(params, ids, want_tape=True)
        if labels.shape != logits.shape:
            raise DimensionError(
                f"labels shape {labels.shape} does not match batch {logits.shape}"
            )
        batch = labels.shape[0]
        loss = _bce_from_logits(logits, labels)
        loss += l1_gate * float(params["pair_gates"].sum())

        grads = self.zero_grads(params)
        d_logit = (p - labels) / batch
        grads["b_out"][0] = d_logit.sum()
        grads["w_out"] += np.einsum("b,bd->d", d_logit, cache["dense"])
        ids_flat = cache["ids"].ravel()
        np.add.at(grads["wide"], ids_flat, np.repeat(d_logit, self.n_fields))

        d_dense = d_logit[:, None] * params["w_out"][None, :]
        if self.use_towers:
            split = self._tower2_dims[-1][1]
            d_xh, d_th = d_dense[:, :split], d_dense[:, split:]
            d_pooled = self._tower_backward(
                "tower1", params, cache["t1_in"], cache["t1_pre"], d_th, grads
            )
            d_xv = self._tower_backward(
                "tower2", params, cache["t2_in"], cache["t2_pre"], d_xh, grads
            )
            d_embeds = d_xv.reshape(batch, self.n_fields, self.cfg.embed_dim)
        else:
            d_pooled = d_dense
            d_embeds = np.zeros_like(cache["embeds"])

        igrads = interact_backward_batch(
            cache["itape"], cache["embeds"], self._interaction_params(params), d_pooled
        )
        grads["op_tensor"] += igrads.op_tensor
        grads["gate_tensor"] += igrads.gate_tensor
        grads["pair_gates"] += igrads.pair_gates + l1_gate
        d_embeds = d_embeds + igrads.embeds
        np.add.at(
            grads["embedding"], ids_flat,
            d_embeds.reshape(-1, self.cfg.embed_dim),
        )
        return loss, grads


class FactorizationMachine(_PredictorBase):
    """Second-order FM: wide term plus all pairwise embedding dot products.

    The pairwise sum uses the O(n d) identity
    ``sum_{i<j} <v_i, v_j> = 0.5 * (||sum_i v_i||^2 - sum_i ||v_i||^2)``.
    """

    kind = "fm"

    def __init__(self, cfg: ModelConfig, n_fields: int, vocab: int):
        super().__init__(n_fields, vocab)
        self.cfg = cfg
        self.rank = cfg.effective_fm_rank

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        return {
            "embedding": rng.normal(0.0, 0.01, size=(self.vocab, self.rank)),
            "wide": np.zeros(self.vocab),
            "b_out": np.zeros(1),
        }

    def _forward_batch(self, params, ids, want_tape):
        ids = _check_ids(ids, self.n_fields)
        emb = params["embedding"][ids]
        total = emb.sum(axis=1)
        pairwise = 0.5 * ((total**2).sum(axis=-1) - (emb**2).sum(axis=(1, 2)))
        logits = params["wide"][ids].sum(axis=1) + pairwise + params["b_out"][0]
        p = sigmoid(logits)
        cache = {"ids": ids, "emb": emb, "total": total, "p": p, "logit": logits}
        return p, logits, cache if want_tape else None

    def loss_and_grad(self, params, ids, labels, l1_gate: float = 0.0):
        labels = np.asarray(labels, dtype=np.float64)
        p, logits, cache = self._forward_batch(params, ids, want_tape=True)
        batch = labels.shape[0]
        loss = _bce_from_logits(logits, labels)
        grads = self.zero_grads(params)
        d_logit = (p - labels) / batch
        grads["b_out"][0] = d_logit.sum()
        ids_flat = cache["ids"].ravel()
        np.add.at(grads["wide"], ids_flat, np.repeat(d_logit, self.n_fields))
        # d/dv_f of the pairwise term is (sum_i v_i) - v_f
        d_emb = d_logit[:, None, None] * (cache["total"][:, None, :] - cache["emb"])
        np.add.at(grads["embedding"], ids_flat, d_emb.reshape(-1, self.rank))
        return loss, grads


class LogisticRegression(_PredictorBase):
    """Wide-only baseline: one weight per hashed feature plus a bias."""

    kind = "lr"

    def __init__(self, cfg: ModelConfig, n_fields: int, vocab: int):
        super().__init__(n_fields, vocab)
        self.cfg = cfg

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        del seed  # wide weights and bias start at zero regardless
        return {"wide": np.zeros(self.vocab), "b_out": np.zeros(1)}

    def _forward_batch(self, params, ids, want_tape):
        ids = _check_ids(ids, self.n_fields)
        logits = params["wide"][ids].sum(axis=1) + params["b_out"][0]
        p = sigmoid(logits)
        return p, logits, {"ids": ids, "p": p, "logit": logits} if want_tape else None

    def loss_and_grad(self, params, ids, labels, l1_gate: float = 0.0):
        labels = np.asarray(labels, dtype=np.float64)
        p, logits, cache = self._forward_batch(params, ids, want_tape=True)
        loss = _bce_from_logits(logits, labels)
        grads = self.zero_grads(params)
        d_logit = (p - labels) / labels.shape[0]
        grads["b_out"][0] = d_logit.sum()
        np.add.at(grads["wide"], cache["ids"].ravel(), np.repeat(d_logit, self.n_fields))
        return loss, grads


def make_model(cfg: ModelConfig, n_fields: int, vocab: int):
    """Build the predictor matching ``cfg.kind``."""
    if cfg.kind in ("tfnet", "tfnet_minus"):
        return TFNet(cfg, n_fields, vocab)
    if cfg.kind == "fm":
        return FactorizationMachine(cfg, n_fields, vocab)
    if cfg.kind == "lr":
        return LogisticRegression(cfg, n_fields, vocab)
    raise ConfigError(f"unknown model kind {cfg.kind!r}")
