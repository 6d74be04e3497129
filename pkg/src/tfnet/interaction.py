"""Tensor-based pairwise feature interaction layer.

For field embeddings ``v_1 .. v_n`` (each length ``d``) and every pair
``i < j`` taken in lexicographic order, the layer computes

* ``logits_ij[k] = v_i . gate_tensor[k] @ v_j`` - how relevant semantic
  slice ``k`` is to this particular pair,
* ``gates_ij = softmax(logits_ij)`` - the adaptive per-pair weighting of
  the ``m`` semantic slices,
* ``raw_ij[k]  = v_i . op_tensor[k] @ v_j`` - the pair's interaction value
  in each semantic slice,
* ``feat_ij    = gates_ij * raw_ij`` - the gated interactive feature.

Stacking the ``q = n(n-1)/2`` gated features gives the ``(q, m)`` pair
feature matrix, and the layer output is its transpose applied to the
nonnegative, L1-sparsified per-pair control gates:

    ``pooled = pair_features.T @ pair_gates``  (length ``m``)

This fused evaluation never materializes the per-pair effective tensor
``gates_ij * op_tensor``; doing so would cost an extra ``m * d * d``
temporary per pair and is algebraically identical.  Tests keep the literal
materialized path as an independent oracle.

The backward pass is analytic.  With ``dL/dpooled`` given, the adjoints
are, per pair (writing ``g`` for gates, ``r`` for raw values):

    dfeat      = pair_gates[p] * dpooled
    dpair_gate = feat . dpooled                  (stacked: S @ dpooled)
    draw       = dfeat * g
    dg         = dfeat * r
    dlogits    = g * (dg - (g . dg))             (softmax Jacobian)
    dT[k]     += coeff[k] * outer(v_i, v_j)      (for both tensors)
    dv_i      += sum_k coeff[k] * T[k] @ v_j
    dv_j      += sum_k coeff[k] * T[k].T @ v_i

All functions are pure given (inputs, params); batched variants carry a
leading batch axis and reduce parameter gradients over it in ascending
example order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import softmax
from .errors import DimensionError

__all__ = [
    "InteractionParams",
    "InteractionTape",
    "InteractionGrads",
    "pair_index",
    "num_pairs",
    "interact_forward",
    "interact_forward_batch",
    "interact_backward",
    "interact_backward_batch",
    "project_control_gate",
]


@dataclass
class InteractionParams:
    """Learnable state of the interaction layer.

    op_tensor:   (m, d, d) semantic operation slices applied to each pair.
    gate_tensor: (m, d, d) scoring slices that drive the adaptive gate.
    pair_gates:  (q,) nonnegative control gates selecting useful pairs,
                 q = n(n-1)/2, ordered lexicographically by (i, j), i < j.
    """

    op_tensor: np.ndarray
    gate_tensor: np.ndarray
    pair_gates: np.ndarray

    @property
    def n_slices(self) -> int:
        return self.op_tensor.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.op_tensor.shape[1]

    def validate(self) -> None:
        m, d = self.n_slices, self.embed_dim
        if self.op_tensor.shape != (m, d, d):
            raise DimensionError(
                f"op_tensor must be (m, d, d), got {self.op_tensor.shape}"
            )
        if self.gate_tensor.shape != (m, d, d):
            raise DimensionError(
                f"gate_tensor shape {self.gate_tensor.shape} does not match "
                f"op_tensor shape {self.op_tensor.shape}"
            )
        if self.pair_gates.ndim != 1:
            raise DimensionError(
                f"pair_gates must be a vector, got shape {self.pair_gates.shape}"
            )


@dataclass
class InteractionTape:
    """Forward activations retained for the analytic backward pass.

    Arrays are (q, m) for a single example or (batch, q, m) for a batch.
    ``pair_features`` row (i, j) equals ``gates * raw_interactions`` for
    that pair; rows are ordered lexicographically by (i, j), i < j.
    """

    gate_logits: np.ndarray
    gates: np.ndarray
    raw_interactions: np.ndarray
    pair_features: np.ndarray


@dataclass
class InteractionGrads:
    """Gradients produced by the backward pass, shaped like their targets."""

    embeds: np.ndarray
    op_tensor: np.ndarray
    gate_tensor: np.ndarray
    pair_gates: np.ndarray


def num_pairs(n_fields: int) -> int:
    return n_fields * (n_fields - 1) // 2


def pair_index(n_fields: int):
    """Index arrays (left, right) for all pairs i < j in lexicographic order."""
    if n_fields < 2:
        raise DimensionError(
            f"need at least 2 fields to form pairs, got {n_fields}"
        )
    left, right = np.triu_indices(n_fields, k=1)
    return left.astype(np.intp), right.astype(np.intp)


def _check_embeds(embeds: np.ndarray, params: InteractionParams) -> None:
    d = params.embed_dim
    if embeds.shape[-1] != d:
        raise DimensionError(
            f"embedding dim {embeds.shape[-1]} does not match tensor dim {d}"
        )
    n = embeds.shape[-2]
    q = num_pairs(n)
    if params.pair_gates.shape != (q,):
        raise DimensionError(
            f"pair_gates has length {params.pair_gates.shape[0]} but "
            f"{n} fields form {q} pairs"
        )


def interact_forward_batch(embeds: np.ndarray, params: InteractionParams):
    """Forward pass over a (batch, n, d) block of embeddings.

    Returns (pooled, tape) where pooled is (batch, m) and the tape holds
    (batch, q, m) activations.
    """
    embeds = np.asarray(embeds, dtype=np.float64)
    if embeds.ndim != 3:
        raise DimensionError(f"expected (batch, n, d) embeddings, got {embeds.shape}")
    _check_embeds(embeds, params)
    left, right = pair_index(embeds.shape[1])
    vi = embeds[:, left, :]
    vj = embeds[:, right, :]

    gate_logits = np.einsum("bpa,kac,bpc->bpk", vi, params.gate_tensor, vj)
    gates = softmax(gate_logits)
    raw = np.einsum("bpa,kac,bpc->bpk", vi, params.op_tensor, vj)
    pair_features = gates * raw
    pooled = np.einsum("bpk,p->bk", pair_features, params.pair_gates)
    tape = InteractionTape(gate_logits, gates, raw, pair_features)
    return pooled, tape


def interact_forward(embeds, params: InteractionParams):
    """Forward pass for a single example; embeds is (n, d) or a list of rows."""
    embeds = np.asarray(embeds, dtype=np.float64)
    if embeds.ndim != 2:
        raise DimensionError(f"expected (n, d) embeddings, got shape {embeds.shape}")
    pooled, tape = interact_forward_batch(embeds[None], params)
    return pooled[0], InteractionTape(
        tape.gate_logits[0], tape.gates[0], tape.raw_interactions[0],
        tape.pair_features[0],
    )


def interact_backward_batch(
    tape: InteractionTape,
    embeds: np.ndarray,
    params: InteractionParams,
    d_pooled: np.ndarray,
) -> InteractionGrads:
    """Exact gradients of ``pooled . d_pooled`` for a batch.

    Parameter gradients are summed over the batch in ascending example
    order; embedding gradients keep the (batch, n, d) layout.
    """
    embeds = np.asarray(embeds, dtype=np.float64)
    d_pooled = np.asarray(d_pooled, dtype=np.float64)
    m = params.n_slices
    if embeds.ndim != 3:
        raise DimensionError(f"expected (batch, n, d) embeddings, got {embeds.shape}")
    if d_pooled.shape != (embeds.shape[0], m):
        raise DimensionError(
            f"d_pooled must be {(embeds.shape[0], m)}, got {d_pooled.shape}"
        )
    if tape.pair_features.shape[:1] != embeds.shape[:1]:
        raise DimensionError(
            "tape batch size does not match embeddings; the tape must come "
            "from interact_forward on the same inputs"
        )
    left, right = pair_index(embeds.shape[1])
    vi = embeds[:, left, :]
    vj = embeds[:, right, :]

    d_pair_gates = np.einsum("bpk,bk->p", tape.pair_features, d_pooled)
    d_feat = params.pair_gates[None, :, None] * d_pooled[:, None, :]
    d_raw = d_feat * tape.gates
    d_gates = d_feat * tape.raw_interactions
    # Softmax Jacobian: dlogits = g * (dg - <g, dg>)
    inner = np.einsum("bpk,bpk->bp", tape.gates, d_gates)
    d_logits = tape.gates * (d_gates - inner[:, :, None])

    d_op = np.einsum("bpa,bpk,bpc->kac", vi, d_raw, vj)
    d_gate_tensor = np.einsum("bpa,bpk,bpc->kac", vi, d_logits, vj)

    d_vi = np.einsum("bpk,kac,bpc->bpa", d_raw, params.op_tensor, vj)
    d_vi += np.einsum("bpk,kac,bpc->bpa", d_logits, params.gate_tensor, vj)
    d_vj = np.einsum("bpk,kac,bpa->bpc", d_raw, params.op_tensor, vi)
    d_vj += np.einsum("bpk,kac,bpa->bpc", d_logits, params.gate_tensor, vi)

    d_embeds = np.zeros_like(embeds)
    for p, (i, j) in enumerate(zip(left, right)):
        d_embeds[:, i, :] += d_vi[:, p, :]
        d_embeds[:, j, :] += d_vj[:, p, :]
    return InteractionGrads(d_embeds, d_op, d_gate_tensor, d_pair_gates)


def interact_backward(
    tape: InteractionTape,
    embeds,
    params: InteractionParams,
    d_pooled,
) -> InteractionGrads:
    """Single-example backward; see :func:`interact_backward_batch`."""
    embeds = np.asarray(embeds, dtype=np.float64)
    d_pooled = np.asarray(d_pooled, dtype=np.float64)
    batched = InteractionTape(
        tape.gate_logits[None], tape.gates[None],
        tape.raw_interactions[None], tape.pair_features[None],
    )
    g = interact_backward_batch(batched, embeds[None], params, d_pooled[None])
    return InteractionGrads(
        g.embeds[0], g.op_tensor, g.gate_tensor, g.pair_gates
    )


def project_control_gate(pair_gates) -> np.ndarray:
    """Clamp control gates to the nonnegative orthant (idempotent).

    Applied after every optimizer step so the L1 penalty acts as a
    projected subgradient method keeping the gates nonnegative and sparse.
    """
    return np.maximum(np.asarray(pair_gates, dtype=np.float64), 0.0)
