"""Forward scoring and analytic backward passes for MDR, MASS, and MASR.

All model outputs are distances: lower means more relevant. Ranking sorts
ascending by score, and the pairwise training loss consumes score
differences (negative minus positive) directly, so no negation is applied
anywhere in between.

MDR sums two weighted squared distances (user-song under B1, playlist-song
under B2) plus a song bias; the `us` / `ps` ablations drop one term.

MASS builds a ReLU query from the concatenated user/playlist/candidate
embeddings, measures weighted squared distances from the query to each
member song under B3, and combines them with attention weights. The
attention weights come from one of four mechanisms: softmin over distances
under B4 (metric) or softmax over inner products (dot), computed either on
dedicated attention-memory tables with their own query map (mem) or on the
main tables reusing the main query (nonmem). Padded member slots always
receive exactly zero weight.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .params import ModelParams


@dataclass
class ScoreBatch:
    """A batch of scoring contexts (index arrays into the parameter tables)."""

    users: np.ndarray
    playlists: np.ndarray
    songs: np.ndarray
    members: np.ndarray = None   # (N, l) song indices, 0-padded
    counts: np.ndarray = None    # (N,) real member counts


def _relu(x):
    return np.maximum(x, 0.0)


def masked_softmax(scores, counts):
    """Row-wise softmax over the first counts[i] entries; padded slots are 0."""
    counts = np.asarray(counts)
    if np.any(counts < 1):
        raise ValueError("every context must have at least one real member")
    n, l = scores.shape
    mask = np.arange(l)[None, :] < counts[:, None]
    s = np.where(mask, scores, -np.inf)
    s = s - s.max(axis=1, keepdims=True)
    w = np.exp(s)
    return w / w.sum(axis=1, keepdims=True)


def masked_softmin(dists, counts):
    """Softmax over negated values: smaller distances get larger weights."""
    return masked_softmax(-np.asarray(dists, dtype=np.float64), counts)


# ---------------------------------------------------------------------------
# single-context building blocks
# ---------------------------------------------------------------------------

def build_query(u_vec, s_vec, weight, bias):
    """ReLU affine map of the concatenated pair [u; s] down to d dims."""
    x = np.concatenate([np.asarray(u_vec, float), np.asarray(s_vec, float)])
    weight = np.asarray(weight, float)
    bias = np.asarray(bias, float)
    if weight.shape[0] != x.shape[0] or weight.shape[1] != bias.shape[0]:
        raise ValueError(
            f"shape mismatch: input {x.shape[0]}, weight {weight.shape}, bias {bias.shape[0]}"
        )
    return _relu(x @ weight + bias)


def member_distances(q, member_vectors, b3, real_count=None):
    """Weighted squared distance from the query to each padded member slot.

    Entries beyond the real count are computed but meant to be masked by
    the (zero) attention weights downstream.
    """
    q = np.asarray(q, float)
    member_vectors = np.asarray(member_vectors, float)
    if member_vectors.shape[-1] != q.shape[-1]:
        raise ValueError(
            f"shape mismatch: query dim {q.shape[-1]}, members dim {member_vectors.shape[-1]}"
        )
    return kernels.sqdist_members(
        np.asarray(b3, float), q[None, :], member_vectors[None, :, :]
    )[0]


def attention_weights(q_a, member_a_vectors, b4, real_count):
    """Softmin attention over distances under B4; padded slots get weight 0."""
    d = member_distances(q_a, member_a_vectors, b4)
    return masked_softmin(d[None, :], np.array([real_count]))[0]


def attention_variant(kind, q, member_vectors, b=None, real_count=None):
    """Attention weights for one context under any of the four mechanisms.

    `kind` picks the score: *_metric uses softmin of distances under `b`,
    *_dot uses softmax of inner products. The mem/nonmem distinction is in
    which query and member vectors the caller passes.
    """
    if kind in ("mem_metric", "nonmem_metric"):
        return attention_weights(q, member_vectors, b, real_count)
    if kind in ("mem_dot", "nonmem_dot"):
        scores = kernels.dot_members(
            np.asarray(q, float)[None, :], np.asarray(member_vectors, float)[None, :, :]
        )[0]
        return masked_softmax(scores[None, :], np.array([real_count]))[0]
    raise ValueError(f"unknown attention kind: {kind}")


def masr_score(o_mdr, o_mass, alpha=0.5):
    """Affine blend of the two frozen component scores."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return alpha * o_mdr + (1.0 - alpha) * o_mass


# ---------------------------------------------------------------------------
# batched forward / backward
# ---------------------------------------------------------------------------

def _query_parts(params, batch, mem):
    t = params.tensors
    suffix = "_a" if mem else ""
    parts = []
    if params.variant in ("us", "ups"):
        parts.append(t["U" + suffix][batch.users])
    if params.variant in ("ps", "ups"):
        parts.append(t["P" + suffix][batch.playlists])
    parts.append(t["S" + suffix][batch.songs])
    return parts


def _scatter_query_grad(params, batch, dx, grads, mem):
    suffix = "_a" if mem else ""
    d = params.dim
    off = 0
    if params.variant in ("us", "ups"):
        np.add.at(grads["U" + suffix], batch.users, dx[:, off:off + d])
        off += d
    if params.variant in ("ps", "ups"):
        np.add.at(grads["P" + suffix], batch.playlists, dx[:, off:off + d])
        off += d
    np.add.at(grads["S" + suffix], batch.songs, dx[:, off:off + d])


def _mdr_forward(params, batch):
    t = params.tensors
    sk = t["S"][batch.songs]
    scores = np.zeros(len(batch.songs))
    cache = {"sk": sk}
    if "U" in t:
        cache["u"] = t["U"][batch.users]
        scores += kernels.sqdist_rows(t["B1"], cache["u"], sk)
    if "P" in t:
        cache["p"] = t["P"][batch.playlists]
        scores += kernels.sqdist_rows(t["B2"], cache["p"], sk)
    if params.use_bias:
        scores = scores + t["theta"][batch.songs]
    return scores, cache


def _mdr_backward(params, batch, cache, dscores, grads):
    t = params.tensors
    sk = cache["sk"]
    if "U" in t:
        dx, db = kernels.sqdist_rows_backward(t["B1"], cache["u"], sk, dscores)
        np.add.at(grads["U"], batch.users, dx)
        np.add.at(grads["S"], batch.songs, -dx)
        grads["B1"] += db
    if "P" in t:
        dx, db = kernels.sqdist_rows_backward(t["B2"], cache["p"], sk, dscores)
        np.add.at(grads["P"], batch.playlists, dx)
        np.add.at(grads["S"], batch.songs, -dx)
        grads["B2"] += db
    if params.use_bias:
        np.add.at(grads["theta"], batch.songs, dscores)


def _mass_forward(params, batch):
    t = params.tensors
    mem = params.attention.startswith("mem")
    metric = params.attention.endswith("metric")

    x = np.concatenate(_query_parts(params, batch, mem=False), axis=1)
    pre = x @ t["W1"] + t["b1"]
    q = _relu(pre)
    m = t["S"][batch.members]
    dists = kernels.sqdist_members(t["B3"], q, m)

    if mem:
        x_a = np.concatenate(_query_parts(params, batch, mem=True), axis=1)
        pre_a = x_a @ t["W2"] + t["b2"]
        q_a = _relu(pre_a)
        m_a = t["S_a"][batch.members]
    else:
        x_a, pre_a, q_a, m_a = None, None, q, m

    if metric:
        att_raw = kernels.sqdist_members(t["B4"], q_a, m_a)
        alpha = masked_softmin(att_raw, batch.counts)
    else:
        att_raw = kernels.dot_members(q_a, m_a)
        alpha = masked_softmax(att_raw, batch.counts)

    wsum = np.sum(alpha * dists, axis=1)
    scores = wsum
    if params.use_bias:
        scores = scores + t["song_bias"][batch.songs]
    cache = {
        "x": x, "pre": pre, "q": q, "m": m, "dists": dists,
        "x_a": x_a, "pre_a": pre_a, "q_a": q_a, "m_a": m_a,
        "alpha": alpha, "wsum": wsum,
    }
    return scores, cache


def _mass_backward(params, batch, cache, dscores, grads):
    t = params.tensors
    mem = params.attention.startswith("mem")
    metric = params.attention.endswith("metric")
    g = dscores
    alpha, dists, wsum = cache["alpha"], cache["dists"], cache["wsum"]

    if params.use_bias:
        np.add.at(grads["song_bias"], batch.songs, g)

    # distance branch (padded slots carry alpha == 0, so they contribute nothing)
    ddists = g[:, None] * alpha
    dq, dm, db3 = kernels.sqdist_members_backward(t["B3"], cache["q"], cache["m"], ddists)
    grads["B3"] += db3

    # attention branch: softmax/softmin jacobian collapsed against the distances
    if metric:
        draw = g[:, None] * alpha * (wsum[:, None] - dists)
        dq_a, dm_a, db4 = kernels.sqdist_members_backward(
            t["B4"], cache["q_a"], cache["m_a"], draw
        )
        grads["B4"] += db4
    else:
        draw = g[:, None] * alpha * (dists - wsum[:, None])
        dq_a, dm_a = kernels.dot_members_backward(cache["q_a"], cache["m_a"], draw)

    if mem:
        np.add.at(grads["S_a"], batch.members, dm_a)
        dpre_a = dq_a * (cache["pre_a"] > 0)
        grads["W2"] += cache["x_a"].T @ dpre_a
        grads["b2"] += dpre_a.sum(axis=0)
        _scatter_query_grad(params, batch, dpre_a @ t["W2"].T, grads, mem=True)
    else:
        dq = dq + dq_a
        dm = dm + dm_a

    np.add.at(grads["S"], batch.members, dm)
    dpre = dq * (cache["pre"] > 0)
    grads["W1"] += cache["x"].T @ dpre
    grads["b1"] += dpre.sum(axis=0)
    _scatter_query_grad(params, batch, dpre @ t["W1"].T, grads, mem=False)


def forward(params, batch):
    """Batch scores plus the cache needed for the backward pass."""
    if params.kind == "mdr":
        return _mdr_forward(params, batch)
    if params.kind == "mass":
        if batch.members is None or batch.counts is None:
            raise ValueError("mass scoring requires member lists and counts")
        return _mass_forward(params, batch)
    raise ValueError(f"unknown model kind: {params.kind}")


def backward(params, batch, cache, dscores, grads):
    """Accumulate d(loss)/d(tensor) into `grads` given d(loss)/d(score)."""
    if params.kind == "mdr":
        _mdr_backward(params, batch, cache, dscores, grads)
    else:
        _mass_backward(params, batch, cache, dscores, grads)
    params.zero_padding_rows(grads)


def score_batch(params, batch):
    scores, _ = forward(params, batch)
    return scores


def mdr_score(params, user, playlist, song):
    """Distance score of one candidate under an MDR parameter set."""
    batch = ScoreBatch(
        users=np.array([user]), playlists=np.array([playlist]), songs=np.array([song])
    )
    return float(score_batch(params, batch)[0])


def mass_score(params, user, playlist, song, members, count):
    """Distance score of one candidate under a MASS parameter set."""
    members = np.asarray(members, dtype=np.int64)
    batch = ScoreBatch(
        users=np.array([user]), playlists=np.array([playlist]), songs=np.array([song]),
        members=members[None, :], counts=np.array([count]),
    )
    return float(score_batch(params, batch)[0])


def make_scorer(model, alpha=None):
    """Callable (batch -> scores) for a single model or an (mdr, mass) blend.

    `model` is either a ModelParams or a pair (mdr_params, mass_params) in
    which case `alpha` weighs the MDR component.
    """
    if isinstance(model, ModelParams):
        return lambda batch: score_batch(model, batch)
    mdr_params, mass_params = model
    if alpha is None:
        alpha = 0.5
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")

    def blended(batch):
        return masr_score(
            score_batch(mdr_params, batch), score_batch(mass_params, batch), alpha
        )

    return blended
