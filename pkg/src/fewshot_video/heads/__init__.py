"""Metric-based few-shot classification heads.

All three heads score a query against an n-way support set and return n
logits. Matching and prototypical heads use negative squared Euclidean
distance (spatial embeddings are flattened first); the learned head runs
a small CNN over channel-concatenated query/prototype maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from ..embed.encoders import Conv2dLayer, LinearLayer
from ..embed.features import FLAT, SPATIAL, VideoEmbedding


@dataclass
class SupportSet:
    """n*k labelled embeddings: exactly k per class, classes 0..n-1."""

    n: int
    k: int
    entries: list  # (VideoEmbedding, class index) pairs

    def __post_init__(self):
        if len(self.entries) != self.n * self.k:
            raise ValueError(f"expected {self.n * self.k} entries, got {len(self.entries)}")
        counts = {c: 0 for c in range(self.n)}
        form = self.entries[0][0].form
        dims = tuple(self.entries[0][0].data.shape)
        for emb, label in self.entries:
            if label not in counts:
                raise ValueError(f"label {label} outside 0..{self.n - 1}")
            counts[label] += 1
            if emb.form != form or tuple(emb.data.shape) != dims:
                raise ValueError("support embeddings must share form and dims")
        bad = {c: v for c, v in counts.items() if v != self.k}
        if bad:
            raise ValueError(f"classes with wrong shot count: {bad}")

    @property
    def form(self) -> str:
        return self.entries[0][0].form

    def by_class(self, label: int) -> list[VideoEmbedding]:
        return [emb for emb, lab in self.entries if lab == label]


def _as_flat(embedding: VideoEmbedding) -> Tensor:
    if embedding.form == FLAT:
        return embedding.data
    return dc.reshape(embedding.data, (int(np.prod(embedding.data.shape)),))


def squared_euclidean(a: Tensor, b: Tensor) -> Tensor:
    """Sum of squared differences of two equal-length vectors."""
    if tuple(a.shape) != tuple(b.shape):
        raise dc.ShapeError(f"dim mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return dc.sum_(diff * diff)


def matching_logits(query: VideoEmbedding, support: SupportSet) -> Tensor:
    """Per class, the mean negative squared distance from the query to
    that class's support embeddings."""
    q = _as_flat(query)
    per_class = []
    for label in range(support.n):
        dists = [squared_euclidean(q, _as_flat(emb)) for emb in support.by_class(label)]
        total = dists[0]
        for d in dists[1:]:
            total = total + d
        per_class.append(-(total * (1.0 / support.k)))
    return dc.concat([dc.reshape(z, (1,)) for z in per_class], axis=0)


def compute_prototypes(support: SupportSet) -> list[VideoEmbedding]:
    """Class prototypes: element-wise mean of each class's support set."""
    protos = []
    for label in range(support.n):
        members = support.by_class(label)
        stacked = dc.stack_rows([emb.data for emb in members])
        protos.append(VideoEmbedding(form=support.form,
                                     data=dc.mean(stacked, axis=0)))
    return protos


def prototypical_logits(query: VideoEmbedding, prototypes: list[VideoEmbedding]) -> Tensor:
    """Negative squared distances from the query to each prototype."""
    q = _as_flat(query)
    logits = [dc.reshape(-squared_euclidean(q, _as_flat(p)), (1,)) for p in prototypes]
    return dc.concat(logits, axis=0)


class LearnedMetric:
    """Trainable scoring CNN over channel-concatenated (query : prototype)
    maps: two 3x3 stride-1 convs with ReLU, global average pool, linear
    to one scalar per class."""

    HIDDEN = 64

    def __init__(self, rng: np.random.Generator, embed_channels: int):
        self.embed_channels = embed_channels
        self.conv1 = Conv2dLayer(rng, 2 * embed_channels, self.HIDDEN, stride=1, padding=1)
        self.conv2 = Conv2dLayer(rng, self.HIDDEN, self.HIDDEN, stride=1, padding=1)
        self.score = LinearLayer(rng, self.HIDDEN, 1)

    def pair_scores(self, pairs: Tensor) -> Tensor:
        """(B, 2C, H, W) concatenated pairs -> (B,) scalar scores."""
        h = dc.relu(self.conv1(pairs))
        h = dc.relu(self.conv2(h))
        pooled = dc.adaptive_avg_pool2d(h, (1, 1))
        flat = dc.reshape(pooled, (pairs.shape[0], self.HIDDEN))
        return dc.reshape(self.score(flat), (pairs.shape[0],))

    def logits(self, query: VideoEmbedding, prototypes: list[VideoEmbedding]) -> Tensor:
        if query.form != SPATIAL:
            raise ValueError("learned metric head needs spatial embeddings")
        pairs = dc.stack_rows([
            dc.concat([query.data, proto.data], axis=0) for proto in prototypes
        ])
        return self.pair_scores(pairs)

    def params(self) -> dict[str, Tensor]:
        out = {}
        for prefix, layer in (("conv1", self.conv1), ("conv2", self.conv2),
                              ("score", self.score)):
            for key, tensor in layer.params().items():
                out[f"{prefix}.{key}"] = tensor
        return out


def learned_metric_logits(query: VideoEmbedding, prototypes: list[VideoEmbedding],
                          metric: LearnedMetric) -> Tensor:
    return metric.logits(query, prototypes)


def classify(logits: Tensor) -> tuple[int, np.ndarray]:
    """Softmax the logits; argmax with ties broken toward the lowest index."""
    values = np.asarray(logits.data if isinstance(logits, Tensor) else logits,
                        dtype=np.float64)
    probs = dc.softmax(values)
    return int(np.argmax(values)), probs


# ---------------------------------------------------------------------------
# batched variants used by the episode engine

def pairwise_sqdist(queries: Tensor, refs: Tensor) -> Tensor:
    """(Q, D) x (M, D) -> (Q, M) squared Euclidean distances."""
    q = dc.reshape(queries, (queries.shape[0], 1, queries.shape[1]))
    r = dc.reshape(refs, (1, refs.shape[0], refs.shape[1]))
    diff = dc.broadcast_to(q, (queries.shape[0], refs.shape[0], queries.shape[1])) - r
    return dc.sum_(diff * diff, axis=2)


def matching_logits_batch(queries: Tensor, support_matrix: Tensor,
                          support_labels: np.ndarray, n: int) -> Tensor:
    """(Q, D) queries vs (n*k, D) support rows -> (Q, n) logits."""
    counts = np.bincount(support_labels, minlength=n).astype(np.float32)
    averaging = np.zeros((len(support_labels), n), dtype=np.float32)
    for row, label in enumerate(support_labels):
        averaging[row, label] = 1.0 / counts[label]
    dists = pairwise_sqdist(queries, support_matrix)
    return -dc.matmul(dists, Tensor(averaging))


def prototypical_logits_batch(queries: Tensor, prototypes: Tensor) -> Tensor:
    """(Q, D) queries vs (n, D) prototypes -> (Q, n) logits."""
    return -pairwise_sqdist(queries, prototypes)


def learned_metric_logits_batch(query_maps: Tensor, proto_maps: Tensor,
                                metric: LearnedMetric) -> Tensor:
    """(Q,C,H,W) queries vs (n,C,H,W) prototypes -> (Q, n) logits."""
    q_count, ch, height, width = query_maps.shape
    n = proto_maps.shape[0]
    q = dc.reshape(query_maps, (q_count, 1, ch, height, width))
    p = dc.reshape(proto_maps, (1, n, ch, height, width))
    q_rep = dc.broadcast_to(q, (q_count, n, ch, height, width))
    p_rep = dc.broadcast_to(p, (q_count, n, ch, height, width))
    pairs = dc.concat([q_rep, p_rep], axis=2)
    flat_pairs = dc.reshape(pairs, (q_count * n, 2 * ch, height, width))
    return dc.reshape(metric.pair_scores(flat_pairs), (q_count, n))


HEAD_NAMES = ("proto", "matching", "learned")
