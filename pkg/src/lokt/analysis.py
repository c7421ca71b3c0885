"""Experimenter-side study tooling for surrogate fidelity.

Everything here runs with the soft-probability probe and therefore
outside any attack-phase context; none of it touches the query ledger.
The central object of study is the joint behaviour of a sample's
likelihood under the surrogate (P_S) and under the target (P_T) on
generated, pseudo-labeled samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch


@dataclass
class LikelihoodRecord:
    sample_id: int
    label: int
    p_s: float
    p_t: float
    epoch: int

    def __post_init__(self):
        if not (0.0 <= self.p_s <= 1.0 and 0.0 <= self.p_t <= 1.0):
            raise ValueError("likelihoods must lie in [0, 1]")


def _prob_at_label(prob_fn, images: torch.Tensor, labels: np.ndarray,
                   batch_size: int = 512) -> np.ndarray:
    out = []
    for i in range(0, len(images), batch_size):
        probs = prob_fn(images[i : i + batch_size])
        out.append(probs[np.arange(len(probs)), labels[i : i + len(probs)]])
    return np.concatenate(out)


@dataclass
class ConditionalHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    threshold: float
    n_conditioned: int
    median_conditional: float
    frac_below_0p1: float
    unconditional_median: float
    empty: bool = False
    note: str = (
        "summary statistics are this framework's operationalization of the "
        "high-P_S/high-P_T tendency"
    )


def conditional_pt_histogram(images: torch.Tensor, labels, surrogate, probe,
                             threshold: float = 0.9) -> ConditionalHistogram:
    """Histogram of P_T over samples whose surrogate likelihood exceeds a threshold.

    Labels are the samples' pseudo labels; both likelihoods are evaluated
    at that label. Fixed bins of width 0.1 on [0, 1].
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    labels = np.asarray(labels)
    p_s = _prob_at_label(surrogate.predict_proba, images, labels)
    p_t = _prob_at_label(probe.query, images, labels)

    edges = np.linspace(0.0, 1.0, 11)
    mask = p_s > threshold
    selected = p_t[mask]
    counts, _ = np.histogram(selected, bins=edges)
    if mask.sum() == 0:
        return ConditionalHistogram(
            bin_edges=edges, counts=counts, threshold=threshold, n_conditioned=0,
            median_conditional=float("nan"), frac_below_0p1=float("nan"),
            unconditional_median=float(np.median(p_t)), empty=True,
        )
    return ConditionalHistogram(
        bin_edges=edges,
        counts=counts,
        threshold=threshold,
        n_conditioned=int(mask.sum()),
        median_conditional=float(np.median(selected)),
        frac_below_0p1=float(np.mean(selected < 0.1)),
        unconditional_median=float(np.median(p_t)),
    )


@dataclass
class EasyHardSplit:
    """Per-class centroid-distance split into easy (close) and hard (far)."""

    centroids: dict[int, np.ndarray]
    distances: np.ndarray
    easy_mask: np.ndarray
    rho: float

    def easy_indices(self) -> np.ndarray:
        return np.flatnonzero(self.easy_mask)

    def hard_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.easy_mask)


def easy_hard_split(embeddings: np.ndarray, labels, rho: float = 0.7) -> EasyHardSplit:
    """Flag the closest ceil(rho*n) samples of each class as easy.

    Distance is Euclidean to the class's mean embedding; ties resolve by
    sample index. Classes with fewer than two samples are rejected.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must lie in (0, 1)")
    labels = np.asarray(labels)
    embeddings = np.asarray(embeddings, dtype=np.float64)
    distances = np.zeros(len(labels))
    easy = np.zeros(len(labels), dtype=bool)
    centroids = {}
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < 2:
            raise ValueError(f"class {int(c)} has fewer than two samples")
        centroid = embeddings[idx].mean(axis=0)
        centroids[int(c)] = centroid
        d = np.linalg.norm(embeddings[idx] - centroid, axis=1)
        distances[idx] = d
        n_easy = int(np.ceil(rho * len(idx)))
        order = np.argsort(d, kind="stable")  # stable sort keeps index-order ties
        easy[idx[order[:n_easy]]] = True
    return EasyHardSplit(centroids=centroids, distances=distances, easy_mask=easy, rho=rho)


def track_ps_dynamics(images: torch.Tensor, labels, checkpoints, probe) -> list[LikelihoodRecord]:
    """Surrogate likelihood of fixed samples across training checkpoints.

    checkpoints: list of (epoch, surrogate) with at least two distinct
    epochs. The target likelihood is recorded once per sample; it does not
    depend on the checkpoint.
    """
    checkpoints = list(checkpoints)
    epochs = [e for e, _ in checkpoints]
    if len(set(epochs)) < 2:
        raise ValueError("need checkpoints at two or more distinct epochs")
    labels = np.asarray(labels)
    p_t = _prob_at_label(probe.query, images, labels)
    records = []
    for epoch, model in checkpoints:
        p_s = _prob_at_label(model.predict_proba, images, labels)
        for i in range(len(labels)):
            records.append(LikelihoodRecord(
                sample_id=i, label=int(labels[i]),
                p_s=float(np.clip(p_s[i], 0.0, 1.0)),
                p_t=float(np.clip(p_t[i], 0.0, 1.0)),
                epoch=int(epoch),
            ))
    return records


def records_to_csv(records: list[LikelihoodRecord], path) -> None:
    rows = ["sample_id,label,epoch,p_s,p_t"]
    rows += [f"{r.sample_id},{r.label},{r.epoch},{r.p_s:.6f},{r.p_t:.6f}" for r in records]
    with open(path, "w") as f:
        f.write("\n".join(rows) + "\n")
