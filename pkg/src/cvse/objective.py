"""Bidirectional triplet ranking on three embedding levels plus concept KL."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import numeric as nm
from .errors import InsufficientBatchError, ParameterError, ShapeError

PROB_FLOOR = 1e-12


@dataclass
class LossWeights:
    fused: float = 3.0
    instance: float = 5.0
    consensus: float = 1.0
    kl: float = 2.0
    margin: float = 0.2

    def __post_init__(self):
        ws = (self.fused, self.instance, self.consensus, self.kl)
        if min(ws) < 0 or max(ws) <= 0:
            raise ParameterError(f"loss weights must be non-negative with one positive, got {ws}")
        if not self.margin > 0:
            raise ParameterError(f"margin must be positive, got {self.margin}")


def triplet_ranking(v, t, margin: float = 0.2, mode: str = "hardest"):
    """Hinge ranking loss over in-batch negatives, image and text anchors.

    ``v`` and ``t`` are (B, d) unit vectors where row i of each forms the
    matched pair.  ``hardest`` keeps the worst negative per anchor,
    ``sum`` adds every violation.
    """
    if mode not in ("hardest", "sum"):
        raise ParameterError(f"unknown ranking mode {mode!r}")
    B = nm.value(v).shape[0]
    if B < 2:
        raise InsufficientBatchError(f"ranking loss needs at least 2 pairs, got {B}")
    if nm.value(t).shape != nm.value(v).shape:
        raise ShapeError(f"image batch {nm.value(v).shape} != text batch {nm.value(t).shape}")
    S = nm.matmul(v, nm.transpose(t))
    pos = S[np.arange(B), np.arange(B)]
    off = 1.0 - np.eye(B)
    # rows: image anchor vs negative texts; columns: text anchor vs negative images
    cost_txt = nm.relu(margin - pos[:, None] + S) * off
    cost_img = nm.relu(margin - pos[None, :] + S) * off
    if mode == "hardest":
        return cost_txt.max(axis=1).sum() + cost_img.max(axis=0).sum()
    return cost_txt.sum() + cost_img.sum()


def kl_concept_alignment(a_t, a_v):
    """KL(a_t || a_v) summed over the batch, probabilities floored at 1e-12."""
    if nm.value(a_t).shape != nm.value(a_v).shape:
        raise ShapeError(f"distribution shapes differ: {nm.value(a_t).shape} vs {nm.value(a_v).shape}")
    log_ratio = nm.log(nm.clamp_min(a_t, PROB_FLOOR)) - nm.log(nm.clamp_min(a_v, PROB_FLOOR))
    return (a_t * log_ratio).sum()


TERMS = ("L_F", "L_I", "L_C", "D_KL")


def loss_terms(out, margin: float = 0.2, mode: str = "hardest") -> dict:
    """The four unweighted terms for one forward pass (see ``model.ForwardOutput``)."""
    return {
        "L_F": triplet_ranking(out.v_fused, out.t_fused, margin, mode),
        "L_I": triplet_ranking(out.v_inst, out.t_inst, margin, mode),
        "L_C": triplet_ranking(out.v_cons, out.t_cons, margin, mode),
        "D_KL": kl_concept_alignment(out.a_t, out.a_v),
    }


def combine(terms: dict, weights: LossWeights):
    return (weights.fused * terms["L_F"] + weights.instance * terms["L_I"]
            + weights.consensus * terms["L_C"] + weights.kl * terms["D_KL"])


def total_loss(out, weights: LossWeights, mode: str = "hardest"):
    """Weighted objective and the per-term breakdown (as plain floats)."""
    terms = loss_terms(out, weights.margin, mode)
    total = combine(terms, weights)
    breakdown = {k: float(nm.value(v)) for k, v in terms.items()}
    breakdown["total"] = float(nm.value(total))
    return total, breakdown


class LossLog:
    """Appends ``step, L_F, L_I, L_C, D_KL, total`` rows to a CSV file."""

    header = ("step",) + TERMS + ("total",)

    def __init__(self, path):
        self.path = path
        if not os.path.exists(path) or os.path.getsize(path) == 0:
            with open(path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(self.header)

    def append(self, step: int, breakdown: dict) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                [step] + [repr(float(breakdown[k])) for k in self.header[1:]])
