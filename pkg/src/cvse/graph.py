"""Concept correlation graph and the graph-convolutional concept encoder."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numeric as nm
from .errors import ParameterError, ShapeError

log = logging.getLogger(__name__)


def count_cooccurrence(labels) -> tuple[np.ndarray, np.ndarray]:
    """Co-occurrence counts E (q x q) and occurrence counts N (q,).

    ``labels`` is an (n_records, q) binary matrix.  E[i, j] counts records
    holding both i and j; the diagonal equals N.
    """
    L = (np.asarray(labels) > 0).astype(np.int64)
    if L.ndim != 2 or L.shape[0] < 1:
        raise ShapeError(f"labels must be a non-empty 2-D matrix, got shape {L.shape}")
    return L.T @ L, L.sum(axis=0)


def conditional_probability(E, N, denominator: str = "row") -> np.ndarray:
    """P[i, j] = E[i, j] / N[i] (``"row"``) or E[i, j] / N[j] (``"column"``).

    Concepts that never occur give all-zero rows (or columns).
    """
    E = np.asarray(E, dtype=float)
    N = np.asarray(N, dtype=float)
    if E.shape != (len(N), len(N)):
        raise ShapeError(f"E shape {E.shape} does not match N length {len(N)}")
    if denominator not in ("row", "column"):
        raise ParameterError(f"denominator must be 'row' or 'column', got {denominator!r}")
    if (N == 0).any():
        log.info("%d concepts never occur; their conditional rows are zero", int((N == 0).sum()))
    safe = np.where(N > 0, N, 1.0)
    if denominator == "row":
        return np.where(N[:, None] > 0, E / safe[:, None], 0.0)
    return np.where(N[None, :] > 0, E / safe[None, :], 0.0)


def confidence_scale(P, s: float = 5.0, u: float = 0.02) -> np.ndarray:
    """Rescale probabilities with s**(P - u) - s**(-u); maps 0 to exactly 0."""
    if not s > 1:
        raise ParameterError(f"confidence-scaling base s must exceed 1, got {s}")
    P = np.asarray(P, dtype=float)
    return np.power(s, P - u) - np.power(s, np.full_like(P, -u))


def binarize(B, epsilon: float = 0.3) -> np.ndarray:
    """1 where B >= epsilon, else 0."""
    return (np.asarray(B) >= epsilon).astype(float)


def normalize_adjacency(G) -> np.ndarray:
    """Symmetrise with elementwise max, add self-loops, then D^-1/2 G D^-1/2."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ShapeError(f"adjacency must be square, got {G.shape}")
    A = np.maximum(G, G.T)
    np.fill_diagonal(A, 1.0)
    inv_sqrt = 1.0 / np.sqrt(A.sum(axis=1))
    return A * inv_sqrt[:, None] * inv_sqrt[None, :]


@dataclass
class CorrelationGraph:
    E: np.ndarray
    N: np.ndarray
    P: np.ndarray
    B: np.ndarray
    G: np.ndarray
    A_norm: np.ndarray

    @property
    def stages(self) -> dict[str, np.ndarray]:
        return {"E": self.E, "N": self.N[None, :], "P": self.P, "B": self.B,
                "G": self.G, "A_norm": self.A_norm}


def build_graph(labels, s: float = 5.0, u: float = 0.02, epsilon: float = 0.3,
                denominator: str = "row") -> CorrelationGraph:
    E, N = count_cooccurrence(labels)
    P = conditional_probability(E, N, denominator)
    B = confidence_scale(P, s, u)
    G = binarize(B, epsilon)
    return CorrelationGraph(E, N, P, B, G, normalize_adjacency(G))


def init_gcn_params(dims: Sequence[int], rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform weights ``gcn.W0 .. gcn.W{n-1}`` for the dim chain ``dims``."""
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"gcn.W{i}"] = rng.uniform(-limit, limit, (fan_in, fan_out))
    return params


def gcn_forward(Y, A_norm, weights: Sequence, final_activation: bool = True):
    """Stacked propagation H <- relu(A_norm @ H @ W), starting from H = Y.

    With ``final_activation=False`` the last layer stays linear.
    """
    H = Y
    for i, W in enumerate(weights):
        if nm.value(H).shape[-1] != nm.value(W).shape[0]:
            raise ShapeError(
                f"GCN layer {i}: input width {nm.value(H).shape[-1]} "
                f"!= weight rows {nm.value(W).shape[0]}")
        H = nm.matmul(A_norm, nm.matmul(H, W))
        if final_activation or i < len(weights) - 1:
            H = nm.relu(H)
    return H
