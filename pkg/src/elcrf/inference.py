"""Exact inference on the latent-state lattice.

A lattice is a ``T x M`` table of local log-potentials plus an ``M x M``
transition table; masked entries carry the ``NEG_INF`` sentinel. The energy
of a state path ``z`` is ``sum_t psi[t, z_t] + sum_t trans[z_t, z_{t+1}]``
(no start or stop scores).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .labels import StateSpace
from .potentials import INFEASIBLE, NEG_INF, fold_output_potential


class InfeasibleError(RuntimeError):
    """Every path through the lattice is masked."""


@dataclass(frozen=True)
class Lattice:
    psi: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        psi = np.ascontiguousarray(self.psi, dtype=np.float64)
        trans = np.ascontiguousarray(self.trans, dtype=np.float64)
        if psi.ndim != 2 or psi.shape[0] < 1:
            raise ValueError(f"psi must be T x M with T >= 1, got {psi.shape}")
        if trans.shape != (psi.shape[1], psi.shape[1]):
            raise ValueError(f"trans shape {trans.shape} does not match M={psi.shape[1]}")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "trans", trans)

    @property
    def T(self) -> int:
        return self.psi.shape[0]

    @property
    def M(self) -> int:
        return self.psi.shape[1]

    def path_score(self, z: Sequence[int]) -> float:
        z = np.asarray(z, dtype=np.intp)
        s = self.psi[np.arange(self.T), z].sum()
        if self.T > 1:
            s += self.trans[z[:-1], z[1:]].sum()
        return float(s)


@dataclass
class InferenceResult:
    log_Z: float
    alpha: np.ndarray
    beta: np.ndarray
    node_marginals: np.ndarray
    lattice: Lattice

    @property
    def feasible(self) -> bool:
        return self.log_Z > INFEASIBLE

    def edge_marginals(self) -> np.ndarray:
        """Pairwise posteriors, shape ``(T-1, M, M)``. Materialised on demand."""
        lat = self.lattice
        right = lat.psi[1:] + self.beta[1:]
        scores = self.alpha[:-1, :, None] + lat.trans[None] + right[:, None, :] - self.log_Z
        return np.exp(scores)

    def expected_transitions(self) -> np.ndarray:
        """Edge marginals summed over positions, ``(M, M)``."""
        return kernels.edge_expectations(self.lattice.psi, self.lattice.trans,
                                         self.alpha, self.beta, self.log_Z)


def log_sum_exp(values) -> float:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    m = v.max()
    if m <= INFEASIBLE:
        return NEG_INF
    return float(m + np.log(np.exp(v - m).sum()))


def _finish(x: float) -> float:
    return float(x) if x > INFEASIBLE else NEG_INF


def forward_log_partition(lattice: Lattice) -> float:
    """log of the summed exponentiated energy over all state paths, or the
    sentinel when every path is masked."""
    alpha = kernels.forward(lattice.psi, lattice.trans)
    return _finish(log_sum_exp(alpha[-1]))


def backward_log_partition(lattice: Lattice) -> float:
    beta = kernels.backward(lattice.psi, lattice.trans)
    return _finish(log_sum_exp(lattice.psi[0] + beta[0]))


def marginals(lattice: Lattice) -> InferenceResult:
    alpha = kernels.forward(lattice.psi, lattice.trans)
    beta = kernels.backward(lattice.psi, lattice.trans)
    log_z = _finish(log_sum_exp(alpha[-1]))
    if log_z <= INFEASIBLE:
        node = np.zeros_like(alpha)
    else:
        node = np.exp(alpha + beta - log_z)
    return InferenceResult(log_z, alpha, beta, node, lattice)


def clamp(lattice: Lattice, gold: Sequence, states: StateSpace) -> Lattice:
    return Lattice(fold_output_potential(lattice.psi, gold, states), lattice.trans)


def clamped_log_score(lattice: Lattice, gold: Sequence, states: StateSpace) -> float:
    """log-sum over state paths consistent with ``gold``; subtract the free
    log-partition to get ``log p(gold | x)``."""
    return forward_log_partition(clamp(lattice, gold, states))


@dataclass(frozen=True)
class Decoded:
    states: np.ndarray
    labels: list[str]
    score: float


def viterbi_decode(lattice: Lattice, states: Optional[StateSpace] = None) -> Decoded:
    """Highest-energy state path. Labels are read off the state map.

    Ties go to the lowest state index, both for the final state and at each
    backpointer.
    """
    path, score = kernels.viterbi(lattice.psi, lattice.trans)
    if score <= INFEASIBLE:
        raise InfeasibleError("no feasible state path in lattice")
    labels = [] if states is None else [states.label_of(z) for z in path]
    return Decoded(np.asarray(path, dtype=np.intp), labels, float(score))
