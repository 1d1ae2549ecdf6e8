"""Log-potential tables: factorized latent-state transitions, the hard
constraint mask, and folding of the gold output labels into local scores."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .labels import SchemaError, StateSpace, end_allowed, iob_transition_allowed, start_allowed

# Stand-in for -inf. Sums of a few sentinels stay finite; exp() of anything
# this negative is exactly 0.0 in double precision.
NEG_INF = -1e30
# Anything below this is treated as an infeasible (fully masked) score.
INFEASIBLE = NEG_INF / 2


@dataclass
class TransitionFactors:
    """Transition log-potentials, either ``A = U.T @ V`` with ``U, V`` of shape
    ``(k, M)`` or a full ``(M, M)`` matrix ``A``."""

    U: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.A is not None:
            if self.U is not None or self.V is not None:
                raise ValueError("give either U, V or A, not both")
            self.A = np.asarray(self.A, dtype=np.float64)
            if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
                raise ValueError(f"A must be square, got {self.A.shape}")
        else:
            if self.U is None or self.V is None:
                raise ValueError("factorized transitions need both U and V")
            self.U = np.asarray(self.U, dtype=np.float64)
            self.V = np.asarray(self.V, dtype=np.float64)
            if self.U.ndim != 2 or self.U.shape != self.V.shape:
                raise ValueError(f"U and V must be k x M of equal shape, got {self.U.shape}, {self.V.shape}")

    @property
    def mode(self) -> str:
        return "full-rank" if self.A is not None else "factorized"

    @property
    def M(self) -> int:
        return self.A.shape[0] if self.A is not None else self.U.shape[1]

    @property
    def k(self) -> Optional[int]:
        return None if self.A is not None else self.U.shape[0]

    @property
    def n_params(self) -> int:
        if self.A is not None:
            return self.A.size
        return self.U.size + self.V.size

    def product(self) -> np.ndarray:
        """The unmasked ``M x M`` transition score matrix."""
        if self.A is not None:
            return self.A
        return self.U.T @ self.V

    def arrays(self) -> dict[str, np.ndarray]:
        if self.A is not None:
            return {"A": self.A}
        return {"U": self.U, "V": self.V}

    def copy(self) -> "TransitionFactors":
        return TransitionFactors(**{k: v.copy() for k, v in self.arrays().items()})

    @classmethod
    def init_random(cls, M: int, k: Optional[int], rng: np.random.Generator) -> "TransitionFactors":
        """Uniform init on ``[-sqrt(1/k), sqrt(1/k)]``; ``k=None`` gives a
        full-rank matrix initialised the same way with ``k = M``."""
        if k is None:
            bound = np.sqrt(1.0 / M)
            return cls(A=rng.uniform(-bound, bound, size=(M, M)))
        if k < 1:
            raise ValueError("factor size must be >= 1")
        bound = np.sqrt(1.0 / k)
        return cls(U=rng.uniform(-bound, bound, size=(k, M)),
                   V=rng.uniform(-bound, bound, size=(k, M)))


@dataclass(frozen=True)
class ConstraintMask:
    """Legal latent-state transitions, plus legal first and last states."""

    allowed: np.ndarray
    start: np.ndarray
    end: np.ndarray

    @classmethod
    def from_states(cls, states: StateSpace) -> "ConstraintMask":
        schema = states.schema
        labs = schema.labels
        label_ok = np.array([[iob_transition_allowed(a, b, schema) for b in labs] for a in labs])
        owner = states.state_to_label
        allowed = label_ok[np.ix_(owner, owner)]
        start = np.array([start_allowed(lab, schema) for lab in labs])[owner]
        end = np.array([end_allowed(lab, schema) for lab in labs])[owner]
        for a in (allowed, start, end):
            a.setflags(write=False)
        return cls(allowed, start, end)

    @classmethod
    def unconstrained(cls, M: int) -> "ConstraintMask":
        return cls(np.ones((M, M), dtype=bool), np.ones(M, dtype=bool), np.ones(M, dtype=bool))


def effective_transition_matrix(factors: TransitionFactors,
                                mask: Optional[ConstraintMask] = None) -> np.ndarray:
    A = np.array(factors.product(), dtype=np.float64, copy=True)
    if mask is not None:
        if mask.allowed.shape != A.shape:
            raise ValueError(f"mask shape {mask.allowed.shape} does not match transitions {A.shape}")
        A[~mask.allowed] = NEG_INF
    return A


def apply_boundary_mask(psi: np.ndarray, mask: Optional[ConstraintMask]) -> np.ndarray:
    """Copy of ``psi`` with illegal first/last states set to the sentinel."""
    psi = np.array(psi, dtype=np.float64, copy=True)
    if mask is not None:
        psi[0, ~mask.start] = NEG_INF
        psi[-1, ~mask.end] = NEG_INF
    return psi


def fold_output_potential(psi: np.ndarray, gold: Sequence, states: StateSpace) -> np.ndarray:
    """Clamp local scores to the gold labels: entry ``(t, z)`` becomes the
    sentinel whenever state ``z`` does not belong to ``gold[t]``.

    ``gold`` may hold label strings or label indices.
    """
    psi = np.asarray(psi, dtype=np.float64)
    if len(gold) != psi.shape[0]:
        raise ValueError(f"gold length {len(gold)} != sequence length {psi.shape[0]}")
    gold_ids = np.array([states.schema.index(g) if isinstance(g, str) else int(g) for g in gold],
                        dtype=np.intp)
    if gold_ids.size and (gold_ids.min() < 0 or gold_ids.max() >= states.N):
        raise SchemaError("gold label index out of range")
    keep = states.state_to_label[None, :] == gold_ids[:, None]
    return np.where(keep, psi, NEG_INF)
