"""Plant, per-node input/output data, and observer gain containers."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DesignError
from .linalg import RANK_TOL, as_matrix, numerical_rank

MODES = ("undirected", "switching", "directed")


@dataclass(frozen=True)
class NodeIO:
    """What node ``i`` sees: its output map and which columns of ``B`` it knows.

    ``B_bar = [B_unknown D]`` collects every input that is unknown locally.
    """

    C: np.ndarray
    known_inputs: tuple
    B_known: np.ndarray
    B_unknown: np.ndarray
    B_bar: np.ndarray

    @property
    def p(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    nodes: tuple

    @classmethod
    def from_partition(cls, A, B, D, outputs, known_inputs, rank_tol=RANK_TOL):
        """Assemble a model from per-node ``C_i`` and known column indices of ``B``.

        The unknown-input block of each node is the complement of its known
        columns, followed by ``D``.  Each ``B_bar`` must have full column rank.
        """
        A = as_matrix(A, name="A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DesignError("bad_shape", "A must be square")
        B = as_matrix(B, rows=n, name="B") if np.size(B) else np.zeros((n, 0))
        D = as_matrix(D, rows=n, name="D") if np.size(D) else np.zeros((n, 0))
        if len(outputs) != len(known_inputs):
            raise DesignError("bad_shape", "one known-input list per node is required")
        if not outputs:
            raise DesignError("bad_shape", "model needs at least one node")
        m = B.shape[1]
        nodes = []
        for i, (C, known) in enumerate(zip(outputs, known_inputs)):
            C = as_matrix(C, cols=n, name=f"C_{i}") if np.size(C) else np.zeros((0, n))
            known = tuple(sorted(int(k) for k in known))
            if len(set(known)) != len(known) or any(k < 0 or k >= m for k in known):
                raise DesignError("bad_partition", f"node {i}: known input indices {known} invalid for m={m}")
            unknown = [k for k in range(m) if k not in known]
            B_bar = np.hstack([B[:, unknown], D])
            if B_bar.shape[1] and numerical_rank(B_bar, rank_tol) < B_bar.shape[1]:
                raise DesignError("rank_deficient_unknown_input", f"node {i}: B_bar is not full column rank")
            for M in (C, B_bar):
                M.setflags(write=False)
            nodes.append(NodeIO(C, known, B[:, list(known)], B[:, unknown], B_bar))
        for M in (A, B, D):
            M.setflags(write=False)
        return cls(A, B, D, tuple(nodes))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def q(self):
        return self.D.shape[1]

    @property
    def N(self):
        return len(self.nodes)


@dataclass(frozen=True)
class NodeGains:
    H: np.ndarray
    M: np.ndarray
    N: np.ndarray
    L: np.ndarray
    P: np.ndarray
    K: np.ndarray = None
    Y: np.ndarray = None
    U: np.ndarray = None
    V: np.ndarray = None


@dataclass(frozen=True)
class ObserverDesign:
    nodes: tuple
    chi: float
    mode: str = "undirected"

    def __post_init__(self):
        if self.mode not in MODES:
            raise DesignError("bad_mode", f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "nodes", tuple(self.nodes))

    def with_chi(self, chi, mode=None):
        return replace(self, chi=float(chi), mode=mode or self.mode)


@dataclass(frozen=True)
class DesignCertificate:
    """LMI data behind a design and the coupling/decay numbers derived from it."""

    Lambda_i: tuple
    lmi_ok: bool
    max_eig: float
    chi_bound: float = 0.0
    graph_quantity: float = 0.0
    mu: float = float("nan")
    beta: float = float("nan")
    extras: dict = field(default_factory=dict)

    @property
    def Lambda(self):
        from scipy.linalg import block_diag

        return block_diag(*self.Lambda_i)

    @property
    def Lambda_P(self):
        return np.hstack(self.Lambda_i)

    @property
    def Lambda_sum(self):
        return sum(self.Lambda_i)

    @property
    def time_constant(self):
        return 1.0 / self.mu
