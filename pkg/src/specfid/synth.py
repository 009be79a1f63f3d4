"""Synthetic Zipfian corpora: token probabilities, embeddings, X, Sigma, and G."""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .tensorio import RandomStream, as_matrix

# stream ids used when an ensemble materializes itself
EMBEDDING_STREAM = 0
TOKEN_STREAM = 1


def zipf_probabilities(V, alpha):
    """p_k = k^-alpha / sum_j j^-alpha for k = 1..V."""
    if alpha <= 1:
        raise DomainError(f"Zipf exponent alpha must exceed 1, got {alpha}")
    if V < 1:
        raise DomainError(f"vocabulary size must be >= 1, got {V}")
    w = np.arange(1, V + 1, dtype=np.float64) ** -float(alpha)
    return w / w.sum()


def random_unit_embeddings(V, d, rng):
    """d x V matrix of independent isotropic unit vectors.

    Each column's sign is fixed so its first coordinate is nonnegative; this
    leaves all |<v_i, v_j>| unchanged and makes d = 1 deterministic (+1).
    """
    if V < 1 or d < 1:
        raise DomainError(f"need V >= 1 and d >= 1, got V={V}, d={d}")
    g = rng.normal((d, V))
    g /= np.linalg.norm(g, axis=0)
    g *= np.where(g[0] < 0, -1.0, 1.0)
    return g


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: np.ndarray  # d x V, unit columns
    probs: np.ndarray  # length V

    @property
    def d(self):
        return self.vectors.shape[0]

    @property
    def V(self):
        return self.vectors.shape[1]


def population_covariance(table):
    """Sigma = sum_k p_k v_k v_k^T, symmetrized."""
    v = table.vectors
    sigma = (v * table.probs) @ v.T
    return 0.5 * (sigma + sigma.T)


def sample_tokens(probs, N, rng):
    """N i.i.d. token ranks in 1..V drawn by inverse CDF."""
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    u = rng.uniform(N)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, probs.size - 1) + 1


@dataclass(frozen=True)
class ZipfEnsemble:
    V: int
    alpha: float
    d: int
    N: int
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 1:
            raise DomainError(f"Zipf exponent alpha must exceed 1, got {self.alpha}")
        if self.V < 1 or self.d < 1 or self.N < 1:
            raise DomainError(f"V, d, N must be positive, got {self.V}, {self.d}, {self.N}")

    def table(self):
        rng = RandomStream(self.seed, EMBEDDING_STREAM)
        return EmbeddingTable(
            vectors=random_unit_embeddings(self.V, self.d, rng),
            probs=zipf_probabilities(self.V, self.alpha),
        )

    def tokens(self):
        return sample_tokens(zipf_probabilities(self.V, self.alpha), self.N, RandomStream(self.seed, TOKEN_STREAM))

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(V=int(d["V"]), alpha=float(d["alpha"]), d=int(d["d"]), N=int(d["N"]), seed=int(d.get("seed", 0)))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def build_embedding_matrix(ens, table=None):
    """X (d x N) whose i-th column is the embedding of the i-th sampled token."""
    if table is None:
        table = ens.table()
    return np.ascontiguousarray(table.vectors[:, ens.tokens() - 1])


def synthetic_output_gradient(n_rows, n_cols, M, rng):
    """Gaussian matrix rescaled to spectral norm exactly M."""
    if not M > 0:
        raise DomainError(f"gradient norm bound M must be positive, got {M}")
    g = rng.normal((n_rows, n_cols))
    return g * (M / np.linalg.norm(g, 2))


def weight_gradient(X, G):
    """Weight gradient for a linear layer with X stored d x N and G stored N x p (result d x p)."""
    X = as_matrix(X, "X")
    G = as_matrix(G, "G")
    if X.shape[1] != G.shape[0]:
        raise ShapeError(f"inner dimensions differ: X is {X.shape}, G is {G.shape}")
    return X @ G
