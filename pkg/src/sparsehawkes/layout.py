"""Estimation coordinate layout for scalar-kernel models.

Coordinates are ordered (mu block, excitation-weight block row-major,
beta block row-major). The weight block is alpha for unmarked models and
the mark weights m (row-major over i, j, l) for marked ones. Names are
1-based to match conventional reporting (mu_1, alpha_2_3, m_1_1_2, ...).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelError, ModelParams, ParamBounds, ScalarExpKernel


@dataclass(frozen=True)
class CoordinateLayout:
    dim: int
    mark_dim: int = 0
    bounds: ParamBounds = field(default_factory=ParamBounds)

    def __post_init__(self):
        if self.dim < 1 or self.mark_dim < 0:
            raise ModelError("dim must be >= 1 and mark_dim >= 0")

    @property
    def weight_feats(self) -> int:
        """Per-edge weight coordinates: 1 (alpha) or mark_dim (m)."""
        return self.mark_dim if self.mark_dim else 1

    @property
    def n_mu(self) -> int:
        return self.dim

    @property
    def n_weights(self) -> int:
        return self.dim * self.dim * self.weight_feats

    @property
    def n_beta(self) -> int:
        return self.dim * self.dim

    @property
    def size(self) -> int:
        return self.n_mu + self.n_weights + self.n_beta

    @property
    def mu_slice(self) -> slice:
        return slice(0, self.n_mu)

    @property
    def weight_slice(self) -> slice:
        return slice(self.n_mu, self.n_mu + self.n_weights)

    @property
    def beta_slice(self) -> slice:
        return slice(self.n_mu + self.n_weights, self.size)

    def weight_index(self, i: int, j: int, l: int = 0) -> int:
        return self.n_mu + (i * self.dim + j) * self.weight_feats + l

    def beta_index(self, i: int, j: int) -> int:
        return self.n_mu + self.n_weights + i * self.dim + j

    def edge_weight_indices(self, i: int, j: int) -> list[int]:
        base = self.weight_index(i, j, 0)
        return list(range(base, base + self.weight_feats))

    def names(self) -> list[str]:
        d = self.dim
        out = [f"mu_{i + 1}" for i in range(d)]
        if self.mark_dim:
            out += [
                f"m_{i + 1}_{j + 1}_{l + 1}"
                for i in range(d)
                for j in range(d)
                for l in range(self.mark_dim)
            ]
        else:
            out += [f"alpha_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
        out += [f"beta_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
        return out

    def lower(self) -> np.ndarray:
        b = self.bounds
        wlo = b.m[0] if self.mark_dim else b.alpha[0]
        return np.concatenate(
            [
                np.full(self.n_mu, b.mu[0]),
                np.full(self.n_weights, wlo),
                np.full(self.n_beta, b.beta[0]),
            ]
        )

    def upper(self) -> np.ndarray:
        b = self.bounds
        whi = b.m[1] if self.mark_dim else b.alpha[1]
        return np.concatenate(
            [
                np.full(self.n_mu, b.mu[1]),
                np.full(self.n_weights, whi),
                np.full(self.n_beta, b.beta[1]),
            ]
        )

    def pack(self, params: ModelParams) -> np.ndarray:
        """Flatten a scalar-kernel ModelParams into the coordinate vector."""
        if not isinstance(params.kernel, ScalarExpKernel):
            raise ModelError("coordinate layout is defined for scalar kernels only")
        if params.dim != self.dim or params.mark_dim != self.mark_dim:
            raise ModelError("params shape does not match the layout")
        w = params.mark_weights if self.mark_dim else params.kernel.alpha
        return np.concatenate([params.mu, np.ravel(w), np.ravel(params.kernel.beta)])

    def unpack(
        self, vec: np.ndarray, beta_nuisance: Optional[np.ndarray] = None
    ) -> ModelParams:
        vec = np.asarray(vec, float)
        if vec.shape != (self.size,):
            raise ModelError(f"coordinate vector must have length {self.size}")
        d = self.dim
        mu = vec[self.mu_slice]
        beta = vec[self.beta_slice].reshape(d, d)
        if self.mark_dim:
            m = vec[self.weight_slice].reshape(d, d, self.mark_dim)
            kernel = ScalarExpKernel(beta=beta)
            return ModelParams(
                mu=mu, kernel=kernel, mark_weights=m,
                beta_nuisance=beta_nuisance, bounds=self.bounds,
            )
        alpha = vec[self.weight_slice].reshape(d, d)
        kernel = ScalarExpKernel(beta=beta, alpha=alpha)
        return ModelParams(
            mu=mu, kernel=kernel, beta_nuisance=beta_nuisance, bounds=self.bounds
        )

    def default_start(self, n_events: int, T: float) -> np.ndarray:
        """Single default start: mu = N_T/(d T), weights 0.1, beta 1.0."""
        lo, hi = self.lower(), self.upper()
        x = np.empty(self.size)
        mu0 = n_events / (self.dim * T) if T > 0 else 1.0
        x[self.mu_slice] = mu0
        x[self.weight_slice] = 0.1
        x[self.beta_slice] = 1.0
        return np.clip(x, lo, hi)
