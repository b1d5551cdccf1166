"""Mark spaces: transition kernels, densities, and samplers.

Marks live on the (d'-1)-simplex; densities are taken with respect to
Lebesgue measure on the first d'-1 coordinates. The shipped kernel draws
marks i.i.d. from a Dirichlet law; state-dependent kernels can be plugged
in through ``CustomMarks``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .model import ModelError, check_simplex


@dataclass(frozen=True)
class NoMarks:
    """Unmarked model: no mark space, density contributes an empty product."""

    @property
    def dim(self) -> int:
        return 0

    def sample(self, rng: np.random.Generator, x_prev=None, j: int = 0):
        return None

    def log_density(self, x_prev, x, j: int = 0) -> float:
        return 0.0

    def mean(self):
        return None


@dataclass(frozen=True)
class DirichletMarks:
    """Marks drawn i.i.d. Dirichlet(concentration), ignoring the previous mark."""

    concentration: np.ndarray

    def __post_init__(self):
        conc = np.atleast_1d(np.asarray(self.concentration, float))
        if conc.ndim != 1 or conc.shape[0] < 2:
            raise ModelError("Dirichlet concentration needs at least 2 components")
        if np.any(conc <= 0):
            raise ModelError("Dirichlet concentration must be positive")
        conc.flags.writeable = False
        object.__setattr__(self, "concentration", conc)

    @property
    def dim(self) -> int:
        return self.concentration.shape[0]

    def sample(self, rng: np.random.Generator, x_prev=None, j: int = 0) -> np.ndarray:
        return rng.dirichlet(self.concentration)

    def log_density(self, x_prev, x, j: int = 0) -> float:
        x = check_simplex(np.asarray(x, float))
        if x.shape[0] != self.dim:
            raise ModelError("mark dimension mismatch")
        a = self.concentration
        x = np.clip(x, 1e-300, None)  # boundary marks with a_l >= 1 only
        return float(
            gammaln(a.sum()) - gammaln(a).sum() + ((a - 1.0) * np.log(x)).sum()
        )

    def mean(self) -> np.ndarray:
        return self.concentration / self.concentration.sum()


@dataclass(frozen=True)
class CustomMarks:
    """User-supplied transition kernel: a sampler/density pair plus the
    stationary mean needed by stability diagnostics."""

    dim: int
    sampler: Callable[[np.random.Generator, Optional[np.ndarray], int], np.ndarray]
    density: Callable[[Optional[np.ndarray], np.ndarray, int], float]
    stationary_mean: Optional[np.ndarray] = None

    def sample(self, rng: np.random.Generator, x_prev=None, j: int = 0) -> np.ndarray:
        return check_simplex(np.asarray(self.sampler(rng, x_prev, j), float))

    def log_density(self, x_prev, x, j: int = 0) -> float:
        return float(np.log(self.density(x_prev, check_simplex(np.asarray(x, float)), j)))

    def mean(self) -> Optional[np.ndarray]:
        return self.stationary_mean


MarkKernel = NoMarks | DirichletMarks | CustomMarks


def sample_mark(
    kernel: MarkKernel,
    x_prev: Optional[np.ndarray],
    j: int,
    rng: np.random.Generator,
) -> Optional[np.ndarray]:
    """Draw the mark of an event of component j given the previous mark."""
    x = kernel.sample(rng, x_prev, j)
    if x is not None:
        x = check_simplex(np.asarray(x, float), tol=1e-12)
    return x


def log_mark_density(
    kernel: MarkKernel,
    x_prev: Optional[np.ndarray],
    x: Optional[np.ndarray],
    j: int,
) -> float:
    """Log transition density of a mark; 0 for unmarked models."""
    if isinstance(kernel, NoMarks):
        return 0.0
    if x is None:
        raise ModelError("marked kernel requires a mark")
    return kernel.log_density(x_prev, x, j)
