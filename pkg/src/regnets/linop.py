"""Dense linear operators with a cached singular system.

Everything downstream (spectral filters, learned reconstructions, the
error analysis) works in the singular basis of one fixed forward map,
so the decomposition is computed once and carried around explicitly.

Convention, fixed once and for all: ``u_n`` are orthonormal directions
in coefficient (image) space, ``v_n`` in data space, and

    A x = sum_n sigma_n <u_n, x> v_n.

The numerical kernel is the span of every coefficient-space direction
whose singular value is at or below ``rank_tol * sigma_1``, together
with the orthogonal complement of the stored system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SvdOperator", "svd_decompose"]


@dataclass(frozen=True)
class SvdOperator:
    """A dense forward map together with its thin SVD.

    Attributes
    ----------
    matrix : (rows, cols) array
        The forward map A.
    image_vectors : (cols, k) array
        Columns are the u_n (coefficient space), k = min(rows, cols).
    data_vectors : (rows, k) array
        Columns are the v_n (data space).
    singular_values : (k,) array, descending and non-negative.
    rank_tol : float
        Relative threshold; sigma_n <= rank_tol * sigma_1 is treated as 0.
    """

    matrix: np.ndarray
    image_vectors: np.ndarray
    data_vectors: np.ndarray
    singular_values: np.ndarray
    rank_tol: float
    kept: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sigma = self.singular_values
        cutoff = self.rank_tol * (sigma[0] if sigma.size else 0.0)
        object.__setattr__(self, "kept", sigma > cutoff)

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[0]) if self.singular_values.size else 0.0

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.kept))

    def retained(self, alpha: float) -> np.ndarray:
        """Boolean mask of stored directions with sigma_n^2 >= alpha that are
        above the numerical-kernel cutoff."""
        return self.kept & (self.singular_values**2 >= alpha)

    def _check_coeff(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.cols,):
            raise ValueError(f"expected coefficient vector of length {self.cols}, got shape {x.shape}")
        return x

    def _check_data(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.rows,):
            raise ValueError(f"expected data vector of length {self.rows}, got shape {y.shape}")
        return y

    def forward(self, x) -> np.ndarray:
        """A x."""
        return self.matrix @ self._check_coeff(x)

    def adjoint(self, y) -> np.ndarray:
        """A* y."""
        return self.matrix.T @ self._check_data(y)

    def pseudo_inverse(self, y) -> np.ndarray:
        """Minimal-norm least-squares solution of A x = y.

        Sums 1/sigma_n <v_n, y> u_n over directions above the rank cutoff;
        the result is orthogonal to the numerical kernel.
        """
        y = self._check_data(y)
        k = self.kept
        coef = (self.data_vectors[:, k].T @ y) / self.singular_values[k]
        return self.image_vectors[:, k] @ coef

    def kernel_project(self, x) -> np.ndarray:
        """Orthogonal projection onto the numerical kernel."""
        x = self._check_coeff(x)
        u = self.image_vectors[:, self.kept]
        return x - u @ (u.T @ x)

    def power_apply(self, x, mu: float) -> np.ndarray:
        """(A* A)^mu x for mu > 0, with numerical-kernel components annihilated."""
        if not (np.isfinite(mu) and mu > 0):
            raise ValueError(f"mu must be finite and positive, got {mu}")
        x = self._check_coeff(x)
        k = self.kept
        u = self.image_vectors[:, k]
        scale = self.singular_values[k] ** (2.0 * mu)
        return u @ (scale * (u.T @ x))


def svd_decompose(matrix, rank_tol: float = 1e-10) -> SvdOperator:
    """Factor a dense matrix and cache the singular system.

    Signs are canonicalized (largest-magnitude entry of each u_n made
    positive, v_n flipped along) so repeated runs produce identical
    stored systems.

    Raises
    ------
    ValueError
        Non-finite entries, empty matrix, or rank_tol outside (0, 1).
    numpy.linalg.LinAlgError
        If the factorization does not converge.
    """
    matrix = np.array(matrix, dtype=float, copy=True, order="C")
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-d matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix contains non-finite entries")
    if not (0.0 < rank_tol < 1.0):
        raise ValueError(f"rank_tol must lie in (0, 1), got {rank_tol}")

    v, sigma, ut = np.linalg.svd(matrix, full_matrices=False)
    u = ut.T  # columns are coefficient-space directions

    # deterministic sign choice per singular pair
    for n in range(sigma.size):
        pivot = np.argmax(np.abs(u[:, n]))
        if u[pivot, n] < 0:
            u[:, n] = -u[:, n]
            v[:, n] = -v[:, n]

    return SvdOperator(
        matrix=matrix,
        image_vectors=np.ascontiguousarray(u),
        data_vectors=np.ascontiguousarray(v),
        singular_values=sigma,
        rank_tol=float(rank_tol),
    )
