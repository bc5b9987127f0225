"""Reconstruction methods: classical filters plus learned spectral residuals.

Three variants share the skeleton R_alpha(y) = B_alpha y + residual:

* ``classical``   residual = 0,
* ``nullspace``   residual = P_ker(net(B_alpha y)), confined to the
                  numerical kernel of the operator,
* ``continued``   residual = projection of net(B_alpha y) onto the
                  directions with sigma_n^2 < alpha (kernel included),
                  so the coefficients the filter keeps are untouched and
                  the truncated ones are extended from data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .filters import FilterRegularizer, RegularizingFilter
from .linop import SvdOperator

__all__ = [
    "CLASSICAL",
    "NULLSPACE",
    "CONTINUED",
    "VARIANTS",
    "ReconstructionMethod",
    "RegNetFamily",
    "nullspace_residual",
    "continued_svd_residual",
    "residual_projection",
    "a3_residual",
    "adaptedness_probe",
    "AdaptednessReport",
]

CLASSICAL = "classical"
NULLSPACE = "nullspace"
CONTINUED = "continued"
VARIANTS = (CLASSICAL, NULLSPACE, CONTINUED)


def nullspace_residual(op: SvdOperator, params: network.NetworkParams, z) -> np.ndarray:
    """Kernel part of the network output: P_ker(A) net(z)."""
    return op.kernel_project(network.forward(params, z))


def continued_svd_residual(op: SvdOperator, alpha: float, params: network.NetworkParams, z) -> np.ndarray:
    """Network output projected onto span{u_n : sigma_n^2 < alpha} plus the
    numerical kernel, i.e. the complement of the retained directions."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    out = network.forward(params, z)
    u = op.image_vectors[:, op.retained(alpha)]
    return out - u @ (u.T @ out)


def residual_projection(variant: str, op: SvdOperator, alpha: float):
    """The fixed self-adjoint projection a variant applies to raw network
    outputs, acting on row batches; None for the classical variant."""
    if variant == CLASSICAL:
        return None
    if variant == NULLSPACE:
        u = op.image_vectors[:, op.kept]
    elif variant == CONTINUED:
        u = op.image_vectors[:, op.retained(alpha)]
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")

    def project(rows):
        rows = np.atleast_2d(rows)
        return rows - (rows @ u) @ u.T

    return project


@dataclass(frozen=True)
class ReconstructionMethod:
    """One reconstruction map y -> x bound to an operator, filter and alpha.

    For the learned variants ``params`` holds the trained network; the
    classical variant is exactly the zero-network special case.
    """

    variant: str
    operator: SvdOperator
    filt: RegularizingFilter
    alpha: float
    params: network.NetworkParams | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant != CLASSICAL and self.params is None:
            raise ValueError(f"variant {self.variant!r} requires trained network parameters")

    def regularizer(self) -> FilterRegularizer:
        return FilterRegularizer(self.operator, self.filt, self.alpha)

    @property
    def kept_count(self) -> int:
        return int(np.count_nonzero(self.operator.retained(self.alpha)))

    def residual_map(self, z) -> np.ndarray:
        """The learned residual applied to a coefficient vector (0 for classical)."""
        if self.variant == CLASSICAL:
            return np.zeros(self.operator.cols)
        if self.variant == NULLSPACE:
            return nullspace_residual(self.operator, self.params, z)
        return continued_svd_residual(self.operator, self.alpha, self.params, z)

    def reconstruct(self, y) -> np.ndarray:
        reg = self.regularizer()
        base = reg.synthesize(reg.coefficients(y))
        if self.variant == CLASSICAL:
            return base
        return base + self.residual_map(base)

    def retained_coefficients(self, y) -> np.ndarray:
        """Spectral coefficients of the reconstruction on the retained
        directions (sigma_n^2 >= alpha).

        Computed on the one shared filter path, so the classical filter and
        the continued-SVD extension return bit-identical numbers here.
        """
        reg = self.regularizer()
        coef = reg.coefficients(y)
        mask = self.operator.retained(self.alpha)[self.operator.kept]
        return coef[mask]

    def residual_projection(self):
        """Projection applied to raw network outputs during training."""
        return residual_projection(self.variant, self.operator, self.alpha)


def a3_residual(method: ReconstructionMethod, x) -> float:
    """The scalar || B_alpha A residual(B_alpha A x) ||, computed by composition."""
    reg = method.regularizer()
    inner = reg.apply_gram(x)
    res = method.residual_map(inner)
    return float(np.linalg.norm(reg.apply_gram(res)))


@dataclass(frozen=True)
class RegNetFamily:
    """An alpha-indexed family of trained methods sharing operator and filter.

    ``members`` is a list of (alpha, NetworkParams) with alphas strictly
    descending; ``lipschitz_cap`` is the declared uniform bound on the
    members' certified Lipschitz constants.
    """

    variant: str
    operator: SvdOperator
    filt: RegularizingFilter
    members: list
    lipschitz_cap: float

    def __post_init__(self):
        if self.variant not in (NULLSPACE, CONTINUED):
            raise ValueError(f"family variant must be a learned one, got {self.variant!r}")
        alphas = [a for a, _ in self.members]
        if not alphas:
            raise ValueError("family needs at least one member")
        if any(a <= 0 for a in alphas) or any(b >= a for a, b in zip(alphas, alphas[1:])):
            raise ValueError("member alphas must be positive and strictly descending")

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a for a, _ in self.members])

    def method(self, index: int) -> ReconstructionMethod:
        alpha, params = self.members[index]
        return ReconstructionMethod(self.variant, self.operator, self.filt, alpha, params)

    def nearest(self, alpha: float) -> ReconstructionMethod:
        """Member with the closest alpha on a log scale."""
        idx = int(np.argmin(np.abs(np.log(self.alphas) - np.log(alpha))))
        return self.method(idx)

    def max_lipschitz(self) -> float:
        return max(network.lipschitz_upper_bound(p) for _, p in self.members)

    def validate_lipschitz(self):
        worst = self.max_lipschitz()
        if worst > self.lipschitz_cap * (1.0 + 1e-12):
            raise ValueError(f"member Lipschitz bound {worst} exceeds the declared cap {self.lipschitz_cap}")
        return worst


@dataclass
class AdaptednessReport:
    """Distances of each member's residual to the alpha-min member's residual,
    one row per probe; ``tail_monotone[i]`` is False when the second half of
    row i fails to decrease."""

    alphas: np.ndarray
    distances: np.ndarray
    tail_monotone: list


def adaptedness_probe(family: RegNetFamily, probes) -> AdaptednessReport:
    """Empirical convergence evidence for residual_alpha(B_alpha A z).

    Probes must be orthogonal to the numerical kernel (they stand in for
    elements of ran(A+)).  This records evidence only; nothing is certified.
    """
    op = family.operator
    rows = []
    flags = []
    for z in probes:
        z = np.asarray(z, dtype=float)
        knorm = np.linalg.norm(op.kernel_project(z))
        if knorm > 1e-8 * max(np.linalg.norm(z), 1e-300):
            raise ValueError("probe has a numerical-kernel component")
        residuals = []
        for idx in range(len(family.members)):
            m = family.method(idx)
            reg = m.regularizer()
            residuals.append(m.residual_map(reg.apply_gram(z)))
        dists = np.array([np.linalg.norm(r - residuals[-1]) for r in residuals])
        rows.append(dists)
        tail = dists[len(dists) // 2 : -1]
        ok = bool(np.all(np.diff(tail) <= 1e-12 + 1e-9 * np.abs(tail[:-1]))) if tail.size > 1 else True
        flags.append(ok)
    return AdaptednessReport(
        alphas=family.alphas,
        distances=np.vstack(rows) if rows else np.zeros((0, len(family.members))),
        tail_monotone=flags,
    )
