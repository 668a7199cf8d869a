"""Closed-form moments for linear structural models with Gaussian disturbances.

All results are :class:`GaussianMoments` over the full variable list in
declaration order. Counterfactual queries run in three steps: condition the
disturbances on the observations, cut the equations of the intervened
variables, and push the updated disturbances through the cut system.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

from .model import (
    UnknownVariableError,
    DEFAULT_TOLERANCES,
    ContradictoryEvidenceError,
    LinearScm,
    ModelError,
    SingularSystemError,
    Tolerances,
    Value,
    partition,
    reciprocal_condition,
)


@dataclass(frozen=True, eq=False)
class GaussianMoments:
    variables: tuple[str, ...]
    mean: np.ndarray
    cov: np.ndarray
    # engine bookkeeping (pseudo-inverse ranks); excluded from comparisons
    info: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.variables)
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (n,) or cov.shape != (n, n):
            raise ModelError("moment dimensions do not match the variable list")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise UnknownVariableError(f"unknown variable {name!r}") from None

    def marginal(self, names: Iterable[str]) -> "GaussianMoments":
        names = tuple(names)
        idx = [self.index(v) for v in names]
        return GaussianMoments(names, self.mean[idx], self.cov[np.ix_(idx, idx)], self.info)

    def variance(self, name: str) -> float:
        i = self.index(name)
        return float(self.cov[i, i])

    def mean_of(self, name: str) -> float:
        return float(self.mean[self.index(name)])


@dataclass(frozen=True, eq=False)
class DisturbancePosterior:
    mean: np.ndarray
    cov: np.ndarray
    conditioned_on: Mapping[str, float]
    rank: int = 0


def symmetrize(cov: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    if cov.size == 0:
        return cov
    scale = max(float(np.max(np.abs(cov))), 1.0)
    defect = float(np.max(np.abs(cov - cov.T)))
    if defect > tol.sym * scale:
        raise ArithmeticError(f"covariance asymmetry {defect:.3g} exceeds tolerance")
    return (cov + cov.T) / 2


def _solve_operator(matrix: np.ndarray, what: str, tol: Tolerances) -> np.ndarray:
    """Inverse of ``matrix`` after checking it against the condition floor."""
    rcond = reciprocal_condition(matrix)
    if rcond < tol.rcond_floor:
        raise SingularSystemError(f"{what} is singular (reciprocal condition number {rcond:.3g})")
    return np.linalg.solve(matrix, np.eye(matrix.shape[0]))


def structure_inverse(model: LinearScm, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """``S = (I - B)^-1``, mapping disturbances to variables."""
    return _solve_operator(np.eye(model.n) - model.coeff, "(I - B)", tol)


def _checked_pinv(
    cov_oo: np.ndarray,
    residual: np.ndarray,
    scale: float,
    tol: Tolerances,
) -> tuple[np.ndarray, int]:
    """Pseudo-inverse of the observed covariance block.

    Eigenvalues below ``pinv_rtol * largest`` are dropped. A residual with a
    component outside the retained range means the observations contradict a
    deterministic relation in the model.
    """
    k = cov_oo.shape[0]
    if k == 0:
        return np.zeros((0, 0)), 0
    w, U = np.linalg.eigh((cov_oo + cov_oo.T) / 2)
    top = float(w.max())
    keep = w > tol.pinv_rtol * top if top > 0 else np.zeros(k, dtype=bool)
    Uk = U[:, keep]
    off_range = residual - Uk @ (Uk.T @ residual)
    if np.max(np.abs(off_range)) > tol.evidence_rtol * scale:
        raise ContradictoryEvidenceError(
            "observations are inconsistent with a deterministic relation in the model "
            f"(off-range residual {np.max(np.abs(off_range)):.3g})"
        )
    pinv = (Uk / w[keep]) @ Uk.T
    return pinv, int(keep.sum())


def _observed(variables: tuple[str, ...], observations: Mapping[str, Value]) -> tuple[list[int], np.ndarray]:
    lookup = {v: i for i, v in enumerate(variables)}
    idx = []
    for name in observations:
        if name not in lookup:
            raise UnknownVariableError(f"unknown variable {name!r}")
        idx.append(lookup[name])
    values = np.array([float(observations[v]) for v in observations], dtype=float)
    if not np.all(np.isfinite(values)):
        raise ModelError("observed values must be finite")
    return idx, values


def _evidence_scale(values: np.ndarray, means: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(values), initial=0.0)), float(np.max(np.abs(means), initial=0.0)))


def prior_moments(model: LinearScm, tol: Tolerances = DEFAULT_TOLERANCES) -> GaussianMoments:
    S = structure_inverse(model, tol)
    mean = S @ model.dist_mean
    cov = symmetrize(S @ model.dist_cov @ S.T, tol)
    return GaussianMoments(model.variables, mean, cov)


def condition_moments(
    moments: GaussianMoments,
    observations: Mapping[str, Value],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> GaussianMoments:
    """Condition a joint Gaussian on exact observations of some coordinates.

    Observed coordinates come back with their observed value as mean and
    exactly zero covariance rows and columns.
    """
    idx, values = _observed(moments.variables, observations)
    mu, cov = moments.mean, moments.cov
    residual = values - mu[idx]
    pinv, rank = _checked_pinv(
        cov[np.ix_(idx, idx)], residual, _evidence_scale(values, mu[idx]), tol
    )
    gain = cov[:, idx] @ pinv
    mean = mu + gain @ residual
    post = cov - gain @ cov[idx, :]
    mean[idx] = values
    post[idx, :] = 0.0
    post[:, idx] = 0.0
    info = {**moments.info, "observed_rank": rank, "observed_dim": len(idx)}
    return GaussianMoments(moments.variables, mean, symmetrize(post, tol), info)


def condition(
    model: LinearScm,
    observations: Mapping[str, Value],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> GaussianMoments:
    return condition_moments(prior_moments(model, tol), observations, tol)


def abduct_disturbances(
    model: LinearScm,
    observations: Mapping[str, Value],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> DisturbancePosterior:
    """Posterior of the disturbances given pre-intervention observations."""
    idx, values = _observed(model.variables, observations)
    S = structure_inverse(model, tol)
    S_o = S[idx, :]
    mu_eps, cov_eps = model.dist_mean, model.dist_cov
    mu_o = S_o @ mu_eps
    cross = cov_eps @ S_o.T
    residual = values - mu_o
    pinv, rank = _checked_pinv(S_o @ cross, residual, _evidence_scale(values, mu_o), tol)
    gain = cross @ pinv
    mean = mu_eps + gain @ residual
    cov = symmetrize(cov_eps - gain @ cross.T, tol)
    return DisturbancePosterior(mean, cov, {k: float(v) for k, v in observations.items()}, rank)


def _under_action(
    model: LinearScm,
    eps_mean: np.ndarray,
    eps_cov: np.ndarray,
    action: Mapping[str, Value],
    tol: Tolerances,
) -> GaussianMoments:
    part = partition(model, action)
    y, z = list(part.y), list(part.z)
    a_z = np.array([float(action[model.variables[i]]) for i in z], dtype=float)
    if not np.all(np.isfinite(a_z)):
        raise ModelError("intervention values must be finite")
    M = _solve_operator(np.eye(len(y)) - part.B_yy, "(I - B_yy)", tol)

    mean = np.zeros(model.n)
    cov = np.zeros((model.n, model.n))
    mean[y] = M @ (eps_mean[y] + part.B_yz @ a_z)
    mean[z] = a_z
    cov[np.ix_(y, y)] = M @ eps_cov[np.ix_(y, y)] @ M.T
    return GaussianMoments(model.variables, mean, symmetrize(cov, tol))


def intervene(
    model: LinearScm,
    action: Mapping[str, Value],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> GaussianMoments:
    return _under_action(model, model.dist_mean, model.dist_cov, action, tol)


def counterfactual(
    model: LinearScm,
    observations: Mapping[str, Value],
    action: Mapping[str, Value],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> GaussianMoments:
    """Moments of the world where ``action`` is forced, given ``observations``.

    Observations are always read as facts recorded before the intervention.
    An intervened variable may also be observed; the observation then only
    informs the disturbances.
    """
    posterior = abduct_disturbances(model, observations, tol)
    result = _under_action(model, posterior.mean, posterior.cov, action, tol)
    info = {"observed_rank": posterior.rank, "observed_dim": len(observations)}
    return GaussianMoments(result.variables, result.mean, result.cov, info)
