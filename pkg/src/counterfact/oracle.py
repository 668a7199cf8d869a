"""Independent reference engines used to check the analytic results.

Nothing here conditions a Gaussian in closed form. The linear checks sample
disturbances, solve the structural system directly and keep the draws whose
factual solution lands inside a band around the observations. The boolean
check enumerates every root assignment with plain Python evaluation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .boolean import MAX_ROOTS, TooManyRootsError, World, forward_eval
from .model import BooleanScm, LinearScm, ModelError, SingularSystemError, Value, reciprocal_condition

CHUNK = 1 << 16


class ZeroAcceptanceError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class OracleEstimate:
    variables: tuple[str, ...]
    mean: np.ndarray
    cov: np.ndarray
    n_accepted: int
    std_err: np.ndarray


class _Moments:
    """Streaming mean and scatter matrix, merged chunk by chunk (Chan et al.)."""

    def __init__(self, dim: int) -> None:
        self.count = 0
        self.mean = np.zeros(dim)
        self.scatter = np.zeros((dim, dim))

    def add(self, rows: np.ndarray) -> None:
        m = rows.shape[0]
        if m == 0:
            return
        chunk_mean = rows.mean(axis=0)
        centred = rows - chunk_mean
        chunk_scatter = centred.T @ centred
        delta = chunk_mean - self.mean
        total = self.count + m
        self.scatter += chunk_scatter + np.outer(delta, delta) * (self.count * m / total)
        self.mean = self.mean + delta * (m / total)
        self.count = total

    def estimate(self, variables: tuple[str, ...]) -> OracleEstimate:
        if self.count == 0:
            raise ZeroAcceptanceError("no samples accepted; widen delta or raise n")
        cov = self.scatter / max(self.count - 1, 1)
        std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        return OracleEstimate(variables, self.mean.copy(), cov, self.count, std / np.sqrt(self.count))


def _sqrt_psd(cov: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh((cov + cov.T) / 2)
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T


def _system(model: LinearScm) -> np.ndarray:
    system = np.eye(model.n) - model.coeff
    if reciprocal_condition(system) < 1e-12:
        raise SingularSystemError("(I - B) is singular")
    return system


def _lane_rng(seed: int, lane: int) -> np.random.Generator:
    # Lane streams depend only on (seed, lane), so results do not depend on
    # how lanes are scheduled.
    return np.random.default_rng(np.random.SeedSequence([seed, lane]))


def _draws(model: LinearScm, n: int, seed: int):
    root = _sqrt_psd(model.dist_cov)
    for lane, start in enumerate(range(0, n, CHUNK)):
        m = min(CHUNK, n - start)
        z = _lane_rng(seed, lane).standard_normal((m, model.n))
        yield model.dist_mean + z @ root.T


def mc_prior(model: LinearScm, n: int, seed: int) -> OracleEstimate:
    if n < 2:
        raise ModelError("need at least two draws")
    system = _system(model)
    acc = _Moments(model.n)
    for eps in _draws(model, n, seed):
        acc.add(np.linalg.solve(system, eps.T).T)
    return acc.estimate(model.variables)


def rejection_counterfactual(
    model: LinearScm,
    observations: Mapping[str, Value],
    action: Mapping[str, Value],
    delta: float,
    n: int,
    seed: int,
) -> OracleEstimate:
    """Sample the counterfactual world by rejection on the factual world.

    A disturbance draw is kept when its factual solution is within ``delta``
    of every observation; the kept draw is then re-solved with the rows of
    the intervened variables replaced by ``x_z = a_z``.
    """
    if not delta > 0:
        raise ModelError("delta must be positive")
    lookup = {v: i for i, v in enumerate(model.variables)}
    for name in (*observations, *action):
        if name not in lookup:
            raise ModelError(f"unknown variable {name!r}")
    obs_idx = [lookup[v] for v in observations]
    obs_val = np.array([float(observations[v]) for v in observations])
    z_idx = [lookup[v] for v in action]
    z_val = np.array([float(action[v]) for v in action])

    factual = _system(model)
    cut = np.array(model.coeff, copy=True)
    cut[z_idx, :] = 0.0
    forced = np.eye(model.n) - cut
    if reciprocal_condition(forced) < 1e-12:
        raise SingularSystemError("system under the action is singular")

    acc = _Moments(model.n)
    for eps in _draws(model, n, seed):
        x = np.linalg.solve(factual, eps.T).T
        keep = np.all(np.abs(x[:, obs_idx] - obs_val) <= delta, axis=1)
        kept = eps[keep]
        if kept.shape[0] == 0:
            continue
        rhs = kept.copy()
        rhs[:, z_idx] = z_val
        acc.add(np.linalg.solve(forced, rhs.T).T)
    return acc.estimate(model.variables)


def convergence_sweep(
    model: LinearScm,
    observations: Mapping[str, Value],
    action: Mapping[str, Value],
    deltas: list[float],
    n0: int,
    seed: int,
) -> list[tuple[float, int, OracleEstimate]]:
    """Rerun the rejection oracle as the band narrows, scaling ``n`` so the
    expected number of accepted draws stays roughly constant."""
    k = max(len(observations), 1)
    out = []
    for delta in deltas:
        n = int(n0 * (deltas[0] / delta) ** k)
        out.append((delta, n, rejection_counterfactual(model, observations, action, delta, n, seed)))
    return out


def enumerate_boolean(
    model: BooleanScm,
    observations: Mapping[str, Value],
    max_roots: int = MAX_ROOTS,
) -> list[tuple[World, int]]:
    """Every root world reproducing the observations, with its abnormality count."""
    if len(model.roots) > max_roots:
        raise TooManyRootsError(f"{len(model.roots)} root variables exceed the limit of {max_roots}")
    for name in observations:
        if name not in model.variables:
            raise ModelError(f"unknown variable {name!r}")
    out = []
    for values in itertools.product((0, 1), repeat=len(model.roots)):
        assignment = dict(zip(model.roots, values))
        full = forward_eval(model, assignment)
        if all(full[k] == int(v) for k, v in observations.items()):
            count = sum(assignment[a] for a in model.abnormals)
            out.append((World(values, model.roots), count))
    return out


def minimal_layer(worlds: list[tuple[World, int]]) -> list[World]:
    if not worlds:
        return []
    best = min(c for _, c in worlds)
    return [w for w, c in worlds if c == best]
