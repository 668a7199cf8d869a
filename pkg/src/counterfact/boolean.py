"""Abduction, intervention and prediction for boolean structural models.

Beliefs over root variables are represented by the set of root worlds that
reproduce the observations while setting the fewest abnormality terms.
Worlds are enumerated exhaustively and evaluated with vectorised numpy
operations, one boolean column per variable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import (
    BooleanScm,
    Const,
    ContradictoryEvidenceError,
    ModelError,
    UnknownVariableError,
    Value,
)

MAX_ROOTS = 20


class TooManyRootsError(ModelError):
    pass


class NoConsistentWorldError(ContradictoryEvidenceError):
    pass


@dataclass(frozen=True, order=True)
class World:
    """A total 0/1 assignment to the root variables.

    Ordering is lexicographic by the values in root declaration order.
    """

    values: tuple[int, ...]
    roots: tuple[str, ...]

    def __getitem__(self, name: str) -> int:
        return self.values[self.roots.index(name)]

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.roots, self.values))

    def abnormality_count(self, abnormals: tuple[str, ...]) -> int:
        return sum(self[a] for a in abnormals)

    def __str__(self) -> str:
        return "(" + ", ".join(f"{r}={v}" for r, v in zip(self.roots, self.values)) + ")"


@dataclass(frozen=True)
class AbductionResult:
    worlds: tuple[World, ...]
    abnormality_count: int
    total_consistent: int

    def ranked(self, model: BooleanScm) -> list[tuple[World, float]]:
        """Minimal worlds ordered by declared abnormality weights, most likely first.

        A world's score is the product of the weights of its active
        abnormalities (undeclared weights count as 1). Ties keep canonical order.
        """
        scored = [
            (w, math.prod(model.weights.get(a, 1.0) for a in model.abnormals if w[a]))
            for w in self.worlds
        ]
        return sorted(scored, key=lambda item: -item[1])


class Verdict(enum.Enum):
    ALL_TRUE = "ALL_TRUE"
    ALL_FALSE = "ALL_FALSE"
    AMBIGUOUS = "AMBIGUOUS"


@dataclass(frozen=True)
class CounterfactualVerdict:
    per_world: tuple[tuple[World, dict[str, int]], ...]
    aggregate: dict[str, Verdict]
    propositions: dict[str, int]


def _as_bit(name: str, value: Value) -> int:
    if isinstance(value, bool) or value in (0, 1):
        return int(value)
    raise ModelError(f"boolean value for {name!r} must be 0 or 1, got {value!r}")


def _check_assignment(model: BooleanScm, assignment: Mapping[str, Value]) -> dict[str, int]:
    out = {}
    for name, value in assignment.items():
        if name not in model.variables:
            raise UnknownVariableError(f"unknown variable {name!r}")
        out[name] = _as_bit(name, value)
    return out


def forward_eval(model: BooleanScm, world: World | Mapping[str, int]) -> dict[str, int]:
    """Values of every variable given a total root assignment."""
    roots = world.as_dict() if isinstance(world, World) else dict(world)
    missing = set(model.roots) - set(roots)
    if missing:
        raise ModelError(f"world does not assign roots {sorted(missing)}")
    env = {r: _as_bit(r, roots[r]) for r in model.roots}
    for name in model.evaluation_order:
        env[name] = model.equations[name].evaluate(env)
    return {v: env[v] for v in model.variables}


def _root_grid(k: int) -> np.ndarray:
    """All 2**k root assignments as rows, in lexicographic order."""
    codes = np.arange(2**k, dtype=np.int64)[:, None]
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    return ((codes >> shifts) & 1).astype(bool)


def _evaluate_all(model: BooleanScm, grid: np.ndarray) -> dict[str, np.ndarray]:
    env = {r: grid[:, j] for j, r in enumerate(model.roots)}
    rows = grid.shape[0]
    for name in model.evaluation_order:
        env[name] = np.broadcast_to(model.equations[name].evaluate_array(env), (rows,))
    return env


def abduce(
    model: BooleanScm,
    observations: Mapping[str, Value],
    max_roots: int = MAX_ROOTS,
) -> AbductionResult:
    obs = _check_assignment(model, observations)
    k = len(model.roots)
    if k > max_roots:
        raise TooManyRootsError(f"{k} root variables exceed the limit of {max_roots}")
    grid = _root_grid(k)
    env = _evaluate_all(model, grid)
    consistent = np.ones(grid.shape[0], dtype=bool)
    for name, value in obs.items():
        consistent &= env[name] == bool(value)
    total = int(consistent.sum())
    if total == 0:
        raise NoConsistentWorldError("no assignment of the root variables reproduces the observations")

    ab_cols = [model.roots.index(a) for a in model.abnormals]
    counts = grid[:, ab_cols].sum(axis=1)
    best = int(counts[consistent].min())
    rows = np.flatnonzero(consistent & (counts == best))
    worlds = tuple(World(tuple(int(b) for b in grid[i]), model.roots) for i in rows)
    return AbductionResult(worlds, best, total)


def intervene_bool(model: BooleanScm, antecedent: Mapping[str, Value]) -> BooleanScm:
    """Replace each antecedent variable's equation by its forced constant."""
    forced = _check_assignment(model, antecedent)
    if not forced:
        return model
    equations = dict(model.equations)
    for name, value in forced.items():
        equations[name] = Const(value)
    return BooleanScm(
        variables=model.variables,
        roots=tuple(r for r in model.roots if r not in forced),
        abnormals=tuple(a for a in model.abnormals if a not in forced),
        equations=equations,
        weights={a: w for a, w in model.weights.items() if a not in forced},
    )


def _restrict(world: World, model: BooleanScm) -> dict[str, int]:
    return {r: world[r] for r in model.roots}


def counterfactual_bool(
    model: BooleanScm,
    observations: Mapping[str, Value],
    antecedent: Mapping[str, Value],
    consequent: Mapping[str, Value],
    max_roots: int = MAX_ROOTS,
) -> CounterfactualVerdict:
    """Evaluate ``antecedent -> consequent | observations``.

    ``consequent`` maps each variable to the value the proposition asserts.
    """
    propositions = _check_assignment(model, consequent)
    belief = abduce(model, observations, max_roots)
    pruned = intervene_bool(model, antecedent)
    per_world = []
    for world in belief.worlds:
        values = forward_eval(pruned, _restrict(world, pruned))
        per_world.append((world, {v: values[v] for v in propositions}))

    aggregate = {}
    for name, wanted in propositions.items():
        hits = [outcome[name] == wanted for _, outcome in per_world]
        if all(hits):
            aggregate[name] = Verdict.ALL_TRUE
        elif not any(hits):
            aggregate[name] = Verdict.ALL_FALSE
        else:
            aggregate[name] = Verdict.AMBIGUOUS
    return CounterfactualVerdict(tuple(per_world), aggregate, propositions)


def descendants(model: BooleanScm, sources: set[str]) -> set[str]:
    """Variables reachable from ``sources`` along equation dependencies, sources included."""
    children: dict[str, list[str]] = {v: [] for v in model.variables}
    for name, expr in model.equations.items():
        for parent in expr.variables():
            children[parent].append(name)
    seen = set(sources)
    stack = list(sources)
    while stack:
        for child in children[stack.pop()]:
            if child not in seen:
                seen.add(child)
                stack.append(child)
    return seen

