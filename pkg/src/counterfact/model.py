"""Model and query data types shared by the engines.

Linear models follow ``x = B x + eps`` with Gaussian disturbances; boolean
models are recursive systems of AND/OR/NOT equations over root variables,
some of which are flagged as abnormality (exception) terms.
"""

from __future__ import annotations

import graphlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

IDENTIFIER = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


class ModelError(ValueError):
    """Base class for malformed models and queries."""


class UnknownVariableError(ModelError):
    pass


class SingularSystemError(ModelError):
    pass


class ContradictoryEvidenceError(ModelError):
    """Observations are impossible under the model."""


@dataclass(frozen=True)
class Tolerances:
    """Numerical slack used across the engines.

    ``sym`` is relative to the largest absolute covariance entry,
    ``pinv_rtol`` to the largest eigenvalue of the observed covariance block
    and ``evidence_rtol`` to the magnitude of the observations.
    """

    sym: float = 1e-9
    rcond_floor: float = 1e-12
    pinv_rtol: float = 1e-10
    evidence_rtol: float = 1e-6


DEFAULT_TOLERANCES = Tolerances()


def check_identifier(name: str) -> str:
    if not isinstance(name, str) or not IDENTIFIER.match(name):
        raise ModelError(f"invalid variable name {name!r}")
    return name


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _index_of(variables: Sequence[str], names: Iterable[str]) -> list[int]:
    lookup = {name: i for i, name in enumerate(variables)}
    out = []
    for name in names:
        if name not in lookup:
            raise UnknownVariableError(f"unknown variable {name!r}")
        out.append(lookup[name])
    return out


def _check_variables(variables: Sequence[str]) -> tuple[str, ...]:
    variables = tuple(variables)
    for name in variables:
        check_identifier(name)
    if len(set(variables)) != len(variables):
        raise ModelError("duplicate variable names")
    return variables


@dataclass(frozen=True, eq=False)
class LinearScm:
    """Linear structural model ``x = coeff @ x + eps``, ``eps ~ N(dist_mean, dist_cov)``.

    ``coeff[i, j]`` is the coefficient of variable ``j`` in the equation for
    variable ``i``. Arrays are copied and made read-only on construction.
    """

    variables: tuple[str, ...]
    coeff: np.ndarray
    dist_mean: np.ndarray
    dist_cov: np.ndarray

    def __post_init__(self) -> None:
        variables = _check_variables(self.variables)
        n = len(variables)
        coeff = _frozen(self.coeff)
        mean = _frozen(self.dist_mean)
        cov = _frozen(self.dist_cov)
        if coeff.shape != (n, n) or cov.shape != (n, n) or mean.shape != (n,):
            raise ModelError(
                f"shape mismatch for {n} variables: coeff {coeff.shape}, "
                f"dist_mean {mean.shape}, dist_cov {cov.shape}"
            )
        for arr in (coeff, mean, cov):
            if not np.all(np.isfinite(arr)):
                raise ModelError("model parameters must be finite")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "coeff", coeff)
        object.__setattr__(self, "dist_mean", mean)
        object.__setattr__(self, "dist_cov", cov)

    @property
    def n(self) -> int:
        return len(self.variables)

    def indices(self, names: Iterable[str]) -> list[int]:
        return _index_of(self.variables, names)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinearScm):
            return NotImplemented
        return (
            self.variables == other.variables
            and np.array_equal(self.coeff, other.coeff)
            and np.array_equal(self.dist_mean, other.dist_mean)
            and np.array_equal(self.dist_cov, other.dist_cov)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    symmetry_defect: float
    min_eigenvalue: float
    rcond: float
    self_loops: tuple[str, ...]
    messages: tuple[str, ...]

    def __str__(self) -> str:
        lines = [
            "PASS" if self.passed else "FAIL",
            f"  disturbance covariance symmetry defect: {self.symmetry_defect:.3g}",
            f"  disturbance covariance min eigenvalue:  {self.min_eigenvalue:.6g}",
            f"  reciprocal condition number of (I - B): {self.rcond:.6g}",
        ]
        lines.extend(f"  - {m}" for m in self.messages)
        return "\n".join(lines)


def reciprocal_condition(matrix: np.ndarray) -> float:
    """Smallest over largest singular value; 1.0 for an empty matrix."""
    if matrix.size == 0:
        return 1.0
    s = np.linalg.svd(matrix, compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def validate_linear(
    model: LinearScm, tol: Tolerances = DEFAULT_TOLERANCES
) -> ValidationReport:
    cov = model.dist_cov
    scale = max(float(np.max(np.abs(cov))), 1.0) if cov.size else 1.0
    defect = float(np.max(np.abs(cov - cov.T))) if cov.size else 0.0
    min_eig = float(np.linalg.eigvalsh((cov + cov.T) / 2).min()) if cov.size else 0.0
    rcond = reciprocal_condition(np.eye(model.n) - model.coeff)
    loops = tuple(v for i, v in enumerate(model.variables) if model.coeff[i, i] != 0.0)

    messages = []
    if defect > tol.sym * scale:
        messages.append(f"disturbance covariance is not symmetric (defect {defect:.3g})")
    if min_eig < -tol.sym * scale:
        messages.append(
            f"disturbance covariance is not positive semidefinite (min eigenvalue {min_eig:.6g})"
        )
    if rcond < tol.rcond_floor:
        messages.append(f"(I - B) is singular (reciprocal condition number {rcond:.3g})")
    if loops:
        messages.append("self-loops on: " + ", ".join(loops))
    return ValidationReport(
        passed=not messages,
        symmetry_defect=defect,
        min_eigenvalue=min_eig,
        rcond=rcond,
        self_loops=loops,
        messages=tuple(messages),
    )


@dataclass(frozen=True, eq=False)
class Partition:
    """Split of the model variables into free (``y``) and intervened (``z``) sets."""

    y: tuple[int, ...]
    z: tuple[int, ...]
    B_yy: np.ndarray
    B_yz: np.ndarray
    B_zy: np.ndarray
    B_zz: np.ndarray

    def reassemble(self) -> np.ndarray:
        n = len(self.y) + len(self.z)
        out = np.zeros((n, n))
        y, z = list(self.y), list(self.z)
        out[np.ix_(y, y)] = self.B_yy
        out[np.ix_(y, z)] = self.B_yz
        out[np.ix_(z, y)] = self.B_zy
        out[np.ix_(z, z)] = self.B_zz
        return out


def partition(model: LinearScm, intervened: Iterable[str]) -> Partition:
    z_set = set(model.indices(intervened))
    z = tuple(i for i in range(model.n) if i in z_set)
    y = tuple(i for i in range(model.n) if i not in z_set)
    B = model.coeff
    return Partition(
        y=y,
        z=z,
        B_yy=B[np.ix_(y, y)],
        B_yz=B[np.ix_(y, z)],
        B_zy=B[np.ix_(z, y)],
        B_zz=B[np.ix_(z, z)],
    )


def prune(model: LinearScm, intervened: Iterable[str]) -> np.ndarray:
    """Coefficient matrix with the equations of intervened variables removed."""
    pruned = np.array(model.coeff, copy=True)
    pruned[model.indices(intervened), :] = 0.0
    return pruned


# --- boolean expressions --------------------------------------------------


class BoolExpr:
    """Expression tree node. ``evaluate`` works on ints, ``evaluate_array`` on numpy bool arrays."""

    __slots__ = ()

    def variables(self) -> frozenset[str]:
        raise NotImplementedError

    def evaluate(self, env: Mapping[str, int]) -> int:
        raise NotImplementedError

    def evaluate_array(self, env: Mapping[str, np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class Var(BoolExpr):
    name: str

    def variables(self) -> frozenset[str]:
        return frozenset((self.name,))

    def evaluate(self, env):
        return int(env[self.name])

    def evaluate_array(self, env):
        return env[self.name]

    def to_text(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const(BoolExpr):
    value: int

    def __post_init__(self) -> None:
        if self.value not in (0, 1):
            raise ModelError(f"boolean constant must be 0 or 1, got {self.value!r}")
        object.__setattr__(self, "value", int(self.value))

    def variables(self) -> frozenset[str]:
        return frozenset()

    def evaluate(self, env):
        return self.value

    def evaluate_array(self, env):
        # callers broadcast against root arrays
        return np.bool_(self.value)

    def to_text(self) -> str:
        return str(self.value)


def _wrap(expr: BoolExpr) -> str:
    text = expr.to_text()
    return f"({text})" if isinstance(expr, (And, Or)) else text


@dataclass(frozen=True)
class Not(BoolExpr):
    arg: BoolExpr

    def variables(self) -> frozenset[str]:
        return self.arg.variables()

    def evaluate(self, env):
        return 1 - self.arg.evaluate(env)

    def evaluate_array(self, env):
        return np.logical_not(self.arg.evaluate_array(env))

    def to_text(self) -> str:
        return "!" + _wrap(self.arg)


@dataclass(frozen=True)
class And(BoolExpr):
    args: tuple[BoolExpr, ...]

    def variables(self) -> frozenset[str]:
        return frozenset().union(*(a.variables() for a in self.args))

    def evaluate(self, env):
        return int(all(a.evaluate(env) for a in self.args))

    def evaluate_array(self, env):
        out = self.args[0].evaluate_array(env)
        for a in self.args[1:]:
            out = np.logical_and(out, a.evaluate_array(env))
        return out

    def to_text(self) -> str:
        return " & ".join(_wrap(a) for a in self.args)


@dataclass(frozen=True)
class Or(BoolExpr):
    args: tuple[BoolExpr, ...]

    def variables(self) -> frozenset[str]:
        return frozenset().union(*(a.variables() for a in self.args))

    def evaluate(self, env):
        return int(any(a.evaluate(env) for a in self.args))

    def evaluate_array(self, env):
        out = self.args[0].evaluate_array(env)
        for a in self.args[1:]:
            out = np.logical_or(out, a.evaluate_array(env))
        return out

    def to_text(self) -> str:
        return " | ".join(_wrap(a) for a in self.args)


@dataclass(frozen=True)
class BooleanScm:
    """Recursive boolean structural model.

    ``roots`` have no equation; ``abnormals`` is the subset of roots that
    count as exceptions during abduction. Optional ``weights`` give the
    relative likelihood of each abnormality and are only used for ranking.
    """

    variables: tuple[str, ...]
    roots: tuple[str, ...]
    abnormals: tuple[str, ...]
    equations: Mapping[str, BoolExpr]
    weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        variables = _check_variables(self.variables)
        declared = set(variables)
        roots = tuple(v for v in variables if v in set(self.roots))
        abnormals = tuple(v for v in variables if v in set(self.abnormals))
        for name in (*self.roots, *self.abnormals, *self.equations, *self.weights):
            if name not in declared:
                raise UnknownVariableError(f"unknown variable {name!r}")
        if len(roots) != len(self.roots) or len(abnormals) != len(self.abnormals):
            raise ModelError("duplicate entries in roots or abnormals")
        if not set(abnormals) <= set(roots):
            raise ModelError("abnormality variables must be roots")
        for name in variables:
            has_eq = name in self.equations
            if name in roots and has_eq:
                raise ModelError(f"root variable {name!r} has an equation")
            if name not in roots and not has_eq:
                raise ModelError(f"variable {name!r} has no equation and is not a root")
        for name, expr in self.equations.items():
            unknown = expr.variables() - declared
            if unknown:
                raise UnknownVariableError(
                    f"equation for {name!r} uses unknown variable(s) {sorted(unknown)}"
                )
        for name, w in self.weights.items():
            if name not in abnormals or not (w > 0 and np.isfinite(w)):
                raise ModelError(f"weight for {name!r} must be a positive number on an abnormal")

        equations = {v: self.equations[v] for v in variables if v in self.equations}
        sorter = graphlib.TopologicalSorter(
            {v: sorted(e.variables()) for v, e in equations.items()}
        )
        try:
            order = [v for v in sorter.static_order() if v in equations]
        except graphlib.CycleError as exc:
            raise ModelError(f"cyclic boolean equations: {' -> '.join(exc.args[1])}") from None

        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "roots", roots)
        object.__setattr__(self, "abnormals", abnormals)
        object.__setattr__(self, "equations", equations)
        object.__setattr__(self, "weights", {v: float(self.weights[v]) for v in abnormals if v in self.weights})
        object.__setattr__(self, "_order", tuple(order))

    @property
    def evaluation_order(self) -> tuple[str, ...]:
        """Non-root variables in a topological order."""
        return self._order  # type: ignore[attr-defined]


# --- queries --------------------------------------------------------------

Value = Union[float, int]


@dataclass(frozen=True)
class Query:
    """``intervention -> consequents | observations``.

    ``consequent_values`` optionally fixes the proposition asked about a
    consequent (``ask t=0``); used by the boolean engine only.
    """

    observations: Mapping[str, Value] = field(default_factory=dict)
    intervention: Mapping[str, Value] = field(default_factory=dict)
    consequents: tuple[str, ...] = ()
    consequent_values: Mapping[str, Value] = field(default_factory=dict)

    def variables(self) -> set[str]:
        return {*self.observations, *self.intervention, *self.consequents}

    def to_text(self) -> str:
        clauses = []
        if self.observations:
            clauses.append("observe " + ", ".join(f"{k}={_num(v)}" for k, v in self.observations.items()))
        if self.intervention:
            clauses.append("do " + ", ".join(f"{k}={_num(v)}" for k, v in self.intervention.items()))
        if self.consequents:
            asks = [
                f"{k}={_num(self.consequent_values[k])}" if k in self.consequent_values else k
                for k in self.consequents
            ]
            clauses.append("ask " + ", ".join(asks))
        return "; ".join(clauses)


def _num(value: Value) -> str:
    return repr(float(value)) if not float(value).is_integer() else str(int(value))
