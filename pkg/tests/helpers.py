"""Model builders and random generators shared by the test modules."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from counterfact.model import And, BoolExpr, BooleanScm, Const, LinearScm, Not, Or, Var

FIXTURES = Path(__file__).parent / "fixtures"


def coffee_model() -> LinearScm:
    B = np.array(
        [
            [0.0, 0.5, 0.0],
            [-1.8, 0.0, 0.0],
            [1.0, 0.0, 0.0],
        ]
    )
    return LinearScm(("p", "q", "r"), B, np.array([0.0, 19.0, 3.0]), np.diag([1.0, 3.0, 2.0]))


def firing_squad_deterministic() -> BooleanScm:
    return BooleanScm(
        variables=("C", "B", "T"),
        roots=("C",),
        abnormals=(),
        equations={"B": Var("C"), "T": Or((Var("B"), Var("C")))},
    )


def firing_squad() -> BooleanScm:
    return BooleanScm(
        variables=("C", "B", "T", "ab_b1", "ab_b2", "ab_t1", "ab_t2"),
        roots=("C", "ab_b1", "ab_b2", "ab_t1", "ab_t2"),
        abnormals=("ab_b1", "ab_b2", "ab_t1", "ab_t2"),
        equations={
            "B": And((Or((Var("C"), Var("ab_b1"))), Not(Var("ab_b2")))),
            "T": Or((And((Or((Var("B"), Var("C"))), Not(Var("ab_t1")))), Var("ab_t2"))),
        },
    )


def random_linear_model(rng: np.random.Generator, n: int, cyclic: bool) -> LinearScm:
    """Random model; cyclic ones have spectral radius of B in [0.2, 0.9)."""
    B = rng.normal(size=(n, n))
    np.fill_diagonal(B, 0.0)
    if cyclic:
        rho = max(abs(np.linalg.eigvals(B)))
        if rho > 0:
            B *= rng.uniform(0.2, 0.89) / rho
    else:
        B = np.tril(B, -1) * 0.8
        perm = rng.permutation(n)
        B = B[np.ix_(perm, perm)]
    A = rng.normal(size=(n, n))
    cov = A @ A.T / n + 0.1 * np.eye(n)
    mean = rng.normal(scale=3.0, size=n)
    names = tuple(f"x{i}" for i in range(n))
    return LinearScm(names, B, mean, cov)


def random_subset(rng: np.random.Generator, names, k: int) -> list[str]:
    return [names[i] for i in sorted(rng.choice(len(names), size=k, replace=False))]


def random_expr(rng: np.random.Generator, names: list[str], depth: int = 3) -> BoolExpr:
    roll = rng.random()
    if depth == 0 or roll < 0.3:
        if rng.random() < 0.08 or not names:
            return Const(int(rng.integers(2)))
        return Var(names[int(rng.integers(len(names)))])
    if roll < 0.45:
        return Not(random_expr(rng, names, depth - 1))
    args = tuple(random_expr(rng, names, depth - 1) for _ in range(int(rng.integers(2, 4))))
    return And(args) if roll < 0.72 else Or(args)


def random_boolean_model(rng: np.random.Generator, n_roots: int, n_inner: int) -> BooleanScm:
    roots = [f"u{i}" for i in range(n_roots)]
    n_ab = int(rng.integers(0, n_roots + 1))
    abnormals = roots[n_roots - n_ab:]
    inner = [f"v{i}" for i in range(n_inner)]
    equations = {}
    for i, name in enumerate(inner):
        equations[name] = random_expr(rng, roots + inner[:i])
    order = [str(v) for v in rng.permutation(roots + inner)]
    return BooleanScm(tuple(order), tuple(roots), tuple(abnormals), equations)


def _random_float(rng: np.random.Generator) -> float:
    kind = rng.random()
    if kind < 0.15:
        return 0.0
    if kind < 0.35:
        return float(rng.integers(-20, 21))
    if kind < 0.5:
        return float(rng.normal() * 10.0 ** rng.integers(-12, 12))
    return float(rng.normal(scale=5.0))


def random_document(rng: np.random.Generator):
    """A random valid model document (linear or boolean)."""
    from counterfact.dsl import ModelDocument

    name = f"m{int(rng.integers(1000))}"
    if rng.random() < 0.5:
        n = int(rng.integers(1, 7))
        B = np.array([[_random_float(rng) if i != j and rng.random() < 0.6 else 0.0 for j in range(n)] for i in range(n)])
        mean = np.array([_random_float(rng) for _ in range(n)])
        cov = np.diag([abs(_random_float(rng)) for _ in range(n)])
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.3:
                    cov[i, j] = cov[j, i] = _random_float(rng)
        names = tuple(f"v{i}_{int(rng.integers(100))}" for i in range(n))
        return ModelDocument("linear", name, LinearScm(names, B, mean, cov))
    model = random_boolean_model(rng, int(rng.integers(0, 6)), int(rng.integers(1, 6)))
    if model.abnormals and rng.random() < 0.4:
        weights = {a: float(rng.uniform(0.1, 5.0)) for a in model.abnormals if rng.random() < 0.6}
        model = BooleanScm(model.variables, model.roots, model.abnormals, model.equations, weights)
    return ModelDocument("boolean", name, model)
