import numpy as np
import pytest

from stratdag import AdditiveScm, LinearScm, NodeFunction, NoiseSpec


def example_proxy(alpha2, v1=1.0, v2=1.0, vy=1.0):
    """Three-node proxy chain x1 -> y -> x2 (y = x1 + u_y, x2 = alpha2*y + u2)."""
    A = np.zeros((3, 3))
    A[2, 0] = 1.0
    A[1, 2] = alpha2
    return LinearScm(2, A, (NoiseSpec.gaussian(0, v1), NoiseSpec.gaussian(0, v2), NoiseSpec.gaussian(0, vy)))


def random_linear_dag(n, rng, p_edge=0.5, min_weight=0.1, var_range=(0.5, 2.0)):
    """Random linear-Gaussian DAG over a random node order; edge magnitudes
    bounded away from zero, noise variances drawn from a continuous range so
    the discovery faithfulness conditions hold almost surely."""
    order = rng.permutation(n + 1)
    A = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            if rng.random() < p_edge:
                A[order[j], order[i]] = rng.uniform(min_weight, 1.0) * rng.choice([-1.0, 1.0])
    noises = tuple(NoiseSpec.gaussian(0.0, rng.uniform(*var_range)) for _ in range(n + 1))
    return LinearScm(n, A, noises)


def random_additive_scm(n, rng, p_edge=0.4, poly_share=0.5, var_range=(0.5, 1.5)):
    """Random additive-noise model whose structural functions mix the linear
    and degree-2 polynomial registry families."""
    order = list(rng.permutation(n + 1))
    funcs = [None] * (n + 1)
    for pos, j in enumerate(order):
        parents, coeffs = [], []
        for q in range(pos):
            k = order[q]
            if rng.random() < p_edge:
                w1 = rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0])
                if rng.random() < poly_share:
                    coeffs.append((w1, rng.uniform(0.1, 0.4) * rng.choice([-1.0, 1.0])))
                else:
                    coeffs.append((w1,))
                parents.append(k)
        funcs[j] = NodeFunction(tuple(parents), tuple(coeffs))
    noises = tuple(NoiseSpec.gaussian(0.0, rng.uniform(*var_range)) for _ in range(n + 1))
    return AdditiveScm(n, tuple(funcs), noises)


def all_ancestor_dag(n, rng, var_range=(0.3, 1.0)):
    """Random DAG in which every feature has a directed path to the outcome."""
    A = np.zeros((n + 1, n + 1))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.4:
                A[j, i] = rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0])
    for i in range(n):
        downstream = [j for j in range(i + 1, n) if A[j, i] != 0.0]
        if not downstream or rng.random() < 0.5:
            A[n, i] = rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0])
    if not A[n].any():
        A[n, n - 1] = 1.0
    noises = tuple(NoiseSpec.gaussian(0.0, rng.uniform(*var_range)) for _ in range(n + 1))
    return LinearScm(n, A, noises)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
