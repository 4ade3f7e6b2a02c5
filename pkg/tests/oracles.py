"""Independent dense reference implementations used as test oracles."""

from __future__ import annotations

import itertools
from typing import Dict, Sequence, Tuple

import numpy as np


def perm_sign(perm: Sequence[int]) -> int:
    """Sign of a permutation of range(k), via the permutation matrix determinant."""
    k = len(perm)
    if k == 0:
        return 1
    return int(round(np.linalg.det(np.eye(k)[list(perm)])))


def dense(coeffs: Dict[Tuple[int, ...], float], k: int, N: int) -> np.ndarray:
    """Antisymmetric array T with T[I] = c_I on sorted I."""
    T = np.zeros((N,) * k)
    for idx, c in coeffs.items():
        for perm in itertools.permutations(range(k)):
            T[tuple(idx[p] for p in perm)] += perm_sign(perm) * c
    return T


def dense_eval(T: np.ndarray, vectors: Sequence[np.ndarray]) -> float:
    out = T
    for v in vectors:
        out = np.tensordot(v, out, axes=(0, 0))
    return float(out)


def shuffles(n: int, k: int):
    """(sign, first k slots, remaining slots) over (k, n-k) shuffles."""
    for first in itertools.combinations(range(n), k):
        rest = tuple(i for i in range(n) if i not in first)
        yield perm_sign(first + rest), first, rest


def wedge_eval(Ta: np.ndarray, Tb: np.ndarray, vectors: Sequence[np.ndarray]) -> float:
    k = Ta.ndim
    total = 0.0
    for sign, first, rest in shuffles(len(vectors), k):
        total += sign * dense_eval(Ta, [vectors[i] for i in first]) * dense_eval(Tb, [vectors[i] for i in rest])
    return total


def coefficients(evaluator, k: int, N: int) -> Dict[Tuple[int, ...], float]:
    """Sorted-index coefficients of a k-form given only as an evaluator."""
    E = np.eye(N)
    out = {}
    for I in itertools.combinations(range(N), k):
        c = evaluator([E[i] for i in I])
        if c != 0.0:
            out[I] = c
    return out


def random_coeffs(rng: np.random.Generator, k: int, N: int, density: float = 0.6) -> Dict[Tuple[int, ...], float]:
    out = {}
    for I in itertools.combinations(range(N), k):
        if rng.random() < density:
            out[I] = float(rng.normal())
    return out


def close_maps(a: Dict, b: Dict, tol: float) -> bool:
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in keys)
