"""Closed-form smooth test functions.

Each family is a list of ``(value, gradient)`` pairs, one per objective.
Families marked ``convex=False`` are classical benchmark members whose
smooth parts are not convex; they are kept in the catalog for comparison
but excluded from convexity checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

Scalar = Callable[[np.ndarray], float]
Vector = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Family:
    name: str
    m: int
    pieces: Sequence[tuple[Scalar, Vector]]
    n: Optional[int] = None  # None: any dimension
    convex: bool = True
    n_min: int = 1

    def check_dim(self, n: int) -> None:
        if self.n is not None and n != self.n:
            raise ValueError(f"{self.name} is defined for n={self.n}, got n={n}")
        if n < self.n_min:
            raise ValueError(f"{self.name} needs n >= {self.n_min}, got n={n}")


FAMILIES: dict[str, Family] = {}


def _register(family: Family) -> Family:
    FAMILIES[family.name] = family
    return family


def _shifted_sq(center, weights=None):
    c = np.asarray(center, dtype=float)
    w = np.ones_like(c) if weights is None else np.asarray(weights, dtype=float)

    def value(x):
        r = x - c
        return float(np.dot(w, r * r))

    def grad(x):
        return 2.0 * w * (x - c)

    return value, grad


_register(Family("BK1", 2, [_shifted_sq([0.0, 0.0]), _shifted_sq([5.0, 5.0])], n=2))

_register(Family(
    "Lovison1", 2,
    [_shifted_sq([0.0, 0.0], [1.05, 0.98]), _shifted_sq([3.0, 2.5], [0.99, 1.03])],
    n=2,
))

_register(Family("LRS1", 2, [_shifted_sq([0.0, 0.0]), _shifted_sq([-2.0, 0.0])], n=2))

_register(Family("SSFY1", 2, [_shifted_sq([0.0, 0.0]), _shifted_sq([1.0, 2.0])], n=2))

_register(Family("MOP1", 2, [_shifted_sq([0.0]), _shifted_sq([2.0])], n=1))

_register(Family(
    "MHHM1", 3, [_shifted_sq([0.8]), _shifted_sq([0.85]), _shifted_sq([0.9])], n=1,
))

_register(Family(
    "MHHM2", 3,
    [_shifted_sq([0.8, 0.6]), _shifted_sq([0.85, 0.7]), _shifted_sq([0.9, 0.6])],
    n=2,
))


def _jin1(shift):
    def value(x):
        r = x - shift
        return float(np.mean(r * r))

    def grad(x):
        return 2.0 * (x - shift) / x.size

    return value, grad


_register(Family("Jin1", 2, [_jin1(0.0), _jin1(2.0)]))


def _sp1_f1(x):
    return float((x[0] - 1.0) ** 2 + (x[0] - x[1]) ** 2)


def _sp1_g1(x):
    return np.array([2.0 * (x[0] - 1.0) + 2.0 * (x[0] - x[1]), -2.0 * (x[0] - x[1])])


def _sp1_f2(x):
    return float((x[1] - 3.0) ** 2 + (x[0] - x[1]) ** 2)


def _sp1_g2(x):
    return np.array([2.0 * (x[0] - x[1]), 2.0 * (x[1] - 3.0) - 2.0 * (x[0] - x[1])])


_register(Family("SP1", 2, [(_sp1_f1, _sp1_g1), (_sp1_f2, _sp1_g2)], n=2))


def _vu1_f1(x):
    return float(1.0 / (x[0] ** 2 + x[1] ** 2 + 1.0))


def _vu1_g1(x):
    s = x[0] ** 2 + x[1] ** 2 + 1.0
    return -2.0 * x / s**2


def _vu1_f2(x):
    return float(x[0] ** 2 + 3.0 * x[1] ** 2 + 1.0)


def _vu1_g2(x):
    return np.array([2.0 * x[0], 6.0 * x[1]])


_register(Family("VU1", 2, [(_vu1_f1, _vu1_g1), (_vu1_f2, _vu1_g2)], n=2, convex=False))


def _vu2_f1(x):
    return float(x[0] + x[1] + 1.0)


def _vu2_g1(x):
    return np.ones(2)


def _vu2_f2(x):
    return float(x[0] ** 2 + 2.0 * x[1] - 1.0)


def _vu2_g2(x):
    return np.array([2.0 * x[0], 2.0])


_register(Family("VU2", 2, [(_vu2_f1, _vu2_g1), (_vu2_f2, _vu2_g2)], n=2))


def _lov4_f1(x):
    a = np.exp(-((x[0] + 2.0) ** 2) - x[1] ** 2)
    b = np.exp(-((x[0] - 2.0) ** 2) - x[1] ** 2)
    return float(x[0] ** 2 + x[1] ** 2 + 4.0 * (a + b))


def _lov4_g1(x):
    a = np.exp(-((x[0] + 2.0) ** 2) - x[1] ** 2)
    b = np.exp(-((x[0] - 2.0) ** 2) - x[1] ** 2)
    return np.array([
        2.0 * x[0] - 8.0 * ((x[0] + 2.0) * a + (x[0] - 2.0) * b),
        2.0 * x[1] - 8.0 * x[1] * (a + b),
    ])


_register(Family(
    "Lovison4", 2, [(_lov4_f1, _lov4_g1), _shifted_sq([6.0, -0.5])], n=2, convex=False,
))


def _mop7_f1(x):
    return float((x[0] - 2.0) ** 2 / 2.0 + (x[1] + 1.0) ** 2 / 13.0 + 3.0)


def _mop7_g1(x):
    return np.array([x[0] - 2.0, 2.0 * (x[1] + 1.0) / 13.0])


def _mop7_f2(x):
    return float((x[0] + x[1] - 3.0) ** 2 / 36.0 + (-x[0] + x[1] + 2.0) ** 2 / 8.0 - 17.0)


def _mop7_g2(x):
    u = (x[0] + x[1] - 3.0) / 18.0
    v = (-x[0] + x[1] + 2.0) / 4.0
    return np.array([u - v, u + v])


def _mop7_f3(x):
    return float((x[0] + 2.0 * x[1] - 1.0) ** 2 / 175.0 + (2.0 * x[1] - x[0]) ** 2 / 17.0 - 13.0)


def _mop7_g3(x):
    u = 2.0 * (x[0] + 2.0 * x[1] - 1.0) / 175.0
    v = 2.0 * (2.0 * x[1] - x[0]) / 17.0
    return np.array([u - v, 2.0 * u + 2.0 * v])


_register(Family(
    "MOP7", 3, [(_mop7_f1, _mop7_g1), (_mop7_f2, _mop7_g2), (_mop7_f3, _mop7_g3)], n=2,
))


def _fds_f1(x):
    n = x.size
    i = np.arange(1, n + 1)
    return float(np.sum(i * (x - i) ** 4) / n**2)


def _fds_g1(x):
    n = x.size
    i = np.arange(1, n + 1)
    return 4.0 * i * (x - i) ** 3 / n**2


def _fds_f2(x):
    return float(np.exp(np.mean(x)) + x @ x)


def _fds_g2(x):
    return np.exp(np.mean(x)) / x.size + 2.0 * x


def _fds_weights(n):
    i = np.arange(1, n + 1)
    return i * (n - i + 1) / (n * (n + 1))


def _fds_f3(x):
    return float(np.sum(_fds_weights(x.size) * np.exp(-x)))


def _fds_g3(x):
    return -_fds_weights(x.size) * np.exp(-x)


_register(Family("FDS", 3, [(_fds_f1, _fds_g1), (_fds_f2, _fds_g2), (_fds_f3, _fds_g3)]))


_register(Family(
    "IKK1", 3,
    [_shifted_sq([0.0, 0.0], [1.0, 0.0]), _shifted_sq([20.0, 0.0], [1.0, 0.0]),
     _shifted_sq([0.0, 0.0], [0.0, 1.0])],
    n=2,
))


def _vfm1_f2(x):
    return float(x[0] ** 2 + (x[1] + 1.0) ** 2 + 1.0)


def _vfm1_f3(x):
    return float((x[0] - 1.0) ** 2 + x[1] ** 2 + 2.0)


_register(Family(
    "VFM1", 3,
    [_shifted_sq([0.0, 1.0]), (_vfm1_f2, _shifted_sq([0.0, -1.0])[1]),
     (_vfm1_f3, _shifted_sq([1.0, 0.0])[1])],
    n=2,
))


def _zlt1(j):
    def value(x):
        r = x.copy()
        r[j] -= 1.0
        return float(r @ r)

    def grad(x):
        r = 2.0 * x
        r[j] -= 2.0
        return r

    return value, grad


_register(Family("ZLT1", 3, [_zlt1(0), _zlt1(1), _zlt1(2)], n_min=3))
