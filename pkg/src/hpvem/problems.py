"""Built-in problem catalog: the L-shaped-domain corner singularity
benchmark and manufactured harmonic polynomial patch tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import mesh as meshmod


@dataclass
class Problem:
    name: str
    f: Callable | None                 # source term, None for f = 0
    dirichlet: Callable                # boundary point -> value
    exact: Callable | None             # points (n, 2) -> values
    exact_grad: Callable | None        # points (n, 2) -> (n, 2)
    singular_point: np.ndarray | None  # corner needing graded quadrature
    default_mesh: str


def _lshape_u(pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(pts)
    r = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.arctan2(pts[:, 1], pts[:, 0]) + 0.5 * np.pi
    theta = np.where(theta < 0.0, theta + 2.0 * np.pi, theta)  # in [0, 3pi/2]
    with np.errstate(invalid="ignore"):
        out = np.where(r > 0.0, r ** (2.0 / 3.0) * np.sin(2.0 * theta / 3.0), 0.0)
    return out


def _lshape_grad(pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)                    # standard angle
    theta = phi + 0.5 * np.pi
    theta = np.where(theta < 0.0, theta + 2.0 * np.pi, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        ur = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.sin(2.0 * theta / 3.0)
        ut = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.cos(2.0 * theta / 3.0)
    c, s = np.cos(phi), np.sin(phi)
    gx = ur * c - ut * s
    gy = ur * s + ut * c
    bad = ~(r > 0.0)
    gx = np.where(bad, 0.0, gx)
    gy = np.where(bad, 0.0, gy)
    return np.stack([gx, gy], axis=1)


_HARMONIC = {
    1: (lambda x, y: x + 2.0 * y - 0.3,
        lambda x, y: (np.ones_like(x), 2.0 * np.ones_like(x))),
    2: (lambda x, y: x * x - y * y + x * y,
        lambda x, y: (2.0 * x + y, -2.0 * y + x)),
    3: (lambda x, y: x ** 3 - 3.0 * x * y * y,
        lambda x, y: (3.0 * x * x - 3.0 * y * y, -6.0 * x * y)),
    4: (lambda x, y: x ** 4 - 6.0 * x * x * y * y + y ** 4,
        lambda x, y: (4.0 * x ** 3 - 12.0 * x * y * y,
                      -12.0 * x * x * y + 4.0 * y ** 3)),
}


def _poly_problem(q: int) -> Problem:
    val, grad = _HARMONIC[q]

    def exact(pts):
        pts = np.atleast_2d(pts)
        return val(pts[:, 0], pts[:, 1])

    def exact_grad(pts):
        pts = np.atleast_2d(pts)
        gx, gy = grad(pts[:, 0], pts[:, 1])
        return np.stack([gx, gy], axis=1)

    return Problem(
        name=f"patch-q{q}", f=None,
        dirichlet=lambda x: float(exact(x)[0]),
        exact=exact, exact_grad=exact_grad,
        singular_point=None, default_mesh="square(4)")


def get_problem(name: str) -> Problem:
    if name == "lshape-r23":
        return Problem(
            name=name, f=None,
            dirichlet=lambda x: float(_lshape_u(x)[0]),
            exact=_lshape_u, exact_grad=_lshape_grad,
            singular_point=np.zeros(2), default_mesh="lshape(2)")
    if name.startswith("patch-q"):
        q = int(name[7:])
        if q in _HARMONIC:
            return _poly_problem(q)
    raise KeyError(f"unknown problem {name!r}; available: lshape-r23, "
                   "patch-q1 .. patch-q4")


def initial_mesh(problem: Problem, source: str | None = None):
    return meshmod.load_mesh(source if source else problem.default_mesh)
