"""Independent small-scale ground truth used by the test suite.

Nothing here shares code with the production solvers: the dense eigenpath
reduces the generalized pencil by a Cholesky factor and diagonalizes with
cyclic Jacobi rotations, the right-isosceles eigenpair is a closed form
obtained by reflecting the triangle across its Neumann legs, and line
concurrency is checked from raw pairwise intersections.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import ParallelLines, TooLarge

DENSE_LIMIT = 2000


def _cyclic_jacobi(A: np.ndarray, tol: float = 1e-14, max_sweeps: int = 50
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of a symmetric matrix by Jacobi rotations."""
    A = A.copy()
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return np.array([A[0, 0]]), V
    scale = np.abs(A).max() or 1.0
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, (A * A).sum() - (np.diag(A) ** 2).sum()))
        if off <= tol * scale * n:
            break
        threshold = off / (n * n)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= threshold:
                    continue
                theta = 0.5 * (A[q, q] - A[p, p]) / apq
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                A[p, q] = 0.0
                A[q, p] = 0.0
                Vp = V[:, p].copy()
                Vq = V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    return np.diag(A).copy(), V


def dense_smallest_eigenpair(K, M) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of the SPD pencil by Cholesky reduction plus Jacobi."""
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    n = Kd.shape[0]
    if n > DENSE_LIMIT:
        raise TooLarge(f"dense oracle limited to dimension {DENSE_LIMIT}, got {n}")
    L = np.linalg.cholesky(Md)
    # C = L^{-1} K L^{-T}, formed with two triangular solves.
    from scipy.linalg import solve_triangular

    tmp = solve_triangular(L, Kd, lower=True)
    C = solve_triangular(L, tmp.T, lower=True).T
    C = 0.5 * (C + C.T)
    evals, evecs = _cyclic_jacobi(C)
    k = int(np.argmin(evals))
    y = evecs[:, k]
    x = solve_triangular(L.T, y, lower=False)
    x /= math.sqrt(abs(x @ (Md @ x)))
    if x.sum() < 0:
        x = -x
    return float(evals[k]), x


def closed_form_right_isosceles() -> tuple[float, Callable]:
    """First mixed eigenpair of the right isosceles triangle with unit legs.

    Domain: legs of length 1 on the coordinate axes (Neumann), hypotenuse
    x + y = 1 (Dirichlet).  Reflecting across both legs tiles the diamond
    |x| + |y| <= 1, whose first Dirichlet eigenfunction restricted back is
    cos(pi xi / sqrt2) cos(pi eta / sqrt2) in the rotated coordinates
    xi = (x + y)/sqrt2, eta = (x - y)/sqrt2, with eigenvalue pi^2.
    The returned evaluator is L2-normalized over the triangle.
    """
    s2 = math.sqrt(2.0)
    norm = 2.0 * s2  # integral of the raw cosine product over the triangle is 1/8

    def evaluate(x, y):
        xi = (np.asarray(x) + np.asarray(y)) / s2
        eta = (np.asarray(x) - np.asarray(y)) / s2
        return norm * np.cos(math.pi * xi / s2) * np.cos(math.pi * eta / s2)

    return math.pi ** 2, evaluate


def brute_concurrency(lines, tol: float = 1e-10) -> bool:
    """Do three lines meet at one point?  Lines are (base, normal) pairs.

    Accepts MovingLine objects as well.  Raises ParallelLines when a pair
    is too close to parallel for the intersection to be meaningful.
    """
    norm = []
    for ln in lines:
        if hasattr(ln, "normal"):
            norm.append((ln.base, ln.normal.components))
        else:
            norm.append(ln)
    if len(norm) != 3:
        raise ParallelLines(f"need exactly 3 lines, got {len(norm)}")

    def intersect(a, b):
        (b1, n1), (b2, n2) = a, b
        A = np.array([n1, n2], dtype=float)
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        if abs(det) < 1e-12:
            raise ParallelLines(f"lines with normals {n1} and {n2} are parallel")
        rhs = np.array([np.dot(n1, b1), np.dot(n2, b2)])
        return np.linalg.solve(A, rhs)

    p01 = intersect(norm[0], norm[1])
    p02 = intersect(norm[0], norm[2])
    return bool(np.linalg.norm(p01 - p02) <= tol)
