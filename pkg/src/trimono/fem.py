"""P1 finite elements: assembly, eigen and semilinear solvers, evaluation.

Stiffness and mass are scipy CSR matrices assembled element-by-element in
vectorized form; symmetry is exact by construction.  The first eigenpair
comes from shift-invert inverse iteration with a sparse LU inner solve
(conjugate gradients above the direct-solve size limit).  The semilinear
solver is a damped Newton iteration on F(u) = K u - M f(u) with the
nonlinearity applied nodally.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import DegenerateCell, NoConvergence, OutsideDomain, ParamDomain
from .mesh import Mesh

# Above this reduced dimension the inner solves switch from a direct
# factorization to preconditioned conjugate gradients.
DIRECT_SOLVE_LIMIT = 200_000
_CG_RTOL = 1e-12

# Default outer residual target; the M-relative residual has a roundoff
# floor that grows like eps/h^2, so demanding much less is unattainable on
# fine meshes while the Rayleigh-quotient eigenvalue is already far tighter.
DEFAULT_TOL = 1e-9


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def _cell_geometry(mesh: Mesh):
    p = mesh.cell_coords()
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(det <= 0):
        bad = int(np.argmin(det))
        raise DegenerateCell(f"cell {bad} has signed area {det[bad] / 2:.3e}")
    area = 0.5 * det
    # Gradients of the barycentric basis functions, shape (C, 3, 2).
    g = np.empty((p.shape[0], 3, 2))
    g[:, 1, 0] = d2[:, 1] / det
    g[:, 1, 1] = -d2[:, 0] / det
    g[:, 2, 0] = -d1[:, 1] / det
    g[:, 2, 1] = d1[:, 0] / det
    g[:, 0] = -g[:, 1] - g[:, 2]
    return area, g


def assemble(mesh: Mesh, lumped: bool = False) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """P1 stiffness and mass matrices; Neumann sides contribute nothing."""
    area, g = _cell_geometry(mesh)
    C = mesh.num_cells
    V = mesh.num_vertices
    cells = mesh.cells

    ke = np.einsum("cid,cjd->cij", g, g) * area[:, None, None]
    ke = 0.5 * (ke + ke.transpose(0, 2, 1))
    me = np.tile(np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0,
                 (C, 1, 1)) * area[:, None, None]
    if lumped:
        me = np.zeros_like(me)
        me[:, [0, 1, 2], [0, 1, 2]] = (area / 3.0)[:, None]

    rows = np.repeat(cells, 3, axis=1).ravel()
    cols = np.tile(cells, (1, 3)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(V, V)).tocsr()
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(V, V)).tocsr()
    return K, M


def symmetry_error(A: sp.spmatrix) -> float:
    d = (A - A.T).tocoo()
    return float(np.abs(d.data).max()) if d.nnz else 0.0


@dataclass
class DirichletReduction:
    """Reduced system after removing the Dirichlet-side nodes."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    free: np.ndarray
    dirichlet: np.ndarray
    size: int

    def embed(self, x: np.ndarray) -> np.ndarray:
        u = np.zeros(self.size)
        u[self.free] = x
        return u

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return u[self.free]


def apply_dirichlet(K: sp.spmatrix, M: sp.spmatrix, mesh: Mesh) -> DirichletReduction:
    """Remove rows/columns of Dirichlet-side vertices, keeping the index map."""
    dir_idx = mesh.dirichlet_vertices()
    mask = np.ones(mesh.num_vertices, dtype=bool)
    mask[dir_idx] = False
    free = np.nonzero(mask)[0]
    Kr = K[free][:, free].tocsr()
    Mr = M[free][:, free].tocsr()
    return DirichletReduction(Kr, Mr, free, dir_idx, mesh.num_vertices)


# ---------------------------------------------------------------------------
# Eigen solve
# ---------------------------------------------------------------------------

@dataclass
class EigenResult:
    mu: float
    u: np.ndarray            # full nodal field, zero on the Dirichlet side
    residual: float          # ||K u - mu M u|| / ||M u|| on the reduced system
    iterations: int
    positive: bool           # u > 0 at every non-Dirichlet node
    min_free_value: float


def _make_solver(A: sp.csr_matrix) -> Callable[[np.ndarray], np.ndarray]:
    n = A.shape[0]
    if n <= DIRECT_SOLVE_LIMIT:
        lu = spla.splu(A.tocsc())
        return lu.solve
    ilu = spla.spilu(A.tocsc(), drop_tol=1e-5)
    prec = spla.LinearOperator(A.shape, ilu.solve)

    def solve(b: np.ndarray) -> np.ndarray:
        x, info = spla.cg(A, b, rtol=_CG_RTOL, atol=0.0, M=prec, maxiter=10 * n)
        if info != 0:
            raise NoConvergence(f"inner CG failed with info={info}")
        return x

    return solve


def smallest_eigenpair(K: sp.csr_matrix, M: sp.csr_matrix, tol: float = DEFAULT_TOL,
                       max_iter: int = 500, seed: int = 0
                       ) -> tuple[float, np.ndarray, float, int]:
    """Smallest eigenpair of the reduced SPD pencil (K, M).

    Zero-shift inverse iteration: x <- K^{-1} M x, M-normalized, with the
    Rayleigh quotient as the eigenvalue estimate.  Deterministic for a fixed
    seed.  Returns (mu, x, residual, iterations) with x M-normalized and
    mean-positive.
    """
    if tol <= 0:
        raise ParamDomain(f"tol must be positive, got {tol}")
    n = K.shape[0]
    solve = _make_solver(K)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    if n == 1:
        x = np.ones(1)
    mu = 0.0
    res = math.inf
    for it in range(1, max_iter + 1):
        y = M @ x
        x = solve(y)
        mnorm = math.sqrt(abs(x @ (M @ x)))
        x /= mnorm
        Kx = K @ x
        Mx = M @ x
        mu = float(x @ Kx)          # Rayleigh quotient; x is M-normalized
        res = float(np.linalg.norm(Kx - mu * Mx) / np.linalg.norm(Mx))
        if res <= tol:
            break
    else:
        raise NoConvergence(f"inverse iteration: residual {res:.3e} after {max_iter} iterations",
                            iterations=max_iter, residual=res)
    if x.sum() < 0:
        x = -x
    return mu, x, res, it


def solve_eigen(mesh: Mesh, tol: float = DEFAULT_TOL, max_iter: int = 500, seed: int = 0,
                lumped: bool = False) -> EigenResult:
    """Assemble, reduce, and solve for the first mixed eigenpair on a mesh."""
    K, M = assemble(mesh, lumped=lumped)
    red = apply_dirichlet(K, M, mesh)
    mu, x, res, it = smallest_eigenpair(red.K, red.M, tol=tol, max_iter=max_iter, seed=seed)
    u = red.embed(x)
    mn = float(x.min())
    return EigenResult(mu, u, res, it, positive=mn > 0.0, min_free_value=mn)


# ---------------------------------------------------------------------------
# Nonlinearities and the semilinear solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Nonlinearity:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"                      # linear | power | logistic | custom
    params: tuple[float, ...] = ()


def linear(mu: float) -> Nonlinearity:
    return Nonlinearity(f"linear:{mu:g}", lambda u: mu * u,
                        lambda u: np.full_like(u, mu), "linear", (mu,))


def power(p: float) -> Nonlinearity:
    if p <= 1:
        raise ParamDomain(f"power exponent must exceed 1, got {p}")

    def f(u):
        return np.sign(u) * np.abs(u) ** p

    def fp(u):
        return p * np.abs(u) ** (p - 1)

    return Nonlinearity(f"power:{p:g}", f, fp, "power", (p,))


def logistic(a: float, b: float) -> Nonlinearity:
    """f(u) = a u (1 - u / b): growth rate a, carrying capacity b."""
    if b <= 0:
        raise ParamDomain(f"carrying capacity must be positive, got {b}")
    return Nonlinearity(f"logistic:{a:g},{b:g}",
                        lambda u: a * u * (1.0 - u / b),
                        lambda u: a * (1.0 - 2.0 * u / b), "logistic", (a, b))


def custom(name: str, f, fprime) -> Nonlinearity:
    return Nonlinearity(name, f, fprime)


def derivative_consistency(nl: Nonlinearity, lo: float, hi: float,
                           samples: int = 41, step: float = 1e-6) -> float:
    """Worst relative mismatch of fprime against central differences."""
    u = np.linspace(lo, hi, samples)
    fd = (nl.f(u + step) - nl.f(u - step)) / (2.0 * step)
    scale = np.abs(nl.fprime(u)).max() + 1e-30
    return float(np.abs(fd - nl.fprime(u)).max() / scale)


@dataclass
class SemilinearResult:
    u: np.ndarray
    newton_history: list[float]
    positivity: bool
    converged: bool
    iterations: int


def semilinear_residual(K: sp.csr_matrix, M: sp.csr_matrix, free: np.ndarray,
                        nl: Nonlinearity, u: np.ndarray) -> np.ndarray:
    return (K @ u - M @ nl.f(u))[free]


def solve_semilinear(mesh: Mesh, nl: Nonlinearity, u0: np.ndarray,
                     tol: float = 1e-10, max_iter: int = 50) -> SemilinearResult:
    """Damped Newton for Delta u + f(u) = 0 with the mixed boundary conditions.

    Converged when ||F|| drops below tol * ||F(u0)||, with an absolute floor
    at machine scale so a start that already solves the problem (e.g. an
    eigenfunction for the matching linear f) counts as converged at entry.
    A converged sign-changing solution is reported via positivity=False,
    never hidden.
    """
    K, M = assemble(mesh)
    red = apply_dirichlet(K, M, mesh)
    free = red.free
    u = u0.copy()
    u[red.dirichlet] = 0.0

    def resnorm(v):
        return float(np.linalg.norm(semilinear_residual(K, M, free, nl, v)))

    r0 = resnorm(u)
    floor = 1e-13 * (float(np.linalg.norm((K @ u)[free])) + float(np.linalg.norm((M @ nl.f(u))[free])) + 1.0)
    target = max(tol * r0, floor)
    history = [r0]
    if r0 <= floor:
        mn = float(u[free].min()) if free.size else 0.0
        return SemilinearResult(u, history, positivity=mn >= 0.0, converged=True, iterations=0)

    for it in range(1, max_iter + 1):
        F = semilinear_residual(K, M, free, nl, u)
        J = (K - M @ sp.diags(nl.fprime(u)))[free][:, free].tocsc()
        delta = spla.splu(J).solve(-F)
        step = 1.0
        base = history[-1]
        for _ in range(30):
            trial = u.copy()
            trial[free] += step * delta
            if resnorm(trial) < base:
                break
            step *= 0.5
        else:
            raise NoConvergence(
                f"Newton stalled at iteration {it}: residual {base:.3e}",
                iterations=it, residual=base)
        u = trial
        history.append(resnorm(u))
        if history[-1] <= target:
            mn = float(u[free].min()) if free.size else 0.0
            return SemilinearResult(u, history, positivity=mn >= 0.0,
                                    converged=True, iterations=it)
    raise NoConvergence(
        f"Newton: residual {history[-1]:.3e} after {max_iter} iterations",
        iterations=max_iter, residual=history[-1])


def eigenfunction_start(mesh: Mesh, nl: Nonlinearity, eig: EigenResult) -> np.ndarray:
    """Scale the first eigenfunction so the two dominant terms balance.

    The scale kills the projection of K(c phi) - M f(c phi) onto phi:
    for power p this gives c = (mu / int phi^{p+1})^{1/(p-1)}, for the
    logistic law c = b (a - mu) / (a int phi^3); a <= mu means the only
    nonnegative solution is zero and is rejected.
    """
    _, M = assemble(mesh)
    phi = eig.u
    if nl.kind == "power":
        p = nl.params[0]
        c = (eig.mu / float(phi @ (M @ np.abs(phi) ** p))) ** (1.0 / (p - 1.0))
    elif nl.kind == "logistic":
        a, b = nl.params
        if a <= eig.mu:
            raise ParamDomain(
                f"logistic growth rate {a:g} does not exceed mu = {eig.mu:.6g}; "
                "no positive solution branch")
        c = b * (a - eig.mu) / (a * float(phi @ (M @ phi ** 2)))
    else:
        c = 1.0
    return c * phi


# ---------------------------------------------------------------------------
# Gradients and point evaluation
# ---------------------------------------------------------------------------

def gradient_field(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Exact per-cell gradient of the P1 interpolant, shape (C, 2)."""
    _, g = _cell_geometry(mesh)
    return np.einsum("cid,ci->cd", g, u[mesh.cells])


class PointLocator:
    """Point location by nearest-barycenter candidates with brute-force fallback."""

    def __init__(self, mesh: Mesh, tol: float = 1e-10):
        self.mesh = mesh
        self.tol = tol
        self._tree = cKDTree(mesh.barycenters())
        p = mesh.cell_coords()
        self._origin = p[:, 0]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self._inv = np.empty((p.shape[0], 2, 2))
        self._inv[:, 0, 0] = d2[:, 1] / det
        self._inv[:, 0, 1] = -d2[:, 0] / det
        self._inv[:, 1, 0] = -d1[:, 1] / det
        self._inv[:, 1, 1] = d1[:, 0] / det
        self._scale = float(np.abs(mesh.vertices).max()) or 1.0

    def _bary(self, cell_ids: np.ndarray, pts: np.ndarray) -> np.ndarray:
        rel = pts - self._origin[cell_ids]
        lc = np.einsum("kij,kj->ki", self._inv[cell_ids], rel)
        return np.column_stack([1.0 - lc.sum(axis=1), lc])

    def locate(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cells and barycentric coordinates for query points (Q, 2)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        q = pts.shape[0]
        k = min(8, self.mesh.num_cells)
        _, cand = self._tree.query(pts, k=k)
        cand = cand.reshape(q, k)
        cells = np.full(q, -1, dtype=np.int64)
        coords = np.zeros((q, 3))
        tol = self.tol * self._scale
        remaining = np.arange(q)
        for col in range(k):
            if remaining.size == 0:
                break
            ids = cand[remaining, col]
            lam = self._bary(ids, pts[remaining])
            ok = lam.min(axis=1) >= -tol
            hit = remaining[ok]
            cells[hit] = ids[ok]
            coords[hit] = lam[ok]
            remaining = remaining[~ok]
        for idx in remaining:
            lam_all = self._bary(np.arange(self.mesh.num_cells), np.repeat(pts[idx:idx + 1], self.mesh.num_cells, axis=0))
            best = int(lam_all.min(axis=1).argmax())
            if lam_all[best].min() >= -tol:
                cells[idx] = best
                coords[idx] = lam_all[best]
            else:
                raise OutsideDomain(f"point {tuple(pts[idx])} lies outside the mesh "
                                    f"(worst barycentric {lam_all[best].min():.2e})")
        return cells, coords

    def interpolate(self, u: np.ndarray, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        cells, lam = self.locate(pts)
        return np.einsum("ki,ki->k", u[self.mesh.cells[cells]], lam)


_locators: "weakref.WeakKeyDictionary[Mesh, PointLocator]" = weakref.WeakKeyDictionary()


def locator_for(mesh: Mesh) -> PointLocator:
    loc = _locators.get(mesh)
    if loc is None:
        loc = PointLocator(mesh)
        _locators[mesh] = loc
    return loc


def interpolate(mesh: Mesh, u: np.ndarray, point) -> float:
    """P1 evaluation at one point inside the domain."""
    return float(locator_for(mesh).interpolate(u, np.asarray(point, dtype=float))[0])
