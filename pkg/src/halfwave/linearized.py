"""Linearised operators L+ = D + 1 - (5/3) Q^{2/3} and L- = D + 1 - Q^{2/3}.

Solvers work on the isometric coordinates v = sqrt(w) f, where w are the
real-space quadrature weights, so every operator becomes a symmetric matrix
and the field inner product becomes the Euclidean one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg, minres
from scipy.linalg import eigh

from . import spectral as sp
from .errors import ConfigurationError, IterationError, SolvabilityError
from .ground_state import GroundState
from .spectral import SectorField

COUPLING = {"plus": 5.0 / 3.0, "minus": 1.0}


class LinearizedOperator:
    """L+ or L- restricted to one angular sector, as an immutable view on Q."""

    def __init__(self, gs: GroundState, kind: str, sector: int = 0):
        if kind not in COUPLING:
            raise ConfigurationError(f"kind must be 'plus' or 'minus', got {kind!r}")
        if sector not in sp.SECTORS:
            raise ConfigurationError(f"unsupported sector {sector}")
        self.gs = gs
        self.kind = kind
        self.sector = sector
        self.grid = gs.grid
        self.potential = COUPLING[kind] * np.abs(gs.Q.values.real) ** (2.0 / 3.0)
        self._sqrt_w = np.sqrt(self.grid.weights(sector))

    def __repr__(self):
        return f"LinearizedOperator({self.kind}, sector={self.sector}, n={self.grid.n})"

    @property
    def coupling(self) -> float:
        return COUPLING[self.kind]

    def apply(self, f: SectorField) -> SectorField:
        if f.sector != self.sector:
            raise ConfigurationError(f"operator acts on sector {self.sector}, field is {f.sector}")
        return sp.apply_d(f) + f.with_values((1.0 - self.potential) * f.values)

    __call__ = apply

    # isometric coordinates
    def to_vec(self, f: SectorField) -> np.ndarray:
        return self._sqrt_w * f.values

    def from_vec(self, v: np.ndarray) -> SectorField:
        return SectorField(self.grid, self.sector, v / self._sqrt_w)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v).reshape(-1)
        return self.to_vec(self.apply(self.from_vec(v))).real if np.isrealobj(v) else \
            self.to_vec(self.apply(self.from_vec(v)))

    def precond_vec(self, v: np.ndarray) -> np.ndarray:
        """(D + 1)^{-1} in isometric coordinates."""
        v = np.asarray(v).reshape(-1)
        out = self.to_vec(sp.apply_multiplier(self.from_vec(v), 1.0 / (self.grid.rho + 1.0)))
        return out.real if np.isrealobj(v) else out

    def kernel(self) -> list[SectorField]:
        """Known kernel directions in this sector."""
        Q = self.gs.Q
        if self.kind == "minus" and self.sector == 0:
            return [Q]
        if self.kind == "plus" and self.sector == 1:
            return [sp.gradient_component(Q)]
        return []

    def dense_matrix(self) -> np.ndarray:
        """Symmetric matrix of the operator in isometric coordinates (small grids only)."""
        n = self.grid.n
        if n > 2048:
            raise ConfigurationError("dense assembly limited to n <= 2048")
        eye = np.eye(n)
        cols = np.column_stack([self.matvec(eye[:, j]) for j in range(n)])
        return 0.5 * (cols + cols.T)


def _orthonormal_basis(vectors: list[np.ndarray]) -> np.ndarray:
    if not vectors:
        return np.zeros((0, 0))
    Y = np.column_stack(vectors)
    q, r = np.linalg.qr(Y)
    keep = np.abs(np.diag(r)) > 1e-12 * np.abs(r).max()
    if not np.all(keep):
        raise ConfigurationError("constraint fields are linearly dependent")
    return q


@dataclass(frozen=True)
class ConstrainedSolve:
    operator: LinearizedOperator
    rhs: SectorField
    constraints: tuple
    solution: SectorField
    residual: float
    kernel_projection: float
    iterations: int

    def constraint_residuals(self) -> list[float]:
        return [abs(sp.inner_product(c, self.solution)) for c in self.constraints]


def _projectors(n, basis):
    if basis.size == 0:
        return (lambda v: v)
    return lambda v: v - basis @ (basis.T @ v)


def solvability_projection(L: LinearizedOperator, g: SectorField) -> float:
    """Largest |(g, k)| / (||g|| ||k||) over the known kernel of L."""
    gn = g.norm()
    if gn == 0:
        return 0.0
    vals = [abs(sp.inner_product(k, g)) / (gn * k.norm()) for k in L.kernel()]
    return max(vals, default=0.0)


def solve_constrained(L: LinearizedOperator, g: SectorField, constraints=(),
                      solvability_tol: float = 1e-8, rtol: float = 1e-13,
                      maxiter: int = 2000) -> ConstrainedSolve:
    """Solve L f = g with f orthogonal to ``constraints`` and to ker L.

    Uses MINRES (L+ is indefinite) on the projected operator P L P + (I - P),
    preconditioned by P (D+1)^{-1} P + (I - P).
    """
    if g.sector != L.sector:
        raise ConfigurationError(f"rhs in sector {g.sector}, operator in {L.sector}")
    proj = solvability_projection(L, g)
    if proj > solvability_tol:
        k = L.kernel()[0]
        raise SolvabilityError(
            f"rhs is not orthogonal to ker L (relative projection {proj:.3e})",
            sp.inner_product(k, g))
    fields = list(L.kernel()) + [c for c in constraints]
    for c in fields:
        if c.sector != L.sector:
            raise ConfigurationError("constraint lives in another sector")
    basis = _orthonormal_basis([L.to_vec(c).real for c in fields]) if fields else np.zeros((L.grid.n, 0))
    P = _projectors(L.grid.n, basis)
    n = L.grid.n

    def solve_real(rhs_vec):
        b = P(rhs_vec)
        if not np.any(b):
            return np.zeros(n), 0
        A = LinearOperator((n, n), matvec=lambda v: P(L.matvec(P(v))) + (v - P(v)), dtype=float)
        M = LinearOperator((n, n), matvec=lambda v: P(L.precond_vec(P(v))) + (v - P(v)), dtype=float)
        history = []
        counter = {"k": 0}

        def cb(xk):
            counter["k"] += 1
            if counter["k"] % 25 == 0:
                history.append(float(np.linalg.norm(A @ xk - b) / np.linalg.norm(b)))

        x, info = minres(A, b, M=M, rtol=rtol, maxiter=maxiter, callback=cb)
        if info > 0:
            rel = np.linalg.norm(A @ x - b) / np.linalg.norm(b)
            if rel > 1e3 * rtol and rel > 1e-9:
                raise IterationError(f"MINRES stagnated at relative residual {rel:.3e}", history)
        return P(x), counter["k"]

    gv = L.to_vec(g)
    xr, it_r = solve_real(gv.real)
    xi, it_i = solve_real(gv.imag) if np.any(gv.imag) else (np.zeros(n), 0)
    f = L.from_vec(xr + 1j * xi)
    res = (L.apply(f) - g).norm()
    return ConstrainedSolve(L, g, tuple(constraints), f, res, proj, it_r + it_i)


def min_eigenvalue_projected(L: LinearizedOperator, constraints=(), count: int = 1,
                             dense: bool | None = None, tol: float = 1e-10,
                             maxiter: int = 3000, seed: int = 0):
    """Smallest eigenvalues of L on the orthogonal complement of ``constraints``.

    Returns (eigenvalues, eigenvector fields).  Dense symmetric eigensolve for
    n <= 2048 (or when forced); otherwise LOBPCG with (D+1)^{-1} preconditioning.
    """
    n = L.grid.n
    vecs = [L.to_vec(c).real for c in constraints]
    basis = _orthonormal_basis(vecs) if vecs else np.zeros((n, 0))
    if dense is None:
        dense = n <= 2048
    if dense:
        H = L.dense_matrix()
        if basis.shape[1]:
            full, _ = np.linalg.qr(np.column_stack([basis, np.eye(n)]))
            comp = full[:, basis.shape[1]:]
            Hc = comp.T @ H @ comp
            w, V = eigh(0.5 * (Hc + Hc.T), subset_by_index=[0, count - 1])
            V = comp @ V
        else:
            w, V = eigh(0.5 * (H + H.T), subset_by_index=[0, count - 1])
        return w[:count], [L.from_vec(V[:, j]) for j in range(count)]
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, max(count, 2) + 2))
    A = LinearOperator((n, n), matvec=L.matvec, matmat=lambda M: np.column_stack(
        [L.matvec(M[:, j]) for j in range(M.shape[1])]), dtype=float)
    Mop = LinearOperator((n, n), matvec=L.precond_vec, matmat=lambda M: np.column_stack(
        [L.precond_vec(M[:, j]) for j in range(M.shape[1])]), dtype=float)
    Y = basis if basis.shape[1] else None
    w, V, hist = lobpcg(A, X, M=Mop, Y=Y, tol=tol, maxiter=maxiter, largest=False,
                        retResidualNormsHistory=True)
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    last = np.asarray(hist[-1])[order] if hist else np.array([np.inf])
    if np.any(last[:count] > max(1e3 * tol, 1e-6)):
        raise IterationError(f"LOBPCG did not converge (residuals {last[:count]})",
                             [float(np.max(np.asarray(h))) for h in hist])
    return w[:count], [L.from_vec(V[:, j]) for j in range(count)]
