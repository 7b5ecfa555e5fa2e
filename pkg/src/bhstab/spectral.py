"""Neumann Laplacian on grid domains: assembly, lowest eigenpairs,
connectivity, and refinement studies.

The operator is stored as an integer-valued 5-point stencil matrix times
the scalar 1/h^2.  Dropped links at the boundary give the natural
(no-flux) discretization: row sums vanish identically, so each connected
component contributes one exact zero eigenvalue, and applying the
operator to a constant vector returns exact zeros in floating point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.ndimage import label as _ndimage_label
from scipy.sparse.linalg import lobpcg

from .domain import GridDomain, ShapeSpec, generate

__all__ = [
    "NeumannOperator",
    "SpectralResult",
    "ConvergenceStudy",
    "EigensolverError",
    "assemble",
    "lowest_eigenpairs",
    "connected_components",
    "convergence_study",
    "extrapolate_geometric",
]

MAX_EIGENPAIRS = 8
ITERATION_BUDGET = 2000

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)


class EigensolverError(RuntimeError):
    """Raised when the iteration budget is exhausted; carries the best
    residuals reached."""

    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class NeumannOperator:
    """No-flux finite-difference Laplacian of a grid domain.

    ``stencil`` holds the integer-valued part (diagonal = number of active
    neighbors, off-diagonal = -1 per link); the physical operator is
    ``(1/h^2) * stencil``.  Active cells are indexed in row-major
    (y, then x) order, matching ``GridDomain.inside_centers``.
    """

    h: float
    shape: tuple
    index_map: np.ndarray
    stencil: sp.csr_matrix

    @property
    def n_active(self) -> int:
        return self.stencil.shape[0]

    @property
    def scale(self) -> float:
        return 1.0 / (self.h * self.h)

    def matrix(self) -> sp.csr_matrix:
        """The physical operator (1/h^2) * stencil as a CSR matrix."""
        return self.stencil * self.scale

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.scale * (self.stencil @ v)

    def to_grid(self, v: np.ndarray) -> np.ndarray:
        """Scatter a coefficient vector to the (ny, nx) grid; NaN outside."""
        grid = np.full(self.shape, np.nan)
        grid[self.index_map >= 0] = v
        return grid


@dataclass(frozen=True)
class SpectralResult:
    """Ascending eigenvalues with h^2-weighted orthonormal eigenvectors.

    ``eigenvectors[:, i]`` lives on the active cells (row-major order);
    ``residuals[i]`` is the h^2-weighted norm of A v - mu v.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray


def assemble(d: GridDomain) -> NeumannOperator:
    """Build the 5-point no-flux Laplacian over the inside cells."""
    cells = d.cells
    n = int(np.count_nonzero(cells))
    if n == 0:
        raise ValueError("cannot assemble an operator on an empty domain")
    index_map = np.full(cells.shape, -1, dtype=np.int64)
    index_map[cells] = np.arange(n)

    pairs_a = []
    pairs_b = []
    right = cells[:, :-1] & cells[:, 1:]
    pairs_a.append(index_map[:, :-1][right])
    pairs_b.append(index_map[:, 1:][right])
    up = cells[:-1, :] & cells[1:, :]
    pairs_a.append(index_map[:-1, :][up])
    pairs_b.append(index_map[1:, :][up])
    a = np.concatenate(pairs_a)
    b = np.concatenate(pairs_b)

    degree = np.zeros(n, dtype=np.int64)
    np.add.at(degree, a, 1)
    np.add.at(degree, b, 1)

    rows = np.concatenate([a, b, np.arange(n)])
    cols = np.concatenate([b, a, np.arange(n)])
    data = np.concatenate([-np.ones(a.size), -np.ones(b.size), degree.astype(float)])
    stencil = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    return NeumannOperator(h=d.h, shape=cells.shape, index_map=index_map, stencil=stencil)


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    # Fix each eigenvector's sign: largest-magnitude entry positive,
    # lowest index on ties — keeps downstream searches deterministic.
    out = vectors.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        j = int(np.argmax(np.abs(col)))
        if col[j] < 0.0:
            out[:, i] = -col
    return out


def _verify_pairs(op: NeumannOperator, lam: np.ndarray, vec: np.ndarray, tol: float):
    """Normalize, rescale to physical units, and check every residual
    against ``tol * max(1, eigenvalue)``.  Returns (eigenvalues, vectors,
    residuals, all_ok)."""
    vec = vec / np.linalg.norm(vec, axis=0)
    residuals = op.scale * np.linalg.norm(
        op.stencil @ vec - vec * lam[None, :], axis=0
    )
    eigenvalues = op.scale * lam
    ok = bool((residuals <= tol * np.maximum(1.0, np.abs(eigenvalues))).all())
    return eigenvalues, vec, residuals, ok


def lowest_eigenpairs(
    op: NeumannOperator,
    k: int,
    tol: float = 1e-8,
    seed: int = 0,
    maxiter: int = ITERATION_BUDGET,
) -> SpectralResult:
    """The k smallest eigenvalues (with multiplicity) and eigenvectors.

    Small systems are solved densely; otherwise a seeded block LOBPCG
    iteration with an algebraic-multigrid preconditioner runs on the
    integer stencil, which keeps the iteration's conditioning independent
    of h.  A degenerate cluster straddling the block edge can make the
    iteration stagnate, so a stalled attempt retries with a wider guard
    block before giving up.  Every returned pair is verified against
    ``residual <= tol * max(1, eigenvalue)``; failure raises
    ``EigensolverError`` with the best residuals reached.
    """
    n = op.n_active
    if not (1 <= k <= MAX_EIGENPAIRS):
        raise ValueError(f"k={k} outside [1, {MAX_EIGENPAIRS}]")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of active cells {n}")

    if n < 5 * min(k + 4, n):
        lam, vec = np.linalg.eigh(op.stencil.toarray())
        eigenvalues, vec, residuals, ok = _verify_pairs(op, lam[:k], vec[:, :k], tol)
    else:
        # The kernel is known exactly: one indicator vector per connected
        # component of the stencil graph (integer row sums annihilate
        # them).  Handing the iteration these vectors as constraints and
        # solving only for the nonzero modes keeps the iterate basis
        # well-conditioned; a repeated zero eigenvalue inside the block
        # otherwise degrades the Rayleigh-Ritz step.
        n_comp, comp_labels = sp.csgraph.connected_components(op.stencil, directed=False)
        kernel = np.zeros((n, n_comp))
        for c in range(n_comp):
            members = comp_labels == c
            kernel[members, c] = 1.0 / math.sqrt(np.count_nonzero(members))
        n_iter = k - n_comp
        if n_iter <= 0:
            eigenvalues, vec, residuals, ok = _verify_pairs(
                op, np.zeros(k), kernel[:, :k], tol
            )
        else:
            rng = np.random.default_rng(seed)
            # The multigrid setup estimates spectral radii with the global
            # numpy RNG; pin it so reruns are bit-reproducible.
            state = np.random.get_state()
            np.random.seed(seed)
            try:
                ml = pyamg.smoothed_aggregation_solver(
                    op.stencil, B=kernel, max_coarse=64
                )
            finally:
                np.random.set_state(state)
            precond = ml.aspreconditioner(cycle="V")
            best = None
            blocks_tried = []
            for extra in (4, 8, 12):
                block = min(n_iter + extra, n - n_comp)
                if blocks_tried and block == blocks_tried[-1]:
                    break
                blocks_tried.append(block)
                x0 = rng.standard_normal((n, block))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    lam_pos, vec_pos = lobpcg(
                        op.stencil,
                        x0,
                        M=precond,
                        Y=kernel,
                        tol=tol / op.scale,
                        maxiter=maxiter,
                        largest=False,
                    )
                order = np.argsort(lam_pos)[:n_iter]
                lam = np.concatenate([np.zeros(n_comp), lam_pos[order]])
                cand = np.hstack([kernel, vec_pos[:, order]])
                resort = np.argsort(lam, kind="stable")
                eigenvalues, vec, residuals, ok = _verify_pairs(
                    op, lam[resort], cand[:, resort], tol
                )
                if ok:
                    break
                score = float(
                    np.max(residuals / np.maximum(1.0, np.abs(eigenvalues)))
                )
                if best is None or score < best[0]:
                    best = (score, eigenvalues, vec, residuals)
            if not ok:
                eigenvalues, vec, residuals = best[1], best[2], best[3]

    if not ok:
        raise EigensolverError(
            f"eigensolver did not meet tol={tol} after {maxiter} iterations: "
            f"residuals {residuals.tolist()}",
            residuals,
        )
    # h^2-weighted normalization: sum h^2 u^2 = 1.
    vec = _canonical_signs(vec / op.h)
    return SpectralResult(eigenvalues=eigenvalues, eigenvectors=vec, residuals=residuals)


def connected_components(d: GridDomain) -> int:
    """Number of 4-neighbor connected components of the inside cells."""
    _, count = _ndimage_label(d.cells, structure=_CROSS)
    return int(count)


def extrapolate_geometric(v1: float, v2: float, v3: float, ratio: float, label: str = "value"):
    """Aitken extrapolation of three values on a geometric step sequence
    (coarse to fine, step shrinking by ``ratio``).

    Returns (extrapolated, observed_order); both NaN, with a warning, when
    the difference sequence is non-monotone or not contracting.
    """
    d1 = v2 - v1
    d2 = v3 - v2
    if d1 * d2 <= 0.0 or abs(d2) >= abs(d1):
        warnings.warn(
            f"{label}: non-contracting refinement differences "
            f"({d1:.3e}, {d2:.3e}); extrapolation skipped",
            stacklevel=2,
        )
        return math.nan, math.nan
    order = math.log(abs(d1) / abs(d2)) / math.log(ratio)
    return v3 + d2 * d2 / (d1 - d2), order


@dataclass(frozen=True)
class ConvergenceStudy:
    """Eigenvalues across a refinement sequence with Aitken extrapolation.

    ``eigenvalues[i, j]`` is eigenvalue j at ``h_values[i]``; entries of
    ``extrapolated`` / ``observed_order`` are NaN where the difference
    sequence was non-monotone (a warning is emitted in that case).
    """

    h_values: tuple
    eigenvalues: np.ndarray
    extrapolated: np.ndarray
    observed_order: np.ndarray


def convergence_study(
    spec: ShapeSpec,
    h_list,
    k: int,
    tol: float = 1e-8,
    seed: int = 0,
) -> ConvergenceStudy:
    """Solve on a geometric refinement sequence and extrapolate each
    eigenvalue, reporting the observed convergence order."""
    h_values = tuple(float(h) for h in h_list)
    if len(h_values) < 3:
        raise ValueError("need at least 3 resolutions for extrapolation")
    if any(a <= b for a, b in zip(h_values, h_values[1:])):
        raise ValueError("h_list must be strictly decreasing")
    ratios = [a / b for a, b in zip(h_values, h_values[1:])]
    if any(abs(r - ratios[0]) > 1e-12 * ratios[0] for r in ratios):
        raise ValueError(f"h_list must refine geometrically, got ratios {ratios}")

    table = np.empty((len(h_values), k))
    for i, h in enumerate(h_values):
        d = generate(spec, h)
        result = lowest_eigenpairs(assemble(d), k, tol=tol, seed=seed)
        table[i] = result.eigenvalues

    extrapolated = np.full(k, np.nan)
    observed_order = np.full(k, np.nan)
    ratio = ratios[0]
    for j in range(k):
        if max(abs(table[i, j]) for i in range(len(h_values))) < 1e-10:
            extrapolated[j] = 0.0
            continue
        extrapolated[j], observed_order[j] = extrapolate_geometric(
            table[-3, j], table[-2, j], table[-1, j], ratio, label=f"eigenvalue {j}"
        )
    return ConvergenceStudy(
        h_values=h_values,
        eigenvalues=table,
        extrapolated=extrapolated,
        observed_order=observed_order,
    )
