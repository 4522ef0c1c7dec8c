"""Polynomial graph spectral filters on the normalized Laplacian.

A graph signal X (one feature vector per node) is filtered by a polynomial
of the normalized Laplacian L = D^{-1/2} (D - A) D^{-1/2}, whose spectrum
lies in [0, 2]. Filters are expressed in one of five polynomial bases:

========== ============================== ==========================
basis      P_k evaluated on               matrix operand
========== ============================== ==========================
monomial   x^k, x = 1 - lambda            I - L   (L via a flag)
bernstein  binom(K,k) (1-l/2)^(K-k)(l/2)^k  L (lambda in [0, 2])
chebyshev2 Gegenbauer with alpha = 1      I - L
gegenbauer C_k^alpha(x), x = 1 - lambda   I - L
jacobi     P_k^(a,b)(x),  x = 1 - lambda  I - L
========== ============================== ==========================

Gegenbauer polynomials follow the recurrence

    P_0 = 1,  P_1 = 2 alpha x,
    P_k = (1/k) [2 x (k + alpha - 1) P_{k-1} - (k + 2 alpha - 2) P_{k-2}],

orthogonal on [-1, 1] under the weight (1 - x^2)^(alpha - 1/2). Convolution
is computed by running the recurrence on vectors (never materializing dense
P_k(L)), and `spectral_oracle_conv` provides the slow eigendecomposition
route U g(Lambda) U^T X used to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import NumericalError, ParameterError, ShapeError

__all__ = [
    "BASES",
    "Adjacency",
    "GraphSpectrum",
    "FilterBank",
    "SignalDensity",
    "normalized_laplacian",
    "eigendecompose",
    "basis_eval",
    "filter_response",
    "graph_conv",
    "spectral_oracle_conv",
    "signal_density",
    "fit_weight_alpha",
    "orthogonality_residual",
]

BASES = ("monomial", "bernstein", "chebyshev2", "gegenbauer", "jacobi")

_EIGEN_GAP = 1e-8  # eigenvalues closer than this count as repeated
_SIGN_EPS = 1e-12


@dataclass(frozen=True)
class Adjacency:
    """Symmetric nonnegative adjacency with zero diagonal."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"adjacency must be square, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ParameterError("adjacency contains non-finite entries")
        if np.any(m < 0):
            raise ParameterError("adjacency entries must be nonnegative")
        if not np.allclose(m, m.T, atol=1e-12):
            raise ParameterError("adjacency must be symmetric")
        if np.any(np.abs(np.diag(m)) > 0):
            raise ParameterError("adjacency diagonal must be zero")
        object.__setattr__(self, "matrix", m)

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class GraphSpectrum:
    """Eigendecomposition of a normalized Laplacian.

    eigenvalues are ascending; each eigenvector column has its first
    entry of magnitude > 1e-12 made positive so decompositions are
    reproducible across runs.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    laplacian: np.ndarray


@dataclass(frozen=True)
class FilterBank:
    """A degree-K polynomial filter with per-dimension coefficients.

    coefficients has shape (K+1, D); column d holds the polynomial
    coefficients of the filter applied to feature dimension d. A single
    column is broadcast across all dimensions.
    """

    basis: str
    degree: int
    coefficients: np.ndarray
    alpha: float = 1.0
    jacobi_a: float | None = None
    jacobi_b: float | None = None
    monomial_on_laplacian: bool = False

    def __post_init__(self):
        if self.basis not in BASES:
            raise ParameterError(f"unknown basis {self.basis!r}, expected one of {BASES}")
        coeff = np.asarray(self.coefficients, dtype=np.float64)
        if coeff.ndim == 1:
            coeff = coeff[:, None]
        if coeff.ndim != 2:
            raise ShapeError("coefficients must be (K+1,) or (K+1, D)")
        if self.degree < 0 or coeff.shape[0] != self.degree + 1:
            raise ShapeError(
                f"coefficient rows ({coeff.shape[0]}) must equal degree+1 ({self.degree + 1})")
        if self.basis in ("gegenbauer", "chebyshev2") and not self.alpha > -0.5:
            raise ParameterError("gegenbauer alpha must exceed -1/2")
        object.__setattr__(self, "coefficients", coeff)

    def jacobi_pair(self) -> tuple[float, float]:
        """Jacobi exponents; default a = b = alpha - 1/2 (the Gegenbauer weight)."""
        a = self.alpha - 0.5 if self.jacobi_a is None else self.jacobi_a
        b = self.alpha - 0.5 if self.jacobi_b is None else self.jacobi_b
        if not (a > -1.0 and b > -1.0):
            raise ParameterError("jacobi exponents must exceed -1")
        return float(a), float(b)


@dataclass(frozen=True)
class SignalDensity:
    """Spectral energy density of a graph signal on the eigenvalue grid.

    cumulative[i] is the total energy at eigenvalues <= grid[i]; density
    is its finite-difference derivative (the leading cell reuses the first
    positive spacing so a point mass at lambda_min still shows up).
    """

    grid: np.ndarray
    density: np.ndarray
    cumulative: np.ndarray


# ---------------------------------------------------------------------------
# Laplacian and eigendecomposition
# ---------------------------------------------------------------------------

def normalized_laplacian(adj: Adjacency | np.ndarray) -> np.ndarray:
    """L = D^{-1/2} (D - A) D^{-1/2}, with zero rows/columns for isolated nodes."""
    if not isinstance(adj, Adjacency):
        adj = Adjacency(np.asarray(adj))
    a = adj.matrix
    deg = a.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    lap = -inv_sqrt[:, None] * a * inv_sqrt[None, :]
    lap[np.diag_indices_from(lap)] += (deg > 0).astype(np.float64)
    return (lap + lap.T) / 2.0


def eigendecompose(laplacian: np.ndarray) -> GraphSpectrum:
    lap = np.asarray(laplacian, dtype=np.float64)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ShapeError(f"laplacian must be square, got {lap.shape}")
    if not np.allclose(lap, lap.T, atol=1e-10):
        raise ShapeError("laplacian must be symmetric")
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed to converge: {exc}") from exc
    order = np.argsort(eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    for j in range(eigenvectors.shape[1]):
        col = eigenvectors[:, j]
        nz = np.flatnonzero(np.abs(col) > _SIGN_EPS)
        if nz.size and col[nz[0]] < 0:
            eigenvectors[:, j] = -col
    return GraphSpectrum(eigenvalues=eigenvalues, eigenvectors=eigenvectors, laplacian=lap)


# ---------------------------------------------------------------------------
# basis evaluation
# ---------------------------------------------------------------------------

def _gegenbauer_values(x: np.ndarray, degree: int, alpha: float) -> np.ndarray:
    """Stack P_0..P_K at x, by the three-term recurrence."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((degree + 1,) + x.shape, dtype=np.float64)
    out[0] = 1.0
    if degree >= 1:
        out[1] = 2.0 * alpha * x
    for k in range(2, degree + 1):
        out[k] = (2.0 * x * (k + alpha - 1.0) * out[k - 1]
                  - (k + 2.0 * alpha - 2.0) * out[k - 2]) / k
    return out

def _jacobi_values(x: np.ndarray, degree: int, a: float, b: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((degree + 1,) + x.shape, dtype=np.float64)
    out[0] = 1.0
    if degree >= 1:
        out[1] = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x
    for k in range(2, degree + 1):
        c1 = 2.0 * k * (k + a + b) * (2.0 * k + a + b - 2.0)
        c2 = (2.0 * k + a + b - 1.0) * (a * a - b * b)
        c3 = (2.0 * k + a + b - 1.0) * (2.0 * k + a + b) * (2.0 * k + a + b - 2.0)
        c4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * (2.0 * k + a + b)
        out[k] = ((c2 + c3 * x) * out[k - 1] - c4 * out[k - 2]) / c1
    return out

def _bernstein_values(x: np.ndarray, degree: int) -> np.ndarray:
    """Bernstein basis of fixed degree K on lambda = 1 - x in [0, 2]."""
    x = np.asarray(x, dtype=np.float64)
    lo = (1.0 - x) / 2.0   # lambda / 2
    hi = (1.0 + x) / 2.0   # 1 - lambda / 2
    out = np.empty((degree + 1,) + x.shape, dtype=np.float64)
    for k in range(degree + 1):
        out[k] = comb(degree, k) * hi ** (degree - k) * lo ** k
    return out

def _monomial_values(x: np.ndarray, degree: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((degree + 1,) + x.shape, dtype=np.float64)
    out[0] = 1.0
    for k in range(1, degree + 1):
        out[k] = out[k - 1] * x
    return out


def _basis_values(basis: str, degree: int, x: np.ndarray, alpha: float = 1.0,
                  jacobi_a: float | None = None, jacobi_b: float | None = None) -> np.ndarray:
    """P_0..P_K stacked, evaluated at x in [-1, 1] (x = 1 - lambda)."""
    if basis == "gegenbauer":
        return _gegenbauer_values(x, degree, alpha)
    if basis == "chebyshev2":
        return _gegenbauer_values(x, degree, 1.0)
    if basis == "jacobi":
        a = alpha - 0.5 if jacobi_a is None else jacobi_a
        b = alpha - 0.5 if jacobi_b is None else jacobi_b
        return _jacobi_values(x, degree, a, b)
    if basis == "bernstein":
        return _bernstein_values(x, degree)
    if basis == "monomial":
        return _monomial_values(x, degree)
    raise ParameterError(f"unknown basis {basis!r}")


def basis_eval(basis: str, k: int, x, alpha: float = 1.0, degree: int | None = None,
               jacobi_a: float | None = None, jacobi_b: float | None = None):
    """Evaluate the k-th basis polynomial at x in [-1, 1] (x = 1 - lambda).

    Bernstein needs the family degree K (its members depend on it); for the
    other bases ``degree`` defaults to k.
    """
    if k < 0:
        raise ParameterError("polynomial index k must be nonnegative")
    if basis in ("gegenbauer", "chebyshev2") and not alpha > -0.5:
        raise ParameterError("gegenbauer alpha must exceed -1/2")
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x_arr) > 1.0 + 1e-9):
        raise ParameterError("basis argument x must lie in [-1, 1]")
    if basis == "bernstein":
        if degree is None:
            raise ParameterError("bernstein basis requires the family degree")
        if k > degree:
            raise ParameterError("bernstein index k exceeds family degree")
    deg = degree if degree is not None else k
    values = _basis_values(basis, deg, x_arr, alpha, jacobi_a, jacobi_b)[k]
    return float(values) if np.isscalar(x) or x_arr.ndim == 0 else values


def filter_response(bank: FilterBank, lambdas: np.ndarray) -> np.ndarray:
    """g(lambda) for each feature dimension; shape (len(lambdas), D)."""
    lam = np.atleast_1d(np.asarray(lambdas, dtype=np.float64))
    if np.any(lam < -1e-9) or np.any(lam > 2.0 + 1e-9):
        raise ParameterError("eigenvalue arguments must lie in [0, 2]")
    if bank.basis == "monomial" and bank.monomial_on_laplacian:
        values = _monomial_values(lam, bank.degree)
    elif bank.basis == "bernstein":
        values = _bernstein_values(1.0 - lam, bank.degree)
    else:
        a, b = (bank.jacobi_pair() if bank.basis == "jacobi" else (None, None))
        values = _basis_values(bank.basis, bank.degree, 1.0 - lam, bank.alpha, a, b)
    return np.einsum("kl,kd->ld", values, bank.coefficients)


# ---------------------------------------------------------------------------
# convolution: recurrence route and eigendecomposition oracle
# ---------------------------------------------------------------------------

def _resolve_laplacian(adj_or_laplacian) -> np.ndarray:
    """Adjacency objects are converted; raw arrays are taken as L itself."""
    if isinstance(adj_or_laplacian, Adjacency):
        return normalized_laplacian(adj_or_laplacian)
    lap = np.asarray(adj_or_laplacian, dtype=np.float64)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ShapeError(f"operator must be square, got {lap.shape}")
    return lap


def _theta_apply(stack: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    """Combine stacked P_k(M) X terms with per-dimension coefficients."""
    k1 = coefficients.shape[0]
    width = coefficients.shape[1]
    if width not in (1, stack.shape[-1]):
        raise ShapeError(
            f"coefficient columns ({width}) must be 1 or match the signal's "
            f"feature dimension ({stack.shape[-1]})")
    out = np.zeros_like(stack[0])
    for k in range(k1):
        out += stack[k] * coefficients[k]  # (D,) or (1,) broadcasts on last axis
    return out


def graph_conv(bank: FilterBank, adj_or_laplacian, x_t: np.ndarray) -> np.ndarray:
    """Filter the node-axis signal x_t (N, ..., D) through the bank.

    Runs the three-term recurrence on vectors so only K matrix-vector
    products against the (sparse-able) operator are needed.
    """
    lap = _resolve_laplacian(adj_or_laplacian)
    x = np.asarray(x_t, dtype=np.float64)
    if x.ndim < 2 or x.shape[0] != lap.shape[0]:
        raise ShapeError(
            f"signal must be (N, ..., D) with N={lap.shape[0]}, got {x.shape}")
    n = lap.shape[0]
    flat = x.reshape(n, -1)
    degree = bank.degree

    if bank.basis == "bernstein":
        half = 0.5 * lap
        stack = np.empty((degree + 1,) + flat.shape, dtype=np.float64)
        for k in range(degree + 1):
            term = flat
            for _ in range(k):
                term = half @ term
            for _ in range(degree - k):
                term = term - half @ term  # (I - L/2) term
            stack[k] = comb(degree, k) * term
        return _theta_apply(stack.reshape((degree + 1,) + x.shape),
                            bank.coefficients)

    if bank.basis == "monomial":
        mat = lap if bank.monomial_on_laplacian else np.eye(n) - lap
        stack = np.empty((degree + 1,) + flat.shape, dtype=np.float64)
        stack[0] = flat
        for k in range(1, degree + 1):
            stack[k] = mat @ stack[k - 1]
        return _theta_apply(stack.reshape((degree + 1,) + x.shape),
                            bank.coefficients)

    mat = np.eye(n) - lap  # all remaining bases run on x = 1 - lambda
    stack = np.empty((degree + 1,) + flat.shape, dtype=np.float64)
    stack[0] = flat
    if bank.basis in ("gegenbauer", "chebyshev2"):
        alpha = 1.0 if bank.basis == "chebyshev2" else bank.alpha
        if degree >= 1:
            stack[1] = 2.0 * alpha * (mat @ flat)
        for k in range(2, degree + 1):
            stack[k] = (2.0 * (k + alpha - 1.0) * (mat @ stack[k - 1])
                        - (k + 2.0 * alpha - 2.0) * stack[k - 2]) / k
    else:  # jacobi
        a, b = bank.jacobi_pair()
        if degree >= 1:
            stack[1] = 0.5 * (a - b) * flat + 0.5 * (a + b + 2.0) * (mat @ flat)
        for k in range(2, degree + 1):
            c1 = 2.0 * k * (k + a + b) * (2.0 * k + a + b - 2.0)
            c2 = (2.0 * k + a + b - 1.0) * (a * a - b * b)
            c3 = (2.0 * k + a + b - 1.0) * (2.0 * k + a + b) * (2.0 * k + a + b - 2.0)
            c4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * (2.0 * k + a + b)
            stack[k] = (c2 * stack[k - 1] + c3 * (mat @ stack[k - 1])
                        - c4 * stack[k - 2]) / c1
    return _theta_apply(stack.reshape((degree + 1,) + x.shape), bank.coefficients)


def spectral_oracle_conv(spectrum: GraphSpectrum, bank: FilterBank,
                         x_t: np.ndarray) -> np.ndarray:
    """Slow reference route: U g(Lambda) U^T x, per feature dimension."""
    u = spectrum.eigenvectors
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape[0] != u.shape[0]:
        raise ShapeError("signal node count does not match the spectrum")
    responses = filter_response(bank, spectrum.eigenvalues)  # (N, D) or (N, 1)
    hat = np.einsum("ni,n...->i...", u, x)
    if x.ndim == 2:
        gains = responses if responses.shape[1] == x.shape[1] else responses[:, [0] * x.shape[1]]
        scaled = hat * gains
    else:
        gains = responses if responses.shape[1] == x.shape[-1] else np.broadcast_to(
            responses[:, :1], (u.shape[0], x.shape[-1]))
        scaled = hat * gains[:, None, :]
    return np.einsum("ni,i...->n...", u, scaled)


# ---------------------------------------------------------------------------
# spectral energy density and weight fitting
# ---------------------------------------------------------------------------

def signal_density(spectrum: GraphSpectrum, x_t: np.ndarray) -> SignalDensity:
    """Energy of U^T x per eigenvalue, merged over repeated eigenvalues."""
    x = np.asarray(x_t, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    hat = spectrum.eigenvectors.T @ x
    energy = (hat ** 2).sum(axis=1)
    lam = spectrum.eigenvalues

    grid, grouped = [], []
    for value, e in zip(lam, energy):
        if grid and value - grid[-1] < _EIGEN_GAP:
            grouped[-1] += e
        else:
            grid.append(float(value))
            grouped.append(float(e))
    grid = np.asarray(grid)
    grouped = np.asarray(grouped)
    cumulative = np.cumsum(grouped)

    density = np.zeros_like(grouped)
    if grid.size > 1:
        spacings = np.diff(grid)
        density[0] = grouped[0] / spacings[0]
        density[1:] = grouped[1:] / spacings
    else:
        density[0] = grouped[0]
    return SignalDensity(grid=grid, density=density, cumulative=cumulative)


def gegenbauer_weight(x: np.ndarray, alpha: float) -> np.ndarray:
    return (1.0 - np.asarray(x) ** 2) ** (alpha - 0.5)


def fit_weight_alpha(density: SignalDensity,
                     alpha_grid: np.ndarray | None = None) -> tuple[float, float]:
    """Grid-search the Gegenbauer weight exponent matching a signal density.

    Both the density and each candidate weight (1-x^2)^(alpha-1/2) are
    normalized to unit trapezoid mass over the interior of the x = 1 - lambda
    grid before the squared distance is taken. Ties resolve to the smaller
    alpha (the grid is ascending and argmin returns the first minimizer).
    """
    if alpha_grid is None:
        alpha_grid = np.arange(0.05, 3.0 + 1e-9, 0.01)
    x = 1.0 - density.grid
    interior = np.abs(x) < 1.0 - 1e-9
    if interior.sum() < 2:
        raise ParameterError("density grid has fewer than two interior points")
    xi = x[interior]
    di = density.density[interior]
    order = np.argsort(xi)
    xi, di = xi[order], di[order]
    mass = np.trapezoid(di, xi)
    if not mass > 0:
        raise ParameterError("signal density carries no interior energy")
    di = di / mass

    best_alpha, best_residual = float(alpha_grid[0]), np.inf
    for alpha in alpha_grid:
        w = gegenbauer_weight(xi, float(alpha))
        w_mass = np.trapezoid(w, xi)
        if not np.isfinite(w_mass) or w_mass <= 0:
            continue
        residual = float(((di - w / w_mass) ** 2).sum())
        if residual < best_residual - 1e-15:
            best_alpha, best_residual = float(alpha), residual
    return best_alpha, best_residual


# ---------------------------------------------------------------------------
# orthogonality diagnostics
# ---------------------------------------------------------------------------

def orthogonality_residual(basis: str, jmax: int = 4, alpha: float = 1.0,
                           jacobi_a: float | None = None, jacobi_b: float | None = None,
                           nodes: int = 32) -> float:
    """Max |integral of P_j P_k w| over j != k <= jmax, by Gauss-Jacobi quadrature.

    The weight w is the basis's own orthogonality weight for the orthogonal
    families and the uniform weight for monomial/bernstein (which is the
    point: their residual is far from zero).
    """
    from scipy.special import roots_jacobi

    if basis in ("gegenbauer", "chebyshev2"):
        a = b = (1.0 if basis == "chebyshev2" else alpha) - 0.5
    elif basis == "jacobi":
        a = alpha - 0.5 if jacobi_a is None else jacobi_a
        b = alpha - 0.5 if jacobi_b is None else jacobi_b
    else:
        a = b = 0.0
    xq, wq = roots_jacobi(nodes, a, b)
    values = _basis_values(basis, jmax, xq, alpha, jacobi_a, jacobi_b)
    gram = np.einsum("q,iq,jq->ij", wq, values, values)
    off = gram - np.diag(np.diag(gram))
    return float(np.abs(off).max())
