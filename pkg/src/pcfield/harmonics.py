"""Spherical-harmonic machinery on the unit sphere.

Dimension counts of harmonic spaces in ambient dimension ``n >= 3``,
Gegenbauer polynomials, real orthonormal harmonics on the 2-sphere
(``n = 3``), and quadrature-based analysis / synthesis of band-limited
fields.

Conventions
-----------
Real harmonics, no Condon-Shortley phase.  Within degree ``m`` the order
index ``l`` runs from 1 to ``2m + 1``: the zonal harmonic first, then the
cosine / sine pair of each azimuthal order in ascending order,

    l = 1        zonal (order 0)
    l = 2o       cos(o * phi) harmonic,  o = 1 .. m
    l = 2o + 1   sin(o * phi) harmonic.

All sphere points are (theta, phi) with colatitude theta in [0, pi] and
longitude phi in [0, 2*pi).
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import lpmv, roots_legendre


class GridResolutionError(ValueError):
    """Raised when a sphere grid cannot resolve the requested degree."""


def surface_area(n):
    """Surface measure of the unit sphere embedded in ``R^n``."""
    if n < 3:
        raise ValueError(f"ambient dimension must be >= 3, got {n}")
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def harmonic_count(m, n):
    """Number of linearly independent spherical harmonics of degree ``m``.

    For ``n = 3`` this reduces to the familiar ``2m + 1``.
    """
    if n < 3:
        raise ValueError(f"ambient dimension must be >= 3, got {n}")
    if m < 0:
        raise ValueError(f"degree must be >= 0, got {m}")
    if m == 0:
        return 1
    return (2 * m + n - 2) * math.factorial(m + n - 3) // (
        math.factorial(n - 2) * math.factorial(m)
    )


def gegenbauer(m, alpha, z):
    """Evaluate the Gegenbauer polynomial ``C_m^alpha`` at ``z``.

    Uses the three-term recurrence

        j * C_j = 2 z (j + alpha - 1) C_{j-1} - (j + 2 alpha - 2) C_{j-2},

    which is exact for ``m`` in {0, 1} and numerically stable on [-1, 1].
    Accepts scalar or array ``z``.
    """
    if m < 0:
        raise ValueError(f"degree must be >= 0, got {m}")
    z = np.asarray(z, dtype=float)
    c_prev = np.ones_like(z)
    if m == 0:
        return c_prev[()]
    c = 2.0 * alpha * z
    for j in range(2, m + 1):
        c, c_prev = (2.0 * z * (j + alpha - 1.0) * c
                     - (j + 2.0 * alpha - 2.0) * c_prev) / j, c
    return c[()]


@dataclass(frozen=True)
class HarmonicIndex:
    """Degree / order / ambient-dimension triple identifying one harmonic."""

    m: int
    l: int
    n: int = 3

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"ambient dimension must be >= 3, got {self.n}")
        if self.m < 0:
            raise ValueError(f"degree must be >= 0, got {self.m}")
        count = harmonic_count(self.m, self.n)
        if not 1 <= self.l <= count:
            raise ValueError(
                f"order l={self.l} outside [1, {count}] for degree {self.m}, n={self.n}"
            )


def flat_index(m, l):
    """Position of harmonic (m, l) in the degree-major flattening (n = 3)."""
    return m * m + l - 1


def n_harmonics(m_max):
    """Total number of harmonics of degree <= m_max on the 2-sphere."""
    return (m_max + 1) ** 2


def evaluate_harmonic(idx, theta, phi):
    """Real orthonormal spherical harmonic at points of the 2-sphere.

    Only ``n = 3`` is supported for point evaluation; counts and
    Gegenbauer values are available for general ``n``.
    """
    if idx.n != 3:
        raise ValueError(
            f"point evaluation is implemented for n = 3 only, got n = {idx.n}"
        )
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    m = idx.m
    if idx.l == 1:
        order = 0
    else:
        order = idx.l // 2
    norm = math.sqrt(
        (2 * m + 1) / (4.0 * math.pi)
        * math.factorial(m - order) / math.factorial(m + order)
    )
    # lpmv carries the Condon-Shortley factor (-1)^order; remove it.
    leg = lpmv(order, m, np.cos(theta)) * (-1.0) ** order
    if order == 0:
        return norm * leg
    if idx.l % 2 == 0:
        return math.sqrt(2.0) * norm * leg * np.cos(order * phi)
    return math.sqrt(2.0) * norm * leg * np.sin(order * phi)


@dataclass
class SphereGrid:
    """Quadrature grid on the 2-sphere.

    ``theta``, ``phi`` and ``weights`` are flat arrays of equal length; the
    weights sum to the sphere's surface area 4*pi.  Grids built by
    :func:`gauss_legendre_grid` record their resolution so that analysis
    routines can check band limits.
    """

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    n_theta: int | None = None
    n_phi: int | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if not (self.theta.shape == self.phi.shape == self.weights.shape):
            raise ValueError("theta, phi, weights must have matching shapes")

    @property
    def n_nodes(self):
        return self.theta.size

    @property
    def area(self):
        return float(self.weights.sum())

    def max_resolved_degree(self):
        """Largest degree whose harmonics this grid integrates exactly."""
        if self.n_theta is not None and self.n_phi is not None:
            return min(self.n_theta - 1, (self.n_phi - 1) // 2)
        # Unstructured grid: fall back to a node-count heuristic.
        m = 0
        while (m + 2) * (2 * m + 3) <= self.n_nodes:
            m += 1
        return m

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theta", "phi", "weight"])
            for t, p, w in zip(self.theta, self.phi, self.weights):
                writer.writerow([repr(float(t)), repr(float(p)), repr(float(w))])

    @classmethod
    def from_csv(cls, path):
        theta, phi, weights = [], [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                theta.append(float(row["theta"]))
                phi.append(float(row["phi"]))
                weights.append(float(row["weight"]))
        return cls(np.array(theta), np.array(phi), np.array(weights))


def gauss_legendre_grid(m_max):
    """Product quadrature grid resolving harmonics up to degree ``m_max``.

    Gauss-Legendre nodes in cos(theta) times a uniform periodic grid in
    phi; exact for band-limited integrands of degree <= 2*m_max + 1.
    """
    if m_max < 0:
        raise ValueError(f"m_max must be >= 0, got {m_max}")
    n_theta = m_max + 1
    n_phi = max(2 * m_max + 1, 1)
    x, w = roots_legendre(n_theta)
    theta = np.arccos(x)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    theta_full = np.repeat(theta, n_phi)
    phi_full = np.tile(phi, n_theta)
    weights = np.repeat(w, n_phi) * (2.0 * math.pi / n_phi)
    return SphereGrid(theta_full, phi_full, weights, n_theta=n_theta, n_phi=n_phi)


def design_matrix(m_max, grid):
    """Matrix of harmonic values, shape (n_nodes, (m_max + 1)^2)."""
    cols = []
    for m in range(m_max + 1):
        for l in range(1, 2 * m + 2):
            cols.append(evaluate_harmonic(HarmonicIndex(m, l), grid.theta, grid.phi))
    return np.column_stack(cols)


def _check_resolution(grid, m_max):
    resolved = grid.max_resolved_degree()
    if resolved < m_max:
        if grid.n_theta is not None and grid.n_phi is not None:
            raise GridResolutionError(
                f"grid with n_theta={grid.n_theta}, n_phi={grid.n_phi} resolves "
                f"degree {resolved} only; degree {m_max} needs n_theta >= {m_max + 1} "
                f"and n_phi >= {2 * m_max + 1}"
            )
        raise GridResolutionError(
            f"grid with {grid.n_nodes} nodes resolves degree {resolved} only; "
            f"degree {m_max} needs at least {(m_max + 1) * (2 * m_max + 1)} nodes"
        )


def decompose_field(samples, m_max, grid):
    """Project field samples onto harmonics of degree <= m_max.

    Returns the coefficient vector in degree-major order (use
    :func:`flat_index` to address a single (m, l) entry).  The grid must
    resolve degree ``m_max``; products of two band-limited factors are then
    integrated exactly and analysis inverts :func:`synthesize_field` up to
    rounding.
    """
    samples = np.asarray(samples)
    if samples.shape != (grid.n_nodes,):
        raise ValueError(
            f"samples shape {samples.shape} does not match grid ({grid.n_nodes},)"
        )
    _check_resolution(grid, m_max)
    design = design_matrix(m_max, grid)
    return design.T @ (grid.weights * samples)


def synthesize_field(coefficients, m_max, grid):
    """Evaluate the band-limited field with the given harmonic coefficients."""
    coefficients = np.asarray(coefficients)
    expected = n_harmonics(m_max)
    if coefficients.shape != (expected,):
        raise ValueError(
            f"expected {expected} coefficients for m_max={m_max}, "
            f"got shape {coefficients.shape}"
        )
    design = design_matrix(m_max, grid)
    return design @ coefficients
