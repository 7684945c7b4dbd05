"""Principal-map Beltrami solver on the periodic grid via the Neumann series in the Beurling transform.

On the torus the solution is ``f(z) = z + c conj(z) + C(f_zbar)`` with
``c = mean(f_zbar)``: the periodic part is the mean-zero Cauchy transform and
the small linear term restores ``dbar f = f_zbar`` exactly.  When ``f_zbar``
has zero mean (e.g. radially symmetric data) this is ``z + C(f_zbar)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from . import kernels
from .beurling import MIN_SAMPLES_PER_SIDE, beurling_apply, cauchy_apply
from .grid import GridField


class ConvergenceError(RuntimeError):
    """Neumann series did not reach the requested tolerance."""

    def __init__(self, message, solution=None, tail_bound=None):
        super().__init__(message)
        self.solution = solution
        self.tail_bound = tail_bound


@dataclass(frozen=True, eq=False)
class BeltramiCoefficient:
    mu: GridField
    support: np.ndarray = None
    kappa: float = field(init=False)

    def __post_init__(self):
        kappa = float(np.max(np.abs(self.mu.samples)))
        if not kappa < 1.0:
            raise ValueError(f"kappa must be < 1 (got {kappa:.6g})")
        object.__setattr__(self, "kappa", kappa)
        if self.support is None:
            object.__setattr__(self, "support", np.abs(self.mu.samples) > 0)

    @property
    def K(self) -> float:
        return (1.0 + self.kappa) / (1.0 - self.kappa)


@dataclass(frozen=True, eq=False)
class PrincipalMapSolution:
    fzbar: GridField
    fz: GridField
    f: GridField
    J: np.ndarray
    linear: complex
    terms: int
    tail_bound: float
    term_norms: tuple
    kappa: float
    converged: bool = True

    def identity_residual(self) -> float:
        """``max |f_z - 1 - S(f_zbar)|`` recomputed from the stored fields."""
        return float(np.max(np.abs(self.fz.samples - 1.0 - beurling_apply(self.fzbar).samples)))

    def periodic_part(self) -> np.ndarray:
        z = self.f.z()
        return self.f.samples - z - self.linear * np.conj(z)

    def evaluate(self, z) -> np.ndarray:
        """``f`` at arbitrary points: bilinear interpolation of the periodic part plus the linear part."""
        z = np.asarray(z, dtype=np.complex128)
        g = self.f
        u = (z.real - g.origin[0]) / g.h - 0.5
        v = (z.imag - g.origin[1]) / g.h - 0.5
        per = kernels.bilinear_periodic(self.periodic_part(), u, v)
        return z + self.linear * np.conj(z) + per


def solve_principal(mu: BeltramiCoefficient, max_terms: int = 200, tol: float = 1e-12) -> PrincipalMapSolution:
    """Sum ``f_zbar = mu + mu S(mu) + mu S(mu S(mu)) + ...`` until a term's L2 norm drops below ``tol ||mu||``.

    Raises :class:`ConvergenceError` (carrying the partial solution) when
    ``max_terms`` is exhausted first.
    """
    if isinstance(mu, GridField):
        mu = BeltramiCoefficient(mu)
    field_ = mu.mu
    m = field_.samples
    kappa = mu.kappa
    mu_norm = field_.l2_norm()
    term = m.copy()
    acc = m.copy()
    norms = [mu_norm]
    converged = mu_norm == 0.0
    n_terms = 1
    while not converged and n_terms < max_terms:
        term = m * beurling_apply(field_.like(term)).samples
        acc += term
        n_terms += 1
        tn = float(np.sqrt(np.sum(np.abs(term) ** 2)) * field_.h)
        norms.append(tn)
        if tn < tol * mu_norm:
            converged = True
    fzbar = field_.like(acc)
    fz = field_.like(1.0 + beurling_apply(fzbar).samples)
    linear = fzbar.mean()
    z = field_.z()
    f = field_.like(z + linear * np.conj(z) + cauchy_apply(fzbar).samples)
    J = np.abs(fz.samples) ** 2 - np.abs(fzbar.samples) ** 2
    tail = kappa ** n_terms / (1.0 - kappa)
    sol = PrincipalMapSolution(fzbar, fz, f, J, linear, n_terms, tail, tuple(norms), kappa, converged)
    if not converged:
        raise ConvergenceError(f"Neumann series not converged after {n_terms} terms "
                               f"(last term {norms[-1]:.3g}, tail bound {tail:.3g})", sol, tail)
    return sol


def conformality_defect(sol: PrincipalMapSolution, mask) -> float:
    """Largest ``|f_zbar|`` at grid points outside ``mask``."""
    outside = ~np.asarray(mask, dtype=bool)
    if not outside.any():
        return 0.0
    return float(np.max(np.abs(sol.fzbar.samples[outside])))


def cube_boundary_points(x0, y0, side, spacing):
    k = max(int(np.ceil(side / spacing)), 1)
    s = np.linspace(0.0, side, k + 1)
    bottom = (x0 + s) + 1j * y0
    right = (x0 + side) + 1j * (y0 + s)
    top = (x0 + side - s) + 1j * (y0 + side)
    left = x0 + 1j * (y0 + side - s)
    return np.concatenate([bottom, right[1:], top[1:], left[1:-1]])


def point_set_diameter(pts) -> float:
    xy = np.column_stack([np.real(pts), np.imag(pts)])
    if len(xy) > 64:
        try:
            xy = xy[ConvexHull(xy).vertices]
        except Exception:
            pass
    if len(xy) < 2:
        return 0.0
    return float(pdist(xy).max())


def image_diameter(sol: PrincipalMapSolution, P) -> float:
    """Diameter of ``f`` sampled on the boundary of the cube ``P`` at grid spacing."""
    h = sol.f.h
    if P.side < MIN_SAMPLES_PER_SIDE * h * (1 - 1e-12):
        raise ValueError(f"cube side {P.side:g} spans fewer than {MIN_SAMPLES_PER_SIDE} samples")
    x0, y0 = P.bounds[0], P.bounds[1]
    pts = cube_boundary_points(x0, y0, P.side, h)
    return point_set_diameter(sol.evaluate(pts))


def identity_solution(n, L=2.0, origin=(-0.5, -0.5)) -> PrincipalMapSolution:
    return solve_principal(BeltramiCoefficient(GridField.zeros(n, L, origin)))
