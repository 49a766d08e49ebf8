"""Elliptic solvers for the induced geometry of equivariant minimal surfaces.

Conformal gauge: the induced metric is gamma = e^{2u} h with h the
background hyperbolic metric.  Writing t for the pointwise h-norm density
of the holomorphic data (t = |f|^2 (2/lambda^2)^2 for f the dz^2
coefficient), the curvature equation kappa_gamma = -1 - ||II^{2,0}||^2
becomes the semilinear scalar equation

    Delta_h u = -1 + e^{2u} + e^{-2u} t_q                       (target H^3)

and, for target H^4 with W = L + L^{-1} and log-scale w of the metric on
L, the coupled system

    Delta_h u = -1 + e^{2u} + e^{-2u} (e^{2w} t_1 + e^{-2w} t_2)
    Delta_h w = rho_0 - e^{-2u} (e^{-2w} t_2 - e^{2w} t_1)

with rho_0 = l / (2(g-1)) the curvature density of L.  The squared
gamma-norms are then ||theta_1||^2 = e^{-4u} e^{2w} t_1 and
||theta_2||^2 = e^{-4u} e^{-2w} t_2, and the normal curvature satisfies
kappa_perp = e^{-2u}(rho_0 - Delta_h w) = ||theta_2||^2 - ||theta_1||^2.

Both systems are solved by damped Newton iteration from u = w = 0 with a
backtracking (halving) line search on the area-weighted residual norm.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    InvalidParameterError,
    LinearSolveError,
    NonConvergenceError,
    ShapeError,
    StagnationError,
)
from .hypmesh import laplacian
from .mobius import conformal_factor

__all__ = [
    "GermData3",
    "GermData4",
    "GermSolution",
    "t_density",
    "manufactured_forcing",
    "solve_gauss3",
    "solve_gauss_ricci4",
    "polish_solution",
]


def _exp(x):
    """exp with clipped argument; keeps rejected line-search states finite."""
    return np.exp(np.clip(x, -60.0, 60.0))


def t_density(mesh, values):
    """Pointwise h-norm density of a quadratic-differential-type section:
    |f|^2 (2/lambda^2)^2 at the vertices."""
    lam2 = conformal_factor(mesh.vertices) ** 2
    return np.abs(np.asarray(values)) ** 2 * (2.0 / lam2) ** 2


class GermData3:
    """Input data for a minimal surface in hyperbolic 3-space: the Hopf
    differential q, a holomorphic section of K^2."""

    def __init__(self, mesh, q=None, t_field=None):
        self.mesh = mesh
        self.q = q
        if t_field is not None:
            self.t = np.asarray(t_field, dtype=float)
        elif q is not None:
            self.t = t_density(mesh, q.values)
        else:
            self.t = np.zeros(mesh.n_vertices)
        if self.t.shape[0] != mesh.n_vertices:
            raise ShapeError("t field length does not match the mesh")


class GermData4:
    """Input data for a minimal surface in hyperbolic 4-space: line bundle
    L of degree l with |l| < 2(g-1), theta1 in H0(K^2 L), theta2 in
    H0(K^2 L^{-1})."""

    def __init__(self, mesh, L, theta1, theta2):
        self.mesh = mesh
        self.L = L
        l = L.degree
        if abs(l) >= 2 * (mesh.genus - 1):
            raise InvalidParameterError(
                f"degree {l} outside the admissible window |l| < {2 * (mesh.genus - 1)}"
            )
        self.theta1 = theta1
        self.theta2 = theta2
        self.t1 = (
            t_density(mesh, theta1.values)
            if theta1 is not None
            else np.zeros(mesh.n_vertices)
        )
        self.t2 = (
            t_density(mesh, theta2.values)
            if theta2 is not None
            else np.zeros(mesh.n_vertices)
        )
        self.rho0 = L.curvature_density


class GermSolution:
    """Solved conformal factor(s).

    u and w come from the cotangent-Laplacian Newton solve and make the
    integrated identities exact.  u_smooth and w_smooth, when present, are
    the collocation-polished representatives used for derivative-based
    pointwise diagnostics (see polish_solution).
    """

    def __init__(self, u, w=None, newton_trace=None, converged=False):
        self.u = u
        self.w = w
        self.newton_trace = newton_trace or []
        self.converged = converged
        self.u_smooth = None
        self.w_smooth = None


def manufactured_forcing(mesh, u_star):
    """The t field that makes the constant u_star an exact solution of the
    scalar curvature equation: 0 = -1 + e^{2u*} + e^{-2u*} t.

    Negative for u_star > 0; not realizable by holomorphic data, used only
    for solver-correctness checks.
    """
    t = np.exp(2.0 * u_star) * (1.0 - np.exp(2.0 * u_star))
    return np.full(mesh.n_vertices, t)


def _newton(x0, residual, jacobian, areas, tol, max_iter):
    """Damped Newton with halving line search on the weighted residual norm.

    residual returns the area-weighted equation values R (so the geometric
    equation is R / areas); the norm tracked is the L2 norm of R / areas
    against the area element, sqrt(sum R^2 / areas).
    """

    def norm(R):
        return float(np.sqrt(np.sum(R**2 / areas)))

    x = x0.copy()
    R = residual(x)
    nrm = norm(R)
    trace = [(0, nrm, 1.0)]
    for it in range(1, max_iter + 1):
        if nrm <= tol:
            return x, trace, True
        J = jacobian(x)
        try:
            lu = spla.splu(J.tocsc())
            delta = lu.solve(-R)
        except Exception as exc:
            raise LinearSolveError(f"Newton linear solve failed: {exc}") from exc
        if not np.all(np.isfinite(delta)):
            raise LinearSolveError("Newton step is non-finite")
        step = 1.0
        while True:
            x_try = x + step * delta
            R_try = residual(x_try)
            n_try = norm(R_try)
            if n_try < nrm:
                break
            step *= 0.5
            if step < 1e-8:
                raise StagnationError(
                    f"line search stagnated at iteration {it}", trace=trace
                )
        x, R, nrm = x_try, R_try, n_try
        trace.append((it, nrm, step))
    if nrm <= tol:
        return x, trace, True
    raise NonConvergenceError(
        f"Newton did not reach tol {tol:g} in {max_iter} iterations "
        f"(residual {nrm:g})",
        trace=trace,
    )


def solve_gauss3(data, tol=1e-10, max_iter=30, source=None):
    """Solve the scalar curvature equation for u on the given data.

    source, when provided, is added to the right-hand side:
    Delta_h u = -1 + e^{2u} + e^{-2u} t - source.
    """
    mesh = data.mesh
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    S = laplacian(mesh)
    a = mesh.vertex_areas
    t = data.t
    src = np.zeros_like(a) if source is None else np.asarray(source, dtype=float)

    def residual(u):
        return S @ u + a * (1.0 - _exp(2.0 * u) - _exp(-2.0 * u) * t + src)

    def jacobian(u):
        d = a * (-2.0 * _exp(2.0 * u) + 2.0 * _exp(-2.0 * u) * t)
        return S + sp.diags(d)

    u0 = np.zeros(mesh.n_vertices)
    u, trace, ok = _newton(u0, residual, jacobian, a, tol, max_iter)
    return GermSolution(u=u, newton_trace=trace, converged=ok)


def solve_gauss_ricci4(data, tol=1e-10, max_iter=30):
    """Solve the coupled curvature system for (u, w) on H^4 germ data."""
    mesh = data.mesh
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    V = mesh.n_vertices
    S = laplacian(mesh)
    a = mesh.vertex_areas
    t1, t2, rho0 = data.t1, data.t2, data.rho0

    if np.max(t1) == 0.0 and np.max(t2) == 0.0:
        # w decouples into Delta_h w = rho0, solvable only for l = 0 where
        # w is an arbitrary constant (fixed to 0); u solves the scalar case
        if data.L.degree != 0:
            raise InvalidParameterError(
                "zero sections are incompatible with a nonzero degree"
            )
        sol = solve_gauss3(GermData3(mesh), tol=tol, max_iter=max_iter)
        return GermSolution(
            u=sol.u,
            w=np.zeros(V),
            newton_trace=sol.newton_trace,
            converged=sol.converged,
        )

    def residual(x):
        u, w = x[:V], x[V:]
        P = _exp(2.0 * w) * t1 + _exp(-2.0 * w) * t2
        Q = _exp(-2.0 * w) * t2 - _exp(2.0 * w) * t1
        R1 = S @ u + a * (1.0 - _exp(2.0 * u) - _exp(-2.0 * u) * P)
        R2 = S @ w + a * (-rho0 + _exp(-2.0 * u) * Q)
        return np.concatenate([R1, R2])

    def jacobian(x):
        u, w = x[:V], x[V:]
        e2u, em2u = _exp(2.0 * u), _exp(-2.0 * u)
        P = _exp(2.0 * w) * t1 + _exp(-2.0 * w) * t2
        Q = _exp(-2.0 * w) * t2 - _exp(2.0 * w) * t1
        Juu = S + sp.diags(a * (-2.0 * e2u + 2.0 * em2u * P))
        Juw = sp.diags(a * em2u * 2.0 * Q)
        Jwu = sp.diags(a * (-2.0 * em2u) * Q)
        Jww = S + sp.diags(a * em2u * (-2.0) * P)
        return sp.bmat([[Juu, Juw], [Jwu, Jww]], format="csc")

    x0 = np.zeros(2 * V)
    aa = np.concatenate([a, a])
    x, trace, ok = _newton(x0, residual, jacobian, aa, tol, max_iter)
    return GermSolution(u=x[:V], w=x[V:], newton_trace=trace, converged=ok)


def polish_solution(data, sol, iterations=4, damping=0.03):
    """Damped collocation polish of a converged solution for pointwise
    diagnostics.

    The finite-element fields carry small grid-scale kinks at irregular
    vertices, because the lumped cotangent Laplacian is only weakly
    consistent there; finite-difference second derivatives of those fields
    then stall at O(1) locally.  This runs a few damped Gauss-Newton steps
    on the area-weighted least-squares collocation residual of the
    equations, measured with the pointwise-consistent patch-fit Laplacian.
    The damping (Marquardt scaling of the normal matrix) keeps the
    near-neutral rough modes of the fit operator unexcited, so the steps
    remove the kinks without absorbing rough truncation error into the
    fields.  The corrected fields differ from the originals by O(h^2) and
    are stored on the solution as u_smooth / w_smooth; the original fields
    are untouched.
    """
    mesh = data.mesh
    V = mesh.n_vertices
    a = mesh.vertex_areas
    C = mesh.fd_laplacian_matrix(order=4, weighted=True)

    if isinstance(data, GermData3):
        t = data.t

        def resid(x):
            u = x[:V]
            return C @ u - (-1.0 + _exp(2.0 * u) + _exp(-2.0 * u) * t)

        def jac(x):
            u = x[:V]
            return (C + sp.diags(-2.0 * _exp(2.0 * u) + 2.0 * _exp(-2.0 * u) * t)).tocsr()

        x = sol.u.copy()
        aa = a
    else:
        t1, t2, rho0 = data.t1, data.t2, data.rho0

        def resid(x):
            u, w = x[:V], x[V:]
            e2w, em2w = _exp(2.0 * w), _exp(-2.0 * w)
            em2u = _exp(-2.0 * u)
            P = e2w * t1 + em2w * t2
            Q = em2w * t2 - e2w * t1
            R1 = C @ u - (-1.0 + _exp(2.0 * u) + em2u * P)
            R2 = C @ w - (rho0 - em2u * Q)
            return np.concatenate([R1, R2])

        def jac(x):
            u, w = x[:V], x[V:]
            e2u, em2u = _exp(2.0 * u), _exp(-2.0 * u)
            e2w, em2w = _exp(2.0 * w), _exp(-2.0 * w)
            P = e2w * t1 + em2w * t2
            Q = em2w * t2 - e2w * t1
            J11 = C + sp.diags(-2.0 * e2u + 2.0 * em2u * P)
            J12 = sp.diags(2.0 * em2u * Q)
            J21 = sp.diags(-2.0 * em2u * Q)
            J22 = C + sp.diags(-2.0 * em2u * P)
            return sp.bmat([[J11, J12], [J21, J22]], format="csr")

        x = np.concatenate([sol.u, sol.w if sol.w is not None else np.zeros(V)])
        aa = np.concatenate([a, a])

    W = sp.diags(aa)

    def wnorm(R):
        return float(np.sqrt(np.sum(aa * R**2)))

    for _ in range(iterations):
        R = resid(x)
        J = jac(x)
        N = (J.T @ W @ J).tocsc()
        N = N + damping * sp.diags(np.abs(N.diagonal()) + 1e-300)
        try:
            step = spla.splu(N).solve(-(J.T @ (aa * R)))
        except Exception as exc:
            raise LinearSolveError(f"polish solve failed: {exc}") from exc
        base = wnorm(R)
        frac = 1.0
        while frac > 1e-4:
            x_try = x + frac * step
            if wnorm(resid(x_try)) < base:
                x = x_try
                break
            frac *= 0.5

    if isinstance(data, GermData3):
        sol.u_smooth = x[:V]
    else:
        sol.u_smooth = x[:V]
        sol.w_smooth = x[V:]
    return sol
