"""Geometric invariants of solved germs and the identities they satisfy.

Two independent discretizations are used side by side.  The solver's
cotangent Laplacian makes the integrated identities (Gauss-Bonnet, the
area identity, the normal Euler number) hold near-exactly at a converged
solution, because the discrete operator has exact zero row and column
sums.  The pointwise identity checks therefore use a second, unrelated
discretization: local least-squares polynomial fits on vertex patches
(finite-difference style).  Residuals of the frame equations and of the
curvature identity measured this way shrink at the discretization order
instead of collapsing to solver tolerance.

Conventions: gamma = e^{2u} h.  The adapted-frame scale s satisfies
2 s^2 = e^{2u} lambda^2 (the single place where the factor 2 between
gamma = 2 s^2 |dz|^2 and the conformal-factor convention is reconciled).
The L-frame components of the second fundamental form are
a = f1 e^{w} / sqrt(2), b = f2 e^{-w} / sqrt(2), with A1 = a + b and
A2 = i(a - b), so that A1 conj(A2) - conj(A1) A2 = 2i (|b|^2 - |a|^2).
"""

import math

import numpy as np

from .bundles import tensor_weight
from .errors import ShapeError, StaleSolutionError
from .germsolve import GermData3, GermData4, polish_solution
from .hypmesh import integrate, laplacian
from .mobius import conformal_factor

__all__ = [
    "InvariantReport",
    "compute_invariants",
    "frame_equation_residuals",
    "superminimal_test",
]

_RESIDUAL_KEYS = (
    "gauss_identity",
    "gauss_bonnet",
    "area_identity",
    "kappaperp_identity",
    "ricci_frame",
    "codazzi_frame",
    "chi_integral",
)


class InvariantReport:
    """Pointwise fields and integrated invariants of a solved germ."""

    def __init__(
        self,
        n,
        genus,
        l,
        kappa_gamma,
        kappa_perp,
        ii_norm_sq,
        u4_norm_sq,
        theta1_norm_sq,
        theta2_norm_sq,
        area,
        euler_integral,
        residuals,
    ):
        self.n = n
        self.genus = genus
        self.l = l
        self.kappa_gamma = kappa_gamma
        self.kappa_perp = kappa_perp
        self.ii_norm_sq = ii_norm_sq
        self.u4_norm_sq = u4_norm_sq
        self.theta1_norm_sq = theta1_norm_sq
        self.theta2_norm_sq = theta2_norm_sq
        self.area = area
        self.euler_integral = euler_integral
        self.residuals = residuals
        for key in _RESIDUAL_KEYS:
            if key not in residuals:
                raise ShapeError(f"residual key {key} missing")

    def to_dict(self):
        return {
            "n": self.n,
            "genus": self.genus,
            "l": self.l,
            "area": self.area,
            "euler_integral": self.euler_integral,
            "kappa_gamma_minmax": [
                float(np.min(self.kappa_gamma)),
                float(np.max(self.kappa_gamma)),
            ],
            "u4_sup": float(np.max(np.sqrt(np.abs(self.u4_norm_sq)))),
            "residuals": {k: float(v) for k, v in self.residuals.items()},
        }


def _require_converged(sol):
    if not sol.converged:
        raise StaleSolutionError("solution did not converge; refusing to report")


def _gamma_norms(data, sol):
    """Squared gamma-norms of the second-fundamental-form components."""
    em4u = np.exp(-4.0 * sol.u)
    if isinstance(data, GermData3):
        return em4u * data.t, None, None
    e2w = np.exp(2.0 * sol.w)
    th1 = em4u * e2w * data.t1
    th2 = em4u * data.t2 / e2w
    return th1 + th2, th1, th2


def _smooth_fields(data, sol):
    """Polished pointwise representatives of the solved fields (cached)."""
    if sol.u_smooth is None:
        polish_solution(data, sol)
    if isinstance(data, GermData3):
        return sol.u_smooth, None
    return sol.u_smooth, sol.w_smooth


def _codazzi_norm(mesh, sec):
    """Metric-normalized L2 norm of the dbar residual of a K^2-type
    section (zero when no residual is attached)."""
    if sec is None or sec.dbar_residual is None:
        return 0.0
    w_out = mesh.face_area * tensor_weight(mesh.face_centroid, 3)
    w_in = mesh.vertex_areas * tensor_weight(mesh.vertices, 2)
    num = np.sqrt(np.sum(w_out * np.abs(sec.dbar_residual) ** 2))
    den = np.sqrt(np.sum(w_in * np.abs(sec.values) ** 2))
    return float(num / max(den, 1e-300))


class _SmoothedSolution:
    """Adapter presenting the polished fields through the gamma-norm helper."""

    def __init__(self, u, w):
        self.u = u
        self.w = w


def frame_equation_residuals(data, sol):
    """Evaluate the adapted-frame equations with finite-difference fits.

    The derivatives act on the polished representatives (polish_solution),
    measured with the unweighted patch-fit Laplacian, which is independent
    of both the solver operator and the polish operator.  Returns sup
    norms of: the first frame (Gauss) equation, the Ricci equation
    expressed as the mismatch of the two kappa_perp formulas, and the
    Codazzi line as the dbar residual of the holomorphic data.
    """
    _require_converged(sol)
    mesh = data.mesh
    u, w = _smooth_fields(data, sol)
    sol_s = _SmoothedSolution(u, w)

    # log s^2 = 2u + log(lambda^2 / 2) is a chart expression
    def log_lam(z):
        return np.log(conformal_factor(z) ** 2 / 2.0)

    _, _, lap_logs2 = mesh.fd_fit(2.0 * u, chart_term=log_lam)
    lam2 = conformal_factor(mesh.vertices) ** 2
    s2 = np.exp(2.0 * u) * lam2 / 2.0
    ddbar_logs2 = 0.25 * lap_logs2  # del delbar = (1/4) flat laplacian

    ii_sq, th1_sq, th2_sq = _gamma_norms(data, sol_s)
    # -s^{-2} del delbar log s^2 + s^{-4} ||II(Z,Z)||^2 + 1, where the
    # frame-scale norm is ||II(Z,Z)||^2 = s^4 ||II||^2_gamma
    out = {}
    out["gauss_frame"] = float(np.max(np.abs(-ddbar_logs2 / s2 + ii_sq + 1.0)))

    if isinstance(data, GermData4):
        B = mesh.fd_laplacian_matrix(order=4, weighted=False)
        lap_w = B @ w
        kp_fd = np.exp(-2.0 * u) * (data.rho0 - lap_w)
        kp_alg = th2_sq - th1_sq
        out["ricci_frame"] = float(np.max(np.abs(kp_fd - kp_alg)))
        out["codazzi_frame"] = max(
            _codazzi_norm(mesh, data.theta1), _codazzi_norm(mesh, data.theta2)
        )
    else:
        out["ricci_frame"] = 0.0
        out["codazzi_frame"] = _codazzi_norm(mesh, data.q)
    return out


def compute_invariants(data, sol, identity_scale=None):
    """Full invariant report for a converged germ solution."""
    _require_converged(sol)
    mesh = data.mesh
    u = sol.u
    g = mesh.genus
    S = laplacian(mesh)
    a = mesh.vertex_areas
    lap_u = (S @ u) / a
    em2u = np.exp(-2.0 * u)
    kappa_gamma = em2u * (-1.0 - lap_u)

    ii_sq, th1_sq, th2_sq = _gamma_norms(data, sol)
    n = 4 if isinstance(data, GermData4) else 3
    if n == 4:
        l = data.L.degree
        lap_w = (S @ sol.w) / a
        kappa_perp = em2u * (data.rho0 - lap_w)
        u4_sq = 4.0 * th1_sq * th2_sq
        # exact by zero column sums of the cotangent matrix
        euler = float(np.sum(data.rho0 * a - S @ sol.w)) / (2.0 * math.pi)
    else:
        l = 0
        kappa_perp = None
        u4_sq = ii_sq**2
        euler = 0.0

    area = integrate(mesh, 1.0, conformal_factor_u=u)
    target_area = 4.0 * math.pi * (g - 1)
    ii_int = integrate(mesh, ii_sq, conformal_factor_u=u)

    residuals = {}
    residuals["gauss_identity"] = float(np.max(np.abs(kappa_gamma + 1.0 + ii_sq)))
    gb = float(np.sum(-(a + S @ u))) / (2.0 * math.pi)
    residuals["gauss_bonnet"] = abs(gb - (2 - 2 * g))
    residuals["area_identity"] = abs(area - target_area + ii_int)
    residuals["chi_integral"] = abs(euler - l)

    # pointwise curvature identity via the independent finite-difference
    # oracle: (kappa_perp)^2 = (1 + kappa_gamma)^2 - ||U4||^2, evaluated at
    # the polished representatives with the unweighted patch-fit Laplacian
    u_s, w_s = _smooth_fields(data, sol)
    B = mesh.fd_laplacian_matrix(order=4, weighted=False)
    em2u_s = np.exp(-2.0 * u_s)
    kg_fd = em2u_s * (-1.0 - B @ u_s)
    if n == 4:
        kp_fd = em2u_s * (data.rho0 - B @ w_s)
        ii_s, th1_s, th2_s = _gamma_norms(data, _SmoothedSolution(u_s, w_s))
        u4_s = 4.0 * th1_s * th2_s
    else:
        kp_fd = np.zeros_like(u_s)
        ii_s, _, _ = _gamma_norms(data, _SmoothedSolution(u_s, None))
        u4_s = ii_s**2
    residuals["kappaperp_identity"] = float(
        np.max(np.abs(kp_fd**2 - (1.0 + kg_fd) ** 2 + u4_s))
    )

    frame = frame_equation_residuals(data, sol)
    residuals["ricci_frame"] = frame["ricci_frame"]
    residuals["codazzi_frame"] = frame["codazzi_frame"]
    residuals["gauss_frame"] = frame["gauss_frame"]

    u4_sup = float(np.max(np.sqrt(np.abs(u4_sq))))
    ii_sup = float(np.max(ii_sq))
    if n == 4 and u4_sup < 1e-8 * max(ii_sup, 1.0) + 1e-12:
        sign = 1.0 if np.sum(kp_fd) >= 0 else -1.0
        residuals["supermin_identity"] = float(
            np.max(np.abs(kp_fd - sign * (-(1.0 + kg_fd))))
        )

    return InvariantReport(
        n=n,
        genus=g,
        l=l,
        kappa_gamma=kappa_gamma,
        kappa_perp=kappa_perp,
        ii_norm_sq=ii_sq,
        u4_norm_sq=u4_sq,
        theta1_norm_sq=th1_sq,
        theta2_norm_sq=th2_sq,
        area=area,
        euler_integral=euler,
        residuals=residuals,
    )


def superminimal_test(report, tol=1e-8):
    """Classify a report as superminimal (and which sign branch) or not.

    The quartic differential vanishes identically iff one of the theta
    components is zero; the branch is the sign in
    kappa_perp = +-||II||^2_gamma.
    """
    u4_sup = float(np.max(np.sqrt(np.abs(report.u4_norm_sq))))
    if u4_sup >= tol:
        return "NotSuperminimal"
    if report.n == 3:
        # vanishing U4 in the 3-space case means vanishing Hopf differential
        if float(np.max(report.ii_norm_sq)) >= tol:
            return "NotSuperminimal"
        return "SuperminimalPlus"
    plus = float(np.max(np.abs(report.kappa_perp - report.ii_norm_sq)))
    minus = float(np.max(np.abs(report.kappa_perp + report.ii_norm_sq)))
    return "SuperminimalPlus" if plus <= minus else "SuperminimalMinus"
