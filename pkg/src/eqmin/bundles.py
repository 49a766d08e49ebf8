"""Holomorphic line bundles K^m L^n on the discrete surface.

L is realized by a unitary connection of constant curvature density
c = l / (2(g-1)) per unit hyperbolic area, so deg L = l holds exactly by
construction.  Sections of K^m L^n are stored as vertex-class values of
the dz^m coefficient in the polygon chart (global unitary gauge for L);
the mesh carries the chart factors and cocycle shifts needed to read a
class value in any face chart.

The discrete dbar operator is a face-based least-squares Cauchy-Riemann
stencil: the six values reachable from a face (its corners and the
opposite corners of the three edge neighbours) are transported to the
face centroid and fitted with a full quadratic in (zeta, conj(zeta)); the
coefficient of conj(zeta) approximates the covariant (0,1)-derivative to
second order.
"""

import hashlib
import json

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    IndeterminateKernelError,
    InvalidParameterError,
    LinearSolveError,
    ShapeError,
)
from .mobius import conformal_factor

__all__ = [
    "LineBundleConnection",
    "DiscreteSection",
    "DbarOperator",
    "BasisResult",
    "make_line_bundle",
    "dbar_operator",
    "holomorphic_basis",
    "class_is_trivial",
    "tensor_weight",
]


def mesh_fingerprint(mesh):
    h = hashlib.sha256()
    h.update(f"{mesh.genus}:{mesh.resolution}:{mesh.n_vertices}:{mesh.n_faces}".encode())
    h.update(np.round(mesh.vertices, 12).tobytes())
    return h.hexdigest()[:16]


class LineBundleConnection:
    """Discrete U(1) bundle of degree l with constant curvature density.

    edge_transport[e] moves a value in the class frame at edges[e, 0] to
    the class frame at edges[e, 1]; the reversed transport is the complex
    conjugate.  face_curvature integrates to 2 pi l exactly because the
    curvature 2-form is prescribed as c times the hyperbolic area form.
    """

    def __init__(self, mesh, l):
        self.mesh = mesh
        self.degree = int(l)
        # rho0: curvature density against the hyperbolic area form, with
        # integral 2 pi l.  The transition functions carry the opposite
        # sign because the first Chern form is (i/2pi) F
        self.curvature_density = l / (2.0 * (mesh.genus - 1))
        self.transition_scale = -self.curvature_density
        self.edge_transport = np.exp(1j * self.transition_scale * mesh.edge_tau)
        self.face_curvature = self.curvature_density * mesh.face_area

    def face_holonomy(self):
        """Holonomy of the transport around each face (counter-clockwise)."""
        m = self.mesh
        t = self.edge_transport[m.face_edge]
        t = np.where(m.face_edge_sign == 1, t, np.conj(t))
        return t[:, 0] * t[:, 1] * t[:, 2]

    def holonomy_degree(self):
        """Degree recovered from the transport holonomy: the summed principal
        holonomy angles over 2 pi.  Integer up to quadrature error."""
        return float(np.sum(np.angle(self.face_holonomy()))) / (2.0 * np.pi)


def make_line_bundle(mesh, l):
    return LineBundleConnection(mesh, l)


class DiscreteSection:
    """Vertex-class values of a section of K^m L^n."""

    def __init__(self, bundle_type, values, degree_l=0, dbar_residual=None):
        self.bundle_type = tuple(bundle_type)
        self.values = np.asarray(values, dtype=complex)
        self.degree_l = int(degree_l)
        self.dbar_residual = dbar_residual

    def save(self, path, mesh=None):
        m, n = self.bundle_type
        data = {
            "m": m,
            "n": n,
            "l": self.degree_l,
            "mesh_hash": mesh_fingerprint(mesh) if mesh is not None else "",
            "values": [[f"{v.real:.17g}", f"{v.imag:.17g}"] for v in self.values],
        }
        with open(path, "w") as fh:
            json.dump(data, fh)

    @staticmethod
    def load(path, mesh=None):
        with open(path) as fh:
            data = json.load(fh)
        if mesh is not None and data["mesh_hash"]:
            if data["mesh_hash"] != mesh_fingerprint(mesh):
                raise ShapeError("section was saved for a different mesh")
        values = np.array([float(a) + 1j * float(b) for a, b in data["values"]])
        return DiscreteSection((data["m"], data["n"]), values, degree_l=data["l"])


def tensor_weight(z, m, u=None):
    """Pointwise squared-norm weight of the frame dz^m: (2/lambda_gamma^2)^m,
    for the background metric (u = None) or the induced metric e^{2u} h."""
    lam2 = conformal_factor(z) ** 2
    if u is not None:
        lam2 = lam2 * np.exp(2.0 * np.asarray(u))
    return (2.0 / lam2) ** m


class DbarOperator:
    """Sparse covariant (0,1)-derivative from vertex fields to face fields."""

    def __init__(self, matrix, mesh, bundle, m, n):
        self.matrix = matrix
        self.mesh = mesh
        self.bundle = bundle
        self.m = int(m)
        self.n = int(n)

    def __call__(self, values):
        return self.matrix @ np.asarray(values, dtype=complex)

    def weights(self, u_vertex=None):
        """Area-weighted norms: (w_in at vertices, w_out at faces).

        w_in weighs |f|^2 for f in K^m L^n; w_out weighs the |dbar f|^2
        face values, which live in K^m L^n tensor conj(K).
        """
        mesh = self.mesh
        if u_vertex is None:
            w_in = mesh.vertex_areas * tensor_weight(mesh.vertices, self.m)
            w_out = mesh.face_area * tensor_weight(mesh.face_centroid, self.m + 1)
        else:
            u_vertex = np.asarray(u_vertex, dtype=float)
            u_face = u_vertex[mesh.faces].mean(axis=1)
            w_in = (
                mesh.vertex_areas
                * np.exp(2.0 * u_vertex)
                * tensor_weight(mesh.vertices, self.m, u=u_vertex)
            )
            w_out = (
                mesh.face_area
                * np.exp(2.0 * u_face)
                * tensor_weight(mesh.face_centroid, self.m + 1, u=u_face)
            )
        return w_in, w_out

    def residual_norm(self, values, u_vertex=None):
        """Weighted L2 norm of dbar(values), normalized by the section norm."""
        w_in, w_out = self.weights(u_vertex)
        r = self(values)
        num = np.sqrt(np.sum(w_out * np.abs(r) ** 2))
        den = np.sqrt(np.sum(w_in * np.abs(values) ** 2))
        return num / max(den, 1e-300)


def dbar_operator(mesh, L, m, n):
    """Assemble the discrete dbar on sections of K^m L^n.

    L may be None when n = 0.  Kernel contains the constants exactly for
    (m, n) = (0, 0) since the stencil model includes the constant term.
    """
    if n != 0 and L is None:
        raise InvalidParameterError("a line bundle is required when n != 0")
    c = 0.0 if L is None else L.transition_scale
    F = mesh.n_faces
    zeta = mesh.stencil_coord - mesh.face_centroid[:, None]
    scale = np.max(np.abs(zeta), axis=1, keepdims=True)
    zs = zeta / scale
    # read factor: class value -> chart value at the stencil point,
    # parallel transported to the centroid along the chart segment
    read = mesh.stencil_kderiv ** (-m) * np.exp(
        1j * n * c * (mesh.stencil_gshift - mesh.stencil_omega)
    )
    A = np.stack(
        [
            np.ones_like(zs),
            zs,
            np.conj(zs),
            zs**2,
            zs * np.conj(zs),
            np.conj(zs) ** 2,
        ],
        axis=2,
    )
    Ainv = np.linalg.inv(A)
    # coefficient of conj(zeta): third row of the inverse, undo the scaling
    rows_coef = Ainv[:, 2, :] / scale
    entries = rows_coef * read
    rows = np.repeat(np.arange(F), 6)
    cols = mesh.stencil_class.ravel()
    M = sp.csr_matrix(
        (entries.ravel(), (rows, cols)), shape=(F, mesh.n_vertices), dtype=complex
    )
    return DbarOperator(M, mesh, L, m, n)


class BasisResult(list):
    """List of DiscreteSection with kernel-detection diagnostics attached."""

    def __init__(self, sections, singular_values, gap_ratio, warning=None):
        super().__init__(sections)
        self.singular_values = singular_values
        self.gap_ratio = gap_ratio
        self.warning = warning


def holomorphic_basis(dbar, expected_dim=None, gap_floor=10.0, max_dim=24):
    """Orthonormal basis (area-weighted) of the numerical dbar kernel.

    The kernel is detected by the largest ratio of consecutive singular
    values of the metric-normalized operator among the smallest few; a
    ratio below gap_floor raises an indeterminate-kernel error carrying
    the singular values.
    """
    mesh = dbar.mesh
    w_in, w_out = dbar.weights()
    B = sp.diags(np.sqrt(w_out)) @ dbar.matrix @ sp.diags(1.0 / np.sqrt(w_in))
    Bd = B.toarray()
    _, svals, Vh = np.linalg.svd(Bd, full_matrices=True)
    V = mesh.n_vertices
    s = np.zeros(V)
    s[: len(svals)] = svals
    s = s[::-1]  # ascending
    Vh = Vh[::-1]
    upper = min(max_dim, V - 1)
    floor = max(s[0], 1e-14 * s[-1])
    ratios = s[1 : upper + 1] / np.maximum(s[:upper], 1e-14 * s[-1])
    d = int(np.argmax(ratios)) + 1
    gap = float(ratios[d - 1])
    if gap < gap_floor:
        raise IndeterminateKernelError(
            f"no singular-value gap >= {gap_floor} (best {gap:.2f})",
            singular_values=s[: upper + 1].tolist(),
        )
    warning = None
    if expected_dim is not None and d != expected_dim:
        warning = f"detected kernel dimension {d}, expected {expected_dim}"
    l = 0 if dbar.bundle is None else dbar.bundle.degree
    sections = []
    for i in range(d):
        # right singular vectors are the conjugated rows of Vh
        vals = np.conj(Vh[i]) / np.sqrt(w_in)
        res = dbar(vals)
        sec = DiscreteSection((dbar.m, dbar.n), vals, degree_l=l, dbar_residual=res)
        sections.append(sec)
    return BasisResult(sections, s[: upper + 1], gap, warning)


def class_is_trivial(mesh, beta, metric_u, dbar, tol=1e-3):
    """Decide whether the Dolbeault class of a face-valued (0,1)-form is
    trivial, by harmonic projection in the metric e^{2u} h.

    beta must take values in the same K^m L^n as the supplied dbar
    operator (typically Hom(K, L^s) = K^{-1} L^s, which has no global
    holomorphic sections, so the projection is unique).  Returns
    (is_trivial, harmonic_norm): the weighted L2 norm of beta minus its
    best dbar-exact approximation, and the comparison with tol.
    """
    beta = np.asarray(beta, dtype=complex)
    if beta.shape[0] != mesh.n_faces:
        raise ShapeError("beta must be a face field")
    w_in, w_out = dbar.weights(metric_u)
    M = dbar.matrix
    W = sp.diags(w_out)
    lhs = (M.conj().T @ W @ M).tocsc()
    # small Tikhonov floor keeps the solve well posed if the discrete
    # kernel is only numerically trivial
    reg = 1e-12 * float(np.max(np.abs(lhs.diagonal())))
    lhs = lhs + reg * sp.identity(lhs.shape[0], format="csc")
    rhs = M.conj().T @ (w_out * beta)
    try:
        psi = spla.spsolve(lhs, rhs)
    except Exception as exc:
        raise LinearSolveError(f"harmonic projection solve failed: {exc}") from exc
    if not np.all(np.isfinite(psi)):
        raise LinearSolveError("harmonic projection returned non-finite values")
    resid = beta - M @ psi
    norm = float(np.sqrt(np.sum(w_out * np.abs(resid) ** 2)))
    return norm < tol, norm
