"""Exact classification arithmetic for the moduli of equivariant minimal
surfaces.

Everything here is integer and flag arithmetic: extension-class dimension
counts from Riemann-Roch, the component count and dimension of the moduli
space, stability verdicts from the vanishing pattern of the extension
classes, and the circle-orbit normal form of a class pair.  Numerical
inputs enter only as booleans (is this class nonzero with margin?), which
the caller produces from the harmonic-projection oracle; a flag of None
means the margin test was inconclusive and the verdict degrades to
Undetermined rather than guessing.
"""

import numpy as np

from .errors import DegenerateOrbitError, InvalidParameterError

__all__ = [
    "ModuliDescriptor",
    "VERDICTS",
    "h1_dim",
    "admissible_degrees",
    "moduli_dims",
    "classify",
    "secant_genericity",
    "orbit_normal_form",
    "classes_proportional",
]

VERDICTS = (
    "Stable",
    "StableDecomposable",
    "Polystable",
    "Unstable",
    "OutOfRange",
    "Undetermined",
)


def h1_dim(g, l):
    """Extension-class dimension 3(g-1)+l for an admissible degree l."""
    return 3 * (g - 1) + l


def admissible_degrees(g):
    """All degrees l with |l| < 2(g-1); exactly 4g-5 of them."""
    m = 2 * (g - 1)
    return list(range(-(m - 1), m))


def moduli_dims(g, n, l=0):
    """Exact dimension data of the moduli space containing the germ."""
    if n == 3:
        return {"total_dim": 6 * (g - 1)}
    return {
        "h1": h1_dim(g, l),
        "fiber_dim": 10 * g - 10,
        "total_dim": 10 * (g - 1),
        "components": 4 * g - 5,
    }


class ModuliDescriptor:
    """Classification record: verdict, flags, and exact dimension data."""

    def __init__(self, g, n, l, class_flags, verdict, linearly_full,
                 superminimal, decomposable, dims, w2):
        self.g = g
        self.n = n
        self.l = l
        self.class_flags = dict(class_flags)
        self.verdict = verdict
        self.linearly_full = linearly_full
        self.superminimal = superminimal
        self.decomposable = decomposable
        self.dims = dict(dims)
        self.w2 = w2

    def to_dict(self):
        return {
            "g": self.g,
            "n": self.n,
            "l": self.l,
            "class_flags": {k: v for k, v in self.class_flags.items()},
            "verdict": self.verdict,
            "linearly_full": self.linearly_full,
            "superminimal": self.superminimal,
            "decomposable": self.decomposable,
            "dims": self.dims,
            "w2": self.w2,
        }


def classify(g, n, l=0, class_flags=None):
    """Stability verdict from the vanishing pattern of the beta classes.

    class_flags: for n = 3 a dict with key "beta"; for n = 4 keys "beta1",
    "beta2" and optionally "proportional" (classes proportional with L
    trivial).  Flag values are True (nonzero with margin), False (zero
    with margin), or None (inconclusive).

    Degree l >= 1 is stable when the second class is nonzero and the
    secant-variety genericity certificate applies; l <= -1 mirrors with
    the first class; l = 0 needs both classes nonzero, and degenerates to
    the boundary copy of the 3-space moduli when L is trivial and the
    classes are proportional.
    """
    if g < 2:
        raise InvalidParameterError("genus must be at least 2")
    if n not in (3, 4):
        raise InvalidParameterError("n must be 3 or 4")
    flags = dict(class_flags or {})

    if n == 3:
        beta = flags.get("beta")
        if beta is None:
            verdict = "Undetermined"
        elif beta:
            verdict = "Stable"
        else:
            verdict = "Polystable"
        superminimal = beta is False
        return ModuliDescriptor(
            g, 3, 0, flags, verdict,
            linearly_full=(verdict == "Stable"),
            superminimal=superminimal,
            decomposable=superminimal,
            dims=moduli_dims(g, 3),
            w2=0,
        )

    dims = moduli_dims(g, 4, l)
    if abs(l) >= 2 * (g - 1):
        return ModuliDescriptor(
            g, 4, l, flags, "OutOfRange",
            linearly_full=False, superminimal=False, decomposable=False,
            dims=dims, w2=l % 2,
        )
    b1 = flags.get("beta1")
    b2 = flags.get("beta2")
    prop = flags.get("proportional", False)
    decomposable = False
    if l >= 1:
        lead = b2
        generic = secant_genericity(g, l)["generic_ok"]
        if lead is None or not generic:
            verdict = "Undetermined"
        elif lead:
            verdict = "Stable"
        else:
            verdict = "Unstable"
    elif l <= -1:
        lead = b1
        generic = secant_genericity(g, -l)["generic_ok"]
        if lead is None or not generic:
            verdict = "Undetermined"
        elif lead:
            verdict = "Stable"
        else:
            verdict = "Unstable"
    else:
        if b1 is None or b2 is None:
            verdict = "Undetermined"
        elif b1 and b2:
            if prop:
                verdict = "StableDecomposable"
                decomposable = True
            else:
                verdict = "Stable"
        elif not b1 and not b2:
            verdict = "Polystable"
            decomposable = True
        else:
            verdict = "Unstable"
    superminimal = (b1 is False) or (b2 is False)
    linearly_full = verdict == "Stable"
    return ModuliDescriptor(
        g, 4, l, flags, verdict,
        linearly_full=linearly_full,
        superminimal=superminimal,
        decomposable=decomposable,
        dims=dims,
        w2=l % 2,
    )


def secant_genericity(g, l):
    """Certificate that a generic extension class avoids the secant variety.

    For 1 <= l < 2(g-1): the class lives in a projective space of
    dimension l+3g-4 (sections of K tensor a degree-l line bundle, which
    number l+3(g-1)), the obstructing secant variety has dimension 2l-1,
    and genericity holds when 2l-1 < l+3g-4.
    """
    if not (1 <= l < 2 * (g - 1)):
        raise InvalidParameterError(
            f"degree {l} outside the certificate window [1, {2 * (g - 1) - 1}]"
        )
    h0 = l + 3 * (g - 1)
    secant_dim = 2 * l - 1
    ambient_dim = l + 3 * g - 4
    return {
        "h0_K_lambda": h0,
        "secant_dim": secant_dim,
        "ambient_dim": ambient_dim,
        "generic_ok": secant_dim < ambient_dim,
    }


def _norm(b, weights=None):
    b = np.asarray(b, dtype=complex)
    if weights is None:
        return float(np.sqrt(np.sum(np.abs(b) ** 2)))
    return float(np.sqrt(np.sum(np.asarray(weights) * np.abs(b) ** 2)))


def orbit_normal_form(beta1, beta2, weights=None):
    """Normal form of a class pair under a.(b1, b2) = (a b1, b2 / a).

    Both nonzero: rescale by the positive a equalizing the two norms;
    one zero: normalize the other to unit norm (the recorded scale is then
    the normalizing factor, outside the orbit proper).  Idempotent: a
    second application returns scale 1.
    """
    n1 = _norm(beta1, weights)
    n2 = _norm(beta2, weights)
    if n1 == 0.0 and n2 == 0.0:
        raise DegenerateOrbitError("both classes vanish; the orbit is a point")
    b1 = np.asarray(beta1, dtype=complex)
    b2 = np.asarray(beta2, dtype=complex)
    if n1 == 0.0:
        return (b1, b2 / n2), 1.0 / n2
    if n2 == 0.0:
        return (b1 / n1, b2), 1.0 / n1
    a = float(np.sqrt(n2 / n1))
    return (a * b1, b2 / a), a


def classes_proportional(beta1, beta2, weights=None, tol=1e-6):
    """Whether the two classes are complex-proportional (angular distance
    below tol after norm equalization)."""
    n1 = _norm(beta1, weights)
    n2 = _norm(beta2, weights)
    if n1 == 0.0 or n2 == 0.0:
        return False
    b1 = np.asarray(beta1, dtype=complex)
    b2 = np.asarray(beta2, dtype=complex)
    w = 1.0 if weights is None else np.asarray(weights)
    inner = np.sum(w * b1 * np.conj(b2))
    return 1.0 - abs(inner) / (n1 * n2) < tol
