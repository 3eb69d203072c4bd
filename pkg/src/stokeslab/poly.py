"""Exact bivariate polynomial arithmetic.

Used wherever a scalar field on the plane has to be integrated along paths
exactly (harmonic-conjugate style constructions, boundary values of
calibrations).  Coefficients are stored sparsely as ``{(i, j): c}`` for the
monomial ``z1**i * z2**j``.
"""

import numpy as np

_TOL = 1e-14


class Poly2:
    """Polynomial in two variables with exact differentiation/integration."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=None):
        self.coeffs = {}
        if coeffs:
            for (i, j), c in dict(coeffs).items():
                if abs(c) > 0.0:
                    self.coeffs[(int(i), int(j))] = float(c)

    # -- construction helpers ------------------------------------------------
    @classmethod
    def constant(cls, c):
        return cls({(0, 0): c})

    @classmethod
    def z1(cls):
        return cls({(1, 0): 1.0})

    @classmethod
    def z2(cls):
        return cls({(0, 1): 1.0})

    @classmethod
    def from_terms(cls, terms):
        """Build from an iterable of (i, j, c) triples (the JSON wire form)."""
        acc = {}
        for i, j, c in terms:
            key = (int(i), int(j))
            acc[key] = acc.get(key, 0.0) + float(c)
        return cls(acc)

    def terms(self):
        return sorted((i, j, c) for (i, j), c in self.coeffs.items())

    # -- ring operations -----------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        acc = dict(self.coeffs)
        for k, c in other.coeffs.items():
            acc[k] = acc.get(k, 0.0) + c
        return Poly2(acc)

    __radd__ = __add__

    def __neg__(self):
        return Poly2({k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) + (-self)

    def __mul__(self, other):
        other = _coerce(other)
        acc = {}
        for (i1, j1), c1 in self.coeffs.items():
            for (i2, j2), c2 in other.coeffs.items():
                k = (i1 + i2, j1 + j2)
                acc[k] = acc.get(k, 0.0) + c1 * c2
        return Poly2(acc)

    __rmul__ = __mul__

    # -- calculus ------------------------------------------------------------
    def dz1(self):
        return Poly2({(i - 1, j): c * i for (i, j), c in self.coeffs.items() if i > 0})

    def dz2(self):
        return Poly2({(i, j - 1): c * j for (i, j), c in self.coeffs.items() if j > 0})

    def int_z1(self):
        return Poly2({(i + 1, j): c / (i + 1) for (i, j), c in self.coeffs.items()})

    def int_z2(self):
        return Poly2({(i, j + 1): c / (j + 1) for (i, j), c in self.coeffs.items()})

    def on_axis1(self):
        """Restriction to {z2 = 0} as a Poly2 in z1 only."""
        return Poly2({(i, 0): c for (i, j), c in self.coeffs.items() if j == 0})

    # -- evaluation ----------------------------------------------------------
    def __call__(self, z):
        z = np.asarray(z, dtype=np.float64)
        z1, z2 = z[..., 0], z[..., 1]
        out = np.zeros_like(z1)
        for (i, j), c in self.coeffs.items():
            out = out + c * z1**i * z2**j
        return out

    def grad(self, z):
        z = np.asarray(z, dtype=np.float64)
        return np.stack([self.dz1()(z), self.dz2()(z)], axis=-1)

    def hess(self, z):
        z = np.asarray(z, dtype=np.float64)
        d1, d2 = self.dz1(), self.dz2()
        h11 = d1.dz1()(z)
        h12 = d1.dz2()(z)
        h22 = d2.dz2()(z)
        return np.stack(
            [np.stack([h11, h12], axis=-1), np.stack([h12, h22], axis=-1)], axis=-2
        )

    def equals(self, other, tol=_TOL):
        diff = self - _coerce(other)
        return all(abs(c) <= tol for c in diff.coeffs.values())

    def __repr__(self):
        if not self.coeffs:
            return "Poly2(0)"
        parts = [f"{c:+g}*z1^{i}*z2^{j}" for (i, j), c in sorted(self.coeffs.items())]
        return "Poly2(" + " ".join(parts) + ")"


def _coerce(x):
    if isinstance(x, Poly2):
        return x
    return Poly2.constant(float(x))


def path_potential(P, Q):
    """Exact potential F with grad F = (P, Q), F(0) = 0, via axis paths.

    Both P and Q must be ``Poly2``.  Raises ``ValueError`` when the field is
    not closed (d2 P != d1 Q), i.e. no potential exists.
    """
    if not P.dz2().equals(Q.dz1(), tol=1e-10):
        raise ValueError("field (P, Q) is not closed; no polynomial potential exists")
    first_leg = P.on_axis1().int_z1()  # int_0^{z1} P(t, 0) dt
    iq = Q.int_z2()
    second_leg = iq - iq.on_axis1()  # int_0^{z2} Q(z1, s) ds
    return first_leg + second_leg
