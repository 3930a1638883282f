"""Small multivariate polynomials with exact gradients and Hessians.

Used for shear-stage potentials and magnetic/scalar potentials.  Terms are
(coefficient, exponent-tuple) pairs; evaluation is vectorized over leading
axes so a stage can process millions of sample points in one call.
"""

from itertools import combinations_with_replacement

import numpy as np

__all__ = ["Polynomial", "random_polynomial"]


class Polynomial:
    """sum_k c_k * prod_j x_j^{e_kj} in ``n`` variables."""

    def __init__(self, n, terms):
        self.n = int(n)
        self.terms = []
        for coeff, expo in terms:
            expo = tuple(int(e) for e in expo)
            if len(expo) != self.n or any(e < 0 for e in expo):
                raise ValueError(f"bad exponent tuple {expo}")
            if coeff != 0.0:
                self.terms.append((float(coeff), expo))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c, e in self.terms:
            term = np.full(x.shape[:-1], c)
            for j, ej in enumerate(e):
                if ej:
                    term = term * x[..., j] ** ej
            out += term
        return out

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for c, e in self.terms:
            for j, ej in enumerate(e):
                if not ej:
                    continue
                term = np.full(x.shape[:-1], c * ej)
                for k, ek in enumerate(e):
                    pw = ek - 1 if k == j else ek
                    if pw:
                        term = term * x[..., k] ** pw
                out[..., j] += term
        return out

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.n,))
        for c, e in self.terms:
            for j, ej in enumerate(e):
                if not ej:
                    continue
                for i, ei in enumerate(e):
                    mult = ej * (ei - (1 if i == j else 0))
                    if not mult:
                        continue
                    term = np.full(x.shape[:-1], c * mult)
                    for k, ek in enumerate(e):
                        pw = ek - (1 if k == j else 0) - (1 if k == i else 0)
                        if pw:
                            term = term * x[..., k] ** pw
                    out[..., i, j] += term
        return out

    def __repr__(self):
        return f"Polynomial(n={self.n}, terms={self.terms})"


def random_polynomial(n, rng, degree=4, min_degree=2, coeff_range=0.5):
    """Random polynomial with all monomials of total degree in
    [min_degree, degree], coefficients uniform in +-coeff_range."""
    terms = []
    for d in range(min_degree, degree + 1):
        for combo in combinations_with_replacement(range(n), d):
            e = [0] * n
            for j in combo:
                e[j] += 1
            terms.append((rng.uniform(-coeff_range, coeff_range), tuple(e)))
    return Polynomial(n, terms)
