"""Tilted double-well potential W and its derivatives.

The toolkit works with quartic wells W(u) with a nondegenerate minimum at
u = b_minus where W(b_minus) = 0, and a strictly lower minimum at b_plus
(W(b_plus) < 0, the "tilt").  The default family is

    W(u) = (u^2 - 1)^2 / 4 + gamma * (u^3/3 - u - 2/3),

which keeps b_minus = -1 exact and is valid for gamma in (0, 1).  The tilt
guarantees a homoclinic connection to b_minus (built in profile1d) rather
than a heteroclinic front.
"""

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import WellNotTilted, WellNonconvexAtMinus

VALIDATION_TOL = 1e-12


class WellSpec:
    """Quartic double-well potential.

    Parameters
    ----------
    gamma : float, optional
        Tilt parameter of the default family.  Ignored if `coeffs` given.
    coeffs : array-like, optional
        Ascending polynomial coefficients of W (degree <= 4).
    b_minus, b_plus : float
        The two wells.  Defaults match the default family.
    """

    def __init__(self, gamma=0.3, coeffs=None, b_minus=-1.0, b_plus=1.0):
        if coeffs is None:
            # (u^2-1)^2/4 + gamma (u^3/3 - u - 2/3)
            base = np.array([0.25, 0.0, -0.5, 0.0, 0.25])
            tilt = np.array([-2.0 / 3.0, -1.0, 0.0, 1.0 / 3.0, 0.0])
            coeffs = base + gamma * tilt
        self.gamma = gamma
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.size > 5:
            raise ValueError("well must be a quartic polynomial")
        self.b_minus = float(b_minus)
        self.b_plus = float(b_plus)
        # precompute derivative coefficient tables W, W', ..., W''''
        self._dcoeffs = [self.coeffs]
        for _ in range(4):
            self._dcoeffs.append(P.polyder(self._dcoeffs[-1]))

    def __repr__(self):
        return "WellSpec(gamma=%r, b_minus=%r, b_plus=%r)" % (
            self.gamma, self.b_minus, self.b_plus)


def eval_well(well, u, order=0):
    """Evaluate W or one of its derivatives (order 0..4) at u."""
    if order not in (0, 1, 2, 3, 4):
        raise ValueError("order must be in 0..4")
    return P.polyval(np.asarray(u, dtype=float), well._dcoeffs[order])


def _bisect_umax(well, lo, hi, tol=1e-15, maxit=200):
    # W(lo) > 0 (just right of b_minus), W(hi) < 0 (at b_plus): bracket the
    # interior zero crossing u_max.
    flo = eval_well(well, lo)
    for _ in range(maxit):
        mid = 0.5 * (lo + hi)
        fm = eval_well(well, mid)
        if hi - lo < tol:
            break
        if fm * flo > 0:
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def validate_well(well):
    """Check the double-well invariants; locate u_max.

    Returns a report dict with the located u_max and each checked quantity.
    Raises WellNotTilted / WellNonconvexAtMinus on structural failures and
    ValueError if the critical-point conditions are violated.
    """
    W_bm = eval_well(well, well.b_minus)
    Wp_bm = eval_well(well, well.b_minus, 1)
    Wp_bp = eval_well(well, well.b_plus, 1)
    W_bp = eval_well(well, well.b_plus)
    Wpp_bm = eval_well(well, well.b_minus, 2)

    if abs(W_bm) > VALIDATION_TOL or abs(Wp_bm) > VALIDATION_TOL:
        raise ValueError("b_minus is not a root of W and W'")
    if abs(Wp_bp) > VALIDATION_TOL:
        raise ValueError("b_plus is not a critical point of W")
    if W_bp >= 0.0:
        raise WellNotTilted("W(b_plus) = %g >= 0" % W_bp)
    if Wpp_bm <= 0.0:
        raise WellNonconvexAtMinus("W''(b_minus) = %g <= 0" % Wpp_bm)

    # u_max: first zero of W in (b_minus, b_plus); W > 0 just right of b_minus
    # since W''(b_minus) > 0.
    lo = well.b_minus + 1e-8 * (well.b_plus - well.b_minus)
    u_max = _bisect_umax(well, lo, well.b_plus)
    if not (well.b_minus < u_max < well.b_plus):
        raise ValueError("failed to locate u_max inside (b_minus, b_plus)")

    # W > 0 on the open interval (b_minus, u_max)
    uu = np.linspace(well.b_minus + 1e-6, u_max - 1e-6, 1000)
    min_interior = float(eval_well(well, uu).min())
    if min_interior <= 0.0:
        raise ValueError("W is not positive on (b_minus, u_max)")

    return {
        "u_max": float(u_max),
        "W_b_minus": float(W_bm),
        "W_b_plus": float(W_bp),
        "Wpp_b_minus": float(Wpp_bm),
        "min_W_interior": min_interior,
        "valid": True,
    }
