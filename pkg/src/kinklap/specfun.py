"""Gamma-family constants and tail bounds used by the small-bandwidth expansion."""

import math

import numpy as np
from scipy import special


def sphere_area(d):
    """Surface measure of the unit sphere S^{d-1}, ``2 pi^{d/2} / Gamma(d/2)``."""
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    return math.exp(math.log(2.0) + 0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d))


def half_gamma_constant(ell):
    """Return ``c_ell = Gamma((ell + 1) / 2) / 2`` for ``1 <= ell <= 200``.

    ``c_ell`` is the radial Gaussian integral ``int_0^inf exp(-r^2) r^ell dr``.
    """
    if isinstance(ell, bool) or int(ell) != ell:
        raise ValueError(f"ell must be an integer, got {ell!r}")
    ell = int(ell)
    if not 1 <= ell <= 200:
        raise ValueError(f"ell must lie in [1, 200], got {ell}")
    # Gamma((ell+1)/2) <= Gamma(100.5) ~ 1e157, no overflow.
    return math.gamma(0.5 * (ell + 1)) / 2.0


def log_upper_incomplete_gamma(s, x):
    """Natural log of ``Gamma(s, x)``; ``-inf`` once the tail underflows."""
    if not 0.0 < s <= 200.0:
        raise ValueError(f"s must lie in (0, 200], got {s}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0:
        return math.lgamma(s)
    q = special.gammaincc(s, x)
    if q > 1e-280:
        return math.lgamma(s) + math.log(q)
    # Deep tail: log of the leading asymptotic term plus the continued
    # fraction correction computed by scipy's log-safe routine.
    return s * math.log(x) - x - math.log(x) + math.log(_tail_ratio(s, x))


def _tail_ratio(s, x):
    # Gamma(s, x) = x^s e^{-x} / x * R, with R -> 1 as x -> inf (Lentz continued fraction).
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    dd = 1.0 / b
    h = dd
    for i in range(1, 500):
        an = -i * (i - s)
        b += 2.0
        dd = an * dd + b
        dd = tiny if abs(dd) < tiny else dd
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        dd = 1.0 / dd
        delta = dd * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * x


def upper_incomplete_gamma(s, x):
    """Upper incomplete gamma ``Gamma(s, x) = int_x^inf exp(-u) u^(s-1) du``.

    Valid for ``0 < s <= 200`` and ``x >= 0``; saturates to 0 for huge ``x``
    and to ``inf`` only where ``Gamma(s)`` itself exceeds double range.
    """
    log_value = log_upper_incomplete_gamma(s, x)
    return math.inf if log_value > 709.0 else math.exp(log_value)


def gaussian_radial_moment(m, d, lower=0.0):
    """``int_lower^inf exp(-r^2) r^(m+d-1) dr = Gamma((m+d)/2, lower^2) / 2``."""
    if m < 0 or d < 1:
        raise ValueError("need m >= 0 and d >= 1")
    if m + d > 200:
        raise ValueError(f"m + d must not exceed 200, got {m + d}")
    if lower < 0:
        raise ValueError(f"lower must be nonnegative, got {lower}")
    return 0.5 * upper_incomplete_gamma(0.5 * (m + d), lower * lower)


def localization_tail_bound(f_at_x, total_mass, f_l1_norm, t, eta, d):
    """Bound on the Gauss operator mass outside the ball of radius ``t**eta``.

    Returns ``(|f(x)| mu(M) + ||f||_1) * t^(-d/2-1) * exp(-t^(2 eta - 1))``.
    """
    if not 0.0 < eta < 0.5:
        raise ValueError(f"eta must lie in (0, 1/2), got {eta}")
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie in (0, 1), got {t}")
    if total_mass <= 0 or f_l1_norm < 0:
        raise ValueError("total_mass must be positive and f_l1_norm nonnegative")
    weight = abs(f_at_x) * total_mass + f_l1_norm
    if weight == 0:
        return 0.0
    log_bound = math.log(weight) - (0.5 * d + 1.0) * math.log(t) - t ** (2.0 * eta - 1.0)
    return math.exp(log_bound)


def gamma_tail_asymptote(s, x):
    """Leading asymptote ``x^(s-1) exp(-x)`` of ``Gamma(s, x)`` for large ``x``."""
    return float(np.exp((s - 1.0) * np.log(x) - x))
