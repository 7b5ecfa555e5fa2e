"""Bessel functions, Weinberger constants, and the radial test profiles.

Everything here is dependency-free float64 arithmetic.  The Bessel
evaluator covers the half-integer and small integer orders needed by the
radial profile g(r) = r^{1-N/2} J_{N/2}(beta * r / r_omega) and its
derivative, for dimensions N = 2..6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

__all__ = [
    "SUPPORTED_ORDERS",
    "bessel_j",
    "bessel_j_prime",
    "weinberger_beta",
    "unit_ball_volume",
    "mu1_ball",
    "mu2_star",
    "ProfileParams",
    "profile_eval",
    "capped_eval",
    "weight_f",
    "ode_residual",
]

# Orders exposed by the public API.  Internally order-0 and order -1/2 are
# also evaluated (needed by the derivative recurrence).
SUPPORTED_ORDERS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)

_SERIES_CUTOFF = 12.0
_MAX_X = 100.0


def _bessel_series(order: float, x: float) -> float:
    # Defining power series, stable in float64 for x <= 12 at these orders.
    # Terms are generated by the ratio recurrence; capped at 60 terms with
    # early exit once a term drops below 1e-18 of the running scale.
    if x == 0.0:
        return 1.0 if order == 0.0 else 0.0
    half = 0.5 * x
    term = half**order / math.gamma(order + 1.0)
    total = term
    q = half * half
    for k in range(1, 60):
        term *= -q / (k * (k + order))
        total += term
        if abs(term) < 1e-18 * max(1.0, abs(total)):
            break
    return total


def _bessel_half_closed(order: float, x: float) -> float:
    # Closed forms for half-integer orders, accurate for x away from 0.
    c = math.sqrt(2.0 / (math.pi * x))
    s, co = math.sin(x), math.cos(x)
    if order == -0.5:
        return c * co
    if order == 0.5:
        return c * s
    if order == 1.5:
        return c * (s / x - co)
    if order == 2.5:
        return c * ((3.0 / (x * x) - 1.0) * s - 3.0 * co / x)
    raise ValueError(f"no closed form for order {order}")


def _bessel_integer_miller(n_max: int, x: float) -> list[float]:
    # Downward (Miller) recurrence for integer orders 0..n_max, normalized
    # with J_0 + 2*sum_k J_{2k} = 1.  Stable for the x > 12 regime used here.
    m = int(x + 16.0 * x ** (1.0 / 3.0) + 24) | 1
    jp, j = 0.0, 1e-30
    out = [0.0] * (n_max + 1)
    norm = 0.0
    for nu in range(m, 0, -1):
        jm = (2.0 * nu / x) * j - jp
        jp, j = j, jm
        if abs(j) > 1e250:
            j *= 1e-250
            jp *= 1e-250
            norm *= 1e-250
            for i in range(n_max + 1):
                out[i] *= 1e-250
        nu_down = nu - 1
        if nu_down % 2 == 0:
            norm += 2.0 * j if nu_down > 0 else j
        if nu_down <= n_max:
            out[nu_down] = j
    return [v / norm for v in out]


def _bessel_any(order: float, x: float) -> float:
    # Internal evaluator, accepts orders in {-1/2, 0, 1/2, ..., 3}.
    if x < 0.0:
        raise ValueError(f"negative argument x={x}")
    if x > _MAX_X:
        raise ValueError(f"argument x={x} outside supported range [0, {_MAX_X}]")
    if order == -0.5:
        if x == 0.0:
            raise ValueError("J_{-1/2} is singular at x=0")
        return _bessel_half_closed(order, x)
    if x <= _SERIES_CUTOFF:
        return _bessel_series(order, x)
    if order in (0.5, 1.5, 2.5):
        return _bessel_half_closed(order, x)
    return _bessel_integer_miller(int(order), x)[int(order)]


def bessel_j(order: float, x: float) -> float:
    """Bessel function of the first kind J_order(x).

    Supported orders: 1/2, 1, 3/2, 2, 5/2, 3; argument range [0, 100].
    """
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported order {order}; expected one of {SUPPORTED_ORDERS}")
    return _bessel_any(order, x)


def bessel_j_prime(order: float, x: float) -> float:
    """Derivative J'_order(x) via the recurrence J'_v = J_{v-1} - (v/x) J_v."""
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported order {order}; expected one of {SUPPORTED_ORDERS}")
    if x < 0.0:
        raise ValueError(f"negative argument x={x}")
    if x == 0.0:
        if order == 0.5:
            raise ValueError("J'_{1/2} is singular at x=0")
        return 0.5 if order == 1.0 else 0.0
    return _bessel_any(order - 1.0, x) - (order / x) * _bessel_any(order, x)


def _radial_derivative_expr(n_dim: int, r: float) -> float:
    # h(r) = r^{1-N/2} J_{N/2}(r) has h'(r) = r^{1-N/2} * E(r) with
    # E(r) = J_{N/2-1}(r) + (1-N)/r * J_{N/2}(r); beta is the first root of E.
    v = 0.5 * n_dim
    return _bessel_any(v - 1.0, r) + (1.0 - 2.0 * v) / r * _bessel_any(v, r)


@lru_cache(maxsize=None)
def weinberger_beta(n_dim: int) -> float:
    """Smallest positive root of d/dr [ r^{1-N/2} J_{N/2}(r) ], N = 2..6.

    Satisfies beta^2 = R^2 * mu1(B_R) for every radius R.
    """
    if not (2 <= n_dim <= 6):
        raise ValueError(f"dimension {n_dim} outside supported range [2, 6]")
    lo, hi, step = 0.5, 6.0, 0.05
    a = lo
    fa = _radial_derivative_expr(n_dim, a)
    b = None
    while a < hi:
        a2 = a + step
        fa2 = _radial_derivative_expr(n_dim, a2)
        if fa * fa2 <= 0.0:
            b = a2
            break
        a, fa = a2, fa2
    if b is None:
        raise RuntimeError(f"no sign change of the radial derivative in [{lo}, {hi}] for N={n_dim}")
    while b - a > 1e-12:
        m = 0.5 * (a + b)
        fm = _radial_derivative_expr(n_dim, m)
        if fa * fm <= 0.0:
            b = m
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


def unit_ball_volume(n_dim: int) -> float:
    """Volume of the unit ball in R^N: pi^{N/2} / Gamma(N/2 + 1)."""
    return math.pi ** (0.5 * n_dim) / math.gamma(0.5 * n_dim + 1.0)


def mu1_ball(radius: float, n_dim: int) -> float:
    """First nonzero Neumann eigenvalue of a ball: beta^2 / R^2."""
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    b = weinberger_beta(n_dim)
    return b * b / (radius * radius)


def mu2_star(n_dim: int) -> float:
    """Scale-invariant two-ball constant 2^{2/N} omega_N^{2/N} beta^2."""
    b = weinberger_beta(n_dim)
    return 2.0 ** (2.0 / n_dim) * unit_ball_volume(n_dim) ** (2.0 / n_dim) * b * b


@dataclass(frozen=True)
class ProfileParams:
    """Parameters of the radial profile: dimension, half-measure radius,
    Weinberger constant, and the unit-ball volume."""

    n_dim: int
    r_omega: float
    beta: float
    omega_n: float

    def __post_init__(self):
        if self.r_omega <= 0.0:
            raise ValueError(f"r_omega must be positive, got {self.r_omega}")
        if abs(self.beta - weinberger_beta(self.n_dim)) > 1e-9:
            raise ValueError(f"beta={self.beta} inconsistent with dimension N={self.n_dim}")
        if abs(self.omega_n - unit_ball_volume(self.n_dim)) > 1e-12 * self.omega_n:
            raise ValueError(f"omega_n={self.omega_n} inconsistent with dimension N={self.n_dim}")

    @classmethod
    def create(cls, n_dim: int, r_omega: float) -> "ProfileParams":
        return cls(n_dim=n_dim, r_omega=r_omega, beta=weinberger_beta(n_dim),
                   omega_n=unit_ball_volume(n_dim))

    @property
    def slope_at_zero(self) -> float:
        # g(r) ~ slope * r near r=0, from the leading series term of J_{N/2}.
        v = 0.5 * self.n_dim
        u = self.beta / (2.0 * self.r_omega)
        return u**v / math.gamma(v + 1.0)


def profile_eval(r: float, p: ProfileParams) -> tuple[float, float]:
    """Radial profile g(r) = r^{1-N/2} J_{N/2}(beta r / r_omega) and g'(r).

    Defined on [0, r_omega]; g(0) = 0, g is strictly increasing, and
    g'(r_omega) = 0 by the choice of beta.
    """
    if r < 0.0 or r > p.r_omega * (1.0 + 1e-12):
        raise ValueError(f"r={r} outside [0, r_omega={p.r_omega}]")
    r = min(r, p.r_omega)
    v = 0.5 * p.n_dim
    if r == 0.0:
        return 0.0, p.slope_at_zero
    u = p.beta * r / p.r_omega
    jv = _bessel_any(v, u)
    jv1 = _bessel_any(v - 1.0, u)
    g = r ** (1.0 - v) * jv
    # g'(r) = r^{1-v} [ (beta/r_omega) J_{v-1}(u) + (1-2v)/r J_v(u) ]
    gp = r ** (1.0 - v) * ((p.beta / p.r_omega) * jv1 + (1.0 - 2.0 * v) / r * jv)
    return g, gp


def capped_eval(r: float, p: ProfileParams) -> tuple[float, float]:
    """Capped profile G: equals g on [0, r_omega], frozen at g(r_omega) beyond."""
    if r < 0.0:
        raise ValueError(f"r={r} must be non-negative")
    if r > p.r_omega:
        g, _ = profile_eval(p.r_omega, p)
        return g, 0.0
    return profile_eval(r, p)


def weight_f(r: float, p: ProfileParams) -> float:
    """Radial weight f(r) = G'(r)^2 + (N-1) G(r)^2 / r^2, non-increasing.

    The removable singularity at r=0 is replaced by its limit N * g'(0)^2.
    """
    if r < 0.0:
        raise ValueError(f"r={r} must be non-negative")
    if r == 0.0:
        s = p.slope_at_zero
        return p.n_dim * s * s
    g, gp = capped_eval(r, p)
    return gp * gp + (p.n_dim - 1.0) * g * g / (r * r)


def ode_residual(r: float, p: ProfileParams) -> float:
    """Residual of g'' + (N-1)/r g' + (mu1(B_{r_omega}) - (N-1)/r^2) g at r.

    g'' comes from a centered difference of profile_eval with step
    1e-5 * r_omega, so this doubles as a consistency check of the profile.
    """
    step = 1e-5 * p.r_omega
    if not (step < r < p.r_omega - step):
        raise ValueError(f"r={r} too close to the ends of (0, {p.r_omega}) for the FD stencil")
    g, gp = profile_eval(r, p)
    g_plus, _ = profile_eval(r + step, p)
    g_minus, _ = profile_eval(r - step, p)
    gpp = (g_plus - 2.0 * g + g_minus) / (step * step)
    mu1 = mu1_ball(p.r_omega, p.n_dim)
    n1 = p.n_dim - 1.0
    return gpp + n1 / r * gp + (mu1 - n1 / (r * r)) * g
