"""Transverse Laguerre-Gauss modes and cavity/atom radial overlaps.

Only angular index p = 0 enters the response. A radially symmetric cloud in
its ground state conserves angular momentum, so the overlap matrix stores
radial indices only.

The closed-form overlap carries an extra factor ``delta**2`` relative to the
commonly quoted expression; without it the (0, 0) element tends to zero
instead of one in the narrow-cloud limit. The quadrature oracle below
integrates the defining radial integral directly and is what the closed form
is validated against.
"""
from dataclasses import dataclass, field
import cmath
import math

import mpmath
import numpy as np

from .specfun import assoc_laguerre, hyp2f1_terminating, ln_factorial

__all__ = [
    "TrapGeometry",
    "OverlapMatrix",
    "QuadratureError",
    "lg_mode",
    "overlap_closed_form",
    "overlap_quadrature_oracle",
    "build_overlap_matrix",
    "radial_grid",
    "lg_radial_profiles",
]

DEGENERATE_TOL = 1e-6
N_RADIAL_SAMPLES = 512
R_MAX = 4.0


class QuadratureError(RuntimeError):
    """Raised when the radial quadrature fails to converge."""


@dataclass(frozen=True)
class TrapGeometry:
    """Cavity waist to trap length ratio and retained mode counts.

    Parameters
    ----------
    delta : float
        ``w_0 / L_H``; large values mean a cloud much narrower than the waist.
    n_cavity_modes : int
        Number of LG_{j0} cavity modes kept.
    n_atom_modes : int
        Number of radial atomic states kept (index 0 is the radial ground
        state).
    w0_over_Q : float
        Waist in units of the inverse carrier wavenumber. Only used for
        real-space rendering.
    """

    delta: float
    n_cavity_modes: int = 1
    n_atom_modes: int = 1
    w0_over_Q: float = 200.0

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")
        if int(self.n_cavity_modes) < 1:
            raise ValueError("n_cavity_modes must be >= 1")
        if int(self.n_atom_modes) < 1:
            raise ValueError("n_atom_modes must be >= 1")


@dataclass(frozen=True)
class OverlapMatrix:
    """Real matrix ``entries[j, n]`` of cavity mode j with atomic radial state n."""

    entries: np.ndarray
    delta: float = field(default=float("nan"))

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float, copy=True)
        if arr.ndim != 2:
            raise ValueError("overlap entries must be a 2-D array")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def shape(self):
        return self.entries.shape

    def __getitem__(self, idx):
        return self.entries[idx]


def lg_mode(j, p, r, theta=0.0):
    """Laguerre-Gauss mode ``w0 * LG_{jp}(r, theta)`` with r in units of w0.

    The ``w0`` prefactor makes the fundamental equal to 1 at the centre. For
    ``p == 0`` the result is real and returned as a float.
    """
    j = int(j)
    p = int(p)
    if j < 0:
        raise ValueError("radial index j must be >= 0")
    r = float(r)
    ap = abs(p)
    norm = math.exp(0.5 * (ln_factorial(j) - ln_factorial(j + ap)))
    radial = math.exp(-0.5 * r * r) * norm * r**ap * assoc_laguerre(j, ap, r * r)
    if p == 0:
        return radial
    return radial * cmath.exp(1j * p * theta)


def overlap_closed_form(j, n, delta):
    """Radial overlap <psi_0| eta_j0 |psi_n0> in closed form.

    Evaluates ``delta**2 * (j+n)! / (2**n n! j!) * (d2 - 1/2)**j /
    (d2 + 1/2)**(j+n+1) * 2F1(-n, -j; -n-j; -(d2+1/2)/(d2-1/2))`` with
    ``d2 = delta**2``. Within 1e-6 of ``d2 == 1/2`` the expression is 0 * inf
    and the quadrature oracle is used instead.
    """
    j = int(j)
    n = int(n)
    if j < 0 or n < 0:
        raise ValueError("indices must be >= 0")
    delta = float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    d2 = delta * delta
    minus = d2 - 0.5
    plus = d2 + 0.5
    if abs(minus) <= DEGENERATE_TOL:
        return overlap_quadrature_oracle(j, n, delta)
    log_pref = ln_factorial(j + n) - n * math.log(2.0) - ln_factorial(n) - ln_factorial(j)
    log_pref += 2.0 * math.log(delta) - (j + n + 1) * math.log(plus)
    if j:
        log_pref += j * math.log(abs(minus))
    sign = -1.0 if (minus < 0 and j % 2) else 1.0
    return sign * math.exp(log_pref) * hyp2f1_terminating(n, j, -plus / minus)


def overlap_quadrature_oracle(j, n, delta, dps=None):
    """Direct quadrature of the radial overlap integral.

    In units of the trap length, with ``x = r**2``::

        integral_0^inf exp(-x (1 + 1/(2 delta**2))) L_j(x / delta**2) L_n(x) dx

    Evaluated with mpmath at ``dps`` decimal digits. The angular integral is
    trivial for zero angular momentum. Used as ground truth in tests; for
    ``delta >> 1`` and ``n > 0`` the result scales like ``delta**(-2n)`` while
    the integrand stays O(1), so the default precision grows with that
    cancellation.
    """
    j = int(j)
    n = int(n)
    if j < 0 or n < 0 or j > 32 or n > 32:
        raise ValueError("oracle supports 0 <= j, n <= 32")
    if dps is None:
        dps = 30 + int(math.ceil(2 * n * max(0.0, math.log10(float(delta)))))
    with mpmath.workdps(int(dps)):
        d2 = mpmath.mpf(delta) ** 2
        rate = 1 + 1 / (2 * d2)

        def integrand(x):
            weight = mpmath.exp(-rate * x)
            if weight == 0:
                return weight
            return weight * _mp_laguerre(j, x / d2) * _mp_laguerre(n, x)

        # breakpoints follow the oscillation scale of L_n(x)
        edges = [0, 1, 4 * (n + 1), 8 * (n + 2), 16 * (n + 4), mpmath.inf]
        value, err = mpmath.quad(integrand, edges, error=True, maxdegree=10)
        scale = mpmath.mpf(10) ** (-(int(dps) // 2))
        if not mpmath.isfinite(value) or err > scale * max(1, abs(value)):
            raise QuadratureError(f"radial quadrature did not converge for (j={j}, n={n}, delta={delta})")
        return float(value)


def _mp_laguerre(n, x):
    prev, cur = mpmath.mpf(0), mpmath.mpf(1)
    for i in range(n):
        prev, cur = cur, ((2 * i + 1 - x) * cur - i * prev) / (i + 1)
    return cur


def build_overlap_matrix(geom):
    """Overlap matrix over all retained cavity and atomic radial indices."""
    out = np.empty((geom.n_cavity_modes, geom.n_atom_modes))
    for j in range(geom.n_cavity_modes):
        for n in range(geom.n_atom_modes):
            out[j, n] = overlap_closed_form(j, n, geom.delta)
    return OverlapMatrix(out, delta=geom.delta)


def radial_grid(r_max=R_MAX, n_points=N_RADIAL_SAMPLES):
    """Uniform radial samples in units of w0 for intensity rendering."""
    return np.linspace(0.0, r_max, n_points)


def lg_radial_profiles(n_modes, r):
    """Array ``[j, k] = w0 * LG_{j0}(r[k])`` for j < n_modes, r in units of w0."""
    r = np.asarray(r, dtype=float)
    x = r * r
    out = np.empty((int(n_modes),) + r.shape)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    gauss = np.exp(-0.5 * x)
    for i in range(int(n_modes)):
        out[i] = gauss * cur
        prev, cur = cur, ((2 * i + 1 - x) * cur - i * prev) / (i + 1)
    return out
