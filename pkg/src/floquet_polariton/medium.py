"""The phase-modulated drive and the polarizability of the driven gas.

All frequencies are in units of the recoil energy E_r (so E_r == 1).
"""
from dataclasses import dataclass, field
from functools import cached_property
import math
import warnings

import numpy as np

from .geometry import TrapGeometry
from .specfun import bessel_j_orders

__all__ = [
    "CutoffWarning",
    "AmbiguousSidebandError",
    "DriveSpec",
    "SystemSpec",
    "SidebandAssignment",
    "sideband_coefficients",
    "assign_sidebands",
    "atomic_energies",
    "density_response",
    "polarizability",
    "polarizability_floquet",
    "renormalized_coupling",
]

E_R = 1.0
CUTOFF_TOL = 1e-8
TIE_TOL = 1e-9


class CutoffWarning(UserWarning):
    """The sideband cutoff drops coefficients larger than the tolerance."""


class AmbiguousSidebandError(ValueError):
    """Two sidebands are equally close to resonance for one cavity mode."""


@dataclass(frozen=True)
class DriveSpec:
    """Harmonic phase modulation ``f(t) = b_m sin(Omega t)``.

    ``epsilon`` is the offset of the modulation frequency from the transverse
    mode spacing, ``Omega = omega_t + epsilon``. ``alpha_max`` truncates the
    sideband series. With ``renormalize`` the coupling is rescaled to
    compensate the power that goes into negative sidebands.
    """

    b_m: float = 0.0
    epsilon: float = 0.0
    alpha_max: int = 20
    renormalize: bool = False

    def __post_init__(self):
        if int(self.alpha_max) < 0:
            raise ValueError("alpha_max must be >= 0")
        if not math.isfinite(self.b_m) or not math.isfinite(self.epsilon):
            raise ValueError("b_m and epsilon must be finite")
        object.__setattr__(self, "alpha_max", int(self.alpha_max))
        tail = bessel_j_orders(self.alpha_max + 1, self.b_m)[-1]
        if abs(tail) >= CUTOFF_TOL:
            warnings.warn(
                f"|J_{self.alpha_max + 1}({self.b_m})| = {abs(tail):.3g} exceeds {CUTOFF_TOL:g}; "
                "raise alpha_max to keep the truncation exact",
                CutoffWarning,
                stacklevel=3,
            )

    @cached_property
    def coefficients(self):
        """Sideband amplitudes c_alpha for alpha = -alpha_max..alpha_max."""
        c = np.array(bessel_j_orders(self.alpha_max, self.b_m))
        c.setflags(write=False)
        return c

    def coefficient(self, alpha):
        if abs(alpha) > self.alpha_max:
            return 0.0
        return float(self.coefficients[alpha + self.alpha_max])


@dataclass(frozen=True)
class SystemSpec:
    """Cavity, atomic medium and coupling parameters.

    Attributes
    ----------
    drive : DriveSpec
    geom : TrapGeometry
    delta0 : float
        Detuning of the fundamental mode from the pump carrier.
    omega_t : float
        Transverse mode spacing; must be much larger than E_r.
    kappa : float
        Cavity loss rate, equal for all modes.
    coupling : float
        Effective light-matter coupling Lambda.
    eta_atom : float
        Broadening of the atomic lines used in spectra.
    omega_trap : float
        Energy step between retained radial atomic states beyond the lowest.
        The default of zero puts every excitation at E_r.
    mode_detunings : tuple of float, optional
        Bare cavity detunings. Defaults to ``delta0 + j * omega_t``.
    """

    drive: DriveSpec
    geom: TrapGeometry
    delta0: float
    omega_t: float = 100.0
    kappa: float = 0.0
    coupling: float = 0.0
    eta_atom: float = 1e-6
    omega_trap: float = 0.0
    mode_detunings: tuple = field(default=None)

    def __post_init__(self):
        for name in ("delta0", "omega_t", "kappa", "coupling", "eta_atom", "omega_trap"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.coupling < 0:
            raise ValueError("coupling must be >= 0")
        if self.eta_atom < 0:
            raise ValueError("eta_atom must be >= 0")
        if self.omega_trap < 0:
            raise ValueError("omega_trap must be >= 0")
        if self.omega_t <= 0:
            raise ValueError("omega_t must be positive")
        if self.mode_detunings is not None:
            dets = tuple(float(d) for d in self.mode_detunings)
            if len(dets) != self.n_modes:
                raise ValueError("mode_detunings must list one value per cavity mode")
            object.__setattr__(self, "mode_detunings", dets)

    @property
    def n_modes(self):
        return self.geom.n_cavity_modes

    @property
    def modulation_frequency(self):
        return self.omega_t + self.drive.epsilon

    def bare_detunings(self):
        if self.mode_detunings is not None:
            return np.array(self.mode_detunings)
        return self.delta0 + self.omega_t * np.arange(self.n_modes)

    def with_coupling(self, coupling):
        return _replace(self, coupling=float(coupling))

    def with_drive(self, **changes):
        return _replace(self, drive=_replace(self.drive, **changes))


def _replace(obj, **changes):
    import dataclasses

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        return dataclasses.replace(obj, **changes)


@dataclass(frozen=True)
class SidebandAssignment:
    """Nearest-resonant sideband per cavity mode.

    ``pairs`` holds ``(mode, sideband, effective_detuning)`` triples.
    """

    pairs: tuple

    @property
    def modes(self):
        return np.array([p[0] for p in self.pairs], dtype=int)

    @property
    def sidebands(self):
        return np.array([p[1] for p in self.pairs], dtype=int)

    @property
    def detunings(self):
        return np.array([p[2] for p in self.pairs], dtype=float)


def sideband_coefficients(drive):
    """c_alpha = J_alpha(b_m) for alpha in [-alpha_max, alpha_max]."""
    return drive.coefficients.copy()


def assign_sidebands(spec, n_modes=None):
    """Pair each cavity mode with the sideband that brings it closest to delta0.

    For linearly spaced modes mode j takes sideband j and its effective
    detuning is ``delta0 - j * epsilon``.

    Raises
    ------
    AmbiguousSidebandError
        If two sidebands are equally close (``epsilon = +-Omega/2``).
    """
    n_modes = spec.n_modes if n_modes is None else int(n_modes)
    amax = spec.drive.alpha_max
    if n_modes > amax + 1:
        raise ValueError(f"{n_modes} modes need alpha_max >= {n_modes - 1}, got {amax}")
    if n_modes > spec.n_modes:
        raise ValueError("more modes requested than the geometry retains")
    big_omega = spec.modulation_frequency
    alphas = np.arange(-amax, amax + 1)
    pairs = []
    for j, det in enumerate(spec.bare_detunings()[:n_modes]):
        if spec.mode_detunings is None:
            # same value as det - alpha * Omega without the cancellation error
            residual = spec.delta0 + (j - alphas) * spec.omega_t - alphas * spec.drive.epsilon
        else:
            residual = det - alphas * big_omega
        dist = np.abs(residual - spec.delta0)
        order = np.argsort(dist, kind="stable")
        if len(order) > 1 and dist[order[1]] - dist[order[0]] < TIE_TOL:
            raise AmbiguousSidebandError(
                f"mode {j}: sidebands {alphas[order[0]]} and {alphas[order[1]]} are equally resonant"
            )
        best = order[0]
        pairs.append((j, int(alphas[best]), float(residual[best])))
    return SidebandAssignment(tuple(pairs))


def atomic_energies(spec):
    """Excitation energies of the retained radial atomic states."""
    return E_R + spec.omega_trap * np.arange(spec.geom.n_atom_modes)


def _lindhard_weights(spec, omega, eta):
    energies = atomic_energies(spec)
    w = np.asarray(omega, dtype=complex)[..., None] + 1j * eta
    return -2.0 * energies / (w * w - energies**2)


def density_response(spec, overlaps, omega, eta=None):
    """Density response Pi_ij(omega) of the condensate.

    Sums ``-2 E_n / ((omega + i eta)**2 - E_n**2) * M[i, n] M[j, n]`` over the
    retained radial states n. Each state is reached from the condensate by a
    recoil kick, so radial index 0 carries energy E_r and survives the
    narrow-cloud limit. ``omega`` may be complex or an array; the result has
    shape ``omega.shape + (N, N)``.
    """
    eta = spec.eta_atom if eta is None else eta
    weights = _lindhard_weights(spec, omega, eta)
    m = np.asarray(overlaps.entries if hasattr(overlaps, "entries") else overlaps, dtype=float)
    return np.einsum("...n,in,jn->...ij", weights, m, m)


def renormalized_coupling(spec):
    """Coupling rescaled by the weight in non-negative sidebands.

    ``Lambda_eff**2 = Lambda**2 / sum_{0 <= alpha < alpha_max} c_alpha**2``.
    """
    drive = spec.drive
    c = drive.coefficients[drive.alpha_max:]
    divisor = float(np.sum(c[: max(drive.alpha_max, 1)] ** 2))
    if divisor <= 0:
        raise ValueError("no sideband weight left for the renormalization")
    return spec.coupling / math.sqrt(divisor)


def effective_coupling(spec):
    return renormalized_coupling(spec) if spec.drive.renormalize else spec.coupling


def mode_coefficients(spec, assignment):
    """Sideband amplitude seen by each assigned cavity mode."""
    return np.array([spec.drive.coefficient(a) for a in assignment.sidebands])


def polarizability(spec, assignment, overlaps, omega, eta=None):
    """Polarizability chi_ij(omega) in the cavity-mode basis.

    Each mode is tied to its resonant sideband, so the Floquet indices drop
    out: ``chi_ij = Lambda_eff**2 c_i c_j Pi_ij``.
    """
    lam = effective_coupling(spec)
    c = mode_coefficients(spec, assignment)
    pi = density_response(spec, overlaps, omega, eta)
    return lam * lam * pi * np.outer(c, c)


def polarizability_floquet(spec, overlaps, omega, eta=None):
    """Full chi[i, j, alpha, beta] before the sideband collapse (diagnostics only)."""
    lam = effective_coupling(spec)
    c = spec.drive.coefficients
    pi = density_response(spec, overlaps, complex(omega), eta)
    out = lam * lam * np.einsum("ij,a,b->ijab", pi, c, c)
    out.setflags(write=False)
    return out
