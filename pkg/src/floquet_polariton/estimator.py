"""scikit-learn style wrapper around the functional API.

The estimator treats frequencies as samples: ``fit`` builds the system and
solves its poles and threshold, ``predict`` returns one spectral entry per
frequency and ``transform`` returns all diagonal entries.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_scalar

from .analysis import InstabilityKind, critical_coupling
from .geometry import TrapGeometry, build_overlap_matrix
from .medium import DriveSpec, SystemSpec, assign_sidebands
from .response import find_poles, mode_weights, spectral_function

__all__ = ["FloquetPolaritonSpectrum"]


class FloquetPolaritonSpectrum(TransformerMixin, BaseEstimator):
    """Spectral response of a phase-modulated multimode cavity.

    Parameters
    ----------
    delta0 : float
        Detuning of the fundamental cavity mode, in E_r.
    kappa : float
        Cavity loss rate.
    b_m, epsilon : float
        Modulation depth and offset of the modulation frequency from the
        transverse mode spacing.
    n_modes : int
        Number of transverse cavity modes.
    n_atom_modes : int
        Number of radial atomic states.
    waist_ratio : float
        Cavity waist over atomic trap length.
    coupling : float, optional
        Light-matter coupling. If None, ``lambda_ratio_sq`` is used.
    lambda_ratio_sq : float
        ``(Lambda / Lambda_c)**2`` relative to the located threshold, used
        when ``coupling`` is None.
    entry : (int, int)
        Spectral entry returned by :meth:`predict`.
    renormalize : bool
        Rescale the coupling for the power in negative sidebands.

    Attributes
    ----------
    spec_ : SystemSpec
    lambda_c_ : float or None
        Located critical coupling; None if stable.
    instability_ : InstabilityReport
    poles_ : PoleSet
    """

    def __init__(
        self,
        delta0=0.8,
        kappa=0.02,
        b_m=0.0,
        epsilon=0.0,
        n_modes=1,
        n_atom_modes=1,
        waist_ratio=1000.0,
        coupling=None,
        lambda_ratio_sq=0.5,
        omega_t=100.0,
        alpha_max=20,
        eta_atom=1e-6,
        entry=(0, 0),
        renormalize=False,
    ):
        self.delta0 = delta0
        self.kappa = kappa
        self.b_m = b_m
        self.epsilon = epsilon
        self.n_modes = n_modes
        self.n_atom_modes = n_atom_modes
        self.waist_ratio = waist_ratio
        self.coupling = coupling
        self.lambda_ratio_sq = lambda_ratio_sq
        self.omega_t = omega_t
        self.alpha_max = alpha_max
        self.eta_atom = eta_atom
        self.entry = entry
        self.renormalize = renormalize

    def _validate(self):
        check_scalar(self.kappa, "kappa", (int, float), min_val=0)
        check_scalar(self.n_modes, "n_modes", int, min_val=1)
        check_scalar(self.n_atom_modes, "n_atom_modes", int, min_val=1)
        check_scalar(self.waist_ratio, "waist_ratio", (int, float), min_val=0, include_boundaries="neither")
        check_scalar(self.lambda_ratio_sq, "lambda_ratio_sq", (int, float), min_val=0)
        if self.coupling is not None:
            check_scalar(self.coupling, "coupling", (int, float), min_val=0)
        i, j = self.entry
        if not (0 <= i < self.n_modes and 0 <= j < self.n_modes):
            raise ValueError(f"entry {self.entry} outside {self.n_modes} modes")

    def fit(self, X=None, y=None):
        """Build the system, locate the threshold and solve the poles.

        ``X`` and ``y`` are ignored and accepted for pipeline compatibility.
        """
        self._validate()
        geom = TrapGeometry(
            delta=float(self.waist_ratio), n_cavity_modes=self.n_modes, n_atom_modes=self.n_atom_modes
        )
        drive = DriveSpec(
            b_m=float(self.b_m), epsilon=float(self.epsilon), alpha_max=self.alpha_max, renormalize=self.renormalize
        )
        spec = SystemSpec(
            drive=drive,
            geom=geom,
            delta0=float(self.delta0),
            omega_t=float(self.omega_t),
            kappa=float(self.kappa),
            eta_atom=float(self.eta_atom),
        )
        self.overlaps_ = build_overlap_matrix(geom)
        self.assignment_ = assign_sidebands(spec)
        self.instability_ = critical_coupling(spec, assignment=self.assignment_, overlaps=self.overlaps_)
        stable = self.instability_.kind is InstabilityKind.STABLE
        self.lambda_c_ = None if stable else self.instability_.critical_lambda
        if self.coupling is not None:
            lam = float(self.coupling)
        elif stable:
            raise ValueError("coupling must be given when the system has no threshold")
        else:
            lam = self.lambda_c_ * np.sqrt(self.lambda_ratio_sq)
        self.spec_ = spec.with_coupling(lam)
        self.poles_ = find_poles(self.spec_, self.assignment_, self.overlaps_)
        return self

    def _omega(self, X):
        X = check_array(np.asarray(X, dtype=float).reshape(-1, 1) if np.ndim(X) < 2 else X, ensure_2d=True)
        if X.shape[1] != 1:
            raise ValueError("X must hold one frequency per row")
        return X[:, 0]

    def _spectral(self, X):
        check_is_fitted(self, "spec_")
        return spectral_function(self.spec_, self.assignment_, self.overlaps_, self._omega(X), check_stability=False)

    def predict(self, X):
        """Spectral entry ``A[entry]`` at each frequency; real for diagonal entries."""
        a = self._spectral(X)[:, self.entry[0], self.entry[1]]
        return a.real if self.entry[0] == self.entry[1] else a

    def transform(self, X):
        """Diagonal spectral weights, shape ``(n_frequencies, n_modes)``."""
        return np.diagonal(self._spectral(X), axis1=1, axis2=2).real.copy()

    def mode_weights(self, omega, method="eigenvector"):
        """Mode decomposition of the polariton at ``omega``."""
        check_is_fitted(self, "spec_")
        return mode_weights(self.spec_, self.assignment_, self.overlaps_, omega, method=method)
