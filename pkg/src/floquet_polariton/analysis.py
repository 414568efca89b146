"""Thresholds, instability maps, peak detection and avoided-crossing fits."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import enum
import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.signal import find_peaks, peak_widths

from .geometry import TrapGeometry, build_overlap_matrix
from .medium import DriveSpec, SystemSpec, assign_sidebands
from .response import find_poles, prepare, spectral_function

__all__ = [
    "InstabilityKind",
    "InstabilityReport",
    "NoInstabilityFound",
    "NoCrossingFound",
    "PeaksUnresolved",
    "Peak",
    "CrossingReport",
    "LambdaCCurve",
    "PhaseDiagram",
    "TwoModeModel",
    "critical_coupling_single_mode",
    "critical_coupling",
    "reference_critical_coupling",
    "lambda_c_curve",
    "phase_diagram",
    "detect_peaks",
    "two_mode_spectral",
    "two_mode_a11",
    "extract_effective_coupling",
    "extract_two_mode_coupling",
    "bare_branch_crossing",
]

FREQ_TOL = 1e-6
LAMBDA_TOL = 1e-8
STAB_TOL = 1e-10
N_SCAN = 64
HI_FACTOR = 5.0
PEAK_FACTOR = 3.0
HEIGHT_TOL = 0.02


class InstabilityKind(enum.Enum):
    STABLE = "Stable"
    ZERO_FREQUENCY = "ZeroFrequency"
    FINITE_FREQUENCY = "FiniteFrequency"

    def __str__(self):
        return self.value


class NoInstabilityFound(RuntimeError):
    """The system stays stable over the whole coupling range searched."""


class NoCrossingFound(RuntimeError):
    """No avoided crossing of the requested kind in the sweep range."""


class PeaksUnresolved(RuntimeError):
    """Fewer than two peaks, or a splitting below 2 kappa."""


@dataclass(frozen=True)
class InstabilityReport:
    """Outcome of the threshold search.

    ``critical_lambda`` and ``unstable_pole`` are None for a stable system.
    """

    kind: InstabilityKind
    critical_lambda: float = None
    unstable_pole: complex = None
    lambda_hi: float = None
    tolerances: dict = field(default_factory=dict)

    @property
    def frequency(self):
        """|Re omega| of the threshold pole, NaN when stable."""
        return abs(self.unstable_pole.real) if self.unstable_pole is not None else float("nan")


def critical_coupling_single_mode(delta0, kappa, e_r=1.0):
    """Analytic threshold ``sqrt((kappa**2 + delta0**2) e_r / (4 delta0))``."""
    if not delta0 > 0:
        raise ValueError("delta0 must be positive")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    return math.sqrt((kappa * kappa + delta0 * delta0) * e_r / (4.0 * delta0))


def _default_lambda_hi(spec):
    d0 = abs(spec.delta0)
    scale = max(d0, spec.kappa, 1e-3)
    return HI_FACTOR * math.sqrt((spec.kappa**2 + d0 * d0) / (4.0 * scale))


def critical_coupling(
    spec,
    lambda_hi=None,
    tol=LAMBDA_TOL,
    freq_tol=FREQ_TOL,
    stab_tol=STAB_TOL,
    n_scan=N_SCAN,
    assignment=None,
    overlaps=None,
    raise_if_stable=False,
):
    """Smallest coupling at which a pole enters the upper half plane.

    The coupling is scanned on ``n_scan`` equally spaced points in
    ``(0, lambda_hi]`` and the first unstable interval is bisected to ``tol``.
    A pole counts as unstable once ``Im omega > stab_tol``; the small positive
    margin stops rounding noise on marginal (kappa = 0 or decoupled) poles
    from registering.

    Parameters
    ----------
    spec : SystemSpec
        Its ``coupling`` field is ignored.
    lambda_hi : float, optional
        Upper end of the search; defaults to five times the single-mode
        analytic threshold.

    Returns
    -------
    InstabilityReport
        Kind ``STABLE`` when nothing is found, unless ``raise_if_stable``.
    """
    assignment, overlaps = prepare(spec, assignment, overlaps)
    hi = _default_lambda_hi(spec) if lambda_hi is None else float(lambda_hi)
    if not hi > 0:
        raise ValueError("lambda_hi must be positive")
    tols = {"lambda_tol": tol, "freq_tol": freq_tol, "stab_tol": stab_tol, "n_scan": n_scan}

    def poles(lam):
        return find_poles(spec.with_coupling(lam), assignment, overlaps, tag=False)

    if not poles(0.0).is_stable(stab_tol):
        raise ValueError("system is unstable at zero coupling")
    lo, up = 0.0, None
    for lam in np.linspace(0.0, hi, n_scan + 1)[1:]:
        if not poles(lam).is_stable(stab_tol):
            up = lam
            break
        lo = lam
    if up is None:
        if raise_if_stable:
            raise NoInstabilityFound(f"stable for all couplings up to {hi:.6g}")
        return InstabilityReport(InstabilityKind.STABLE, lambda_hi=hi, tolerances=tols)
    while up - lo > tol:
        mid = 0.5 * (lo + up)
        if poles(mid).is_stable(stab_tol):
            lo = mid
        else:
            up = mid
    pole = poles(up).unstable_pole
    kind = InstabilityKind.ZERO_FREQUENCY if abs(pole.real) < freq_tol else InstabilityKind.FINITE_FREQUENCY
    return InstabilityReport(kind, 0.5 * (lo + up), pole, hi, tols)


def reference_critical_coupling(spec, reference="system", **kw):
    """Critical coupling used to normalize sweeps.

    ``"system"`` locates the threshold numerically for ``spec``; ``"single"``
    is the analytic single-mode value.
    """
    if reference == "single":
        return critical_coupling_single_mode(spec.delta0, spec.kappa)
    if reference != "system":
        raise ValueError("reference must be 'system' or 'single'")
    report = critical_coupling(spec, **kw)
    if report.kind is InstabilityKind.STABLE:
        raise NoInstabilityFound("cannot normalize by the critical coupling of a stable system")
    return report.critical_lambda


def _ordered_map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


@dataclass(frozen=True)
class LambdaCCurve:
    b_m: np.ndarray
    bare: tuple
    renormalized: tuple

    def values(self, which="renormalized"):
        reports = getattr(self, which)
        return np.array([np.nan if r.critical_lambda is None else r.critical_lambda for r in reports])


def lambda_c_curve(spec, b_m, threads=1, **kw):
    """Critical coupling versus modulation depth, bare and renormalized."""
    b_m = np.atleast_1d(np.asarray(b_m, dtype=float))
    overlaps = build_overlap_matrix(spec.geom)

    def one(args):
        bm, renorm = args
        s = spec.with_drive(b_m=float(bm), renormalize=renorm)
        return critical_coupling(s, overlaps=overlaps, **kw)

    items = [(bm, False) for bm in b_m] + [(bm, True) for bm in b_m]
    reports = _ordered_map(one, items, threads)
    return LambdaCCurve(b_m, tuple(reports[: len(b_m)]), tuple(reports[len(b_m) :]))


@dataclass(frozen=True)
class PhaseDiagram:
    """Leading instability per (epsilon, b_m) cell; rows follow epsilon."""

    epsilon: np.ndarray
    b_m: np.ndarray
    reports: tuple
    errors: tuple = ()

    @property
    def kinds(self):
        out = np.empty((len(self.epsilon), len(self.b_m)), dtype=object)
        for k, rep in enumerate(self.reports):
            out[divmod(k, len(self.b_m))] = None if rep is None else rep.kind
        return out

    def _field(self, attr):
        out = np.full((len(self.epsilon), len(self.b_m)), np.nan)
        for k, rep in enumerate(self.reports):
            if rep is not None and rep.critical_lambda is not None:
                out[divmod(k, len(self.b_m))] = getattr(rep, attr)
        return out

    @property
    def critical_lambda(self):
        return self._field("critical_lambda")

    @property
    def frequency(self):
        return self._field("frequency")


def phase_diagram(spec, epsilon, b_m, threads=1, **kw):
    """Classify the leading instability on an (epsilon, b_m) grid.

    Cells that raise are stored as None with a message in ``errors``.
    """
    epsilon = np.atleast_1d(np.asarray(epsilon, dtype=float))
    b_m = np.atleast_1d(np.asarray(b_m, dtype=float))
    overlaps = build_overlap_matrix(spec.geom)
    cells = [(e, b) for e in epsilon for b in b_m]

    def one(cell):
        e, b = cell
        try:
            return critical_coupling(spec.with_drive(epsilon=float(e), b_m=float(b)), overlaps=overlaps, **kw), None
        except Exception as exc:
            return None, f"epsilon={e!r} b_m={b!r}: {type(exc).__name__}: {exc}"

    results = _ordered_map(one, cells, threads)
    return PhaseDiagram(epsilon, b_m, tuple(r for r, _ in results), tuple(e for _, e in results if e))


@dataclass(frozen=True)
class Peak:
    omega: float
    height: float
    width: float


def detect_peaks(omega, values, factor=PEAK_FACTOR):
    """Local maxima whose prominence exceeds ``factor`` times the median value.

    Positions and heights are refined with a parabola through the sample and
    its two neighbours; widths are full widths at half prominence.
    """
    omega = np.asarray(omega, dtype=float)
    values = np.asarray(values, dtype=float)
    if omega.shape != values.shape or omega.ndim != 1:
        raise ValueError("omega and values must be 1-D arrays of equal length")
    if len(omega) < 3:
        return []
    step = np.diff(omega)
    if not np.allclose(step, step[0], rtol=1e-6, atol=0):
        raise ValueError("omega grid must be uniform")
    threshold = factor * max(float(np.median(values)), 0.0)
    idx, _ = find_peaks(values, prominence=threshold if threshold > 0 else None)
    if threshold == 0:
        idx = idx[values[idx] > 0]
    if len(idx) == 0:
        return []
    widths = peak_widths(values, idx, rel_height=0.5)[0] * step[0]
    peaks = []
    for i, w in zip(idx, widths):
        ym, y0, yp = values[i - 1], values[i], values[i + 1]
        curv = ym - 2.0 * y0 + yp
        shift = 0.5 * (ym - yp) / curv if curv < 0 else 0.0
        peaks.append(Peak(float(omega[i] + shift * step[0]), float(y0 - 0.25 * (ym - yp) * shift), float(w)))
    return peaks


def _two_highest(peaks):
    if len(peaks) < 2:
        return None
    top = sorted(peaks, key=lambda p: p.height, reverse=True)[:2]
    return tuple(sorted(top, key=lambda p: p.omega))


# -- two-mode forward model -------------------------------------------------


@dataclass(frozen=True)
class TwoModeModel:
    """Two linearly coupled lossy modes with coupling-dependent self-energies.

    The inverse propagator is ``[[w - d1 + i k - L^2 s11, -L^2 s12],
    [-L^2 s12, w - d2 + i k - L^2 s22]]``.
    """

    delta1: float
    delta2: float
    kappa: float
    sigma11: float
    sigma22: float
    sigma12: float

    @classmethod
    def with_crossing(cls, delta_tilde, g, kappa, lambda_ac=1.0, slope=1.0, offset=0.5):
        """Model whose bare levels meet at ``delta_tilde`` when ``L = lambda_ac``.

        Mode 1 starts ``offset`` above and mode 2 ``offset`` below; ``slope``
        sets how fast they approach. The off-diagonal element equals ``g`` at
        the crossing.
        """
        la2 = lambda_ac**2
        s11 = -offset / la2 * slope
        s22 = offset / la2 * slope
        d1 = delta_tilde - s11 * la2
        d2 = delta_tilde - s22 * la2
        return cls(d1, d2, kappa, s11, s22, g / la2)

    def crossing_coupling(self):
        return math.sqrt((self.delta2 - self.delta1) / (self.sigma11 - self.sigma22))

    def spectral(self, omega, lam):
        return two_mode_spectral(omega, self, lam)


def two_mode_spectral(omega, model, lam):
    """Spectral matrix ``i (D - D^dagger)`` of the two-mode model."""
    w = np.asarray(omega, dtype=float)[..., None, None]
    l2 = lam * lam
    inv = np.zeros(w.shape[:-2] + (2, 2), dtype=complex)
    inv[..., 0, 0] = w[..., 0, 0] - model.delta1 + 1j * model.kappa - l2 * model.sigma11
    inv[..., 1, 1] = w[..., 0, 0] - model.delta2 + 1j * model.kappa - l2 * model.sigma22
    inv[..., 0, 1] = inv[..., 1, 0] = -l2 * model.sigma12
    d = np.linalg.inv(inv)
    return 1j * (d - np.conj(np.swapaxes(d, -1, -2)))


def two_mode_a11(omega, delta_tilde, g, kappa):
    """Closed form of ``A_11`` at the crossing, off-diagonal element ``g``.

    Equals ``2 kappa (a + g^2) / ((a + g^2)^2 - 4 x^2 g^2)`` with
    ``x = omega - delta_tilde`` and ``a = x^2 + kappa^2``.
    """
    x = np.asarray(omega, dtype=float) - delta_tilde
    a = x * x + kappa * kappa
    num = ((a * kappa + g * g * kappa)) * a
    den = ((a - g * g) * x) ** 2 + (a * kappa + g * g * kappa) ** 2
    return 2.0 * num / den


# -- crossing extraction ------------------------------------------------------


@dataclass(frozen=True)
class CrossingReport:
    """Avoided crossing located in a coupling sweep.

    ``g_eff`` is half the peak splitting; ``g_eff_corrected`` is
    ``sqrt((splitting / 2)**2 + kappa**2)``. Couplings are in E_r.
    """

    lambda_ac: float
    lambda_ratio_sq: float
    g_eff: float
    g_eff_corrected: float
    kappa: float
    peak_positions: tuple
    peak_heights: tuple
    entry: tuple
    criterion: str
    lambda_c: float = float("nan")

    @property
    def g_over_kappa(self):
        return self.g_eff / self.kappa if self.kappa > 0 else float("inf")

    @property
    def splitting(self):
        return self.peak_positions[1] - self.peak_positions[0]


def _height_imbalance(pair):
    if pair is None:
        return float("nan")
    lo, up = pair
    return (lo.height - up.height) / max(lo.height, up.height)


def _find_equal_heights(peaks_at, x_lo, x_hi, n_scan, xtol, height_tol):
    """Bisection on the relative height imbalance of the two highest peaks."""
    xs = np.linspace(x_lo, x_hi, n_scan)
    vals = [_height_imbalance(_two_highest(peaks_at(x))) for x in xs]
    bracket = None
    for k in range(len(xs) - 1):
        a, b = vals[k], vals[k + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b <= 0:
            bracket = (xs[k], xs[k + 1], a)
            break
    if bracket is None:
        raise NoCrossingFound("peak heights never equalize in the sweep range")
    lo, up, f_lo = bracket
    while up - lo > xtol:
        mid = 0.5 * (lo + up)
        f_mid = _height_imbalance(_two_highest(peaks_at(mid)))
        if not np.isfinite(f_mid):
            raise PeaksUnresolved(f"lost a peak while bisecting at {mid:.6g}")
        if f_mid * f_lo > 0:
            lo, f_lo = mid, f_mid
        else:
            up = mid
    x = 0.5 * (lo + up)
    pair = _two_highest(peaks_at(x))
    if pair is None or abs(_height_imbalance(pair)) > height_tol:
        raise NoCrossingFound("height imbalance did not converge within tolerance")
    return x, pair


def _report(lam, lc, kappa, pair, entry, criterion):
    split = pair[1].omega - pair[0].omega
    if split < 2.0 * kappa:
        raise PeaksUnresolved(f"splitting {split:.4g} is below 2 kappa")
    g = 0.5 * split
    return CrossingReport(
        lambda_ac=float(lam),
        lambda_ratio_sq=float((lam / lc) ** 2) if np.isfinite(lc) else float("nan"),
        g_eff=g,
        g_eff_corrected=math.sqrt(g * g + kappa * kappa),
        kappa=kappa,
        peak_positions=(pair[0].omega, pair[1].omega),
        peak_heights=(pair[0].height, pair[1].height),
        entry=entry,
        criterion=criterion,
        lambda_c=float(lc),
    )


def extract_two_mode_coupling(model, lambda_range, omega, n_scan=41, xtol=1e-10, height_tol=HEIGHT_TOL):
    """Equal-height extraction on the two-mode forward model using ``A_11``."""
    omega = np.asarray(omega, dtype=float)

    def peaks_at(lam):
        return detect_peaks(omega, model.spectral(omega, lam)[:, 0, 0].real)

    lam, pair = _find_equal_heights(peaks_at, lambda_range[0], lambda_range[1], n_scan, xtol, height_tol)
    return _report(lam, float("nan"), model.kappa, pair, (0, 0), "equal_height")


def bare_branch_crossing(spec, mode, lambda_c=None):
    """Coupling at which the unmodulated single-mode polariton reaches ``mode``'s detuning.

    The branch is the lowest positive-frequency pole of the fundamental mode
    alone with no phase modulation; it falls from ``delta0`` towards zero at
    its own threshold.
    """
    target = assign_sidebands(spec).detunings[mode]
    single = SystemSpec(
        drive=DriveSpec(alpha_max=spec.drive.alpha_max, renormalize=spec.drive.renormalize),
        geom=TrapGeometry(
            delta=spec.geom.delta,
            n_cavity_modes=1,
            n_atom_modes=spec.geom.n_atom_modes,
            w0_over_Q=spec.geom.w0_over_Q,
        ),
        delta0=spec.delta0,
        omega_t=spec.omega_t,
        kappa=spec.kappa,
        eta_atom=spec.eta_atom,
        omega_trap=spec.omega_trap,
    )
    assignment, overlaps = prepare(single)
    if lambda_c is None:
        lambda_c = critical_coupling(single, assignment=assignment, overlaps=overlaps).critical_lambda

    def branch(lam):
        p = find_poles(single.with_coupling(lam), assignment, overlaps, tag=False).poles
        return float(np.min(np.abs(p.real))) - target

    if not (branch(0.0) > 0 > branch(lambda_c * (1 - 1e-9))):
        raise NoCrossingFound(f"the single-mode branch never reaches {target:.6g}")
    return brentq(branch, 0.0, lambda_c * (1 - 1e-9), xtol=1e-12)


def extract_effective_coupling(
    spec,
    pair,
    ratio_range,
    entry=None,
    criterion="equal_height",
    window=0.15,
    n_omega=801,
    n_scan=41,
    lambda_c=None,
    height_tol=HEIGHT_TOL,
    ratio_tol=1e-6,
    peak_factor=PEAK_FACTOR,
):
    """Locate an avoided crossing between two modes and read off its coupling.

    Parameters
    ----------
    spec : SystemSpec
        Template; ``coupling`` is overwritten.
    pair : (int, int)
        The modes involved. The frequency window is centred on the effective
        detuning of ``pair[1]``, the incoming mode.
    ratio_range : (float, float)
        Sweep range of ``(Lambda / Lambda_c)**2``.
    entry : (int, int), optional
        Diagonal spectral entry analysed; defaults to ``(pair[0], pair[0])``.
        For a crossing that involves a composite mode pass the incoming bare
        mode's entry, where only two peaks appear.
    criterion : {"equal_height", "min_splitting", "bare_crossing"}
        ``"equal_height"`` picks the coupling at which the two highest peaks
        have equal refined heights. ``"min_splitting"`` picks the smallest
        separation. ``"bare_crossing"`` picks the coupling at which the
        unmodulated single-mode branch reaches the incoming mode's detuning.
    window : float
        Peaks are kept within this distance of the incoming mode's detuning.
        Spectra are sampled over twice the distance so that the detection
        threshold reflects the background.
    lambda_c : float, optional
        Normalizing critical coupling; computed for ``spec`` if omitted.

    Raises
    ------
    NoCrossingFound, PeaksUnresolved
    """
    i, j = (int(pair[0]), int(pair[1]))
    entry = (i, i) if entry is None else (int(entry[0]), int(entry[1]))
    if entry[0] != entry[1]:
        raise ValueError("crossing extraction uses a diagonal spectral entry")
    assignment, overlaps = prepare(spec)
    if lambda_c is None:
        lambda_c = critical_coupling(spec, assignment=assignment, overlaps=overlaps).critical_lambda
        if lambda_c is None:
            raise NoCrossingFound("system has no threshold to normalize by")
    centre = assignment.detunings[j]
    # the median that sets the peak threshold is taken over twice the window
    omega = np.linspace(centre - 2 * window, centre + 2 * window, 2 * n_omega - 1)

    def peaks_at(ratio):
        s = spec.with_coupling(lambda_c * math.sqrt(ratio))
        a = spectral_function(s, assignment, overlaps, omega, check_stability=False)
        found = detect_peaks(omega, a[:, entry[0], entry[0]].real, factor=peak_factor)
        return [p for p in found if abs(p.omega - centre) <= window]

    if criterion == "equal_height":
        ratio, top = _find_equal_heights(peaks_at, ratio_range[0], ratio_range[1], n_scan, ratio_tol, height_tol)
    elif criterion == "min_splitting":

        def split(ratio):
            top = _two_highest(peaks_at(ratio))
            return np.inf if top is None else top[1].omega - top[0].omega

        xs = np.linspace(ratio_range[0], ratio_range[1], n_scan)
        vals = np.array([split(x) for x in xs])
        if not np.any(np.isfinite(vals)):
            raise PeaksUnresolved("no pair of peaks in the sweep range")
        k = int(np.argmin(vals))
        if k in (0, len(xs) - 1):
            raise NoCrossingFound("splitting is smallest at the edge of the sweep range")
        res = minimize_scalar(split, bounds=(xs[k - 1], xs[k + 1]), method="bounded", options={"xatol": ratio_tol})
        ratio = float(res.x)
        top = _two_highest(peaks_at(ratio))
    elif criterion == "bare_crossing":
        lam = bare_branch_crossing(spec, j)
        ratio = (lam / lambda_c) ** 2
        if not ratio_range[0] <= ratio <= ratio_range[1]:
            raise NoCrossingFound(f"bare-branch crossing at ratio {ratio:.4g} is outside the sweep range")
        top = _two_highest(peaks_at(ratio))
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    if top is None:
        raise PeaksUnresolved("fewer than two peaks at the crossing")
    return _report(lambda_c * math.sqrt(ratio), lambda_c, spec.kappa, top, entry, criterion)
