"""Nambu Green's function of the cavity field, spectra and polariton poles.

The inverse propagator over the 2N Nambu components is::

    [[P(w) + chi(w),   chi(w)        ],
     [chi(w),          Pbar(w) + chi(w)]]

with ``P = diag(w - d_j + i kappa)`` and ``Pbar = diag(-w - d_j - i kappa)``.
At w = 0 for a single mode its determinant is ``d**2 + kappa**2 - 2 d chi(0)``,
which vanishes at the analytic critical coupling.

Poles are found without frequency grids. The density response is a sum of
simple poles at +-E_n, so the cleared determinant is a polynomial and its
roots are eigenvalues of a companion-type matrix.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import warnings

import numpy as np

from .geometry import build_overlap_matrix, lg_radial_profiles, radial_grid
from .medium import (
    assign_sidebands,
    atomic_energies,
    effective_coupling,
    mode_coefficients,
    polarizability,
)

__all__ = [
    "SingularResponseError",
    "NumericalFailure",
    "AmbiguousModeError",
    "UnstableSpectrumWarning",
    "PoleSet",
    "SpectralGrid",
    "prepare",
    "inverse_greens",
    "greens",
    "spectral_function",
    "find_poles",
    "minimal_eigenvector",
    "mode_weights",
    "intensity_profile",
    "spectral_grid",
]

COND_LIMIT = 1e12
SPURIOUS_DISTANCE = 1e-7
RESIDUE_TOL = 1e-4
RANK_TOL = 1e-12
DEGENERACY_TOL = 1e-10


class SingularResponseError(np.linalg.LinAlgError):
    """The inverse propagator is singular: a pole sits on the real axis."""


class NumericalFailure(RuntimeError):
    """An eigenvalue computation did not converge."""


class AmbiguousModeError(ValueError):
    """Two eigenvalues are too close to pick a single polariton vector."""


class UnstableSpectrumWarning(UserWarning):
    """A pole lies in the upper half plane; the spectrum is not physical."""


def prepare(spec, assignment=None, overlaps=None):
    """Fill in the sideband assignment and overlap matrix if not given."""
    if assignment is None:
        assignment = assign_sidebands(spec)
    if overlaps is None:
        overlaps = build_overlap_matrix(spec.geom)
    return assignment, overlaps


def _blocks(spec, assignment, omega):
    d = assignment.detunings
    w = np.asarray(omega, dtype=complex)[..., None]
    p = w - d + 1j * spec.kappa
    pbar = -w - d - 1j * spec.kappa
    return p, pbar


def inverse_greens(spec, assignment, overlaps, omega, eta=None):
    """Nambu inverse propagator at (possibly complex, possibly array) omega.

    Returns an array of shape ``omega.shape + (2N, 2N)``.
    """
    n = len(assignment.pairs)
    chi = polarizability(spec, assignment, overlaps, omega, eta)
    chi = chi[..., :n, :n]
    p, pbar = _blocks(spec, assignment, omega)
    out = np.zeros(np.shape(omega) + (2 * n, 2 * n), dtype=complex)
    idx = np.arange(n)
    out[..., :n, :n] = chi
    out[..., n:, n:] = chi
    out[..., :n, n:] = chi
    out[..., n:, :n] = chi
    out[..., idx, idx] += p
    out[..., idx + n, idx + n] += pbar
    return out


def greens(spec, assignment, overlaps, omega, eta=None, check=True):
    """Retarded Nambu Green's function D^R(omega) for real omega.

    Raises
    ------
    SingularResponseError
        If the inverse propagator has condition number above 1e12.
    """
    inv = inverse_greens(spec, assignment, overlaps, omega, eta)
    if check:
        cond = np.linalg.cond(inv)
        if np.any(~np.isfinite(cond)) or np.any(cond > COND_LIMIT):
            raise SingularResponseError(
                f"inverse propagator is singular (condition number {np.max(cond):.3g})"
            )
    return np.linalg.inv(inv)


def spectral_function(spec, assignment, overlaps, omega, eta=None, check_stability=True):
    """Spectral matrix ``A = i (D - D^dagger)`` on the positive-frequency block.

    Returns a complex Hermitian array of shape ``omega.shape + (N, N)`` with
    real diagonal. When ``check_stability`` is set and a pole lies in the
    upper half plane an :class:`UnstableSpectrumWarning` is issued.
    """
    n = len(assignment.pairs)
    g = greens(spec, assignment, overlaps, omega, eta)[..., :n, :n]
    a = 1j * (g - np.conj(np.swapaxes(g, -1, -2)))
    # enforce exact Hermiticity of the diagonal
    idx = np.arange(n)
    a[..., idx, idx] = a[..., idx, idx].real
    if check_stability:
        poles = find_poles(spec, assignment, overlaps, tag=False)
        if poles.max_imag > 0:
            warnings.warn(
                f"unstable parameters: pole at {poles.unstable_pole:.6g}",
                UnstableSpectrumWarning,
                stacklevel=2,
            )
    return a


@dataclass(frozen=True)
class PoleSet:
    """Complex polariton poles with the dominant cavity mode of each."""

    poles: np.ndarray
    modes: np.ndarray
    coupling: float
    drive: object = None
    method: str = "full"

    @property
    def max_imag(self):
        return float(np.max(self.poles.imag)) if len(self.poles) else -np.inf

    @property
    def unstable_pole(self):
        return complex(self.poles[np.argmax(self.poles.imag)])

    def is_stable(self, tol=0.0):
        return self.max_imag <= tol

    def __len__(self):
        return len(self.poles)


def _coupling_columns(spec, assignment, overlaps):
    """Columns u and energies E with chi(w) = sum_k 2E_k/(E_k^2 - w^2) u_k u_k^T.

    Radial states with equal energy are merged and compressed to the rank of
    their combined coupling vectors.
    """
    lam = effective_coupling(spec)
    c = mode_coefficients(spec, assignment)
    m = np.asarray(overlaps.entries, dtype=float)[: len(c)]
    u = lam * c[:, None] * m
    energies = atomic_energies(spec)
    cols, ens = [], []
    if lam == 0 or not np.any(u):
        return np.zeros((len(c), 0)), np.zeros(0)
    scale = np.max(np.abs(u))
    for e in np.unique(energies):
        block = u[:, energies == e]
        left, sv, _ = np.linalg.svd(block, full_matrices=False)
        keep = sv > RANK_TOL * scale
        for k in np.nonzero(keep)[0]:
            cols.append(left[:, k] * sv[k])
            ens.append(e)
    if not cols:
        return np.zeros((len(c), 0)), np.zeros(0)
    return np.array(cols).T, np.array(ens)


def _deflate(detunings, u):
    """Split modes into coupled combinations and dark ones with bare poles.

    Modes with equal effective detuning share the same bare propagator, so any
    rotation among them leaves the problem unchanged. Rotating onto the row
    space of their coupling vectors leaves ``rank`` coupled combinations; the
    rest never see the atoms and keep the poles ``+-d - i kappa`` exactly.

    Returns
    -------
    (d_coupled, u_coupled, d_dark)
    """
    d_c, u_c, d_dark = [], [], []
    scale = np.max(np.abs(u)) if u.size else 0.0
    used = np.zeros(len(detunings), dtype=bool)
    for i, di in enumerate(detunings):
        if used[i]:
            continue
        group = np.nonzero(~used & (np.abs(detunings - di) <= RANK_TOL * max(1.0, abs(di))))[0]
        used[group] = True
        block = u[group]
        if scale == 0 or not np.any(block):
            d_dark.extend([di] * len(group))
            continue
        left, sv, vh = np.linalg.svd(block, full_matrices=False)
        keep = sv > RANK_TOL * scale
        for k in np.nonzero(keep)[0]:
            d_c.append(di)
            u_c.append(sv[k] * vh[k])
        d_dark.extend([di] * (len(group) - int(np.count_nonzero(keep))))
    k = u.shape[1]
    u_c = np.array(u_c).reshape(len(d_c), k)
    return np.array(d_c), u_c, np.array(d_dark)


def _roots_scalar(detunings, kappa, u, energy):
    """Roots of the rank-one dispersion relation.

    In ``s = -i w`` the condition is ``1 = 4 E / (E^2 + s^2) * g(s)`` with
    ``g(s) = sum_j u_j^2 d_j / ((s + kappa)^2 + d_j^2)``. Clearing the
    denominators gives a polynomial of degree ``2N + 2``. Its roots are
    taken as eigenvalues of the companion matrix in the partial-fraction
    (Lagrange) basis, ``diag(z) + r 1^T``, where ``z`` are the cleared poles
    and ``r`` the residues of the right-hand side. Unlike the monomial
    companion matrix this stays accurate when detunings cluster.

    Falls back to the block linearization when a cavity pole sits on the
    atomic pole, where the residues are undefined.
    """
    d = np.asarray(detunings, dtype=float)
    u = np.asarray(u, dtype=float)
    s_up = -kappa + 1j * d
    s_dn = -kappa - 1j * d
    den_up = energy * energy + s_up * s_up
    den_dn = energy * energy + s_dn * s_dn
    if np.min(np.abs(np.concatenate([den_up, den_dn]))) < RANK_TOL * energy * energy:
        return _roots_linearized(d, kappa, u[:, None], np.array([energy]))

    def g(z):
        return np.sum(u * u * d / ((z + kappa) ** 2 + d * d))

    poles = np.concatenate([s_up, s_dn, [1j * energy, -1j * energy]])
    residues = np.concatenate(
        [
            -2j * energy * u * u / den_up,
            2j * energy * u * u / den_dn,
            [-2j * g(1j * energy), 2j * g(-1j * energy)],
        ]
    )
    mat = np.diag(poles) + np.outer(residues, np.ones(len(poles)))
    return 1j * np.linalg.eigvals(mat)


def _roots_linearized(detunings, kappa, u, energies):
    """Eigenvalues of the linearized cleared determinant.

    With Nambu components ``a, b``, atomic amplitudes ``y`` and ``s = -i w``
    the variables ``p = a + b``, ``q = i (a - b)``, ``y`` and ``s y`` obey a
    real linear eigenproblem::

        s p  = -kappa p - D q
        s q  =  D p - kappa q - 2 W y
        s y  =  z
        s z  =  W^T p - E^2 y

    with ``W = u sqrt(2 E)``. Returns ``w = i s``.
    """
    d = np.asarray(detunings, dtype=float)
    n = len(d)
    k = u.shape[1]
    w = u * np.sqrt(2.0 * energies)[None, :]
    size = 2 * n + 2 * k
    mat = np.zeros((size, size))
    eye = np.eye(n)
    mat[:n, :n] = -kappa * eye
    mat[:n, n : 2 * n] = -np.diag(d)
    mat[n : 2 * n, :n] = np.diag(d)
    mat[n : 2 * n, n : 2 * n] = -kappa * eye
    if k:
        mat[n : 2 * n, 2 * n : 2 * n + k] = -2.0 * w
        mat[2 * n : 2 * n + k, 2 * n + k :] = np.eye(k)
        mat[2 * n + k :, :n] = w.T
        mat[2 * n + k :, 2 * n : 2 * n + k] = -np.diag(energies**2)
    return 1j * np.linalg.eigvals(mat)


def _is_spurious(spec, assignment, overlaps, root, energies):
    if energies.size == 0:
        return False
    if np.min(np.abs(np.abs(root) - energies)) > SPURIOUS_DISTANCE and np.min(
        np.abs(np.concatenate([root - energies, root + energies]))
    ) > SPURIOUS_DISTANCE:
        return False
    probe = root + SPURIOUS_DISTANCE
    sv = np.linalg.svd(inverse_greens(spec, assignment, overlaps, probe, eta=0.0), compute_uv=False)
    # a genuine pole keeps the propagator nearly singular next to the root
    return sv[-1] > RESIDUE_TOL * max(1.0, sv[0])


def _dominant_mode(spec, assignment, overlaps, root):
    inv = inverse_greens(spec, assignment, overlaps, root, eta=0.0)
    _, _, vh = np.linalg.svd(inv)
    vec = np.conj(vh[-1])
    n = len(assignment.pairs)
    weight = np.abs(vec[:n]) ** 2 + np.abs(vec[n:]) ** 2
    return int(np.argmax(weight))


def find_poles(spec, assignment=None, overlaps=None, method="auto", tag=True):
    """All polariton poles at zero atomic broadening.

    Parameters
    ----------
    method : {"auto", "scalar", "full"}
        ``"scalar"`` uses the rank-one dispersion relation and requires a
        single coupling column (narrow cloud). ``"full"`` uses the block
        linearization of the cleared determinant. ``"auto"`` picks scalar
        when applicable.
    tag : bool
        Compute the dominant cavity mode of each pole.

    Raises
    ------
    NumericalFailure
        If the eigenvalue solver does not converge.
    """
    assignment, overlaps = prepare(spec, assignment, overlaps)
    u, energies = _coupling_columns(spec, assignment, overlaps)
    if method == "auto":
        method = "scalar" if u.shape[1] == 1 else "full"
    if method == "scalar" and u.shape[1] > 1:
        raise ValueError("scalar pole finder needs a rank-one polarizability")
    if method not in ("scalar", "full"):
        raise ValueError(f"unknown method {method!r}")
    d_c, u_c, d_dark = _deflate(assignment.detunings, u)
    try:
        if len(d_c) == 0:
            roots = np.zeros(0, dtype=complex)
        elif method == "scalar":
            roots = _roots_scalar(d_c, spec.kappa, u_c[:, 0], energies[0])
        else:
            roots = _roots_linearized(d_c, spec.kappa, u_c, energies)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"find_poles: companion eigenvalues did not converge ({exc})") from exc
    if not np.all(np.isfinite(roots)):
        raise NumericalFailure("find_poles: non-finite roots")
    keep = [r for r in roots if not _is_spurious(spec, assignment, overlaps, r, energies)]
    keep += [sgn * dd - 1j * spec.kappa for dd in d_dark for sgn in (1.0, -1.0)]
    roots = np.array(sorted(keep, key=lambda z: (round(z.real, 12), z.imag)), dtype=complex)
    if tag:
        modes = np.array([_dominant_mode(spec, assignment, overlaps, r) for r in roots], dtype=int)
    else:
        modes = np.full(len(roots), -1, dtype=int)
    return PoleSet(roots, modes, coupling=spec.coupling, drive=spec.drive, method=method)


def minimal_eigenvector(spec, assignment, overlaps, omega, eta=None):
    """Eigenvector of the inverse propagator with the smallest |eigenvalue|.

    Raises
    ------
    AmbiguousModeError
        If the two smallest eigenvalue magnitudes agree within 1e-10.
    """
    inv = inverse_greens(spec, assignment, overlaps, float(omega), eta)
    vals, vecs = np.linalg.eig(inv)
    order = np.argsort(np.abs(vals))
    if len(vals) > 1 and abs(abs(vals[order[1]]) - abs(vals[order[0]])) < DEGENERACY_TOL:
        raise AmbiguousModeError(f"degenerate minimal eigenvalue at omega={omega}")
    vec = vecs[:, order[0]]
    return vec / np.linalg.norm(vec)


def mode_weights(spec, assignment, overlaps, omega, eta=None, method="eigenvector"):
    """Fraction of each cavity mode in the polariton at frequency omega.

    ``method="eigenvector"`` sums both Nambu components of the minimal
    eigenvector. ``method="spectral"`` normalizes the diagonal of the
    spectral function instead.
    """
    n = len(assignment.pairs)
    if method == "eigenvector":
        vec = minimal_eigenvector(spec, assignment, overlaps, omega, eta)
        w = np.abs(vec[:n]) ** 2 + np.abs(vec[n:]) ** 2
    elif method == "spectral":
        a = spectral_function(spec, assignment, overlaps, float(omega), eta, check_stability=False)
        w = np.clip(np.diagonal(a).real, 0.0, None)
    else:
        raise ValueError(f"unknown method {method!r}")
    return w / np.sum(w)


def intensity_profile(vector, geom=None, r=None):
    """Radial intensity ``|sum_j v_j w0 LG_j0(r)|**2`` normalized to a peak of 1.

    ``r`` is in units of the waist; defaults to 512 points on [0, 4].
    """
    vec = np.asarray(vector, dtype=complex)
    if geom is not None and len(vec) > geom.n_cavity_modes:
        vec = vec[: geom.n_cavity_modes]
    r = radial_grid() if r is None else np.asarray(r, dtype=float)
    field_ = lg_radial_profiles(len(vec), r).T @ vec
    inten = np.abs(field_) ** 2
    peak = np.max(inten)
    return inten / peak if peak > 0 else inten


@dataclass(frozen=True)
class SpectralGrid:
    """Spectral function sampled on (sweep value, omega).

    ``values[k, m, e]`` is entry ``entries[e]`` of A at ``axis2[k]`` and
    ``axis1[m]``. Diagonal entries are real; off-diagonal ones are stored as
    complex. Rows that failed carry NaN and a message in ``errors``.
    """

    axis1: np.ndarray
    axis2: np.ndarray
    axis2_name: str
    entries: tuple
    values: np.ndarray
    couplings: np.ndarray
    lambda_c: np.ndarray
    errors: tuple = field(default=())


SWEEP_AXES = ("lambda_ratio_sq", "b_m", "epsilon")


def _grid_row(spec, omega, entries, full_entries):
    assignment, overlaps = prepare(spec)
    a = spectral_function(spec, assignment, overlaps, omega, check_stability=False)
    vals = np.stack([a[..., i, j] for i, j in entries], axis=-1)
    return vals if full_entries else vals.real


def spectral_grid(
    spec,
    axis,
    values,
    omega,
    entries=((0, 0),),
    lambda_ratio_sq=None,
    reference="system",
    threads=1,
    **critical_kw,
):
    """Spectral function over a sweep of coupling, modulation depth or offset.

    Parameters
    ----------
    spec : SystemSpec
        Template; the swept field is overwritten per row.
    axis : {"lambda_ratio_sq", "b_m", "epsilon"}
        ``"lambda_ratio_sq"`` sweeps ``(Lambda / Lambda_c)**2``.
    values : array_like
        Sweep values.
    omega : array_like
        Real frequencies.
    lambda_ratio_sq : float, optional
        For ``b_m`` and ``epsilon`` sweeps, hold ``(Lambda / Lambda_c)**2``
        fixed and re-solve Lambda_c per row. Otherwise ``spec.coupling`` is
        used unchanged.
    reference : {"system", "single"}
        Critical coupling used for ratios: the numerically located threshold
        of the (modulated) system, or the analytic single-mode value.
    threads : int
        Worker threads; row order in the result is always the sweep order.
    """
    from .analysis import reference_critical_coupling

    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    values = np.atleast_1d(np.asarray(values, dtype=float))
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    entries = tuple((int(i), int(j)) for i, j in entries)
    full_entries = any(i != j for i, j in entries)
    n = spec.n_modes
    for i, j in entries:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"entry {(i, j)} outside {n} modes")

    lc_fixed = None
    if axis == "lambda_ratio_sq":
        lc_fixed = reference_critical_coupling(spec, reference, **critical_kw)

    def row_spec(val):
        if axis == "lambda_ratio_sq":
            return spec.with_coupling(lc_fixed * np.sqrt(val)), lc_fixed
        s = spec.with_drive(**{axis: float(val)})
        if lambda_ratio_sq is None:
            return s, np.nan
        lc = reference_critical_coupling(s, reference, **critical_kw)
        return s.with_coupling(lc * np.sqrt(lambda_ratio_sq)), lc

    def work(k):
        try:
            s, lc = row_spec(values[k])
            return k, s.coupling, lc, _grid_row(s, omega, entries, full_entries), None
        except Exception as exc:  # recorded per row
            return k, np.nan, np.nan, None, f"{type(exc).__name__}: {exc}"

    dtype = complex if full_entries else float
    out = np.full((len(values), len(omega), len(entries)), np.nan, dtype=dtype)
    couplings = np.full(len(values), np.nan)
    lcs = np.full(len(values), np.nan)
    errors = []
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            results = list(pool.map(work, range(len(values))))
    else:
        results = [work(k) for k in range(len(values))]
    for k, lam, lc, row, err in results:
        couplings[k] = lam
        lcs[k] = lc
        if err is None:
            out[k] = row
        else:
            errors.append((k, err))
    return SpectralGrid(omega, values, axis, entries, out, couplings, lcs, tuple(errors))
