"""Command line interface.

``floquet-polariton <subcommand> --config FILE [--out DIR] [--threads N]
[--entry i,j] [--renormalize true|false]``

Exit codes: 0 on success, 1 for configuration errors, 2 for numerical
failures. Outputs are deterministic for a given resolved configuration;
run times go to a separate ``.timing.json`` file so that data files stay
byte-identical between runs.
"""
import argparse
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .analysis import (
    critical_coupling_single_mode,
    extract_effective_coupling,
    lambda_c_curve,
    phase_diagram,
    reference_critical_coupling,
)
from .config import ConfigError, parse_config
from .geometry import TrapGeometry, build_overlap_matrix, radial_grid
from .medium import CutoffWarning, DriveSpec, SystemSpec, assign_sidebands
from .response import (
    find_poles,
    intensity_profile,
    minimal_eigenvector,
    mode_weights,
    spectral_function,
    spectral_grid,
)

__all__ = ["main", "build_spec", "SUBCOMMANDS"]

TOOL = "floquet-polariton"


def build_spec(cfg):
    """SystemSpec from a RunConfig, with zero coupling."""
    cav, drv, med = cfg["cavity"], cfg["drive"], cfg["medium"]
    geom = TrapGeometry(
        delta=cav["waist_ratio"],
        n_cavity_modes=cav["n_modes"],
        n_atom_modes=med["n_atom_modes"],
        w0_over_Q=cav["w0_over_q"],
    )
    drive = DriveSpec(
        b_m=drv["b_m"], epsilon=drv["epsilon"], alpha_max=drv["alpha_max"], renormalize=drv["renormalize"]
    )
    return SystemSpec(
        drive=drive,
        geom=geom,
        delta0=cav["delta0"],
        omega_t=cav["omega_t"],
        kappa=cav["kappa"],
        eta_atom=med["eta_atom"],
        omega_trap=med["omega_trap"],
    )


def _critical_kw(cfg):
    hi = cfg["coupling"]["lambda_hi"]
    return {} if hi is None else {"lambda_hi": hi}


def _coupled_spec(cfg, spec):
    co = cfg["coupling"]
    if co["lambda"] is not None:
        return spec.with_coupling(co["lambda"]), float("nan")
    if co["lambda_ratio_sq"] is not None:
        lc = reference_critical_coupling(spec, co["reference"], **_critical_kw(cfg))
        return spec.with_coupling(lc * np.sqrt(co["lambda_ratio_sq"])), lc
    return spec, float("nan")


def _grid(lo, hi, n):
    return np.linspace(lo, hi, n)


def _omega_grid(cfg):
    sw = cfg["sweep"]
    return _grid(sw["omega_min"], sw["omega_max"], sw["n_omega"])


def _num(x):
    """Shortest round-trip text for a float; complex values are not allowed."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def _jnum(x):
    x = float(x)
    return None if not np.isfinite(x) else x


def _entry_label(i, j):
    return f"a{i}{j}" if max(i, j) < 10 else f"a{i}_{j}"


class _Writer:
    def __init__(self, cfg, name, out_dir):
        self.cfg = cfg
        self.name = name
        prefix = cfg["output"]["prefix"]
        self.stem = f"{prefix}{name}"
        self.out_dir = out_dir
        self.hash = cfg.sha256()
        self.header = f"{TOOL} {__version__} {name} config-sha256={self.hash}"
        self.files = []

    def path(self, suffix):
        return os.path.join(self.out_dir, self.stem + suffix)

    def _write(self, suffix, text):
        path = self.path(suffix)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.files.append(path)

    def csv(self, columns, rows, suffix=".csv", notes=()):
        lines = [f"# {self.header}"] + [f"# {n}" for n in notes] + [",".join(columns)]
        for row in rows:
            lines.append(",".join(v if isinstance(v, str) else _num(v) for v in row))
        self._write(suffix, "\n".join(lines) + "\n")

    def json(self, payload, suffix=".json"):
        # JSON has no comment syntax; the header is the first member instead
        doc = {"comment": self.header, "tool": TOOL, "version": __version__, "config_sha256": self.hash}
        doc.update(payload)
        self._write(suffix, json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n")

    def resolved(self):
        self._write(".resolved.cfg", f"# {self.header}\n" + self.cfg.resolved_text())

    def timing(self, seconds, threads):
        doc = {"comment": self.header, "subcommand": self.name, "wall_clock_s": seconds, "threads": threads}
        path = self.path(".timing.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, indent=2) + "\n")


def _spec_echo(spec):
    return {
        "delta0": spec.delta0,
        "kappa": spec.kappa,
        "omega_t": spec.omega_t,
        "coupling": spec.coupling,
        "eta_atom": spec.eta_atom,
        "omega_trap": spec.omega_trap,
        "n_modes": spec.n_modes,
        "n_atom_modes": spec.geom.n_atom_modes,
        "waist_ratio": spec.geom.delta,
        "b_m": spec.drive.b_m,
        "epsilon": spec.drive.epsilon,
        "alpha_max": spec.drive.alpha_max,
        "renormalize": spec.drive.renormalize,
    }


def _complex(z):
    return {"re": float(z.real), "im": float(z.imag)}


# -- subcommands ---------------------------------------------------------------


def cmd_spectrum(cfg, w, args):
    spec, _ = _coupled_spec(cfg, build_spec(cfg))
    omega = _omega_grid(cfg)
    assignment = assign_sidebands(spec)
    a = spectral_function(spec, assignment, build_overlap_matrix(spec.geom), omega, check_stability=False)
    if args.entry is not None:
        entries = [args.entry]
    else:
        entries = [(i, i) for i in range(spec.n_modes)]
    cols, data = ["omega"], [omega]
    for i, j in entries:
        if i == j:
            cols.append(_entry_label(i, j))
            data.append(a[:, i, i].real)
        else:
            cols += [_entry_label(i, j) + "_re", _entry_label(i, j) + "_im"]
            data += [a[:, i, j].real, a[:, i, j].imag]
    w.csv(cols, zip(*data), notes=[f"lambda={_num(spec.coupling)}"])


def _sweep_rows(grid, value_name):
    cols = ["omega", value_name]
    for i, j in grid.entries:
        lab = _entry_label(i, j)
        cols += [lab] if i == j else [lab + "_re", lab + "_im"]
    rows = []
    for k, v in enumerate(grid.axis2):
        for m, om in enumerate(grid.axis1):
            row = [om, v]
            for e, (i, j) in enumerate(grid.entries):
                val = grid.values[k, m, e]
                row += [val.real] if i == j else [val.real, val.imag]
            rows.append(row)
    return cols, rows


def _entries(cfg, args):
    return [args.entry if args.entry is not None else cfg["sweep"]["entry"]]


def _grid_errors(grid):
    return [f"row {k}: {msg}" for k, msg in grid.errors]


def cmd_sweep_lambda(cfg, w, args):
    spec = build_spec(cfg)
    sw = cfg["sweep"]
    ratios = _grid(sw["ratio_min"], sw["ratio_max"], sw["n_ratio"])
    grid = spectral_grid(
        spec,
        "lambda_ratio_sq",
        ratios,
        _omega_grid(cfg),
        entries=_entries(cfg, args),
        reference=cfg["coupling"]["reference"],
        threads=args.threads,
        **_critical_kw(cfg),
    )
    cols, rows = _sweep_rows(grid, "lambda_ratio_sq")
    notes = [f"lambda_c={_num(grid.lambda_c[0])} reference={cfg['coupling']['reference']}"]
    w.csv(cols, rows, notes=notes + _grid_errors(grid))


def cmd_sweep_bm(cfg, w, args):
    spec = build_spec(cfg)
    sw, co = cfg["sweep"], cfg["coupling"]
    values = _grid(sw["b_m_min"], sw["b_m_max"], sw["n_b_m"])
    if co["lambda"] is not None:
        spec = spec.with_coupling(co["lambda"])
    grid = spectral_grid(
        spec,
        "b_m",
        values,
        _omega_grid(cfg),
        entries=_entries(cfg, args),
        lambda_ratio_sq=co["lambda_ratio_sq"],
        reference=co["reference"],
        threads=args.threads,
        **_critical_kw(cfg),
    )
    cols, rows = _sweep_rows(grid, "b_m")
    w.csv(cols, rows, notes=_grid_errors(grid))
    lam_rows = [(b, lam, lc) for b, lam, lc in zip(grid.axis2, grid.couplings, grid.lambda_c)]
    w.csv(["b_m", "lambda", "lambda_c"], lam_rows, suffix=".couplings.csv")


def cmd_weights(cfg, w, args):
    spec, lc = _coupled_spec(cfg, build_spec(cfg))
    assignment = assign_sidebands(spec)
    overlaps = build_overlap_matrix(spec.geom)
    method = cfg["sweep"]["weights_method"]
    points = []
    for om in cfg["sweep"]["omega"]:
        wts = mode_weights(spec, assignment, overlaps, om, method=method)
        points.append({"omega": om, "weights": [float(x) for x in wts]})
    w.json(
        {
            "operation": "weights",
            "method": method,
            "spec": _spec_echo(spec),
            "lambda_c": _jnum(lc),
            "points": points,
            "tolerances": {"degeneracy_tol": 1e-10},
        }
    )


def _fwhm(r, inten):
    half = 0.5 * np.max(inten)
    idx = np.nonzero(inten < half)[0]
    if len(idx) == 0:
        return float("nan")
    k = idx[0]
    if k == 0:
        return 0.0
    r0, r1, y0, y1 = r[k - 1], r[k], inten[k - 1], inten[k]
    return 2.0 * float(r0 + (half - y0) * (r1 - r0) / (y1 - y0))


def cmd_profile(cfg, w, args):
    spec, _ = _coupled_spec(cfg, build_spec(cfg))
    assignment = assign_sidebands(spec)
    overlaps = build_overlap_matrix(spec.geom)
    sw = cfg["sweep"]
    r = radial_grid(sw["r_max"], sw["n_r"])
    n = spec.n_modes
    cols, data, notes = ["r", "fundamental"], [r, intensity_profile([1.0], r=r)], []
    f0 = _fwhm(r, data[1])
    for k, om in enumerate(sw["omega"]):
        vec = minimal_eigenvector(spec, assignment, overlaps, om)[:n]
        prof = intensity_profile(vec, spec.geom, r)
        cols.append(f"intensity_{k}")
        data.append(prof)
        notes.append(f"omega_{k}={_num(om)} fwhm_ratio={_num(_fwhm(r, prof) / f0)}")
    w.csv(cols, zip(*data), notes=notes)


def cmd_poles(cfg, w, args):
    spec, lc = _coupled_spec(cfg, build_spec(cfg))
    assignment = assign_sidebands(spec)
    poles = find_poles(spec, assignment)
    w.json(
        {
            "operation": "poles",
            "spec": _spec_echo(spec),
            "lambda_c": _jnum(lc),
            "effective_detunings": [float(d) for d in assignment.detunings],
            "stable": bool(poles.is_stable()),
            "method": poles.method,
            "poles": [dict(_complex(p), mode=int(m)) for p, m in zip(poles.poles, poles.modes)],
            "tolerances": {"spurious_distance": 1e-7, "residue_tol": 1e-4},
        }
    )


def _report_dict(rep):
    return {
        "kind": str(rep.kind),
        "critical_lambda": None if rep.critical_lambda is None else float(rep.critical_lambda),
        "unstable_pole": None if rep.unstable_pole is None else _complex(rep.unstable_pole),
    }


def cmd_lambda_c(cfg, w, args):
    spec = build_spec(cfg)
    sw = cfg["sweep"]
    b_m = _grid(sw["b_m_min"], sw["b_m_max"], sw["n_b_m"])
    curve = lambda_c_curve(spec, b_m, threads=args.threads, **_critical_kw(cfg))
    rows = []
    for k, b in enumerate(b_m):
        bare, ren = curve.bare[k], curve.renormalized[k]
        rows.append(
            [
                b,
                np.nan if bare.critical_lambda is None else bare.critical_lambda,
                str(bare.kind),
                np.nan if ren.critical_lambda is None else ren.critical_lambda,
                str(ren.kind),
            ]
        )
    single = critical_coupling_single_mode(spec.delta0, spec.kappa) if spec.delta0 > 0 else float("nan")
    w.csv(
        ["b_m", "lambda_c_bare", "kind_bare", "lambda_c_renormalized", "kind_renormalized"],
        rows,
        notes=[f"lambda_c_single_mode={_num(single)}"],
    )


def cmd_phase_diagram(cfg, w, args):
    spec = build_spec(cfg)
    sw = cfg["sweep"]
    eps = _grid(sw["epsilon_min"], sw["epsilon_max"], sw["n_epsilon"])
    b_m = _grid(sw["b_m_min"], sw["b_m_max"], sw["n_b_m"])
    pd = phase_diagram(spec, eps, b_m, threads=args.threads, **_critical_kw(cfg))
    rows = []
    for k, rep in enumerate(pd.reports):
        e, b = eps[k // len(b_m)], b_m[k % len(b_m)]
        if rep is None:
            rows.append([e, b, "Error", np.nan, np.nan, np.nan])
        else:
            lam = np.nan if rep.critical_lambda is None else rep.critical_lambda
            pole = rep.unstable_pole
            rows.append([e, b, str(rep.kind), lam, rep.frequency, np.nan if pole is None else pole.imag])
    w.csv(["epsilon", "b_m", "kind", "lambda_c", "frequency", "growth_rate"], rows, notes=list(pd.errors))


def cmd_crossing(cfg, w, args):
    spec = build_spec(cfg)
    sw = cfg["sweep"]
    entry = args.entry if args.entry is not None else sw["crossing_entry"]
    lc = reference_critical_coupling(spec, cfg["coupling"]["reference"], **_critical_kw(cfg))
    rep = extract_effective_coupling(
        spec,
        sw["crossing_pair"],
        (sw["ratio_min"], sw["ratio_max"]),
        entry=entry,
        criterion=sw["crossing_criterion"],
        window=sw["crossing_window"],
        lambda_c=lc,
    )
    w.json(
        {
            "operation": "crossing",
            "spec": _spec_echo(spec),
            "criterion": rep.criterion,
            "entry": list(rep.entry),
            "pair": list(sw["crossing_pair"]),
            "lambda_c": rep.lambda_c,
            "lambda_ac": rep.lambda_ac,
            "lambda_ratio_sq": rep.lambda_ratio_sq,
            "g_eff": rep.g_eff,
            "g_eff_corrected": rep.g_eff_corrected,
            "g_over_kappa": rep.g_over_kappa,
            "peak_positions": list(rep.peak_positions),
            "peak_heights": list(rep.peak_heights),
            "tolerances": {"height_tol": 0.02, "peak_factor": 3.0},
        }
    )


def cmd_overlaps(cfg, w, args):
    cav, med = cfg["cavity"], cfg["medium"]
    size = cfg["sweep"]["overlap_size"]
    n_cav = cav["n_modes"] if size is None else size
    n_at = med["n_atom_modes"] if size is None else size
    geom = TrapGeometry(delta=cav["waist_ratio"], n_cavity_modes=n_cav, n_atom_modes=n_at)
    mat = build_overlap_matrix(geom)
    rows = [(j, n, mat[j, n]) for j in range(n_cav) for n in range(n_at)]
    w.csv(["j", "n", "overlap"], [(str(j), str(n), v) for j, n, v in rows], notes=[f"delta={_num(geom.delta)}"])


SUBCOMMANDS = {
    "spectrum": cmd_spectrum,
    "sweep-lambda": cmd_sweep_lambda,
    "sweep-bm": cmd_sweep_bm,
    "weights": cmd_weights,
    "profile": cmd_profile,
    "poles": cmd_poles,
    "lambda-c": cmd_lambda_c,
    "phase-diagram": cmd_phase_diagram,
    "crossing": cmd_crossing,
    "overlaps": cmd_overlaps,
}


def _parser():
    p = argparse.ArgumentParser(prog=TOOL, description="Floquet-polariton spectra and instabilities.")
    p.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--out", default=None, help="output directory (overrides [output] directory)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for grids")
    p.add_argument("--entry", default=None, help="spectral entry as i,j")
    p.add_argument("--renormalize", default=None, choices=["true", "false"])
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.renormalize is not None:
            cfg = cfg.replace("drive", "renormalize", args.renormalize)
        if args.entry is not None:
            cfg = cfg.replace("sweep", "entry", args.entry)
            args.entry = cfg["sweep"]["entry"]
            n = cfg["cavity"]["n_modes"]
            if not all(0 <= v < n for v in args.entry):
                raise ConfigError(f"command line: --entry indices must lie in 0..{n - 1}")
        if args.threads < 1:
            raise ConfigError("command line: --threads must be >= 1")
        out_dir = args.out if args.out is not None else cfg["output"]["directory"]
        os.makedirs(out_dir, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("error", CutoffWarning)
            try:
                build_spec(cfg)
            except (ValueError, CutoffWarning) as exc:
                raise ConfigError(f"{args.config}: {exc}") from None
    except ConfigError as exc:
        print(f"{TOOL}: config error: {exc}", file=sys.stderr)
        return 1
    writer = _Writer(cfg, args.subcommand, out_dir)
    start = time.perf_counter()
    try:
        SUBCOMMANDS[args.subcommand](cfg, writer, args)
    except Exception as exc:
        print(f"{TOOL}: numerical failure in {args.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    writer.resolved()
    writer.timing(time.perf_counter() - start, args.threads)
    for path in writer.files:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
