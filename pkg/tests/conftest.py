import pytest

from floquet_polariton import DriveSpec, SystemSpec, TrapGeometry


def make_spec(n_modes=1, delta0=0.8, kappa=0.02, b_m=0.0, epsilon=0.0, coupling=0.0, waist=1000.0, **kw):
    drive_kw = {k: kw.pop(k) for k in ("alpha_max", "renormalize") if k in kw}
    n_atom = kw.pop("n_atom_modes", 1)
    return SystemSpec(
        drive=DriveSpec(b_m=b_m, epsilon=epsilon, **drive_kw),
        geom=TrapGeometry(delta=waist, n_cavity_modes=n_modes, n_atom_modes=n_atom),
        delta0=delta0,
        kappa=kappa,
        coupling=coupling,
        **kw,
    )


@pytest.fixture
def crossing_spec():
    """Four modes, weak modulation, offset 0.19 (fundamental-mode crossing map)."""
    return make_spec(n_modes=4, delta0=0.8, kappa=0.02, b_m=0.9, epsilon=0.19)


# Outcome of each acceptance criterion, filled in by test_acceptance.py.
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        ACCEPTANCE[number] = (passed, detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
