"""Sectioned ``key = value`` run configuration.

Sections are ``[cavity]``, ``[drive]``, ``[medium]``, ``[coupling]``,
``[sweep]`` and ``[output]``. Unknown sections or keys are errors. Every
value is validated before any computation, and errors carry the line number
of the offending entry.
"""
import configparser
from dataclasses import dataclass
import hashlib
import math
import re

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "parse_config", "parse_config_text"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and line."""


def _bool(text):
    low = text.strip().lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise ValueError("expected true or false")


def _int(text):
    return int(text.strip())


def _float(text):
    val = float(text.strip())
    if not math.isfinite(val):
        raise ValueError("must be finite")
    return val


def _pair(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated integers")
    return (int(parts[0]), int(parts[1]))


def _floats(text):
    return tuple(_float(p) for p in text.split(",") if p.strip())


def _str(text):
    return text.strip()


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _at_least(n):
    return lambda v: v >= n


def _choice(*opts):
    return lambda v: v in opts


# section -> key -> (parser, default, check, description of the check)
# a default of None marks an optional key without a value
SCHEMA = {
    "cavity": {
        "delta0": (_float, 0.8, None, ""),
        "kappa": (_float, 0.0, _nonneg, "must be >= 0"),
        "omega_t": (_float, 100.0, _positive, "must be > 0"),
        "n_modes": (_int, 1, _at_least(1), "must be >= 1"),
        "waist_ratio": (_float, 1000.0, _positive, "must be > 0"),
        "w0_over_q": (_float, 200.0, _positive, "must be > 0"),
    },
    "drive": {
        "b_m": (_float, 0.0, None, ""),
        "epsilon": (_float, 0.0, None, ""),
        "alpha_max": (_int, 20, _at_least(0), "must be >= 0"),
        "renormalize": (_bool, False, None, ""),
    },
    "medium": {
        "n_atom_modes": (_int, 1, _at_least(1), "must be >= 1"),
        "eta_atom": (_float, 1e-6, _nonneg, "must be >= 0"),
        "omega_trap": (_float, 0.0, _nonneg, "must be >= 0"),
    },
    "coupling": {
        "lambda": (_float, None, _nonneg, "must be >= 0"),
        "lambda_ratio_sq": (_float, None, _nonneg, "must be >= 0"),
        "reference": (_str, "system", _choice("system", "single"), "must be system or single"),
        "lambda_hi": (_float, None, _positive, "must be > 0"),
    },
    "sweep": {
        "omega_min": (_float, 0.0, None, ""),
        "omega_max": (_float, 1.0, None, ""),
        "n_omega": (_int, 400, _at_least(1), "must be >= 1"),
        "ratio_min": (_float, 0.0, _nonneg, "must be >= 0"),
        "ratio_max": (_float, 1.0, _nonneg, "must be >= 0"),
        "n_ratio": (_int, 200, _at_least(1), "must be >= 1"),
        "b_m_min": (_float, 0.0, None, ""),
        "b_m_max": (_float, 4.0, None, ""),
        "n_b_m": (_int, 41, _at_least(1), "must be >= 1"),
        "epsilon_min": (_float, 0.0, None, ""),
        "epsilon_max": (_float, 0.3, None, ""),
        "n_epsilon": (_int, 40, _at_least(1), "must be >= 1"),
        "omega": (_floats, (0.0,), None, ""),
        "entry": (_pair, (0, 0), None, ""),
        "weights_method": (_str, "eigenvector", _choice("eigenvector", "spectral"), "must be eigenvector or spectral"),
        "r_max": (_float, 4.0, _positive, "must be > 0"),
        "n_r": (_int, 512, _at_least(2), "must be >= 2"),
        "crossing_pair": (_pair, (0, 1), None, ""),
        "crossing_entry": (_pair, None, None, ""),
        "crossing_criterion": (
            _str,
            "equal_height",
            _choice("equal_height", "min_splitting", "bare_crossing"),
            "must be equal_height, min_splitting or bare_crossing",
        ),
        "crossing_window": (_float, 0.15, _positive, "must be > 0"),
        "overlap_size": (_int, None, _at_least(1), "must be >= 1"),
    },
    "output": {
        "directory": (_str, ".", None, ""),
        "prefix": (_str, "", None, ""),
    },
}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration: ``values[section][key]`` with defaults applied."""

    values: dict
    source: str = ""

    def __getitem__(self, section):
        return self.values[section]

    def get(self, section, key):
        return self.values[section][key]

    def replace(self, section, key, raw_value):
        """Copy with one key overridden from its text form (validated)."""
        parser, _, check, desc = SCHEMA[section][key]
        value = _convert(parser, check, desc, section, key, raw_value, "command line")
        values = {s: dict(v) for s, v in self.values.items()}
        values[section][key] = value
        return RunConfig(values, self.source)

    def resolved_text(self):
        """Deterministic text of every key, including defaults."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                val = self.values[section][key]
                if val is None:
                    lines.append(f"# {key} = (unset)")
                else:
                    lines.append(f"{key} = {_format(val)}")
            lines.append("")
        return "\n".join(lines)

    def sha256(self):
        return hashlib.sha256(self.resolved_text().encode("utf-8")).hexdigest()


def _convert(parser, check, desc, section, key, raw, where):
    try:
        value = parser(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: [{section}] {key} = {raw.strip()!r}: {exc}") from None
    if check is not None and not check(value):
        raise ConfigError(f"{where}: [{section}] {key} {desc}, got {raw.strip()}")
    return value


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_map(text):
    """Map (section, key) and section headers to 1-based line numbers."""
    lines = {}
    section = None
    for num, line in enumerate(text.splitlines(), start=1):
        if line.strip().startswith(("#", ";")) or not line.strip():
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), num)
            continue
        m = _KEY_RE.match(line)
        if m and not line[0].isspace():
            lines.setdefault((section, m.group(1).strip().lower()), num)
    return lines


def parse_config_text(text, source="<string>"):
    """Parse and validate configuration text."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), default_section="__defaults__"
    )
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}".replace("\n", " ")) from None
    lines = _line_map(text)
    values = {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    for section in parser.sections():
        where = f"{source}:{lines.get((section, None), '?')}"
        if section not in SCHEMA:
            raise ConfigError(f"{where}: unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"{source}:{lines.get((section, key), '?')}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
            parse, _, check, desc = SCHEMA[section][key]
            values[section][key] = _convert(parse, check, desc, section, key, raw, where)
    cfg = RunConfig(values, source)
    _cross_check(cfg, lines, source)
    return cfg


def _cross_check(cfg, lines, source):
    def fail(section, key, msg):
        raise ConfigError(f"{source}:{lines.get((section, key), '?')}: [{section}] {key} {msg}")

    sw = cfg["sweep"]
    if sw["omega_max"] < sw["omega_min"]:
        fail("sweep", "omega_max", "must not be below omega_min")
    if sw["ratio_max"] < sw["ratio_min"]:
        fail("sweep", "ratio_max", "must not be below ratio_min")
    n = cfg["cavity"]["n_modes"]
    for key in ("entry", "crossing_pair", "crossing_entry"):
        val = sw[key]
        if val is not None and not all(0 <= v < n for v in val):
            fail("sweep", key, f"indices must lie in 0..{n - 1}")
    if cfg["drive"]["alpha_max"] + 1 < n:
        fail("drive", "alpha_max", f"must be at least n_modes - 1 = {n - 1}")
    co = cfg["coupling"]
    if co["lambda"] is not None and co["lambda_ratio_sq"] is not None:
        fail("coupling", "lambda_ratio_sq", "cannot be combined with lambda")


def parse_config(path):
    """Read a UTF-8 configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config_text(text, source=str(path))
