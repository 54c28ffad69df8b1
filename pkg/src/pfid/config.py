"""INI experiment files.

Example::

    [system]
    theta = 0.1, 0.5, 0.9
    threshold_c = 0.8
    theta_bar = 1.7320508075688772
    phi_bar = 2.23606797749979      ; optional, defaults to the input bound
    sigma = 1.0

    [inputs]
    mode = periodic                 ; periodic | iid_uniform | explicit
    vectors = 2 0 1; 1 2 0; 0 1 2   ; periodic: rows separated by ';'
    ; lo = 1.0 / hi = 3.0           ; iid_uniform
    ; file = inputs.csv             ; explicit: CSV with header phi_1..phi_n
    pe_window = 3                   ; optional

    [estimator]
    kind = rpfi                     ; rpfi | impf | projection_baseline
    theta0 = 0.3, 0.3, 0.3
    alpha = 0.6                     ; or "suggested" (rpfi only)
    beta = 0.02

    [experiment]
    horizon = 100000
    runs = 300
    seed = 0
    record_stride = 10
    workers = 1

    [output]
    dir = results

Unknown sections or keys are rejected with the offending line number.
Relative paths resolve against the config file's directory. The environment
variable ``PFID_OUTPUT_DIR`` overrides ``[output] dir``.
"""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .harness import EstimatorSettings, ExperimentSpec
from .noise import NoiseModel
from .system import FirConfig, InputGenerator, load_inputs_csv

OUTPUT_ENV = "PFID_OUTPUT_DIR"

ALLOWED = {
    "system": {"theta", "threshold_c", "theta_bar", "phi_bar", "sigma"},
    "inputs": {"mode", "vectors", "lo", "hi", "file", "pe_window"},
    "estimator": {"kind", "theta0", "alpha", "beta", "r0", "p0", "eps", "radius", "cutoff_m"},
    "experiment": {"horizon", "runs", "seed", "record_stride", "workers"},
    "output": {"dir"},
}
REQUIRED = {
    "system": {"theta", "threshold_c", "theta_bar"},
    "inputs": {"mode"},
    "estimator": {"kind", "theta0"},
    "experiment": {"horizon", "runs"},
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:;#\s][^=:]*?)\s*[=:]")


@dataclass(frozen=True)
class CliConfig:
    spec: ExperimentSpec
    output_dir: Path
    workers: int = 1
    path: Path | None = None


def _line_index(text: str) -> dict:
    where = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), lineno)
            continue
        if line[:1].isspace():
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), lineno)
    return where


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict, path: str):
        self.parser, self.lines, self.path = parser, lines, path

    def fail(self, section: str, key: str | None, message: str):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        raise ConfigError(message, line=line, path=self.path)

    def has(self, section, key) -> bool:
        return self.parser.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.has(section, key):
            if default is None:
                self.fail(section, None, f"[{section}] is missing required key '{key}'")
            return default
        return self.parser.get(section, key).strip()

    def number(self, section, key, default=None, kind=float):
        text = self.raw(section, key, default)
        try:
            return kind(text)
        except (TypeError, ValueError):
            self.fail(section, key, f"[{section}] {key} = {text!r} is not a valid {kind.__name__}")

    def vector(self, section, key):
        text = self.raw(section, key)
        try:
            return [float(v) for v in re.split(r"[,\s]+", text) if v]
        except ValueError:
            self.fail(section, key, f"[{section}] {key} = {text!r} is not a list of numbers")

    def matrix(self, section, key):
        text = self.raw(section, key)
        rows = [r for r in (row.strip() for row in text.replace("\n", ";").split(";")) if r]
        try:
            out = [[float(v) for v in re.split(r"[,\s]+", row) if v] for row in rows]
        except ValueError:
            self.fail(section, key, f"[{section}] {key} is not a ';'-separated list of rows")
        if not out or len({len(r) for r in out}) != 1:
            self.fail(section, key, f"[{section}] {key}: rows must be non-empty and equally long")
        return out


def _parse(text: str, path: str) -> _Reader:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text, source=path)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key '{exc.option}' in [{exc.section}]", exc.lineno, path) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, path) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("content before the first [section] header", exc.lineno, path) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse line: {exc.errors[0][1] if exc.errors else ''}", lineno, path) from None
    reader = _Reader(parser, _line_index(text), path)
    for section in parser.sections():
        if section not in ALLOWED:
            reader.fail(section, None, f"unknown section [{section}]")
        for key in parser.options(section):
            if key not in ALLOWED[section]:
                reader.fail(section, key, f"unknown key '{key}' in [{section}]")
    for section, keys in REQUIRED.items():
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]", None, path)
        for key in sorted(keys):
            reader.raw(section, key)
    return reader


def _build_inputs(rd: _Reader, base: Path, phi_bar):
    mode = rd.raw("inputs", "mode").lower()
    if mode == "periodic":
        return InputGenerator.periodic(rd.matrix("inputs", "vectors"), phi_bar)
    if mode == "iid_uniform":
        lo, hi = rd.number("inputs", "lo"), rd.number("inputs", "hi")
        n = len(rd.vector("system", "theta"))
        if not lo < hi:
            rd.fail("inputs", "hi", "[inputs] needs lo < hi")
        return InputGenerator.iid_uniform(lo, hi, n, phi_bar)
    if mode == "explicit":
        file = base / rd.raw("inputs", "file")
        try:
            seq = load_inputs_csv(file)
        except OSError as exc:
            rd.fail("inputs", "file", f"cannot read inputs file {file}: {exc.strerror}")
        except ValueError as exc:
            rd.fail("inputs", "file", str(exc))
        return InputGenerator.explicit(seq, phi_bar)
    rd.fail("inputs", "mode", f"[inputs] mode must be periodic, iid_uniform or explicit, got {mode!r}")


def _check_output_dir(out: Path, rd: _Reader | None, path: str) -> None:
    probe = out
    while not probe.exists():
        probe = probe.parent
    if not probe.is_dir() or not os.access(probe, os.W_OK):
        msg = f"output directory {out} is not writable"
        if rd is not None:
            rd.fail("output", "dir", msg)
        raise ConfigError(msg, None, path)


def load_config(path: str | Path, out_override: str | Path | None = None) -> CliConfig:
    """Parse and validate an experiment file.

    Raises :class:`ConfigError` for syntax, unknown keys, bad values or bad
    paths; :class:`~pfid.errors.AssumptionError` when the described system
    violates a modelling assumption (e.g. ``||theta|| > theta_bar``).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    rd = _parse(text, str(path))
    base = path.parent

    theta = rd.vector("system", "theta")
    phi_bar = rd.number("system", "phi_bar", "nan")
    phi_bar = None if np.isnan(phi_bar) else phi_bar
    sigma = rd.number("system", "sigma", "1.0")
    try:
        noise = NoiseModel(sigma)
    except ValueError as exc:
        rd.fail("system", "sigma", str(exc))
    inputs = _build_inputs(rd, base, phi_bar)
    system = FirConfig(theta, rd.number("system", "threshold_c"), rd.number("system", "theta_bar"),
                       inputs.phi_bar if phi_bar is None else phi_bar)

    kind = rd.raw("estimator", "kind").lower()
    alpha_text = rd.raw("estimator", "alpha", "suggested" if kind == "rpfi" else "")
    if kind == "impf" or alpha_text.lower() == "suggested":
        alpha = None
    else:
        alpha = rd.number("estimator", "alpha")

    def opt(key):
        return rd.number("estimator", key) if rd.has("estimator", key) else None

    settings = {k: v for k, v in (("beta", opt("beta")), ("r0", opt("r0")), ("p0", opt("p0")),
                                  ("eps", opt("eps")), ("radius", opt("radius")),
                                  ("cutoff_m", opt("cutoff_m"))) if v is not None}
    try:
        estimator = EstimatorSettings(kind, rd.vector("estimator", "theta0"), alpha, **settings)
    except ValueError as exc:
        rd.fail("estimator", None, f"[estimator] {exc}")

    horizon = rd.number("experiment", "horizon", kind=int)
    runs = rd.number("experiment", "runs", kind=int)
    seed = rd.number("experiment", "seed", "0", kind=int)
    stride = rd.number("experiment", "record_stride", "10" if horizon >= 10_000 else "1", kind=int)
    workers = rd.number("experiment", "workers", "1", kind=int)
    pe_window = rd.number("inputs", "pe_window", kind=int) if rd.has("inputs", "pe_window") else None
    if workers < 1:
        rd.fail("experiment", "workers", "[experiment] workers must be >= 1")
    try:
        spec = ExperimentSpec(system, inputs, estimator, noise, horizon, runs, seed, stride, pe_window)
    except ValueError as exc:
        rd.fail("experiment", None, f"[experiment] {exc}")

    if out_override is not None:
        out = Path(out_override)
    elif os.environ.get(OUTPUT_ENV):
        out = Path(os.environ[OUTPUT_ENV])
    else:
        out = base / rd.raw("output", "dir", "results")
    _check_output_dir(out, rd if out_override is None and not os.environ.get(OUTPUT_ENV) else None, str(path))
    return CliConfig(spec, out, workers, path)


def with_overrides(cfg: CliConfig, runs=None, horizon=None, seed=None, workers=None) -> CliConfig:
    spec = cfg.spec
    changes = {k: v for k, v in (("runs", runs), ("horizon", horizon), ("base_seed", seed)) if v is not None}
    if changes:
        spec = replace(spec, **changes)
    return replace(cfg, spec=spec, workers=cfg.workers if workers is None else workers)


def resolve_output_dir(out: str | Path | None, default: str | Path = "results") -> Path:
    """Output directory for commands without a config file: flag, then environment, then default."""
    if out is not None:
        chosen = Path(out)
    elif os.environ.get(OUTPUT_ENV):
        chosen = Path(os.environ[OUTPUT_ENV])
    else:
        chosen = Path(default)
    _check_output_dir(chosen, None, "")
    return chosen
