"""Command line front end: ``dgl <subcommand> --config FILE --out DIR [--threads N]``.

The config is an INI file with sections ``[grid]``, ``[potential]``,
``[nonlinearity]`` and ``[run]``.  Every key is validated before any
computation and the resolved config is echoed at the top of every output
file.  Exit codes: 0 success, 1 invalid input, 2 numerical failure; on
failure ``error.json`` in the output directory records what went wrong.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import Grid, Nonlinearity, PotentialPair, SpinorField, inner_product
from .dirac_op import DiracOperator, SpectrumError, StateError

log = logging.getLogger("diracgap.cli")

SUBCOMMANDS = ("spectrum", "scattering", "soliton", "linearize", "evolve", "decay")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _float_list(text):
    """'a, b, c' or 'start:stop:num' (inclusive, linspace)."""
    text = text.strip()
    if text.count(":") == 2:
        a, b, n = text.split(":")
        return [float(np.round(v, 12)) for v in np.linspace(float(a), float(b), int(n))]
    return [float(v) for v in text.replace(",", " ").split()]


# (parser, default) per key; None default means "required unless derived"
SCHEMA = {
    "grid": {
        "x_min": (float, -40.0),
        "x_max": (float, 40.0),
        "n_points": (int, 2048),
        "stencil_order": (int, 0),
    },
    "potential": {
        "kind": (str, "reference"),
        "amplitude": (float, None),
        "kappa": (float, 2.0),
    },
    "nonlinearity": {
        "kind": (str, "feshbach_sextic"),
        "alpha": (float, 1.0),
        "alphas": (_float_list, [1.0, 4.0, 0.0, 0.0]),
        "p": (int, None),
    },
    "run": {
        "k_grid": (_float_list, _float_list("-5:5:20")),
        "a_values": (_float_list, _float_list("0.2:0.6:9")),
        "amplitude": (float, 0.4),
        "delta": (float, 1e-2),
        "dt": (float, None),  # 0.5 * dx of the grid
        "t_final": (float, 10.0),
        "scheme": (str, "strang_split"),
        "projection_tol": (float, 1e-10),
        "record_stride": (int, 10),
        "extension": (int, 3),
        "alpha_weight": (float, 2.5),
        "data_width": (float, 1.0),
        "seed": (int, 0),
        "window_lo": (float, -1.0 + 1e-6),
        "window_hi": (float, 1.0 - 1e-6),
    },
}

POTENTIALS = {
    "none": None,
    "reference": -0.6,
    "symmetric_reference": -0.3,
    "sech2_beta": 0.5,
    "sech2_gamma": 0.5,
}


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class RunConfig:
    grid: dict = field(default_factory=dict)
    potential: dict = field(default_factory=dict)
    nonlinearity: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)

    def section(self, name):
        return getattr(self, name)

    def echo(self):
        """Resolved config as 'key = value' lines grouped by section."""
        lines = []
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            for k, v in self.section(sec).items():
                lines.append(f"{k} = {_fmt(v)}")
        return lines

    def as_dict(self):
        return {sec: dict(self.section(sec)) for sec in SCHEMA}

    # -- builders -----------------------------------------------------------

    def build_grid(self) -> Grid:
        g = self.grid
        return Grid(g["x_min"], g["x_max"], g["n_points"])

    def build_potential(self, grid: Grid) -> PotentialPair:
        p = self.potential
        kind, amp, kappa = p["kind"], p["amplitude"], p["kappa"]
        if kind == "none":
            return PotentialPair.zero(grid)
        if kind in ("reference", "sech2_beta"):
            return PotentialPair.sech2(grid, beta_amp=amp, gamma_amp=0.0, kappa=kappa)
        return PotentialPair.sech2(grid, beta_amp=0.0, gamma_amp=amp, kappa=kappa)

    def build_operator(self) -> DiracOperator:
        grid = self.build_grid()
        return DiracOperator(grid, self.build_potential(grid), self.grid["stencil_order"])

    def build_nonlinearity(self) -> Nonlinearity:
        n = self.nonlinearity
        kind = n["kind"]
        if kind == "none":
            return Nonlinearity.none()
        if kind == "general_quartic":
            return Nonlinearity.general_quartic(*n["alphas"])
        return getattr(Nonlinearity, kind)(n["alpha"])


def _line_of(text, section, key=None):
    sec = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            sec = m.group(1).strip()
            if key is None and sec == section:
                return i
            continue
        if key is not None and sec == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def parse_config(text: str) -> RunConfig:
    """Parse and validate an INI config; defaults are filled in for absent keys."""
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected 'key = value')", lineno) from None
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", _line_of(text, sec))
    cfg = RunConfig()
    for sec, schema in SCHEMA.items():
        given = cp[sec] if cp.has_section(sec) else {}
        out = {}
        for key in given:
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", _line_of(text, sec, key))
        for key, (conv, default) in schema.items():
            if key in given:
                raw = given[key]
                try:
                    out[key] = conv(raw)
                except ValueError:
                    raise ConfigError(f"[{sec}] {key}: cannot parse {raw!r}", _line_of(text, sec, key)) from None
            else:
                out[key] = default
        setattr(cfg, sec, out)
    _resolve(cfg)
    validate(cfg)
    return cfg


def _resolve(cfg: RunConfig):
    p = cfg.potential
    if p["kind"] not in POTENTIALS:
        raise ConfigError(f"[potential] kind must be one of {', '.join(POTENTIALS)}")
    if p["amplitude"] is None:
        p["amplitude"] = POTENTIALS[p["kind"]] if p["kind"] != "none" else 0.0
    g, r = cfg.grid, cfg.run
    if r["dt"] is None and isinstance(g["n_points"], int) and g["n_points"] > 1:
        r["dt"] = 0.5 * (g["x_max"] - g["x_min"]) / (g["n_points"] - 1)
    n = cfg.nonlinearity
    if n["p"] is None:
        n["p"] = 2 if n["kind"] == "feshbach_sextic" else 1


def validate(cfg: RunConfig):
    """Check every key against the owning module's preconditions."""
    try:
        grid = cfg.build_grid()
        if cfg.grid["stencil_order"] not in (0, 2, 4):
            raise ValueError("DiracOperator: stencil_order must be 0 (spectral), 2 or 4")
        cfg.build_potential(grid)
        nl = cfg.build_nonlinearity()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.nonlinearity["p"] != nl.degree_p:
        raise ConfigError(f"Nonlinearity: {cfg.nonlinearity['kind']} has degree p = {nl.degree_p}")
    if len(cfg.nonlinearity["alphas"]) != 4:
        raise ConfigError("Nonlinearity: alphas needs four values")
    r = cfg.run
    if not r["k_grid"]:
        raise ConfigError("[run] k_grid is empty")
    if any(k == 0.0 for k in r["k_grid"]):
        raise ConfigError("scattering_coefficients: k_grid must exclude k = 0")
    a = np.asarray(r["a_values"])
    if len(a) < 5 or np.any(a <= 0) or np.any(np.diff(a) <= 0):
        raise ConfigError("continue_branch: a_values must be >= 5 positive, strictly increasing values")
    if r["dt"] is None or not r["dt"] > 0:
        raise ConfigError("EvolutionConfig: dt must be positive")
    if r["dt"] > 0.5 * grid.dx * (1 + 1e-12):
        raise ConfigError(f"EvolutionConfig: dt must satisfy dt <= 0.5*dx = {0.5 * grid.dx:.6g}")
    if not r["t_final"] > 0:
        raise ConfigError("EvolutionConfig: t_final must be positive")
    if r["scheme"] not in ("strang_split", "rk4"):
        raise ConfigError("EvolutionConfig: scheme must be strang_split or rk4")
    if not r["projection_tol"] > 0:
        raise ConfigError("EvolutionConfig: projection_tol must be positive")
    if r["record_stride"] < 1:
        raise ConfigError("EvolutionConfig: record_stride must be >= 1")
    if r["extension"] < 1 or r["extension"] % 2 == 0:
        raise ConfigError("Grid.extended: extension must be a positive odd integer")
    if not a[0] < r["amplitude"] < a[-1]:
        raise ConfigError("evolve: amplitude must lie strictly inside the a_values range")
    if not r["alpha_weight"] > 1.5:
        raise ConfigError("NormTracker: alpha_weight must exceed 3/2")
    if not r["data_width"] > 0:
        raise ConfigError("decay: data_width must be positive")
    if not -1.0 <= r["window_lo"] < r["window_hi"] <= 1.0:
        raise ConfigError("point_spectrum: window must lie inside (-1, 1)")


# -- emission ------------------------------------------------------------------


class Emitter:
    """Writes CSV/JSON files with the config header; one writer, fixed order."""

    def __init__(self, out: Path, cfg: RunConfig, subcommand: str):
        self.out, self.cfg, self.sub = out, cfg, subcommand
        out.mkdir(parents=True, exist_ok=True)

    def header(self):
        return [f"diracgap {__version__} {self.sub}"] + self.cfg.echo()

    def csv(self, name, columns, rows):
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.header():
                fh.write(f"# {line}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join("%.17g" % v for v in row) + "\n")
        return path

    def json(self, name, payload):
        doc = {"artifact": "diracgap", "version": __version__, "subcommand": self.sub,
               "config": self.cfg.as_dict(), "result": payload}
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_jsonable(doc), fh, indent=2)
            fh.write("\n")
        return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


# -- pipelines -----------------------------------------------------------------


def _run_spectrum(cfg, em, threads):
    op = cfg.build_operator()
    r = cfg.run
    modes = op.point_spectrum((r["window_lo"], r["window_hi"]))
    payload = {"eigenvalues": [m.omega for m in modes],
               "boundary_amplitudes": [m.boundary_amplitude for m in modes],
               "truncated": [m.truncated for m in modes]}
    em.json("spectrum.json", payload)
    if modes:
        x = op.grid.x
        cols, data = ["x"], [x]
        for i, m in enumerate(modes):
            f = m.eigfn
            cols += [f"re_u{i}", f"im_u{i}", f"re_v{i}", f"im_v{i}"]
            data += [f.u.real, f.u.imag, f.v.real, f.v.imag]
        em.csv("eigenfunctions.csv", cols, np.column_stack(data))


def _run_scattering(cfg, em, threads):
    from .scattering import scattering_coefficients

    op = cfg.build_operator()
    sc = scattering_coefficients(op, np.asarray(cfg.run["k_grid"]), threads=threads)
    res = sc.residuals()
    names = list(res)
    cols = ["k", "re_a_plus", "im_a_plus", "re_b_plus", "im_b_plus", "re_a_minus", "im_a_minus",
            "re_b_minus", "im_b_minus"] + names
    rows = np.column_stack([sc.k_grid, sc.a_plus.real, sc.a_plus.imag, sc.b_plus.real, sc.b_plus.imag,
                            sc.a_minus.real, sc.a_minus.imag, sc.b_minus.real, sc.b_minus.imag]
                           + [res[n] for n in names])
    em.csv("scattering.csv", cols, rows)


def _branch(cfg):
    from .soliton import continue_branch

    op = cfg.build_operator()
    nl = cfg.build_nonlinearity()
    return op, nl, continue_branch(op, nl, np.asarray(cfg.run["a_values"]))


def _h1(f: SpinorField):
    from .core import weighted_norm

    return weighted_norm(f, 0.0, "H1")


def _run_soliton(cfg, em, threads):
    op, nl, br = _branch(cfg)
    rows = [(p.a, p.omega, p.profile.norm(), _h1(p.profile), p.residual) for p in br.points]
    em.csv("soliton.csv", ["a", "omega", "norm_L2", "norm_H1", "residual"], rows)
    cols, data = ["x"], [op.grid.x]
    for i, p in enumerate(br.points):
        cols += [f"re_U{i}", f"im_U{i}"]
        data += [p.profile.u.real, p.profile.u.imag]
    em.csv("profiles.csv", cols, np.column_stack(data))


def _run_linearize(cfg, em, threads):
    from .linstab import block_operators, kernel_identities, linearization_matrices, linearized_spectrum

    op, nl, br = _branch(cfg)
    lo, hi = br.omega_range
    out = []
    for p in br.points:
        lm = linearization_matrices(nl, p.profile)
        blocks = block_operators(op, p.omega, lm, p.profile)
        ep, emn = linearized_spectrum(blocks)
        entry = {"a": p.a, "omega": p.omega, "eigenvalues_plus": ep, "eigenvalues_minus": emn,
                 "block_residual": blocks.block_residual}
        if lo < p.omega < hi:
            U, dU = br.profile_at(p.omega, ders=1)
            r1, r2 = kernel_identities(op, p.omega, lm, U, dU)
            entry.update(res1=r1, res2=r2)
        else:
            entry.update(res1=None, res2=None)
        out.append(entry)
    em.json("linearize.json", {"points": out})


def _fit_decay(t, y):
    m = (t >= 0.25 * t[-1]) & (t > 0) & (y > 0)
    if m.sum() < 3:
        return None
    return float(np.polyfit(np.log(t[m]), np.log(y[m]), 1)[0])


def _run_evolve(cfg, em, threads):
    from .evolve import EvolutionConfig, evolve_modulated, initial_state

    op, nl, br = _branch(cfg)
    r = cfg.run
    a = r["amplitude"]
    omega = br._omega_of_a(a)
    grid = op.grid.extended(r["extension"]) if r["extension"] > 1 else op.grid
    init = initial_state(br, op, omega, r["delta"], grid)
    conf = EvolutionConfig(r["dt"], r["t_final"], r["scheme"], r["projection_tol"], r["record_stride"])
    tr = evolve_modulated(init, br, op, nl, conf, alpha=r["alpha_weight"])
    em.csv("evolve.csv", tr.columns(), tr.rows())
    summary = {"tracker": tr.tracker.values(), "omega_initial": float(tr.omega[0]),
               "omega_final": float(tr.omega[-1]), "omega_drift": float(abs(tr.omega[-1] - tr.omega[0])),
               "theta_shift_final": float(tr.theta_shift[-1]),
               "Y_sup_max": float(tr.y_sup.max()), "Y_sup_final": float(tr.y_sup[-1]),
               "Y_sup_decay_slope": _fit_decay(tr.t, tr.y_sup),
               "max_projection_residual": float(tr.projection.max())}
    em.json("evolve_summary.json", summary)


def _run_decay(cfg, em, threads):
    from .evolve import semigroup_decay

    op = cfg.build_operator()
    r = cfg.run
    g = op.grid
    rng = np.random.default_rng(r["seed"])
    c = rng.standard_normal(4)
    env = np.exp(-0.5 * (g.x / r["data_width"]) ** 2)
    f = op.pac_project(SpinorField(g, (c[0] + 1j * c[1]) * env, (c[2] + 1j * c[3]) * env))
    T = r["t_final"]
    times = [T * j / 8 for j in range(1, 9)]
    rep = semigroup_decay(op, f, T, alpha=r["alpha_weight"], dt=min(r["dt"], 0.5 * g.dx), report_times=times)
    em.csv("decay.csv", ["t", "mizumachi", "strichartz_quotient"],
           np.column_stack([rep.times, rep.mizumachi, rep.strichartz]))
    m = rep.mizumachi
    summary = {"tracker": rep.tracker.values(), "mizumachi_tail": float((m[-1] - m[len(m) // 2 - 1]) / m[-1])
               if m[-1] > 0 else 0.0, "strichartz_final": float(rep.strichartz[-1]),
               "boundary_max": rep.boundary_max, "contaminated": rep.contaminated,
               "domain_half_width": rep.grid.x_max, "data_overlap_u0": abs(inner_product(op.u0, f))}
    em.json("decay_summary.json", summary)


PIPELINES = {
    "spectrum": _run_spectrum,
    "scattering": _run_scattering,
    "soliton": _run_soliton,
    "linearize": _run_linearize,
    "evolve": _run_evolve,
    "decay": _run_decay,
}


def _numerical_errors():
    from .evolve import BlowUpError, ModulationBreakdown, ProjectionError
    from .linstab import SymmetryError
    from .scattering import JostError, ResonanceError
    from .soliton import BranchError, NewtonError

    return (NewtonError, BranchError, SpectrumError, StateError, BlowUpError, ModulationBreakdown,
            ProjectionError, JostError, ResonanceError, SymmetryError, np.linalg.LinAlgError,
            FloatingPointError, ArithmeticError)


def _error_record(out: Path, sub, code, exc):
    out.mkdir(parents=True, exist_ok=True)
    rec = {"artifact": "diracgap", "version": __version__, "subcommand": sub, "exit_code": code,
           "error_type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError) and exc.line:
        rec["line"] = exc.line
    with open(out / "error.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(rec, fh, indent=2)
        fh.write("\n")


def dispatch(cfg: RunConfig, subcommand: str, out, threads=None) -> int:
    """Run one pipeline; returns the exit code and writes error.json on failure."""
    out = Path(out)
    if subcommand not in PIPELINES:
        _error_record(out, subcommand, EXIT_INVALID, ValueError(f"unknown subcommand {subcommand!r}"))
        return EXIT_INVALID
    numerical = _numerical_errors()
    try:
        PIPELINES[subcommand](cfg, Emitter(out, cfg, subcommand), threads)
    except numerical as exc:
        log.error("%s failed: %s", subcommand, exc)
        _error_record(out, subcommand, EXIT_NUMERICAL, exc)
        return EXIT_NUMERICAL
    except ValueError as exc:
        log.error("%s rejected input: %s", subcommand, exc)
        _error_record(out, subcommand, EXIT_INVALID, exc)
        return EXIT_INVALID
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dgl", description="Gap solitons of nonlinear Dirac equations.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="INI file with [grid] [potential] [nonlinearity] [run]")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: $DGL_THREADS or 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = args.threads
    if threads is None and os.environ.get("DGL_THREADS"):
        threads = int(os.environ["DGL_THREADS"])
    out = Path(args.out)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
    except (OSError, UnicodeDecodeError, ConfigError) as exc:
        print(f"dgl: {exc}", file=sys.stderr)
        _error_record(out, args.subcommand, EXIT_INVALID, exc)
        return EXIT_INVALID
    code = dispatch(cfg, args.subcommand, out, threads)
    if code:
        print(f"dgl: {args.subcommand} failed, see {out / 'error.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
