"""Configuration-driven command line: solve -> periods -> spectrum -> bounds -> report.

Config files are flat INI-style text: ``[section]`` headers and ``key = value``
lines, with ``#`` comments.  Unknown sections or keys are rejected with the
offending line number.  All artifacts are deterministic for a fixed config
(fixed summation order, no timestamps) and embed the config hash plus a schema
version, so they double as regression goldens.

Subcommands: solve, periods, spectrum, bounds, report, validate.
Flags: --config PATH, --out DIR, --threads N, --seed N (reserved, unused --
all methods are deterministic).  Env var ANTONOV_LOG sets the log level.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import response as resp
from .steady_state import (
    DistributionFunction,
    SteadyState,
    plummer_potential,
    save_state,
    solve_equilibrium,
    validate_assumptions,
)

log = logging.getLogger("antonov.cli")

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated run parameters; see the schema below for ranges."""

    # model
    n: float = 1.0
    amplitude: float = 1.0
    y_central: float = 1.0
    external: str = "none"          # none | plummer
    ext_mass: float = 0.0
    ext_scale: float = 1.0
    # grids
    radial_nodes: int = 2000
    n_e: int = 32
    n_l: int = 24
    k_max: int = 8
    basis_size: int = 18
    basis_family: str = "legendre"  # legendre | bessel | weighted
    lambda_points: int = 32
    orbit_samples: int = 128
    top_curves: int = 6
    # bounds
    bound_c: float = 1.0
    bound_s: float = 0.5
    # tolerances
    margin: float = 1e-9
    epsilon_frac: float = 0.05      # circular-exclusion width for diagnostics
    # outputs
    directory: str = "out"
    formats: str = "csv,json"
    config_hash: str = field(default="", repr=False)

    def wants(self, fmt: str) -> bool:
        return fmt in {f.strip() for f in self.formats.split(",")}

    def distribution(self) -> DistributionFunction:
        return DistributionFunction(kind="polytrope", n=self.n,
                                    amplitude=self.amplitude, E0=0.0)

    def external_potential(self):
        if self.external == "none":
            return None
        if self.external == "plummer":
            return plummer_potential(self.ext_mass, self.ext_scale)
        raise ConfigError(f"unknown external potential {self.external!r}")


_SCHEMA = {
    "model": {
        "n": (float, lambda v: -1.0 < v < 3.5),
        "amplitude": (float, lambda v: v > 0),
        "y_central": (float, lambda v: v > 0),
        "external": (str, lambda v: v in ("none", "plummer")),
        "ext_mass": (float, lambda v: v >= 0),
        "ext_scale": (float, lambda v: v > 0),
    },
    "grids": {
        "radial_nodes": (int, lambda v: 100 <= v <= 100000),
        "n_e": (int, lambda v: 4 <= v <= 512),
        "n_l": (int, lambda v: 4 <= v <= 512),
        "k_max": (int, lambda v: 1 <= v <= 64),
        "basis_size": (int, lambda v: 1 <= v <= 64),
        "basis_family": (str, lambda v: v in ("legendre", "bessel", "weighted")),
        "lambda_points": (int, lambda v: 2 <= v <= 512),
        "orbit_samples": (int, lambda v: 16 <= v <= 2048),
        "top_curves": (int, lambda v: 1 <= v <= 64),
    },
    "bounds": {
        "bound_c": (float, lambda v: v > 0),
        "bound_s": (float, lambda v: 0 < v < 1),
    },
    "tolerances": {
        "margin": (float, lambda v: 0 < v < 1e-2),
        "epsilon_frac": (float, lambda v: 0 < v < 1),
    },
    "outputs": {
        "directory": (str, lambda v: True),
        "formats": (str, lambda v: all(f in ("csv", "json") for f in v.split(","))),
    },
}


def parse_config(path) -> RunConfig:
    """Parse and validate the INI-style config; errors carry line numbers."""
    text = Path(path).read_text()
    cfg = RunConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, _, value = (s.strip() for s in line.partition("="))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        typ, check = _SCHEMA[section][key]
        try:
            parsed = typ(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: cannot parse {key} = {value!r}") from exc
        if not check(parsed):
            raise ConfigError(f"line {lineno}: {key} = {value!r} out of range")
        setattr(cfg, key, parsed)
    cfg.config_hash = hashlib.sha256(text.encode()).hexdigest()
    return cfg


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def _stamp(cfg: RunConfig) -> str:
    return f"schema_version={SCHEMA_VERSION},config_sha256={cfg.config_hash}"


def write_csv(path, cfg: RunConfig, header: str, rows):
    with open(path, "w") as fh:
        fh.write(f"# {_stamp(cfg)}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")
    return str(path)


def write_json(path, cfg: RunConfig, payload: dict):
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    payload["config_sha256"] = cfg.config_hash
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return str(path)


def report_to_dict(report: resp.SpectralReport) -> dict:
    return {
        "omega_star": report.omega_star,
        "argmin_E": report.argmin[0],
        "argmin_L": report.argmin[1],
        "on_circular": report.on_circular,
        "bands_per_k": [[int(k), lo, hi] for k, lo, hi in report.bands.per_k],
        "bands_merged": [[lo, hi] for lo, hi in report.bands.merged],
        "gap": list(report.bands.gap),
        "trace_bound": report.trace_bound if np.isfinite(report.trace_bound) else "inf",
        "predicted_max_modes": (
            report.predicted_max_modes if report.predicted_max_modes is not None
            else "no bound"
        ),
        "lambda_grid": [float(x) for x in report.lambda_grid],
        "eigencurves": [[float(v) for v in row] for row in report.eigencurves],
        "modes": [
            {
                "lambda": m.lam,
                "sqrt_lambda": m.frequency,
                "curve_index": m.curve_index,
                "coefficients": [float(c) for c in m.coefficients],
                "residual": m.residual,
                "at_resolution_limit": m.at_resolution_limit,
            }
            for m in report.modes
        ],
        "kphi_trace_kernel": report.kphi_traces[0],
        "kphi_trace_parts": report.kphi_traces[1],
        "divergence_verdict": report.divergence_verdict,
        "diagnostics": report.diagnostics,
    }


def report_from_dict(d: dict) -> resp.SpectralReport:
    bands = resp.Bands(
        per_k=[(int(k), lo, hi) for k, lo, hi in d["bands_per_k"]],
        merged=[(lo, hi) for lo, hi in d["bands_merged"]],
        gap=tuple(d["gap"]),
    )
    tb = d["trace_bound"]
    return resp.SpectralReport(
        omega_star=d["omega_star"],
        argmin=(d["argmin_E"], d["argmin_L"]),
        on_circular=d["on_circular"],
        bands=bands,
        trace_bound=np.inf if tb == "inf" else tb,
        predicted_max_modes=(
            None if d["predicted_max_modes"] == "no bound" else d["predicted_max_modes"]
        ),
        lambda_grid=np.asarray(d["lambda_grid"]),
        eigencurves=np.asarray(d["eigencurves"]),
        modes=[
            resp.Mode(
                lam=m["lambda"], frequency=m["sqrt_lambda"],
                curve_index=m["curve_index"],
                coefficients=np.asarray(m["coefficients"]),
                residual=m["residual"],
                at_resolution_limit=m["at_resolution_limit"],
            )
            for m in d["modes"]
        ],
        kphi_traces=(d["kphi_trace_kernel"], d["kphi_trace_parts"]),
        divergence_verdict=d["divergence_verdict"],
        diagnostics=d["diagnostics"],
    )


def report_text(report: resp.SpectralReport) -> str:
    lines = []
    lines.append(f"omega_star = {report.omega_star!r} "
                 f"(argmin E = {report.argmin[0]!r}, L = {report.argmin[1]!r}, "
                 f"on_circular = {report.on_circular})")
    lines.append(f"essential-spectrum gap: (0, {report.omega_star**2!r})")
    if np.isfinite(report.trace_bound):
        lines.append(
            f"trace bound = {report.trace_bound!r}; at most "
            f"{report.predicted_max_modes} oscillating modes can exist in the gap"
        )
    else:
        lines.append(
            "trace bound diverges (no bound); divergence diagnostic verdict: "
            f"{report.divergence_verdict}"
        )
    if report.modes:
        lines.append(f"modes found: {len(report.modes)}, trace bound: "
                     f"{report.trace_bound!r}")
        for m in report.modes:
            flag = " (at resolution limit)" if m.at_resolution_limit else ""
            lines.append(
                f"  mode: lambda = {m.lam!r}, frequency sqrt(lambda) = "
                f"{m.frequency!r}{flag}"
            )
    else:
        lines.append("no oscillating modes detected in (0, omega_*^2)")
        lines.append(f"modes found: 0, trace bound: "
                     + ("<1" if report.trace_bound < 1 else f"{report.trace_bound!r}"))
    lines.append(f"divergence diagnostic: {report.divergence_verdict}")
    return "\n".join(lines) + "\n"


def emit_report(report: resp.SpectralReport, path, fmt: str = "json",
                cfg: RunConfig = None):
    """Write the spectral report as versioned JSON or as a text summary."""
    if fmt == "json":
        payload = report_to_dict(report)
        payload["schema_version"] = SCHEMA_VERSION
        if cfg is not None:
            payload["config_sha256"] = cfg.config_hash
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
    elif fmt == "text":
        Path(path).write_text(report_text(report))
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return str(path)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

class Pipeline:
    """Lazily computed chain: steady state -> frequency map -> operator."""

    def __init__(self, cfg: RunConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = threads
        self._ss = None
        self._fm = None
        self._basis = None
        self._op = None
        self._report = None

    @property
    def ss(self) -> SteadyState:
        if self._ss is None:
            cfg = self.cfg
            self._ss = solve_equilibrium(
                cfg.distribution(), ext=cfg.external_potential(),
                y_central=cfg.y_central, grid=cfg.radial_nodes,
            )
        return self._ss

    @property
    def fm(self) -> resp.FrequencyMap:
        if self._fm is None:
            self._fm = resp.build_frequency_map(
                self.ss, (self.cfg.n_e, self.cfg.n_l),
                samples=self.cfg.orbit_samples,
            )
        return self._fm

    @property
    def basis(self) -> resp.PotentialDensityBasis:
        if self._basis is None:
            self._basis = resp.build_basis(
                self.ss, self.cfg.basis_size, family=self.cfg.basis_family
            )
        return self._basis

    @property
    def op(self) -> resp.ResponseOperator:
        if self._op is None:
            self._op = resp.ResponseOperator(
                self.ss, self.fm, self.basis, k_max=self.cfg.k_max,
                margin=self.cfg.margin, threads=self.threads,
            )
        return self._op

    def spectral_report(self) -> resp.SpectralReport:
        if self._report is not None:
            return self._report
        cfg = self.cfg
        bands = resp.essential_bands(self.fm, cfg.k_max)
        tb, max_modes = resp.trace_bound(self.ss, self.fm)
        grid = resp.lambda_grid_geometric(
            self.fm.omega_star, cfg.lambda_points, margin=cfg.margin
        )
        curves = resp.eigencurves(self.op, grid, top_p=cfg.top_curves)
        modes = resp.locate_modes(self.op, grid, curves)
        kphi = resp.kphi_trace_check(self.ss)
        diag = resp.divergence_diagnostic(
            self.ss, self.fm, epsilon=cfg.epsilon_frac * self.ss.R0,
            resolution=(max(cfg.n_e, 48), max(cfg.n_l, 32)),
        )
        a_fit, b_fit, fit_res = bounds_mod.fit_frequency_ansatz(self.fm)
        diagnostics = {
            "omega_max": self.fm.omega_max,
            "grid_minima": [[e, l] for e, l in self.fm.grid_minima],
            "frequency_ansatz": {"a": a_fit, "b": b_fit, "rel_residual": fit_res},
            "trace_tail_estimate_at_0": self.op.trace_tail_estimate(0.0),
            "divergence_partial_integrals": [
                float(x) for x in diag.partial_integrals
            ],
            "divergence_deltas": [float(x) for x in diag.deltas],
            "steady_state": {
                "M": self.ss.M, "R0": self.ss.R0, "E0": self.ss.E0,
                "U0": self.ss.U0,
            },
        }
        self._report = resp.SpectralReport(
            omega_star=self.fm.omega_star, argmin=self.fm.argmin,
            on_circular=self.fm.on_circular, bands=bands, trace_bound=tb,
            predicted_max_modes=max_modes, lambda_grid=grid,
            eigencurves=curves, modes=modes, kphi_traces=kphi,
            divergence_verdict=diag.verdict, diagnostics=diagnostics,
        )
        return self._report


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(pipe: Pipeline, out: Path) -> list:
    ss = pipe.ss
    csv_path, json_path = save_state(
        ss, out / "steady_state.csv", out / "steady_state.json"
    )
    # stamp both artifacts with config provenance
    body = Path(csv_path).read_text()
    Path(csv_path).write_text(f"# {_stamp(pipe.cfg)}\n" + body)
    with open(json_path) as fh:
        header = json.load(fh)
    header["config_sha256"] = pipe.cfg.config_hash
    with open(json_path, "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"solved: M={ss.M!r} R0={ss.R0!r} E0={ss.E0!r}")
    return [csv_path, json_path]


def cmd_periods(pipe: Pipeline, out: Path) -> list:
    fm = pipe.fm
    table = fm.table
    paths = []
    if pipe.cfg.wants("csv"):
        rows = zip(table.E, table.L, table.r_minus, table.r_plus, table.T, table.omega)
        paths.append(write_csv(out / "periods.csv", pipe.cfg,
                               "E,L,r_minus,r_plus,T,omega_r", rows))
    print(f"periods: {table.E.size} orbits, omega_star={fm.omega_star!r}")
    return paths


def cmd_spectrum(pipe: Pipeline, out: Path) -> list:
    report = pipe.spectral_report()
    paths = []
    if pipe.cfg.wants("csv"):
        paths.append(write_csv(
            out / "bands.csv", pipe.cfg, "k,lo,hi",
            [(float(k), lo, hi) for k, lo, hi in report.bands.per_k],
        ))
        rows = [
            [lam] + list(report.eigencurves[i])
            for i, lam in enumerate(report.lambda_grid)
        ]
        ncurves = report.eigencurves.shape[1]
        header = "lambda," + ",".join(f"nu_{i+1}" for i in range(ncurves))
        paths.append(write_csv(out / "eigencurves.csv", pipe.cfg, header, rows))
    if pipe.cfg.wants("json"):
        paths.append(write_json(out / "modes.json", pipe.cfg, {
            "modes": report_to_dict(report)["modes"],
        }))
        diag = report_to_dict(report)
        del diag["eigencurves"], diag["lambda_grid"], diag["modes"]
        paths.append(write_json(out / "diagnostics.json", pipe.cfg, diag))
    print(f"spectrum: omega_star={report.omega_star!r}, "
          f"modes={len(report.modes)}, trace_bound={report.trace_bound!r}")
    return paths


def cmd_bounds(pipe: Pipeline, out: Path) -> list:
    cfg = pipe.cfg
    ss = pipe.ss
    bc = bounds_mod.PolytropeBoundConfig(
        n=cfg.n, c=cfg.bound_c, s=min(cfg.bound_s, 0.95 * min(cfg.n, 1.0))
    )
    env = bounds_mod.envelope_check(ss, bc)
    paths = []
    if pipe.cfg.wants("csv"):
        rows = []
        for r, ratio in zip(env.r_samples, env.ratios):
            rt = bounds_mod.rho_tilde_alpha(ss, bc, r)
            envelope = r ** (2.0 * bc.s - 2.0) * (ss.E0 - float(ss.potential(r))) ** (bc.n - 0.5)
            rows.append((r, rt, envelope, ratio))
        paths.append(write_csv(out / "bounds.csv", pipe.cfg,
                               "r,rho_tilde,envelope,ratio", rows))
    print(f"bounds: C_best={env.C_best!r} stable={env.passed} "
          f"l1_majorant={env.l1_majorant!r}")
    return paths


def cmd_validate(pipe: Pipeline, out: Path) -> list:
    report = validate_assumptions(pipe.ss)
    payload = {
        "checks": [
            {"name": name, "passed": ok, "detail": detail}
            for name, ok, detail in report.checks
        ],
        "integral_energy_form": report.integral_energy_form,
        "integral_radial_form": report.integral_radial_form,
        "passed": report.passed,
    }
    path = write_json(out / "validation.json", pipe.cfg, payload)
    for name, ok, detail in report.checks:
        print(f"  [{'ok' if ok else 'VIOLATION'}] {name}" + (f" ({detail})" if detail else ""))
    print(f"validate: {'all checks passed' if report.passed else 'violations found'}")
    return [path]


def cmd_report(pipe: Pipeline, out: Path) -> list:
    paths = cmd_solve(pipe, out)
    paths += cmd_periods(pipe, out)
    paths += cmd_spectrum(pipe, out)
    paths += cmd_bounds(pipe, out)
    paths += cmd_validate(pipe, out)
    report = pipe.spectral_report()
    paths.append(emit_report(report, out / "report.json", "json", pipe.cfg))
    paths.append(emit_report(report, out / "summary.txt", "text", pipe.cfg))
    print(report_text(report), end="")
    return paths


COMMANDS = {
    "solve": cmd_solve,
    "periods": cmd_periods,
    "spectrum": cmd_spectrum,
    "bounds": cmd_bounds,
    "report": cmd_report,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="antonov",
        description="Self-gravitating kinetic steady states and the spectrum "
                    "of the radial Antonov operator.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="run configuration file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--seed", type=int, default=None,
                        help="reserved; all methods are deterministic")
    parser.add_argument("--lambda-points", type=int, default=None,
                        help="override the lambda grid depth")
    args = parser.parse_args(argv)

    logging.basicConfig(level=os.environ.get("ANTONOV_LOG", "WARNING").upper())

    try:
        cfg = parse_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    if args.lambda_points is not None:
        cfg.lambda_points = args.lambda_points

    out = Path(args.out if args.out is not None else cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    pipe = Pipeline(cfg, threads=max(args.threads, 1))
    try:
        COMMANDS[args.command](pipe, out)
    except (ValueError, RuntimeError) as exc:
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
