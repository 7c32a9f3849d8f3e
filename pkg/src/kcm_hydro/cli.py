"""Command-line driver: ``kcm-hydro <subcommand> [flags]``.

Every parameter is a flat key (dotted per module) that can come from a
``key = value`` config file or from the matching flag; flags win.  Each
run writes its data files, the resolved spec (``spec.txt``) and a
``manifest.json`` with the sha256 of every artifact.

Exit codes: 0 success, 1 invalid spec, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import experiments as ex
from .io import field_rows, sha256_file, trajectory_rows, write_csv, write_json, write_table
from .lattice import Configuration
from .pme import (BUMP_SUP, GridProfile, interface_components, lipschitz_constant, regularization_constant,
                  regularize_initial)
from .product import (RegularizationSchedule, initial_entropy_scan, interpolated_profile, read_profile_csv)

SUBCOMMANDS = ("simulate", "solve", "regularize", "hydro-compare", "entropy-scan", "diagnostics")


class SpecError(ValueError):
    """A parameter violates its constraint."""


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


def _str(text):
    return str(text).strip()


def _list_text(v):
    return ",".join(str(x) for x in v)


# key: (parser, default, description)
KEYS = {
    "subcommand": (_str, "simulate", "one of " + ", ".join(SUBCOMMANDS)),
    "m": (int, 2, "degeneracy exponent, >= 2"),
    "n": (int, 512, "lattice size N"),
    "grid": (int, 1024, "PDE grid cells M"),
    "t": (float, 0.05, "macroscopic horizon"),
    "eps": (_opt_float, None, "fixed regularization width in (0, 1/2)"),
    "eps_rule": (_opt_float, None, "exponent p of eps_N = N^-p (default 1/(7(m-1)))"),
    "seed": (int, 0, "64-bit seed"),
    "replicas": (int, 100, "independent trajectories, >= 1"),
    "out": (_str, "kcm-out", "output directory"),
    "format": (_str, "csv", "table format: csv or json"),
    "workers": (int, 0, "parallel replica workers (0 = all cores)"),
    "lattice.alpha": (float, 0.5, "reference density in (0, 1)"),
    "lattice.config": (_str, "", "initial configuration as a 0/1 string (simulate)"),
    "lattice.records": (int, 2, "snapshots per trajectory, equally spaced in [0, t]"),
    "lattice.trajectory": (_str, "long", "trajectory rows: long (replica,t,x,eta) or bits"),
    "init.kind": (_str, "barenblatt", "initial profile: barenblatt or file"),
    "init.file": (_str, "", "CSV (u, rho) profile for init.kind = file"),
    "init.peak": (float, ex.REFERENCE_PEAK, "Barenblatt peak density at the start"),
    "init.radius": (float, ex.REFERENCE_RADIUS, "Barenblatt support radius at the start"),
    "pme.cfl": (float, 0.5, "CFL safety factor in (0, 1]"),
    "pme.snapshots": (int, 11, "stored snapshots in [0, t]"),
    "pme.field": (_str, "long", "space-time rows: long (t,u,rho) or wide"),
    "pme.delta": (float, 0.01, "superlevel threshold for interface reports"),
    "pme.regularize": (_bool, False, "solve from the regularized profile (needs eps)"),
    "hydro.n_list": (_int_list, (128, 256, 512), "lattice sizes"),
    "hydro.ell": (int, 16, "block radius for the empirical density"),
    "hydro.reference": (_str, "pme", "pme or regularized"),
    "hydro.ref_grid": (int, 2048, "PDE grid for the reference solution"),
    "entropy.n_list": (_int_list, (1024, 2048, 4096, 8192, 16384), "lattice sizes"),
    "diagnostics.eps_list": (_float_list, (0.2, 0.1, 0.05), "regularization widths"),
    "diagnostics.snapshots": (int, 201, "snapshots for time integrals"),
}

_LIST_KEYS = {"hydro.n_list", "entropy.n_list", "diagnostics.eps_list"}


@dataclass
class ExperimentSpec:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, ExperimentSpec) and self.values == other.values

    @property
    def subcommand(self) -> str:
        return self.values["subcommand"]

    def to_text(self) -> str:
        lines = []
        for key in KEYS:
            v = self.values[key]
            if v is None:
                text = "none"
            elif key in _LIST_KEYS:
                text = _list_text(v)
            elif isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    def schedule(self) -> RegularizationSchedule:
        return RegularizationSchedule(self["m"], exponent=self["eps_rule"])

    def eps_for(self, N: int) -> float:
        return self["eps"] if self["eps"] is not None else self.schedule().eps(N)


def read_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read config file {path}: {exc}") from None
    for num, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"{path}:{num}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def _check(cond, key, constraint, value):
    if not cond:
        raise SpecError(f"invalid {key} = {value!r}: {constraint}")


def validate(values: dict) -> None:
    v = values
    _check(v["subcommand"] in SUBCOMMANDS, "subcommand", "one of " + ", ".join(SUBCOMMANDS), v["subcommand"])
    _check(v["m"] >= 2, "m", "m >= 2", v["m"])
    _check(v["n"] >= 2 * v["m"] + 2, "n", f"n >= 2m+2 = {2 * v['m'] + 2}", v["n"])
    _check(v["grid"] >= 4, "grid", "grid >= 4", v["grid"])
    _check(v["t"] >= 0 and math.isfinite(v["t"]), "t", "t >= 0", v["t"])
    if v["eps"] is not None:
        _check(0 < v["eps"] < 0.5, "eps", "0 < eps < 1/2", v["eps"])
        _check(v["eps_rule"] is None, "eps_rule", "give either eps or eps_rule, not both", v["eps_rule"])
    if v["eps_rule"] is not None:
        _check(v["eps_rule"] > 0, "eps_rule", "exponent must be > 0", v["eps_rule"])
    _check(0 <= v["seed"] < 2**64, "seed", "0 <= seed < 2^64", v["seed"])
    _check(v["replicas"] >= 1, "replicas", "replicas >= 1", v["replicas"])
    _check(v["format"] in ("csv", "json"), "format", "csv or json", v["format"])
    _check(v["workers"] >= 0, "workers", "workers >= 0", v["workers"])
    _check(0 < v["lattice.alpha"] < 1, "lattice.alpha", "0 < alpha < 1", v["lattice.alpha"])
    cfg = v["lattice.config"]
    if cfg:
        _check(set(cfg) <= {"0", "1"}, "lattice.config", "a string of 0/1 characters", cfg)
        _check(len(cfg) >= 2 * v["m"] + 2, "lattice.config", f"length >= 2m+2 = {2 * v['m'] + 2}", cfg)
    _check(v["lattice.records"] >= 1, "lattice.records", ">= 1", v["lattice.records"])
    _check(v["lattice.trajectory"] in ("long", "bits"), "lattice.trajectory", "long or bits", v["lattice.trajectory"])
    _check(v["init.kind"] in ("barenblatt", "file"), "init.kind", "barenblatt or file", v["init.kind"])
    if v["init.kind"] == "file":
        _check(bool(v["init.file"]), "init.file", "required when init.kind = file", v["init.file"])
    _check(0 < v["init.peak"] <= 1, "init.peak", "0 < peak <= 1", v["init.peak"])
    _check(0 < v["init.radius"] < 0.5, "init.radius", "0 < radius < 1/2", v["init.radius"])
    _check(0 < v["pme.cfl"] <= 1, "pme.cfl", "0 < cfl <= 1", v["pme.cfl"])
    _check(v["pme.snapshots"] >= 1, "pme.snapshots", ">= 1", v["pme.snapshots"])
    _check(v["pme.field"] in ("long", "wide"), "pme.field", "long or wide", v["pme.field"])
    _check(0 < v["pme.delta"] < 1, "pme.delta", "0 < delta < 1", v["pme.delta"])
    _check(all(n >= 2 * v["m"] + 2 for n in v["hydro.n_list"]) and v["hydro.n_list"], "hydro.n_list",
           "non-empty, every N >= 2m+2", v["hydro.n_list"])
    _check(v["hydro.ell"] >= 0, "hydro.ell", ">= 0", v["hydro.ell"])
    _check(v["hydro.reference"] in ("pme", "regularized"), "hydro.reference", "pme or regularized",
           v["hydro.reference"])
    _check(v["hydro.ref_grid"] >= 4, "hydro.ref_grid", ">= 4", v["hydro.ref_grid"])
    _check(bool(v["entropy.n_list"]) and all(n >= 4 for n in v["entropy.n_list"]), "entropy.n_list",
           "non-empty, every N >= 4", v["entropy.n_list"])
    _check(bool(v["diagnostics.eps_list"]) and all(0 < e < 0.5 for e in v["diagnostics.eps_list"]),
           "diagnostics.eps_list", "non-empty, every eps in (0, 1/2)", v["diagnostics.eps_list"])
    _check(v["diagnostics.snapshots"] >= 3, "diagnostics.snapshots", ">= 3", v["diagnostics.snapshots"])


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SpecError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kcm-hydro", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", nargs="?", help="one of: " + ", ".join(SUBCOMMANDS))
    parser.add_argument("--config", help="key = value file; flags override its entries")
    parser.add_argument("--overwrite", action="store_true", help="replace an existing manifest")
    for key, (_, default, desc) in KEYS.items():
        if key == "subcommand":
            continue
        parser.add_argument(_flag(key), dest=key, default=None, metavar="VALUE",
                            help=f"{desc} (default {default})")
    return parser


def parse_spec(argv=None) -> tuple[ExperimentSpec, bool]:
    """Resolve defaults < config file < flags; returns (spec, overwrite)."""
    args = build_parser().parse_args(argv)
    raw = {}
    if args.config:
        raw.update(read_config_file(args.config))
    for key in KEYS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise SpecError(f"unknown key {unknown[0]!r}")
    values = {}
    for key, (conv, default, _) in KEYS.items():
        if key in raw:
            try:
                values[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                raise SpecError(f"invalid {key} = {raw[key]!r}: {exc}") from None
        else:
            values[key] = default
    validate(values)
    return ExperimentSpec(values), bool(args.overwrite)


def spec_from_text(text: str) -> ExperimentSpec:
    values = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            values[k] = KEYS[k][0](v)
    validate(values)
    return ExperimentSpec(values)


# -- output handling --------------------------------------------------------------------


class Outputs:
    """Collects artifacts of one run and writes the manifest last."""

    def __init__(self, spec: ExperimentSpec, overwrite: bool):
        self.dir = Path(spec["out"])
        self.fmt = spec["format"]
        self.spec = spec
        self.files = []
        manifest = self.dir / "manifest.json"
        if manifest.exists() and not overwrite:
            raise FileExistsError(f"{manifest} exists; pass --overwrite to replace it")
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.dir}: {exc}") from None
        self.add((self.dir / "spec.txt"))
        (self.dir / "spec.txt").write_text(spec.to_text())

    def add(self, path: Path) -> Path:
        if path not in self.files:
            self.files.append(path)
        return path

    def table(self, name: str, header, rows) -> Path:
        return self.add(write_table(self.dir / name, header, rows, self.fmt))

    def csv(self, name: str, header, rows) -> Path:
        return self.add(write_csv(self.dir / f"{name}.csv", header, rows))

    def json(self, name: str, obj) -> Path:
        return self.add(write_json(self.dir / f"{name}.json", obj))

    def finish(self, complete: bool = True) -> Path:
        entries = [{"path": p.name, "sha256": sha256_file(p)} for p in self.files]
        return write_json(self.dir / "manifest.json", {
            "subcommand": self.spec.subcommand, "complete": complete, "artifacts": entries})


# -- subcommands ----------------------------------------------------------------------------


def _initial_function(spec: ExperimentSpec):
    if spec["init.kind"] == "file":
        u, rho = read_profile_csv(spec["init.file"])
        return interpolated_profile(u, rho)
    return ex.BarenblattInit(spec["m"], spec["init.peak"], spec["init.radius"])


def _workers(spec):
    return spec["workers"] or (os.cpu_count() or 1)


def cmd_simulate(spec, out: Outputs):
    m, t = spec["m"], spec["t"]
    if spec["lattice.config"]:
        initial = Configuration.from_string(spec["lattice.config"])
    else:
        initial = (_initial_function(spec), spec["n"])
    records = ex.simulate_ensemble(initial, m, t, spec["replicas"], spec["seed"], spec["lattice.records"],
                                   workers=_workers(spec), alpha=spec["lattice.alpha"])
    style = spec["lattice.trajectory"]
    header = ("replica", "t", "x", "eta") if style == "long" else ("replica", "t", "bits")
    out.csv("trajectories", header, trajectory_rows(records, style))
    out.table("summary", ("replica", "jumps", "frozen", "particles"),
              [(r, rec.jump_count, rec.frozen, rec.final.particles) for r, rec in enumerate(records)])


def _initial_grid(spec) -> GridProfile:
    return ex.profile_on_grid(_initial_function(spec), spec["grid"])


def cmd_solve(spec, out: Outputs):
    m, M, T = spec["m"], spec["grid"], spec["t"]
    eps = None
    if spec["pme.regularize"]:
        if spec["eps"] is None:
            raise SpecError("invalid pme.regularize = true: needs eps")
        eps = spec["eps"]
    sol = ex.solve_from(_initial_function(spec), m, M, T, count=spec["pme.snapshots"], eps=eps,
                        cfl=spec["pme.cfl"])
    style = spec["pme.field"]
    header = ("t", "u", "rho") if style == "long" else ("t", *[f"rho_{j}" for j in range(M)])
    out.csv("field", header, field_rows(sol.times, sol.snapshots, style))
    rows = []
    for t, prof in zip(sol.times, sol.snapshots):
        rep = interface_components(prof, spec["pme.delta"], t=t)
        rows.append((t, prof.mass(), rep.count, rep.gamma_measure))
    out.table("interfaces", ("t", "mass", "components", "gamma_measure"), rows)


def cmd_regularize(spec, out: Outputs):
    m, M = spec["m"], spec["grid"]
    eps = spec["eps"] if spec["eps"] is not None else spec.schedule().eps(M)
    ini = _initial_grid(spec)
    reg = regularize_initial(ini, eps, m)
    u = ini.grid
    out.csv("profile", ("u", "rho"), zip(u, reg.values))
    p_ini = m / (m - 1) * ini.values ** (m - 1)
    p_reg = m / (m - 1) * reg.values ** (m - 1)
    c_lip = lipschitz_constant(p_ini, 1.0 / M)
    sup = float(np.max(np.abs(reg.values - ini.values)))
    bound = regularization_constant(m, c_lip) * eps ** (1.0 / (m - 1))
    out.json("checks", {
        "eps": eps, "min": float(reg.values.min()), "max": float(reg.values.max()),
        "lip_initial": c_lip, "lip_regularized": lipschitz_constant(p_reg, 1.0 / M),
        "sup_distance": sup, "sup_bound": bound, "C_h": BUMP_SUP,
    })


def cmd_hydro_compare(spec, out: Outputs):
    rows = []
    header = []

    def flush(row):
        # small N drop the one-block columns whose box does not fit
        rows.append(row)
        header.extend(k for k in row if k not in header)
        out.table("hydro", header, [[r.get(k, math.nan) for k in header] for r in rows])

    try:
        ex.run_hydro_compare(_initial_function(spec), spec["m"], spec["t"], spec["hydro.n_list"],
                             spec["replicas"], spec["seed"], ell=spec["hydro.ell"],
                             M_ref=spec["hydro.ref_grid"], reference=spec["hydro.reference"],
                             schedule=spec.schedule(), workers=_workers(spec), on_row=flush)
    except KeyboardInterrupt:
        out.finish(complete=False)
        raise


def cmd_entropy_scan(spec, out: Outputs):
    rows = initial_entropy_scan(_initial_function(spec), spec.schedule(), spec["entropy.n_list"])
    out.table("entropy", ("N", "eps", "H", "ratio"), [(r.N, r.eps, r.H, r.ratio) for r in rows])


def cmd_diagnostics(spec, out: Outputs):
    fn = _initial_function(spec)
    m, M, T = spec["m"], spec["grid"], spec["t"]
    suite = ex.norm_bound_suite(fn, m, spec["diagnostics.eps_list"], M=M, T=T,
                                count=spec["diagnostics.snapshots"])
    entries = [e.as_dict() for r in suite["reports"] for e in r.entries]
    header = ("test", "eps", "measured", "bound", "slack", "pass", "empirical_constant")
    out.table("norm_bounds", header, [[d[k] for k in header] for d in entries])
    eps = spec["eps"] if spec["eps"] is not None else spec["diagnostics.eps_list"][len(spec["diagnostics.eps_list"]) // 2]
    ids = ex.identity_suite(fn, m, alpha=spec["lattice.alpha"], eps=eps, grids=(M // 2, M), T=T,
                            t_check=min(0.01, T / 2) if T > 0 else 0.01)
    identity_rows = [(g, k, v) for g, rep in ids["identities"].items() for k, v in rep.residuals.items()]
    out.table("identities", ("grid", "identity", "max_residual"), identity_rows)
    out.json("report", {
        "norm_bounds": entries,
        "stability": suite["stability"],
        "identities": {str(g): rep.residuals for g, rep in ids["identities"].items()},
        "identity_ratios": ids.get("ratios", {}),
        "f_integral": {str(g): v for g, v in ids["f_integral"].items()},
    })


COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "regularize": cmd_regularize,
    "hydro-compare": cmd_hydro_compare,
    "entropy-scan": cmd_entropy_scan,
    "diagnostics": cmd_diagnostics,
}


def main(argv=None) -> int:
    try:
        spec, overwrite = parse_spec(argv)
    except SpecError as exc:
        print(f"kcm-hydro: {exc}", file=sys.stderr)
        return 1
    try:
        out = Outputs(spec, overwrite)
        COMMANDS[spec.subcommand](spec, out)
        out.finish()
    except (SpecError, FileExistsError) as exc:
        print(f"kcm-hydro: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("kcm-hydro: interrupted; partial results written", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"kcm-hydro: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
