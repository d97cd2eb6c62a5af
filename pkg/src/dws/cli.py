"""Command-line front end: ground state, envelope branches, surface reconstruction, validation.

    dws ground-state|solve|reconstruct|validate [--config FILE] [--eps LIST]
        [--branch +|-|both] [--grid NX NZ LX LZ] [--out DIR] [--force]
        [--threads N] [--cheap-dn] [--remainder]

Exit codes: 0 success, 1 solver or invariant failure, 2 configuration or
input error, 3 refusal to overwrite existing output.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, dno, fdnls, nls, reduction
from .report import ConvergenceError
from .spectral_core import (
    DwsError,
    FieldFormatError,
    Grid2D,
    SpectralField,
    WaveParams,
    field_from_bytes,
    field_to_bytes,
    sup_norm,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_EXISTS = 0, 1, 2, 3


class ConfigError(DwsError, ValueError):
    pass


class OutputExists(DwsError):
    pass


# -- configuration -------------------------------------------------------------------

def _length(text) -> float:
    """Parse a float or a multiple of pi written as '3pi', '3*pi' or 'pi'."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().replace(" ", "")
    m = re.fullmatch(r"([0-9.eE+-]*)\*?pi", s)
    if m:
        coef = m.group(1)
        return (float(coef) if coef not in ("", "+") else 1.0) * np.pi
    return float(s)


def _eps_list(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    command: str
    nx: int = 128
    nz: int = 128
    Lx: float = 3 * np.pi
    Lz: float = 12.0
    eps: tuple = (0.1, 0.05, 0.025)
    branch: str = "both"
    delta: float = 0.15
    theta: float = 5.0 / 6.0
    R1: float = 10.0
    R3: float = 1.0
    gs_tol: float = 1e-10
    fdnls_tol: float = 1e-9
    eta3_tol: float = 1e-9
    eta3_maxiter: int = 40
    surface_kmax_x: float = 4.0
    surface_kmax_z: float = 0.8
    dn_Ymax: float = 30.0
    dn_ny: int = 48
    dn_h0: float = 0.015
    dn_picard_tol: float = 1e-11
    cascade_rtol: float = 0.25
    offband_rtol: float = 1e-3
    cheap_dn: bool = False
    remainder: bool = False
    out: str = "dws_out"
    force: bool = False
    threads: int = 1

    def validate(self) -> "RunConfig":
        try:
            Grid2D(self.nx, self.nz, self.Lx, self.Lz)
            for e in self.eps:
                WaveParams(e, self.delta, self.theta, self.R1, self.R3)
            self.dno_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.eps:
            raise ConfigError("empty eps list")
        for name in ("gs_tol", "fdnls_tol", "eta3_tol", "cascade_rtol", "offband_rtol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.branch not in ("+", "-", "both"):
            raise ConfigError("branch must be +, - or both")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.command in ("solve", "reconstruct", "validate"):
            for e in self.eps:
                m = self.Lx / (np.pi * e)
                if abs(m - round(m)) > 1e-9 * m:
                    raise ConfigError(
                        f"envelope half-length Lx = {self.Lx:.12g} is not a multiple of pi*eps "
                        f"for eps = {e}; the surface box would not hold a whole number of carrier waves")
        return self

    def branches(self) -> tuple[str, ...]:
        return ("+", "-") if self.branch == "both" else (self.branch,)

    def grid(self) -> Grid2D:
        return Grid2D(self.nx, self.nz, self.Lx, self.Lz)

    def params(self, eps: float) -> WaveParams:
        return WaveParams(eps, self.delta, self.theta, self.R1, self.R3)

    def dno_config(self) -> dno.DnoConfig:
        return dno.DnoConfig(Ymax=self.dn_Ymax, ny=self.dn_ny, h0=self.dn_h0,
                             picard_tol=self.dn_picard_tol)

    def reduction_config(self) -> reduction.ReductionConfig:
        return reduction.ReductionConfig(mode="cheap" if self.cheap_dn else "full",
                                         tol=self.eta3_tol, maxiter=self.eta3_maxiter,
                                         dno=self.dno_config())

    def hash(self) -> str:
        d = asdict(self)
        for k in ("command", "out", "force", "threads"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()


_INI_KEYS = {
    "grid": {"nx": int, "nz": int, "Lx": _length, "Lz": _length},
    "wave": {"eps": _eps_list, "branch": str, "delta": float, "theta": float,
             "R1": float, "R3": float},
    "solver": {"gs_tol": float, "fdnls_tol": float, "eta3_tol": float, "eta3_maxiter": int,
               "cheap_dn": _bool, "remainder": _bool},
    "surface": {"kmax_x": float, "kmax_z": float},
    "dno": {"Ymax": float, "ny": int, "h0": float, "picard_tol": float},
    "validate": {"cascade_rtol": float, "offband_rtol": float},
    "run": {"out": str, "threads": int},
}
_PREFIX = {"surface": "surface_", "dno": "dn_"}


def read_ini(path) -> dict:
    """Read ``key = value`` sections into RunConfig field values."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for section in cp.sections():
        if section not in _INI_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in _INI_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                out[_PREFIX.get(section, "") + key] = _INI_KEYS[section][key](raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = read_ini(args.config) if args.config else {}
    if args.eps is not None:
        values["eps"] = _eps_list(args.eps)
    if args.branch is not None:
        values["branch"] = args.branch
    if args.grid is not None:
        nx, nz, Lx, Lz = args.grid
        try:
            values.update(nx=int(nx), nz=int(nz), Lx=_length(Lx), Lz=_length(Lz))
        except ValueError as exc:
            raise ConfigError(f"bad --grid values {args.grid}") from exc
    if args.out is not None:
        values["out"] = args.out
    if args.threads is not None:
        values["threads"] = args.threads
    for flag in ("force", "cheap_dn", "remainder"):
        if getattr(args, flag):
            values[flag] = True
    return RunConfig(command=args.command, **values).validate()


# -- artifact files --------------------------------------------------------------------

def _tag(eps: float, branch: str) -> str:
    return f"eps{eps:.6g}_{'plus' if branch == '+' else 'minus'}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Writer:
    """Collects outputs and writes them serially; refuses to overwrite unless forced."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.out)

    def check_free(self, names):
        if self.cfg.force:
            return
        taken = [n for n in names if (self.root / n).exists()]
        if taken:
            raise OutputExists(f"refusing to overwrite {', '.join(taken)} (use --force)")

    def _meta(self, kind: str) -> dict:
        return {"kind": kind, "version": __version__, "config_hash": self.cfg.hash(),
                "config": {k: v for k, v in asdict(self.cfg).items() if k not in ("force",)}}

    def field(self, name: str, f: SpectralField, kind: str, payload: dict):
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / name
        path.write_bytes(field_to_bytes(f))
        meta = self._meta(kind)
        meta.update(file=name, sha256=_sha256(path), **payload)
        self.json(name.rsplit(".", 1)[0] + ".json", meta, raw=True)

    def json(self, name: str, payload: dict, kind: str = "report", raw: bool = False):
        self.root.mkdir(parents=True, exist_ok=True)
        data = payload if raw else {**self._meta(kind), **payload}
        text = json.dumps(_plain(data), indent=2, sort_keys=True, ensure_ascii=False)
        (self.root / name).write_text(text + "\n", encoding="utf-8")

    def csv(self, name: str, header, rows, kind: str = "table"):
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
            w.writerow(header)
            w.writerows(rows)
        meta = self._meta(kind)
        meta.update(file=name, sha256=_sha256(path))
        self.json(name.rsplit(".", 1)[0] + ".json", meta, raw=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def load_checked(root: Path, name: str) -> tuple[SpectralField, dict]:
    """Load a field file, verifying its sidecar checksum and format."""
    path = root / name
    side = path.with_suffix(".json")
    if not path.exists() or not side.exists():
        raise FileNotFoundError(f"missing artifact {path} (or its sidecar)")
    try:
        meta = json.loads(side.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FieldFormatError(f"unreadable sidecar {side}: {exc}") from exc
    data = path.read_bytes()
    if hashlib.sha256(data).hexdigest() != meta.get("sha256"):
        raise FieldFormatError(f"checksum mismatch for {path}")
    f, end = field_from_bytes(data)
    if end != len(data):
        raise FieldFormatError(f"trailing bytes in {path}")
    return f, meta


# -- commands ------------------------------------------------------------------------------

def _map(cfg: RunConfig, fn, items):
    """Run fn over items, in a thread pool when requested; results keep input order."""
    if cfg.threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


def _ground(cfg: RunConfig) -> nls.GroundState:
    root = Path(cfg.out)
    if (root / "ground_state.dwsf").exists():
        z, meta = load_checked(root, "ground_state.dwsf")
        if z.grid == cfg.grid():
            return nls.GroundState(z, meta["residual_h1"], meta["peak"], meta.get("iterations", {}))
    return nls.ground_state(cfg.grid(), tol=cfg.gs_tol)


def cmd_ground_state(cfg: RunConfig) -> int:
    w = Writer(cfg)
    w.check_free(["ground_state.dwsf", "ground_state.json"])
    try:
        gs = nls.ground_state(cfg.grid(), tol=cfg.gs_tol)
    except ConvergenceError as exc:
        w.json("ground_state_failure.json", {"error": str(exc), "report": exc.report.to_dict()})
        print(f"ground state failed: {exc} (report in {w.root / 'ground_state_failure.json'})",
              file=sys.stderr)
        return EXIT_FAIL
    w.field("ground_state.dwsf", gs.zeta0, "ground_state", gs.sidecar())
    print(f"residual_h1 = {gs.residual_h1:.3e}  peak = {gs.peak:.10f}")
    return EXIT_OK if gs.residual_h1 <= cfg.gs_tol else EXIT_FAIL


def cmd_solve(cfg: RunConfig) -> int:
    w = Writer(cfg)
    jobs = [(e, b) for e in cfg.eps for b in cfg.branches()]
    names = [f"fdnls_{_tag(e, b)}.{ext}" for e, b in jobs for ext in ("dwsf", "json")]
    w.check_free(names + ["sweep_summary.csv", "sweep_summary.json"])
    gs = _ground(cfg)

    def run(job):
        eps, branch = job
        rem = None
        if cfg.remainder:
            rem = reduction.remainder_coupling(cfg.params(eps), gs.grid, cfg_surface(cfg, gs.grid, eps),
                                               cfg.reduction_config())
        try:
            sol, rep = fdnls.solve_fdnls(eps, branch, gs, tol=cfg.fdnls_tol, delta=cfg.delta,
                                         remainder=rem)
            return sol, rep, None
        except (ConvergenceError, DwsError) as exc:
            return None, getattr(exc, "report", None), str(exc)

    results = _map(cfg, run, jobs)
    rows, failures = [], []
    for (eps, branch), (sol, rep, err) in zip(jobs, results):
        if sol is None:
            failures.append(f"eps={eps} branch={branch}: {err}")
            rows.append([eps, branch, "", "", "", "false"])
            continue
        side = sol.sidecar()
        side["report"] = rep.to_dict()
        w.field(f"fdnls_{_tag(eps, branch)}.dwsf", sol.zeta, "fdnls_solution", side)
        rows.append([eps, branch, sol.residual_h1, sol.h1_distance_to_ground_state,
                     sol.sup_distance_to_ground_state, "true"])
    w.csv("sweep_summary.csv", ["epsilon", "branch", "residual_h1", "h1_distance",
                                "sup_distance", "converged"], rows, kind="sweep_summary")
    for f in failures:
        print(f"FAILED {f}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


def cfg_surface(cfg: RunConfig, envelope: Grid2D, eps: float) -> Grid2D:
    return reduction.surface_grid_for(envelope, eps, cfg.surface_kmax_x, cfg.surface_kmax_z)


def _surface_names(eps, branch):
    t = _tag(eps, branch)
    return {part: f"surface_{t}_{part}.dwsf" for part in ("eta1", "F", "eta3")}


def cmd_reconstruct(cfg: RunConfig) -> int:
    w = Writer(cfg)
    root = Path(cfg.out)
    jobs = [(e, b) for e in cfg.eps for b in cfg.branches()]
    names = []
    for e, b in jobs:
        for n in _surface_names(e, b).values():
            names += [n, n.replace(".dwsf", ".json")]
        names += [f"reduction_{_tag(e, b)}.json", f"profile_{_tag(e, b)}.csv",
                  f"profile_{_tag(e, b)}.json"]
    w.check_free(names)
    inputs = {}
    for e, b in jobs:
        inputs[(e, b)] = load_checked(root, f"fdnls_{_tag(e, b)}.dwsf")[0]
    zeta0 = None
    if (root / "ground_state.dwsf").exists():
        zeta0 = load_checked(root, "ground_state.dwsf")[0]
    rcfg = cfg.reduction_config()

    def run(job):
        eps, branch = job
        params = cfg.params(eps)
        zeta = inputs[job]
        surface = cfg_surface(cfg, zeta.grid, eps)
        try:
            dec = reduction.reconstruct_surface(zeta, params, surface, rcfg)
        except (ConvergenceError, DwsError) as exc:
            rep = getattr(exc, "report", None)
            return None, {"error": str(exc), "report": rep.to_dict() if rep else None}
        res = reduction.full_residual(dec.eta, params.c2, rcfg.dno, params.delta, rcfg.mode)
        info = {"norms": dec.norms, "eta3_report": dec.reports["eta3"], "residual": res.to_dict(),
                "band_bookkeeping": dec.band_bookkeeping()}
        if zeta0 is not None and zeta0.grid == zeta.grid:
            lead = reduction.leading_order_profile(zeta0, eps, surface, 1.0 if branch == "+" else -1.0)
            info["leading_order_sup_error"] = sup_norm(dec.eta - lead)
            info["leading_order_sup_error_over_eps"] = sup_norm(dec.eta - lead) / eps
        return dec, info

    results = _map(cfg, run, jobs)
    failures = []
    for (eps, branch), (dec, info) in zip(jobs, results):
        t = _tag(eps, branch)
        w.json(f"reduction_{t}.json", {"epsilon": eps, "branch": branch, **info}, kind="reduction")
        if dec is None:
            failures.append(f"eps={eps} branch={branch}: {info['error']}")
            continue
        payload = {"epsilon": eps, "branch": branch, "delta": cfg.delta, "theta": cfg.theta,
                   "R1": cfg.R1, "R3": cfg.R3}
        for part, name in _surface_names(eps, branch).items():
            w.field(name, getattr(dec, part), f"surface_{part}", payload)
        g = dec.eta.grid
        j0 = int(np.argmin(np.abs(g.z)))
        prof = dec.eta.values[:, j0]
        w.csv(f"profile_{t}.csv", ["x", "eta"], [[float(x), float(v)] for x, v in zip(g.x, prof)],
              kind="elevation_profile")
    for f in failures:
        print(f"FAILED {f}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


def validate_surface(eta1: SpectralField, F: SpectralField, eta3: SpectralField,
                     params: WaveParams, cfg: RunConfig) -> dict:
    """Invariant suite on a stored decomposition; each entry has 'ok' and measured values."""
    norms = reduction.decomposition_norms(eta1, F, eta3, params)
    dec = reduction.SurfaceDecomposition(eta1, F, eta3, params, norms)
    checks = {f"band_bookkeeping.{k}": v for k, v in dec.band_bookkeeping().items()}
    F_again = reduction.F_of_eta1(eta1, params.epsilon, params.delta)
    dF = float(np.abs(F_again.coeffs - F.coeffs).max() / max(np.abs(F.coeffs).max(), 1e-300))
    checks["eta2_is_F_plus_eta3"] = {"value": dF, "ok": dF <= 1e-10}
    leak = reduction.quadratic_band_leak(eta1, params.delta)
    checks["chi_L2_eta1_vanishes"] = {"value": leak, "ok": leak <= 1e-12}
    extra = reduction.extra_term_cancellation(eta1, params.delta)
    checks["extra_term_cancellation"] = {"value": extra, "ok": extra <= 1e-12}
    cas = reduction.cascade_coefficients(eta1, params, mode="cheap")
    for k, v in cas.items():
        checks[f"cascade.{k}"] = {**v, "ok": v["relative_error"] <= cfg.cascade_rtol}
    res = reduction.full_residual(dec.eta, params.c2, cfg.dno_config(), params.delta,
                                  cfg.reduction_config().mode)
    rel_off = res.offband_h1 / max(res.term_h1.values())
    checks["residual_split"] = {**res.to_dict(), "offband_relative": rel_off,
                                "ok": rel_off <= cfg.offband_rtol}
    checks["balls"] = {"within_R1": norms["within_R1"], "within_R3": norms["within_R3"],
                       "ok": bool(norms["within_R1"] and norms["within_R3"])}
    return checks


def cmd_validate(cfg: RunConfig) -> int:
    w = Writer(cfg)
    root = Path(cfg.out)
    w.check_free(["validation.json"])
    report, failed = {}, []
    for eps in cfg.eps:
        for branch in cfg.branches():
            names = _surface_names(eps, branch)
            parts = {k: load_checked(root, n)[0] for k, n in names.items()}
            checks = validate_surface(parts["eta1"], parts["F"], parts["eta3"], cfg.params(eps), cfg)
            key = _tag(eps, branch)
            report[key] = checks
            failed += [f"{key}:{name}" for name, c in checks.items() if not c["ok"]]
    w.json("validation.json", {"checks": report, "failed": failed,
                               "passed": not failed}, kind="validation")
    for f in failed:
        print(f"INVARIANT FAILED {f}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"ground-state": cmd_ground_state, "solve": cmd_solve,
            "reconstruct": cmd_reconstruct, "validate": cmd_validate}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dws", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key = value config file with sections")
    p.add_argument("--eps", help="comma or space separated list of eps values")
    p.add_argument("--branch", choices=["+", "-", "both"])
    p.add_argument("--grid", nargs=4, metavar=("NX", "NZ", "LX", "LZ"),
                   help="envelope grid; lengths accept forms like 3pi")
    p.add_argument("--out", help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--threads", type=int, help="worker threads for independent sweep points")
    p.add_argument("--cheap-dn", dest="cheap_dn", action="store_true",
                   help="closed-form cubic truncation instead of full Dirichlet-Neumann solves")
    p.add_argument("--remainder", action="store_true",
                   help="couple the envelope equation to the exact higher-order term")
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = build_config(args)
        return COMMANDS[cfg.command](cfg)
    except OutputExists as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_EXISTS
    except (ConfigError, FieldFormatError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, DwsError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
