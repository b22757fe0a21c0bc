"""Config-driven runs, sweeps and checks.

Usage::

    fsi-fem run --config cfg.json --out results/
    fsi-fem convergence --config sweep.json --jobs 4

Configs are JSON objects; see :class:`RunConfig` for the fields.  Exit status
is nonzero iff a rate gate (or the source check) fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import ritz as ritz_mod
from .analysis import ERROR_COLUMNS, ConvergenceReport, fit_rate, self_convergence, write_atomic, write_report
from .cn import ELEMENT_DEGREE, ELEMENTS, layout_for, run_case
from .manufactured import Case, channel_periodic_case, heat_wave_case, traction_case, verify_sources
from .mesh import build_structured_mesh, mesh_for_h, rows_for

log = logging.getLogger("fsi_fem")

MODES = ("run", "convergence_space", "convergence_time", "ritz", "verify_sources", "self_convergence")
CASE_NAMES = ("channel_periodic", "channel_traction", "heat_wave")
SUBCOMMANDS = {
    "run": ("run",),
    "convergence": ("convergence_space", "convergence_time"),
    "ritz": ("ritz",),
    "verify-sources": ("verify_sources",),
    "self-convergence": ("self_convergence",),
}
STEP_COLUMNS = ("step", "t", *ERROR_COLUMNS, "energy", "solver_residual")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class RunConfig:
    mode: str
    case: str
    element: str = "mini"
    length: float | None = None
    y_levels: list[float] | None = None
    h: float | None = None
    nx: int | None = None
    ny: list[int] | None = None  # cells per strip
    T: float = 0.25
    tau: float | None = None
    gamma: float = 0.01
    h_list: list[float] = field(default_factory=list)
    tau_list: list[float] = field(default_factory=list)
    reference_h: float | None = None
    tolerance: float | None = None
    gate_columns: list[str] | None = None
    n_samples: int = 100
    seed: int = 0
    out: str = "results"
    error_every: int = 1

    @property
    def degree(self) -> int:
        return ELEMENT_DEGREE[self.element]

    @property
    def tol(self) -> float:
        if self.tolerance is not None:
            return self.tolerance
        return 0.4 if self.mode == "self_convergence" else 0.25

    def build_case(self) -> Case:
        if self.case == "channel_periodic":
            case = channel_periodic_case(self.gamma, 1.0 if self.length is None else self.length)
        elif self.case == "heat_wave":
            case = heat_wave_case()
        else:
            case = traction_case()
        if self.y_levels is not None:
            geom = dataclasses.replace(case.geometry, y_levels=tuple(self.y_levels))
            case = dataclasses.replace(case, geometry=geom)
        return case


def _fail(name: str, msg: str):
    raise ConfigError(f"{name}: {msg}")


def _positive(name, v):
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or v <= 0:
        _fail(name, f"must be a positive number, got {v!r}")
    return float(v)


def parse_config(source) -> RunConfig:
    """Validate a JSON config (a path or an already-loaded dict) and fill defaults."""
    if isinstance(source, dict):
        raw = dict(source)
    else:
        try:
            raw = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for k in raw:
        if k not in known:
            _fail(k, "unknown field")
    for k in ("mode", "case"):
        if k not in raw:
            _fail(k, "required")
    if raw["mode"] not in MODES:
        _fail("mode", f"must be one of {MODES}, got {raw['mode']!r}")
    if raw["case"] not in CASE_NAMES:
        _fail("case", f"must be one of {CASE_NAMES}, got {raw['case']!r}")
    if "element" not in raw and raw["case"] == "heat_wave":
        raw["element"] = "p1"
    cfg = RunConfig(**raw)

    if cfg.element not in ELEMENTS:
        _fail("element", f"must be one of {tuple(ELEMENTS)}, got {cfg.element!r}")
    scalar = ELEMENTS[cfg.element][1] is None
    if scalar != (cfg.case == "heat_wave"):
        _fail("element", f"{cfg.element!r} does not fit case {cfg.case!r} (scalar elements only for heat_wave)")
    cfg.T = float(cfg.T)
    if not math.isfinite(cfg.T) or cfg.T < 0:
        _fail("T", "must be a nonnegative number")
    _positive("gamma", cfg.gamma)
    if cfg.length is not None:
        if cfg.case != "channel_periodic":
            _fail("length", "only the channel_periodic case takes a length override")
        if _positive("length", cfg.length) != round(cfg.length):
            _fail("length", "must be an integer (the exact solution has x-period 1)")
    if cfg.y_levels is not None:
        if cfg.case != "channel_traction":
            _fail("y_levels", "only the channel_traction case takes a y_levels override")
        lv = [float(v) for v in cfg.y_levels]
        if len(lv) != 4 or any(b <= a for a, b in zip(lv, lv[1:])):
            _fail("y_levels", "needs four increasing levels")
    for name in ("h", "tau", "reference_h", "tolerance"):
        v = getattr(cfg, name)
        if v is not None:
            setattr(cfg, name, _positive(name, v))
    cfg.h_list = [_positive("h_list", v) for v in cfg.h_list]
    cfg.tau_list = [_positive("tau_list", v) for v in cfg.tau_list]
    if cfg.nx is not None and (not isinstance(cfg.nx, int) or cfg.nx < 1):
        _fail("nx", "must be a positive integer")
    if cfg.error_every < 1:
        _fail("error_every", "must be >= 1")
    if cfg.gate_columns is not None:
        for c in cfg.gate_columns:
            if c not in ERROR_COLUMNS:
                _fail("gate_columns", f"unknown column {c!r}")

    m = cfg.mode
    if m != "convergence_time" and cfg.tau_list:
        _fail("tau_list", f"not allowed in {m} mode")
    if m in ("run", "verify_sources") and cfg.h_list:
        _fail("h_list", f"not allowed in {m} mode")
    if m == "run":
        if cfg.h is None and cfg.nx is None:
            _fail("h", "run mode needs h or nx/ny")
        if cfg.tau is None:
            _fail("tau", "required in run mode")
    if m in ("convergence_space", "ritz", "self_convergence"):
        if len(cfg.h_list) < 2:
            _fail("h_list", f"{m} needs at least two mesh sizes")
        if len(set(cfg.h_list)) != len(cfg.h_list):
            _fail("h_list", "mesh sizes must be distinct")
    if m in ("convergence_space", "self_convergence") and cfg.tau is None:
        _fail("tau", f"required in {m} mode")
    if m == "convergence_time":
        if len(cfg.tau_list) < 2:
            _fail("tau_list", "convergence_time needs at least two step sizes")
        if len(set(cfg.tau_list)) != len(cfg.tau_list):
            _fail("tau_list", "step sizes must be distinct")
        if cfg.h is None:
            _fail("h", "required in convergence_time mode")
    if m in ("convergence_space", "convergence_time", "ritz") and cfg.case == "channel_traction":
        _fail("case", f"channel_traction has no exact solution; {m} needs one")
    if m == "self_convergence":
        if cfg.reference_h is None:
            _fail("reference_h", "required in self_convergence mode")
        coarse = max(cfg.h_list)
        for name, h in [("h_list", v) for v in cfg.h_list] + [("reference_h", cfg.reference_h)]:
            r = coarse / h
            if abs(r - round(r)) > 1e-9:
                _fail(name, f"{h} does not divide the coarsest h={coarse} (meshes must nest)")
        if cfg.reference_h >= min(cfg.h_list):
            _fail("reference_h", "must be finer than every h in h_list")
    return cfg


# ---------------------------------------------------------------------------
# sweep workers (top level so they pickle)


def _mesh(cfg: RunConfig, case: Case, h: float | None):
    if h is None:
        ny = cfg.ny if cfg.ny is not None else [max(1, math.ceil((b - a) * cfg.nx - 1e-9))
                                                for a, b in zip(case.geometry.y_levels, case.geometry.y_levels[1:])]
        return build_structured_mesh(case.geometry, cfg.nx, ny)
    return mesh_for_h(case.geometry, h)


def _nested_mesh(cfg: RunConfig, case: Case, h: float):
    coarse = max(cfg.h_list)
    r = int(round(coarse / h))
    nx0 = max(2 if case.geometry.periodic else 1, int(round(case.geometry.length / coarse)))
    ny0 = rows_for(case.geometry, coarse)
    return build_structured_mesh(case.geometry, nx0 * r, [n * r for n in ny0])


def _run_member(cfg: RunConfig, h: float, tau: float) -> dict:
    case = cfg.build_case()
    res = run_case(case, cfg.element, cfg.T, tau, h=h, error_every=10**9)
    return {"h": h, "tau": tau, **res.final_errors()}


def _ritz_member(cfg: RunConfig, h: float) -> dict:
    case = cfg.build_case()
    layout = layout_for(case, cfg.element, mesh_for_h(case.geometry, h))
    series = ritz_mod.evolve(layout, case.exact, cfg.T, h / 4.0)
    return {"h": h, **ritz_mod.series_errors(layout, case.exact, series)}


def _map(fn, args, jobs: int):
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, *zip(*args)))


# ---------------------------------------------------------------------------
# modes


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _steps_csv(records) -> str:
    lines = [",".join(STEP_COLUMNS)]
    for r in records:
        lines.append(",".join(_fmt(r[c]) if c in r else "" for c in STEP_COLUMNS))
    return "\n".join(lines) + "\n"


def _dump(path: Path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _do_run(cfg: RunConfig, out: Path) -> int:
    case = cfg.build_case()
    mesh = _mesh(cfg, case, cfg.h)
    res = run_case(case, cfg.element, cfg.T, cfg.tau, mesh=mesh, error_every=cfg.error_every)
    write_atomic(out / "run.csv", _steps_csv(res.records))
    summary = {"case": case.name, "element": cfg.element, "h": cfg.h, "mesh_h": mesh.h, "tau": cfg.tau, "T": cfg.T,
               "steps": res.final.step, "n_unknowns": res.n_unknowns}
    if case.exact is not None:
        summary["final_errors"] = res.final_errors()
    _dump(out / "run.json", summary)
    return 0


def _space_expected(cfg: RunConfig) -> dict:
    k, tol = cfg.degree, cfg.tol
    cols = cfg.gate_columns or ["err_u_L2", "err_eta_L2"]
    exp = {c: (k + 1.0, tol) if c.endswith("L2") else (float(k), tol) for c in cols}
    if cfg.gate_columns is None:
        exp["err_eta_H1"] = (float(k), -tol)  # one-sided
    return exp


def _do_convergence(cfg: RunConfig, out: Path, jobs: int) -> int:
    case = cfg.build_case()
    if cfg.mode == "convergence_space":
        rep = ConvergenceReport(case.name, cfg.element, "h", expected=_space_expected(cfg))
        args = [(cfg, h, cfg.tau) for h in cfg.h_list]
        stem = "convergence_space"
    else:
        cols = cfg.gate_columns or ["err_u_L2"]
        rep = ConvergenceReport(case.name, cfg.element, "tau", expected={c: (2.0, cfg.tol) for c in cols})
        args = [(cfg, cfg.h, tau) for tau in cfg.tau_list]
        stem = "convergence_time"
    for row in _map(_run_member, args, jobs):
        rep.add(row.pop("h"), row.pop("tau"), row)
    summary = write_report(rep, out, stem)
    for col, ok in summary["gates"].items():
        log.info("%s rate %.3f: %s", col, summary["rates"][col], "pass" if ok else "FAIL")
    return 0 if rep.passed else 1


def _do_ritz(cfg: RunConfig, out: Path, jobs: int) -> int:
    rows = _map(_ritz_member, [(cfg, h) for h in cfg.h_list], jobs)
    rep = ritz_mod.ritz_error_report(rows, cfg.degree, cfg.element, cfg.tol)
    write_atomic(out / "ritz.csv", rep.to_csv())
    _dump(out / "ritz.json", {"case": cfg.case, **rep.summary()})
    return 0 if rep.passed else 1


def _do_verify(cfg: RunConfig, out: Path) -> int:
    case = cfg.build_case()
    if case.exact is None:
        raise ConfigError("case: channel_traction has no manufactured solution to verify")
    report = verify_sources(case, n_samples=cfg.n_samples, seed=cfg.seed)
    _dump(out / "verify_sources.json", {"case": case.name, "seed": cfg.seed, **report})
    return 0 if report["pass"] else 1


def _do_self_convergence(cfg: RunConfig, out: Path) -> int:
    case = cfg.build_case()
    hs = sorted(cfg.h_list, reverse=True)
    fields = []
    for h in hs + [cfg.reference_h]:
        res = run_case(case, cfg.element, cfg.T, cfg.tau, mesh=_nested_mesh(cfg, case, h), error_every=10**9)
        fields.append((res.layout.flow, res.final.u))
    diffs = self_convergence(fields[:-1], fields[-1])
    fitres = fit_rate(list(zip(hs, diffs)))
    expected = cfg.degree + 1.0
    ok = fitres.slope is not None and abs(fitres.slope - expected) <= cfg.tol
    lines = ["h,reference_h,diff_u_L2"] + [f"{h!r},{cfg.reference_h!r},{d!r}" for h, d in zip(hs, diffs)]
    write_atomic(out / "self_convergence.csv", "\n".join(lines) + "\n")
    write_atomic(out / "self_convergence_diff_u_L2.dat",
                 "# log10(h) log10(diff_u_L2)\n" + "".join(f"{math.log10(h)!r} {math.log10(d)!r}\n"
                                                         for h, d in zip(hs, diffs) if d > 0))
    _dump(out / "self_convergence.json", {"case": case.name, "element": cfg.element, "rate": fitres.slope,
                                          "adjacent_rates": fitres.adjacent, "expected": expected, "tolerance": cfg.tol,
                                          "pass": bool(ok)})
    return 0 if ok else 1


def execute(cfg: RunConfig, out: str | Path | None = None, jobs: int = 1) -> int:
    """Run one configured job; returns the exit status."""
    out = Path(cfg.out if out is None else out)
    if cfg.mode == "run":
        return _do_run(cfg, out)
    if cfg.mode in ("convergence_space", "convergence_time"):
        return _do_convergence(cfg, out, jobs)
    if cfg.mode == "ritz":
        return _do_ritz(cfg, out, jobs)
    if cfg.mode == "verify_sources":
        return _do_verify(cfg, out)
    return _do_self_convergence(cfg, out)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsi-fem", description="Stokes-wave FSI finite element experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="sampling seed for verify-sources")
        s.add_argument("--jobs", type=int, default=1, help="parallel sweep members")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FSI_FEM_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if cfg.mode not in SUBCOMMANDS[args.command]:
            raise ConfigError(f"mode: {cfg.mode!r} does not match the {args.command!r} subcommand")
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("seed: must fit in an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.jobs < 1:
            raise ConfigError("jobs: must be >= 1")
        return execute(cfg, args.out, args.jobs)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
