"""Command-line harness: experiment configs, run directories, verification.

Subcommands
    simulate  minimize the sharp (eta = 0) or diffuse (eta > 0) functional
              and write a run directory (config, version, trace CSV,
              snapshot, summary)
    limit     renormalized energy, connection length, and limit energy of
              a vortex configuration
    steiner   minimal mod-m connection of points from a file
    gamma     core-energy table as CSV
    verify    run the numbered acceptance checks
    examples  reference connection instances, forests written as data

Exit codes: 0 on success, 1 when a requested check fails, 2 on usage or
configuration errors.

Config files are flat key-value text parsed by ``configparser``; see
ExperimentConfig.  Values given on the command line override the file.
Runs are deterministic: rerunning an identical config writes byte-identical
CSV, snapshot, and summary files (timings never go into run files).
"""

from __future__ import annotations

import argparse
import configparser
import os
import subprocess
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .domain import DomainSpec, build_grid
from .errors import FracVortexError
from .io import write_forest, write_snapshot, write_trace, _fmt
from .quotient import ModulusParams
from .renorm import VortexConfig, core_energy_table, limit_energy, w_disk_exact
from .simulate import (
    SimParams,
    detect_vortices,
    energy_diffuse,
    energy_sharp,
    extract_jump_set,
    init_from_forest,
    init_random,
    init_smooth,
    minimize_diffuse,
    minimize_sharp,
)
from .steiner import lambda_mu


# --------------------------------------------------------------------------
# experiment configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation run, as stored in a flat sectioned key-value file.

    Sections and keys::

        [domain]  shape, h, degree, vertices (x y; x y; ...),
                  boundary_mode, fourier (a b; a b; ...), phase0
        [model]   m, eps, eta
        [points]  p0 = x y, p1 = x y, ...   (vortex positions)
        [run]     seed, max_sweeps, tol, window, starts (comma list of
                  competitor, smooth, random), out
    """

    shape: str = "disk"
    h: float = 0.05
    degree: int = 1
    vertices: tuple = ()
    boundary_mode: str = "canonical"
    fourier: tuple = ()
    phase0: float = 0.0
    m: int = 2
    eps: float = 0.1
    eta: float = 0.0
    points: tuple = ()
    seed: int = 0
    max_sweeps: int = 4000
    tol: float = 1e-8
    window: int = 50
    starts: tuple = ("competitor", "smooth", "random")
    out: str = ""

    def domain_spec(self) -> DomainSpec:
        return DomainSpec(
            shape=self.shape,
            h=self.h,
            degree=self.degree,
            vertices=self.vertices or None,
            boundary_mode=self.boundary_mode,
            fourier_coeffs=self.fourier,
            phase0=self.phase0,
        )

    def sim_params(self) -> SimParams:
        return SimParams(
            params=ModulusParams(self.m),
            eps=self.eps,
            eta=self.eta,
            max_sweeps=self.max_sweeps,
            tol=self.tol,
            window=self.window,
            seed=self.seed,
        )

    @staticmethod
    def from_file(path: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        with open(path) as fh:
            cp.read_file(fh)
        kw = {}
        dom = cp["domain"] if cp.has_section("domain") else {}
        if "shape" in dom:
            kw["shape"] = dom["shape"]
        if "h" in dom:
            kw["h"] = float(dom["h"])
        if "degree" in dom:
            kw["degree"] = int(dom["degree"])
        if "vertices" in dom:
            kw["vertices"] = _parse_pairs(dom["vertices"])
        if "boundary_mode" in dom:
            kw["boundary_mode"] = dom["boundary_mode"]
        if "fourier" in dom:
            kw["fourier"] = _parse_pairs(dom["fourier"])
        if "phase0" in dom:
            kw["phase0"] = float(dom["phase0"])
        mod = cp["model"] if cp.has_section("model") else {}
        if "m" in mod:
            kw["m"] = int(mod["m"])
        if "eps" in mod:
            kw["eps"] = float(mod["eps"])
        if "eta" in mod:
            kw["eta"] = float(mod["eta"])
        if cp.has_section("points"):
            pts = []
            for key in cp["points"]:
                x, y = (float(t) for t in cp["points"][key].split())
                pts.append(complex(x, y))
            kw["points"] = tuple(pts)
        run = cp["run"] if cp.has_section("run") else {}
        if "seed" in run:
            kw["seed"] = int(run["seed"])
        if "max_sweeps" in run:
            kw["max_sweeps"] = int(run["max_sweeps"])
        if "tol" in run:
            kw["tol"] = float(run["tol"])
        if "window" in run:
            kw["window"] = int(run["window"])
        if "starts" in run:
            kw["starts"] = tuple(
                s.strip() for s in run["starts"].split(",") if s.strip()
            )
        if "out" in run:
            kw["out"] = run["out"]
        return ExperimentConfig(**kw)

    def to_text(self) -> str:
        lines = ["[domain]"]
        lines.append(f"shape = {self.shape}")
        lines.append(f"h = {_fmt(self.h)}")
        lines.append(f"degree = {self.degree}")
        if self.vertices:
            lines.append("vertices = " + _join_pairs(self.vertices))
        lines.append(f"boundary_mode = {self.boundary_mode}")
        if self.fourier:
            lines.append("fourier = " + _join_pairs(self.fourier))
        lines.append(f"phase0 = {_fmt(self.phase0)}")
        lines.append("")
        lines.append("[model]")
        lines.append(f"m = {self.m}")
        lines.append(f"eps = {_fmt(self.eps)}")
        lines.append(f"eta = {_fmt(self.eta)}")
        lines.append("")
        if self.points:
            lines.append("[points]")
            for i, z in enumerate(self.points):
                lines.append(f"p{i} = {_fmt(z.real)} {_fmt(z.imag)}")
            lines.append("")
        lines.append("[run]")
        lines.append(f"seed = {self.seed}")
        lines.append(f"max_sweeps = {self.max_sweeps}")
        lines.append(f"tol = {_fmt(self.tol)}")
        lines.append(f"window = {self.window}")
        lines.append("starts = " + ",".join(self.starts))
        if self.out:
            lines.append(f"out = {self.out}")
        return "\n".join(lines) + "\n"


def _parse_pairs(text: str) -> tuple:
    pairs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        x, y = (float(t) for t in chunk.split())
        pairs.append((x, y))
    return tuple(pairs)


def _join_pairs(pairs) -> str:
    return "; ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in pairs)


def version_string() -> str:
    """Package version, with the git description when run from a checkout."""
    base = f"fracvortex {__version__}"
    try:
        here = os.path.dirname(os.path.abspath(__file__))
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=here, capture_output=True, text=True, timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{base} ({desc.stdout.strip()})"
    except OSError:
        pass
    return base


def _read_points_file(path: str) -> np.ndarray:
    pts = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            x, y = (float(t) for t in line.split()[:2])
            pts.append([x, y])
    if not pts:
        raise FracVortexError(f"{path}: no points found")
    return np.array(pts)


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _run_simulate(args) -> int:
    cfg = (ExperimentConfig.from_file(args.config) if args.config
           else ExperimentConfig())
    overrides = {}
    for name in ("shape", "h", "degree", "m", "eps", "eta", "seed",
                 "max_sweeps", "tol", "window", "out"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    if args.points is not None:
        xy = _read_points_file(args.points)
        overrides["points"] = tuple(complex(x, y) for x, y in xy)
    if args.starts is not None:
        overrides["starts"] = tuple(
            s.strip() for s in args.starts.split(",") if s.strip()
        )
    cfg = replace(cfg, **overrides)
    if not cfg.out:
        raise FracVortexError("no output directory: set --out or [run] out")

    spec = cfg.domain_spec()
    grid = build_grid(spec)
    sim = cfg.sim_params()
    diffuse = cfg.eta > 0.0
    sim.check_grid(grid, diffuse=diffuse)
    minimize = minimize_diffuse if diffuse else minimize_sharp

    vortex_cfg = None
    forest = None
    if cfg.points:
        vortex_cfg = VortexConfig(points=cfg.points,
                                  params=ModulusParams(cfg.m),
                                  degree=cfg.degree)
        vortex_cfg.validate_in(spec)

    attempted = []
    results = []
    for start in cfg.starts:
        if start == "competitor":
            if vortex_cfg is None:
                attempted.append((start, "skipped (no points)"))
                continue
            if forest is None:
                _, forest = lambda_mu(vortex_cfg.as_xy(),
                                      ModulusParams(cfg.m), large=args.large)
            init = init_from_forest(forest, vortex_cfg, grid, sim)
        elif start == "smooth":
            init = init_smooth(grid, sim)
        elif start == "random":
            init = init_random(grid, sim)
        else:
            raise FracVortexError(f"unknown start {start!r}")
        state = minimize(grid, sim, init=init)
        energy = (energy_diffuse if diffuse else energy_sharp)(state, grid, sim)
        attempted.append((start, f"total {_fmt(energy.total)}"))
        results.append((energy.total, start, state, energy))

    if not results:
        raise FracVortexError("no start could run; check starts and points")
    results.sort(key=lambda r: r[0])
    best_total, best_start, best_state, best_energy = results[0]

    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())
    with open(os.path.join(cfg.out, "VERSION"), "w") as fh:
        fh.write(version_string() + "\n")
    write_trace(os.path.join(cfg.out, "trace.csv"), best_state.history)
    write_snapshot(os.path.join(cfg.out, "snapshot.txt"), best_state, grid, sim)
    if forest is not None:
        write_forest(os.path.join(cfg.out, "forest.txt"), forest)

    vs = detect_vortices(best_state, grid, ModulusParams(cfg.m))
    js = extract_jump_set(best_state, grid, sim)
    lines = [f"model {'diffuse' if diffuse else 'sharp'}"]
    for start, note in attempted:
        lines.append(f"start_{start} {note}")
    lines.append(f"best_start {best_start}")
    lines.append(f"converged {int(best_state.converged)}")
    lines.append(f"sweeps {best_state.sweeps}")
    lines.append(f"quotient_dirichlet {_fmt(best_energy.quotient_dirichlet)}")
    lines.append(f"potential {_fmt(best_energy.potential)}")
    lines.append(f"jump_length {_fmt(best_energy.jump_length)}")
    lines.append(f"at_wall {_fmt(best_energy.at_wall)}")
    lines.append(f"total {_fmt(best_energy.total)}")
    lines.append(f"vortices {len(vs.vortices)}")
    lines.append(f"total_winding {vs.total_winding}")
    lines.append(f"jump_components {len(js.components)}")
    lines.append(f"jump_total_length {_fmt(js.total_length)}")
    with open(os.path.join(cfg.out, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {cfg.out}: best start {best_start}, total {best_total:.6f}, "
          f"converged={best_state.converged}")
    return 0


# --------------------------------------------------------------------------
# limit / steiner / gamma
# --------------------------------------------------------------------------


def _run_limit(args) -> int:
    params = ModulusParams(args.m)
    xy = _read_points_file(args.points)
    pts = tuple(complex(x, y) for x, y in xy)
    cfg = VortexConfig(points=pts, params=params, degree=args.degree)
    spec = DomainSpec(shape="disk", h=args.h, degree=args.degree)
    cfg.validate_in(spec)
    lam, forest = lambda_mu(xy, params, large=args.large)
    w = w_disk_exact(cfg, spec)
    if args.gamma is not None:
        gamma = args.gamma
    else:
        gamma = core_energy_table(params).gamma_estimate
    le = limit_energy(cfg, spec, gamma, forest)
    print(f"w {_fmt(w)}")
    print(f"connection {_fmt(lam)}")
    print(f"gamma {_fmt(gamma)}")
    print(f"core {_fmt(le.core)}")
    print(f"total {_fmt(le.total)}")
    if args.out:
        write_forest(args.out, forest)
    return 0


def _run_steiner(args) -> int:
    params = ModulusParams(args.m)
    pts = _read_points_file(args.points)
    value, forest = lambda_mu(pts, params, large=args.large)
    print(f"length {_fmt(value)}")
    print(f"components {len(forest.components)}")
    if args.out:
        write_forest(args.out, forest)
    return 0


def _run_gamma(args) -> int:
    params = ModulusParams(args.m)
    radii = tuple(float(t) for t in args.R.split(","))
    tab = core_energy_table(params, radii=radii, h=args.h)
    lines = ["R,gamma,energy,iterations,converged"]
    for row in tab.rows:
        lines.append(f"{_fmt(row.radius)},{_fmt(row.gamma)},"
                     f"{_fmt(row.energy_2d)},{row.iterations},"
                     f"{int(row.converged)}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    print(f"# gamma_estimate {_fmt(tab.gamma_estimate)}")
    print(f"# slope {_fmt(tab.slope)} (ideal {_fmt(np.pi / params.m**2)})")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


# --------------------------------------------------------------------------
# verify / examples
# --------------------------------------------------------------------------


def _run_verify(args) -> int:
    from .acceptance import run_suite

    numbers = None
    if args.checks:
        numbers = [int(t) for t in args.checks.split(",")]
    results, all_ok = run_suite(numbers=numbers, large=args.large)
    for r in results:
        print(r.line())
    n_pass = sum(1 for r in results if r.ok)
    n_fail = sum(1 for r in results if r.ok is False)
    n_skip = sum(1 for r in results if r.ok is None)
    print(f"{n_pass} passed, {n_fail} failed, {n_skip} skipped")
    return 0 if all_ok else 1


def _run_examples(args) -> int:
    from .acceptance import reference_examples

    rows = reference_examples(large=not args.skip_large)
    ok_all = True
    csv_lines = ["name,ok,detail"]
    for name, ok, detail, forest in rows:
        ok_all = ok_all and ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        csv_lines.append(f"{name},{int(ok)},\"{detail}\"")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            write_forest(os.path.join(args.out, f"{name}.forest.txt"), forest)
    if args.out:
        with open(os.path.join(args.out, "examples.csv"), "w") as fh:
            fh.write("\n".join(csv_lines) + "\n")
    return 0 if ok_all else 1


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="fracvortex",
        description="Lattice Ginzburg-Landau fields with fractional vortices "
                    "and line defects",
    )
    top.add_argument("--version", action="version", version=version_string())
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="minimize the sharp or diffuse model")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--out", help="run directory (overrides config)")
    p.add_argument("--shape", choices=("disk", "polygon"))
    p.add_argument("--h", type=float)
    p.add_argument("--degree", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--eta", type=float, help="> 0 selects the diffuse model")
    p.add_argument("--points", help="vortex positions file (x y per line)")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--starts", help="comma list: competitor,smooth,random")
    p.add_argument("--large", action="store_true",
                   help="allow nine-terminal exact trees in the warm start")
    p.set_defaults(func=_run_simulate)

    p = sub.add_parser("limit", help="renormalized and limit energies")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--points", required=True, help="file with x y per line")
    p.add_argument("--h", type=float, default=0.0125)
    p.add_argument("--gamma", type=float,
                   help="core energy constant; computed from the radius "
                        "ladder when omitted (slow)")
    p.add_argument("--large", action="store_true")
    p.add_argument("--out", help="write the connection forest here")
    p.set_defaults(func=_run_limit)

    p = sub.add_parser("steiner", help="minimal mod-m connection")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--points", required=True, help="file with x y per line")
    p.add_argument("--large", action="store_true",
                   help="raise the exact-tree cap from 6 to 9 terminals")
    p.add_argument("--out", help="write the forest here")
    p.set_defaults(func=_run_steiner)

    p = sub.add_parser("gamma", help="core-energy table as CSV")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--R", default="2,4,8,16", help="comma list of radii")
    p.add_argument("--h", type=float, default=0.125)
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=_run_gamma)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--suite", choices=("primary",), default="primary")
    p.add_argument("--checks", help="comma list of check numbers (default all)")
    p.add_argument("--large", action="store_true",
                   help="include the nine-terminal check (about 30s)")
    p.set_defaults(func=_run_verify)

    p = sub.add_parser("examples", help="reference connection instances")
    p.add_argument("--out", help="directory for forest files and CSV")
    p.add_argument("--skip-large", action="store_true",
                   help="skip the nine-point instance")
    p.set_defaults(func=_run_examples)

    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FracVortexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
