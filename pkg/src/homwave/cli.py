"""Experiment orchestration: config parsing, subcommands, reports.

Configs are flat TOML-style text ([section] headers, key = value pairs with
numbers, quoted strings, booleans, and [a, b, c] lists). All randomness flows
from the single configured seed, CSV payloads carry 17-significant-digit
floats in fixed column order, and every emitted file lands in the JSON
manifest with a content hash, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
import time
import traceback

import numpy as np

from . import __version__
from .correctors import build_corrector_set, corrector_growth, default_max_order
from .errors import HomwaveError
from .export import file_sha256, save_corrector_set, save_field, write_csv
from .hetwave import WaveState, discrete_eigenpairs, evolve_with_snapshots
from .homprop import max_certified_kappa, run_green_decay, symbol_from_correctors
from .media import (build_grid, default_lifted_profile, sample_periodic,
                    sample_quasiperiodic, sample_random)
from .spreading import (large_scale_average, localization_length, predict_lower_bound,
                        recenter_eigenpair, standing_wave_probe, width_comparison)
from .twoscale import build_mollifier, scaling_experiment

_SCHEMA = {
    "media": {"kind", "cell", "seed", "correlation_range", "contrast", "base", "amplitude",
              "low", "high", "fraction", "f_matrix", "gamma"},
    "grid": {"d", "extent", "points"},
    "correctors": {"order", "tol"},
    "homprop": {"kappa", "kt_min", "kt_max", "eta", "n_times"},
    "twoscale": {"kappas", "orders", "horizon_const", "max_cells", "cell_points"},
    "spreading": {"theta", "alpha", "target_lambda", "periods", "r_factor", "l_factor", "sigma", "eps"},
    "run": {"out", "seed", "workers"},
    "sweep": {"subcommand", "param", "values"},
}

_DEFAULTS = {
    "media": {"kind": "laminate", "cell": 1.0, "seed": 0, "correlation_range": 0.25,
              "contrast": 4.0, "base": 2.0, "amplitude": 1.0, "low": 1.0, "high": 4.0,
              "fraction": 0.5, "f_matrix": [1.0, math.sqrt(2.0)], "gamma": 2.0},
    "grid": {"d": 1, "extent": 1.0, "points": 512},
    "correctors": {"order": 0, "tol": 1e-10},
    "homprop": {"kappa": 0.12, "kt_min": 10.0, "kt_max": 1000.0, "eta": 0.2, "n_times": 12},
    "twoscale": {"kappas": [0.05, 0.07, 0.09, 0.12], "orders": [1, 3],
                 "horizon_const": 0.1, "max_cells": 1024, "cell_points": 16},
    "spreading": {"theta": 0.25, "alpha": 2.0, "target_lambda": 3.0, "periods": 6,
                  "r_factor": 2.0, "l_factor": 4.0, "sigma": 0.5, "eps": 0.1},
    "run": {"out": "homwave-out", "seed": 0, "workers": 1},
    "sweep": {"subcommand": "green-decay", "param": "homprop.kappa", "values": []},
}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        return [] if not inner else [_parse_value(v) for v in inner.split(",")]
    if raw.startswith('"') and raw.endswith('"'):
        return raw[1:-1]
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(path: str | None) -> dict:
    """Flat sectioned key-value config; unknown sections/keys are rejected."""
    cfg = {sec: dict(vals) for sec, vals in _DEFAULTS.items()}
    if path is None:
        return cfg
    section = None
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in _SCHEMA:
                    raise HomwaveError(f"{path}:{ln}: unknown section [{section}]")
                continue
            if "=" not in line or section is None:
                raise HomwaveError(f"{path}:{ln}: expected 'key = value' inside a section")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in _SCHEMA[section]:
                raise HomwaveError(f"{path}:{ln}: unknown key {key!r} in [{section}]")
            cfg[section][key] = _parse_value(raw)
    return cfg


def build_field(cfg: dict):
    g = cfg["grid"]
    grid = build_grid(int(g["d"]), float(g["extent"]), int(g["points"]))
    m = cfg["media"]
    kind = m["kind"]
    if kind in ("constant", "laminate", "cosine", "diagonal", "anisotropic_cosine"):
        params = {}
        if kind == "laminate":
            params = {"low": m["low"], "high": m["high"], "fraction": m["fraction"]}
        elif kind == "cosine":
            params = {"base": m["base"], "amplitude": m["amplitude"]}
        return sample_periodic(grid, kind, cell=float(m["cell"]), **params)
    if kind == "random":
        return sample_random(grid, seed=int(m["seed"]) + int(cfg["run"]["seed"]),
                             correlation_range=float(m["correlation_range"]),
                             contrast=float(m["contrast"]))
    if kind == "quasiperiodic":
        F = np.asarray(m["f_matrix"], dtype=float).reshape(-1, grid.d)
        return sample_quasiperiodic(grid, default_lifted_profile(m["base"], m["amplitude"]), F)
    raise HomwaveError(f"unknown media kind {kind!r}")


class Reporter:
    """Collects stage timings and emitted files into the run manifest."""

    def __init__(self, out_dir: str, cfg: dict):
        self.out = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.cfg = cfg
        self.stages = {}
        self.files = []
        self.derived = {}

    def stage(self, name: str):
        reporter = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                reporter.stages[name] = time.perf_counter() - self.t0

        return _Stage()

    def add_files(self, paths):
        self.files.extend(paths if isinstance(paths, (list, tuple)) else [paths])

    def finalize(self, name: str) -> str:
        manifest = {
            "manifest_schema": 1,
            "artifact_version": __version__,
            "subcommand": name,
            "config": self.cfg,
            "wall_clock_s": self.stages,
            "derived": self.derived,
            "files": {os.path.relpath(p, self.out): file_sha256(p) for p in self.files},
        }
        path = os.path.join(self.out, f"{name}-manifest.json")
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
        return path


def _plot(out_path, draw):
    """Static plot emission; failures never fail the numeric run."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        draw(ax)
        fig.tight_layout()
        fig.savefig(out_path, dpi=120)
        plt.close(fig)
        return [out_path]
    except Exception as exc:  # pragma: no cover - plotting is best-effort
        sys.stderr.write(f"plotting skipped: {exc}\n")
        return []


def cmd_correctors(cfg, rep: Reporter):
    field = build_field(cfg)
    N = int(cfg["correctors"]["order"]) or default_max_order(field.grid.d)
    with rep.stage("correctors"):
        cset = build_corrector_set(field, N=N, tol=float(cfg["correctors"]["tol"]))
    Ks, slope = corrector_growth(cset)
    rows = [(n, Ks[n], max(cset.residual[n].values()), max(cset.sigma_residual[n].values()))
            for n in range(1, N + 1)]
    csv = write_csv(os.path.join(rep.out, "correctors.csv"),
                    ["n", "K_n", "weak_residual", "divergence_residual"], rows)
    rep.add_files([csv])
    rep.add_files(save_field(field, os.path.join(rep.out, "field")))
    rep.add_files(save_corrector_set(cset, rep.out))
    rep.derived["C0"] = field.C0
    rep.derived["growth_slope"] = slope
    rep.derived["K"] = {str(n): Ks[n] for n in Ks}
    rep.add_files(_plot(os.path.join(rep.out, "growth.png"),
                        lambda ax: (ax.semilogy(range(1, N + 1), [Ks[n] for n in range(1, N + 1)], "o-"),
                                    ax.set_xlabel("order n"), ax.set_ylabel("K_n"))))
    return rows


def cmd_tensors(cfg, rep: Reporter):
    field = build_field(cfg)
    N = int(cfg["correctors"]["order"]) or default_max_order(field.grid.d)
    with rep.stage("tensors"):
        cset = build_corrector_set(field, N=N, with_flux=False)
    rows = []
    for n in range(1, N + 1):
        for B, M in sorted(cset.abar[n].items()):
            M = np.asarray(M)
            for i in range(field.grid.d):
                for j in range(field.grid.d):
                    rows.append((n, "".join(map(str, B)) or "-", i, j, M[i, j]))
    csv = write_csv(os.path.join(rep.out, "tensors.csv"), ["n", "block", "i", "j", "value"], rows)
    rep.add_files([csv])
    rep.derived["even_norms"] = {str(n): cset.abar_norm(n) for n in range(2, N + 1, 2)}
    sym = symbol_from_correctors(cset)
    rep.derived["max_certified_kappa"] = max_certified_kappa(sym, k=0)
    norms = [cset.abar_norm(n) for n in range(1, N + 1)]
    rep.add_files(_plot(os.path.join(rep.out, "tensors.png"),
                        lambda ax: (ax.semilogy(range(1, N + 1), [max(v, 1e-20) for v in norms], "s-"),
                                    ax.set_xlabel("order n"), ax.set_ylabel("|Abar^n|"))))
    return rows


def cmd_green_decay(cfg, rep: Reporter):
    field = build_field(cfg)
    N = int(cfg["correctors"]["order"]) or 3
    hp = cfg["homprop"]
    with rep.stage("correctors"):
        cset = build_corrector_set(field, N=N)
    sym = symbol_from_correctors(cset)
    rows = []
    with rep.stage("decay"):
        for region in ("global", "interior"):
            fit = run_green_decay(sym, float(hp["kappa"]), field.grid.d, region=region,
                                  kt_window=(float(hp["kt_min"]), float(hp["kt_max"])),
                                  n_times=int(hp["n_times"]), eta=float(hp["eta"]))
            rows.append((field.grid.d, N, fit.kappa, region, fit.exponent, fit.prefactor, fit.residual))
            rep.derived[f"{region}_sups"] = list(fit.sups)
            rep.derived[f"{region}_times"] = list(fit.times)
    csv = write_csv(os.path.join(rep.out, "green_decay.csv"),
                    ["d", "N", "kappa", "region", "exponent", "prefactor", "fit_residual"], rows)
    rep.add_files([csv])

    def draw(ax):
        for region in ("global", "interior"):
            ts = np.asarray(rep.derived[f"{region}_times"])
            ss = np.asarray(rep.derived[f"{region}_sups"])
            ax.loglog(1 + float(rows[0][2]) * ts, ss, "o-", label=region)
        ax.set_xlabel("1 + kappa t")
        ax.set_ylabel("sup |G|")
        ax.legend()

    rep.add_files(_plot(os.path.join(rep.out, "green_decay.png"), draw))
    return rows


def cmd_two_scale(cfg, rep: Reporter):
    ts = cfg["twoscale"]
    m = cfg["media"]
    if m["kind"] not in ("constant", "laminate", "cosine", "diagonal", "anisotropic_cosine"):
        raise HomwaveError("two-scale sweeps need a cell-periodic medium")
    # the sweep tiles the cell onto horizon-sized tori, so the cell is sampled
    # at its own (coarse) resolution rather than the [grid] one
    cell_cfg = dict(cfg)
    cell_cfg["grid"] = {"d": cfg["grid"]["d"], "extent": float(m["cell"]),
                        "points": int(ts["cell_points"])}
    field = build_field(cell_cfg)
    with rep.stage("sweep"):
        reports = scaling_experiment(field, N_list=[int(n) for n in ts["orders"]],
                                     kappa_list=[float(k) for k in ts["kappas"]],
                                     horizon_const=float(ts["horizon_const"]),
                                     max_cells=int(ts["max_cells"]))
    rows = []
    for repN in reports:
        kappa_of = {}
        per_kappa = len(repN.rows) // len(repN.kappas)
        for i, r in enumerate(repN.rows):
            kappa = repN.kappas[i // per_kappa]
            ratio = r.measured / r.bound if r.bound > 0 else 0.0
            rows.append((repN.N, kappa, r.t, r.A0, r.A, r.B, r.C, r.D, r.bound, r.measured, ratio))
        rep.derived[f"exponent_N{repN.N}"] = repN.exponent
        rep.derived[f"dominance_N{repN.N}"] = repN.dominance
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    csv = write_csv(os.path.join(rep.out, "two_scale.csv"),
                    ["N", "kappa", "t", "A0", "A", "B", "C", "D", "bound", "measured", "ratio"], rows)
    rep.add_files([csv])

    def draw(ax):
        for repN in reports:
            ax.loglog(repN.kappas, repN.secular_rates, "o-", label=f"N={repN.N} (slope {repN.exponent:.2f})")
        ax.set_xlabel("kappa")
        ax.set_ylabel("secular budget rate B+C+D")
        ax.legend()

    rep.add_files(_plot(os.path.join(rep.out, "two_scale.png"), draw))
    return rows


def cmd_dispersion(cfg, rep: Reporter):
    """Large-scale averaged dispersion table: LHS vs the kappa-decomposed RHS
    over (kappa, R, t)."""
    field = build_field(cfg)
    hp = cfg["homprop"]
    kappa = float(hp["kappa"])
    # periodic cells are tiled out to a torus wide enough for the band and a
    # useful pre-wrap window; the cap keeps 2D node counts sane, so narrow
    # bands need a coarser per-cell resolution in [grid]
    min_extent = 64.0 / kappa
    if field.kind != "random" and field.grid.extent < min_extent:
        from .twoscale import tile_field

        cells = int(2 ** math.ceil(math.log2(min_extent / field.grid.extent)))
        cells = min(cells, 1024 if field.grid.d == 1 else 256)
        field = tile_field(field, cells)
    grid = field.grid
    if grid.extent < 24.0 / kappa:
        raise HomwaveError(
            f"torus extent {grid.extent} too small for kappa={kappa}; reduce [grid] points per cell or raise kappa")
    moll = build_mollifier(kappa, grid)
    u0 = moll.kernel / grid.l2(moll.kernel)
    from .correctors import Spectral

    sp = Spectral(grid)
    grad = sp.grad(u0)
    norm_l1 = grid.l1(u0)
    norm_l2 = grid.l2(u0)
    norm_grad = grid.l2(np.sqrt(np.sum(grad**2, axis=0)))
    c = field.max_speed
    t_wrap = (0.5 * grid.extent - 12.0 / kappa) / c
    times = [t_wrap * f for f in (0.25, 0.5, 0.75, 1.0)]
    with rep.stage("evolve"):
        states = evolve_with_snapshots(field, WaveState.from_rest(grid, u0), times)
    radii = [4.0 / kappa, 8.0 / kappa]
    rows = []
    d = grid.d
    with rep.stage("windows"):
        for st in states:
            for R in radii:
                lhs = large_scale_average(st.u, R, grid)
                rhs = (kappa**d * (1 + kappa * st.t) ** (-(d - 1) / 2.0) * norm_l1
                       + R ** (-d / 2.0) * (kappa * norm_l2 + norm_grad / kappa))
                rows.append((d, kappa, R, st.t, lhs, rhs, lhs / rhs))
    rows.sort(key=lambda r: (r[2], r[3]))
    csv = write_csv(os.path.join(rep.out, "dispersion.csv"),
                    ["d", "kappa", "R", "t", "lhs", "rhs", "ratio"], rows)
    rep.add_files([csv])
    rep.derived["max_ratio"] = max(r[-1] for r in rows)

    def draw(ax):
        for R in radii:
            pts = [(r[3], r[6]) for r in rows if r[2] == R]
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=f"R={R:g}")
        ax.set_xlabel("t")
        ax.set_ylabel("windowed norm / estimate")
        ax.legend()

    rep.add_files(_plot(os.path.join(rep.out, "dispersion.png"), draw))
    return rows


def cmd_spreading(cfg, rep: Reporter):
    sp = cfg["spreading"]
    field = build_field(cfg)
    if field.kind != "random":
        raise HomwaveError("spreading subcommand expects a random medium (localizing regime)")
    with rep.stage("eigen"):
        pairs = discrete_eigenpairs(field, 10, target=float(sp["target_lambda"]))
    theta = float(sp["theta"])
    rows = []
    best = None
    for p in pairs:
        f2, p2 = recenter_eigenpair(field, p)
        l_th, sat = localization_length(p2.psi, theta, field.grid)
        if not sat and (best is None or l_th < best[0]):
            best = (l_th, f2, p2)
    if best is None:
        raise HomwaveError("no non-saturated localized state found; enlarge the torus")
    l_th, f2, p2 = best
    with rep.stage("widths"):
        width_rep, slack, holds = width_comparison(f2, p2, theta=theta, alpha=float(sp["alpha"]))
    predicted = predict_lower_bound("random", p2.eigenvalue, d=field.grid.d, eps=float(sp["eps"]))
    with rep.stage("probe"):
        res = standing_wave_probe(f2, p2, kappa=p2.eigenvalue**0.25,
                                  R=float(sp["r_factor"]) * l_th,
                                  L=float(sp["l_factor"]) * l_th, periods=int(sp["periods"]))
    rows.append(("random", p2.eigenvalue, theta, width_rep.mass_width, width_rep.energy_width,
                 predicted, min(res.slacks)))
    csv = write_csv(os.path.join(rep.out, "spreading.csv"),
                    ["setting", "lambda", "theta", "l_theta", "l_energy", "predicted_bound",
                     "slack_min"], rows)
    rep.add_files([csv])
    rep.derived["window_norms"] = list(res.window_norms)
    rep.derived["probe_constant"] = res.constant
    rep.derived["quarter_rule_holds"] = holds
    rep.add_files(_plot(os.path.join(rep.out, "probe.png"),
                        lambda ax: (ax.plot(res.times, res.window_norms, "o-"),
                                    ax.set_xlabel("t"), ax.set_ylabel("window norm"))))
    return rows


def cmd_all(cfg, rep: Reporter):
    from .acceptance import run_all

    with rep.stage("acceptance"):
        records = run_all(verbose=True)
    rows = [(r["name"], int(r["passed"]), r["runtime_s"]) for r in records]
    csv = write_csv(os.path.join(rep.out, "acceptance.csv"), ["criterion", "passed", "runtime_s"], rows)
    rep.add_files([csv])
    rep.derived["all_passed"] = all(r["passed"] for r in records)
    if not rep.derived["all_passed"]:
        raise HomwaveError("acceptance suite has failing criteria")
    return rows


_COMMANDS = {
    "correctors": cmd_correctors,
    "tensors": cmd_tensors,
    "green-decay": cmd_green_decay,
    "two-scale": cmd_two_scale,
    "dispersion": cmd_dispersion,
    "spreading": cmd_spreading,
    "all": cmd_all,
}


def _set_by_path(cfg: dict, dotted: str, value):
    sec, key = dotted.split(".", 1)
    if sec not in _SCHEMA or key not in _SCHEMA[sec]:
        raise HomwaveError(f"unknown sweep parameter {dotted!r}")
    cfg[sec][key] = value


def _sweep_point(args):
    name, cfg, out_dir, dotted, value = args
    cfg = json.loads(json.dumps(cfg))  # deep copy through JSON (config is plain data)
    _set_by_path(cfg, dotted, value)
    point_dir = os.path.join(out_dir, f"point-{value}")
    rep = Reporter(point_dir, cfg)
    try:
        rows = _COMMANDS[name](cfg, rep)
        rep.finalize(name)
        return value, rows, None
    except Exception:
        return value, [], traceback.format_exc()


def cmd_sweep(cfg, rep: Reporter):
    sw = cfg["sweep"]
    name = sw["subcommand"]
    if name not in _COMMANDS or name in ("all", "sweep"):
        raise HomwaveError(f"sweep cannot wrap subcommand {name!r}")
    values = sw["values"]
    if not values:
        raise HomwaveError("sweep needs a nonempty [sweep] values list")
    workers = max(1, int(cfg["run"]["workers"]))
    tasks = [(name, cfg, rep.out, sw["param"], v) for v in values]
    results = []
    if workers == 1:
        results = [_sweep_point(t) for t in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, tasks))
    results.sort(key=lambda r: r[0])
    failures = {str(v): err for v, _, err in results if err}
    all_rows = []
    for v, rows, err in results:
        if err:
            continue
        for row in rows:
            all_rows.append((v,) + tuple(row))
    csv = write_csv(os.path.join(rep.out, "sweep.csv"),
                    ["sweep_value"] + [f"c{i}" for i in range(max((len(r) - 1 for r in all_rows), default=0))],
                    all_rows)
    rep.add_files([csv])
    rep.derived["failures"] = failures
    if failures:
        raise HomwaveError(f"{len(failures)} sweep point(s) failed")
    return all_rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="homwave",
                                     description="long-time homogenization laboratory for acoustic waves")
    parser.add_argument("subcommand", choices=sorted(_COMMANDS) + ["sweep"])
    parser.add_argument("--config", default=None, help="path to a flat TOML-style config")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--d", type=int, default=None, help="override grid dimension")
    parser.add_argument("--kappa", type=float, default=None)
    parser.add_argument("--order", type=int, default=None)
    parser.add_argument("--theta", type=float, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.out is not None:
            cfg["run"]["out"] = args.out
        if args.workers is not None:
            cfg["run"]["workers"] = args.workers
        if args.d is not None:
            cfg["grid"]["d"] = args.d
        if args.kappa is not None:
            cfg["homprop"]["kappa"] = args.kappa
        if args.order is not None:
            cfg["correctors"]["order"] = args.order
        if args.theta is not None:
            cfg["spreading"]["theta"] = args.theta

        out_dir = cfg["run"]["out"]
        rep = Reporter(out_dir, cfg)
        fn = cmd_sweep if args.subcommand == "sweep" else _COMMANDS[args.subcommand]
        t0 = time.perf_counter()
        fn(cfg, rep)
        rep.stages["total"] = time.perf_counter() - t0
        manifest = rep.finalize(args.subcommand)
        print(f"wrote {manifest}")
        return 0
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc),
                  "traceback": traceback.format_exc()}
        out_dir = (args.out or _DEFAULTS["run"]["out"])
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "error.json"), "w") as fh:
                json.dump(record, fh, indent=1)
        except OSError:
            pass
        sys.stderr.write(f"homwave {args.subcommand} failed: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
