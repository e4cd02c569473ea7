"""Experiment orchestration behind the command line: one function per mode,
each writing into an output directory it owns."""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import aniso, convergence, hydro, reference, regimes
from .config import RunConfig
from .errors import (
    ConfigError,
    ContractViolation,
    HypothesisViolation,
    InsufficientData,
    NemstripError,
    SingularThetaError,
    SolverError,
)
from .grid import StripGrid, read_snapshot
from .io import Manifest, save_fields, write_csv, write_json
from .plotting import emit_plot, series_from_rows, write_plot
from .tensor import BulkParams

log = logging.getLogger("nemstrip")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_HYPOTHESIS = 0, 2, 3, 4
VORTICITY_HEADER = ("t", "omega_l2", "omega_l4", "omega_l6", "omega_l8")
CONSTRAINT_TOL = 1e-8


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, ContractViolation)):
        return EXIT_CONFIG
    if isinstance(exc, (HypothesisViolation, SingularThetaError)):
        return EXIT_HYPOTHESIS
    return EXIT_SOLVER


def _grid(cfg: RunConfig, eps: float | None = None) -> StripGrid:
    return StripGrid(cfg.nx, cfg.ny, cfg.nz, cfg.eps if eps is None else eps, cfg.z_bc)


def _bulk(cfg: RunConfig) -> BulkParams:
    return BulkParams(cfg.a, cfg.b, cfg.c)


def _positive_series(header, rows, x, names):
    """Series suitable for a log plot: drop those with any nonpositive sample."""
    data = series_from_rows(header, rows, x, names)
    return {k: v for k, v in data.items() if v and all(y > 0 and math.isfinite(y) for _, y in v)}


def _plot(out: Path, man: Manifest, name: str, series, kind: str, **kw) -> None:
    if not series:
        log.info("skipping %s: nothing positive to plot", name)
        return
    write_plot(out / name, emit_plot(series, kind, **kw))
    man.add_artifact(name)


def _load_snapshot_fields(prefix: str, names, grid: StripGrid) -> dict:
    out = {}
    for n in names:
        f, hdr = read_snapshot(f"{prefix}_{n}.bin")
        if (hdr["nx"], hdr["ny"], hdr["nz"]) != grid.shape:
            raise ContractViolation(f"snapshot {prefix}_{n}.bin has shape {(hdr['nx'], hdr['ny'], hdr['nz'])}, grid is {grid.shape}")
        out[n] = f
    return out


def _schedule(cfg: RunConfig):
    n = max(1, int(round(cfg.t_end / cfg.dt)))
    return n, cfg.t_end / n


# ----------------------------------------------------------------------------
# anisotropic runs


def initial_aniso(cfg: RunConfig) -> aniso.AnisoState:
    grid = _grid(cfg)
    kw = dict(nu1=cfg.nu1, nu2=cfg.nu2, bulk=_bulk(cfg))
    if cfg.preset == "random":
        return aniso.random_state(grid, cfg.seed, cfg.amplitude, **kw)
    if cfg.preset == "kolmogorov":
        _, _, Z = grid.coords()
        prof = cfg.amplitude * np.sin(Z) + grid.zeros()
        return replace(aniso.zero_state(grid, **kw), u=prof, v=prof.copy())
    f = _load_snapshot_fields(cfg.snapshot, ("u", "v", "w") + aniso.Q_NAMES, grid)
    return replace(aniso.zero_state(grid, **kw), u=f["u"], v=f["v"], w=f["w"], q=tuple(f[n] for n in aniso.Q_NAMES))


def run_aniso(cfg: RunConfig, out: Path, man: Manifest) -> int:
    s = initial_aniso(cfg)
    n_steps, dt0 = _schedule(cfg)
    rows = [aniso.csv_row(s, 0.0)]
    for name in save_fields(out, "snap_000000", s.fields(), s.eps):
        man.add_artifact(name)
    step = 0
    while s.t < cfg.t_end * (1 - 1e-12):
        dt = min(dt0, aniso.max_stable_dt(s), cfg.t_end - s.t)
        s = aniso.step(s, dt)
        step += 1
        if step % cfg.output_stride == 0 or s.t >= cfg.t_end * (1 - 1e-12):
            rows.append(aniso.csv_row(s, dt))
        if cfg.snapshot_stride and step % cfg.snapshot_stride == 0:
            for name in save_fields(out, f"snap_{step:06d}", s.fields(), s.eps):
                man.add_artifact(name)
    for name in save_fields(out, "final", s.fields(), s.eps):
        man.add_artifact(name)
    write_csv(out / "series.csv", aniso.CSV_HEADER, rows)
    man.add_artifact("series.csv")
    _plot(out, man, "energy.svg", _positive_series(aniso.CSV_HEADER, rows, "t", ("kinetic", "q_l2", "q_h1", "f_total")), "energy")

    series = [(r[0], r[4]) for r in rows]
    try:
        rep = regimes.classify_regime(series, cfg.eps, cfg.alpha)
    except (InsufficientData, ContractViolation) as exc:
        man.doc["hypothesis_flags"]["regime"] = f"not classified: {exc}"
        return EXIT_OK
    envs = {m: regimes.ode_envelope(series, cfg.eps, m, cfg.alpha) for m in ("exponential", "polynomial", "decay")}
    write_json(
        out / "regime.json",
        {
            "regime": rep.regime.value,
            "rate": rep.rate,
            "exponent": rep.exponent,
            "residual_exp": rep.residual_exp,
            "residual_poly": rep.residual_poly,
            "envelopes": {m: {"f0": e.f0, "params": e.params, "holds": e.holds} for m, e in envs.items()},
        },
    )
    man.add_artifact("regime.json")
    man.doc["hypothesis_flags"]["regime"] = rep.regime.value
    mode = {"polynomial_growth": "polynomial", "exponential_decay": "decay"}.get(rep.regime.value, "exponential")
    _plot(out, man, "regime.svg", {"f_total": series}, "regime", envelope=envs[mode])
    return EXIT_OK


# ----------------------------------------------------------------------------
# hydrostatic runs


def initial_hydro(cfg: RunConfig) -> hydro.HydroState:
    grid = _grid(cfg)
    kw = dict(nu1=cfg.nu1, nu2=cfg.nu2, bulk=_bulk(cfg))
    if cfg.preset == "random":
        return hydro.random_admissible_state(grid, cfg.seed, velocity_amp=cfg.amplitude, q_amp=cfg.q_amplitude, **kw)
    if cfg.preset == "kolmogorov":
        _, _, Z = grid.coords()
        s = reference.kolmogorov(grid, cfg.amplitude, cfg.amplitude, cfg.nu1, 0.0, nu2=cfg.nu2, bulk=_bulk(cfg))
        if cfg.q_amplitude > 0:
            s = hydro.hydro_state(grid, s.u, s.v, cfg.q_amplitude * np.cos(Z) + grid.zeros(), **kw)
        return s
    f = _load_snapshot_fields(cfg.snapshot, ("u", "v", "q11"), grid)
    return hydro.hydro_state(grid, f["u"], f["v"], f["q11"], **kw)


def run_hydro(cfg: RunConfig, out: Path, man: Manifest) -> int:
    s = initial_hydro(cfg)
    n_steps, dt0 = _schedule(cfg)
    rows = [hydro.csv_row(s, 0.0)]
    vort = [(0.0, hydro.vorticity_norms(s))]
    for name in save_fields(out, "snap_000000", s.fields(), s.grid.eps):
        man.add_artifact(name)
    step = 0
    worst_residual = hydro.constraint_residual(s)
    while s.t < cfg.t_end * (1 - 1e-12):
        dt = min(dt0, hydro.max_stable_dt(s), cfg.t_end - s.t)
        s = hydro.step_limit(s, dt)
        step += 1
        worst_residual = max(worst_residual, hydro.constraint_residual(s))
        if step % cfg.output_stride == 0 or s.t >= cfg.t_end * (1 - 1e-12):
            rows.append(hydro.csv_row(s, dt))
            vort.append((s.t, hydro.vorticity_norms(s)))
        if cfg.snapshot_stride and step % cfg.snapshot_stride == 0:
            for name in save_fields(out, f"snap_{step:06d}", s.fields(), s.grid.eps):
                man.add_artifact(name)
    for name in save_fields(out, "final", s.fields(), s.grid.eps):
        man.add_artifact(name)
    write_csv(out / "series.csv", hydro.CSV_HEADER, rows)
    write_csv(out / "vorticity.csv", VORTICITY_HEADER, [(t, *(v[k] for k in range(4))) for t, v in vort])
    man.add_artifact("series.csv")
    man.add_artifact("vorticity.csv")
    _plot(out, man, "energy.svg", _positive_series(hydro.CSV_HEADER, rows, "t", ("q_l2sq", "weighted_l2", "weighted_h1")), "energy")
    mono = reference.vorticity_norm_series(vort)
    flags = man.doc["hypothesis_flags"]
    flags["constraint_residual_max"] = worst_residual
    flags["constraint_ok"] = worst_residual <= CONSTRAINT_TOL
    flags["vorticity_monotone"] = {str(k): v for k, v in mono.monotone.items()}
    if not flags["constraint_ok"]:
        raise HypothesisViolation(f"constraint residual reached {worst_residual:.3e}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# comparison runs


def sweep_config(cfg: RunConfig, eps_list=None) -> convergence.SweepConfig:
    return convergence.SweepConfig(
        eps_list=tuple(cfg.eps_list if eps_list is None else eps_list),
        nx=cfg.nx,
        ny=cfg.ny,
        nz=cfg.nz,
        nu1=cfg.nu1,
        nu2=cfg.nu2,
        bulk=_bulk(cfg),
        dt=cfg.dt,
        t_end=cfg.t_end,
        stride=cfg.output_stride,
        seed=cfg.seed,
        velocity_coef=cfg.amplitude,
        q_coef=cfg.q_amplitude,
    )


def _write_pair(out: Path, man: Manifest, run: convergence.PairRun) -> None:
    write_csv(out / "comparison.csv", convergence.CSV_HEADER, run.series)
    man.add_artifact("comparison.csv")
    _plot(
        out,
        man,
        "comparison.svg",
        _positive_series(convergence.CSV_HEADER, run.series, "t", ("h_total", "f_integral", "aniso_f_total")),
        "energy",
        fit={"bound_constant": run.bound.constant if run.bound else None},
    )


def run_verify(cfg: RunConfig, out: Path, man: Manifest) -> int:
    scfg = sweep_config(cfg, (cfg.eps,))
    run = convergence.run_pair(scfg, cfg.eps)
    if run.series:
        _write_pair(out, man, run)
    b = run.bound
    write_json(
        out / "bound.json",
        {
            "eps": cfg.eps,
            "g0": run.g0,
            "constant": b.constant if b else None,
            "holds": b.holds if b else None,
            "linf_ratio": run.linf_ratio,
            "error": run.error,
        },
    )
    man.add_artifact("bound.json")
    flags = man.doc["hypothesis_flags"]
    flags["linf_ratio"] = run.linf_ratio
    flags["linf_ok"] = run.linf_ratio <= scfg.linf_bound
    if run.error:
        raise SolverError(run.error, run.series[-1][0] if run.series else 0.0)
    if not flags["linf_ok"]:
        return EXIT_HYPOTHESIS
    return EXIT_OK


def run_sweep(cfg: RunConfig, out: Path, man: Manifest) -> int:
    scfg = sweep_config(cfg)
    table = convergence.epsilon_sweep(scfg)
    for run in table.runs:
        sub = out / f"eps_{run.eps!r}"
        sub.mkdir(parents=True, exist_ok=True)
        sub_man = Manifest(sub, replace(cfg, mode="verify", eps=run.eps, output_dir=str(sub)))
        if run.series:
            _write_pair(sub, sub_man, run)
        sub_man.doc["hypothesis_flags"]["linf_ratio"] = run.linf_ratio
        sub_man.finish(EXIT_SOLVER if run.error else EXIT_OK, run.error)
    write_csv(out / "sweep.csv", convergence.SWEEP_HEADER, table.rows)
    summary = table.as_dict()
    summary["config"] = convergence.sweep_config_dict(scfg)
    write_json(out / "summary.json", summary)
    man.add_artifact("sweep.csv")
    man.add_artifact("summary.json")
    pts = [(r[0], r[3]) for r in table.rows if r[3] > 0]
    if pts:
        _plot(
            out,
            man,
            "order.svg",
            {"sup H": pts},
            "order",
            log_x=True,
            fit={"order": table.order, "interval": list(table.order_interval) if table.order_interval else None},
        )
    flags = man.doc["hypothesis_flags"]
    flags["f_integral_flags"] = [bool(r[9]) for r in table.rows]
    flags["linf_flags"] = [bool(r[10]) for r in table.rows]
    flags["constants_consistent"] = table.constants_consistent
    if table.errors:
        raise SolverError("; ".join(table.errors), 0.0)
    if any(flags["f_integral_flags"]) or any(flags["linf_flags"]):
        return EXIT_HYPOTHESIS
    return EXIT_OK


def run_blasius(cfg: RunConfig, out: Path, man: Manifest) -> int:
    prof = reference.blasius_solve(cfg.eta_max)
    write_csv(out / "profile.csv", ("eta", "f", "fp", "fpp"), prof.rows())
    write_json(out / "profile.json", {"eta_max": prof.eta_max, "fpp0": prof.fpp0, "fp_end": float(prof.fp[-1])})
    man.add_artifact("profile.csv")
    man.add_artifact("profile.json")
    step = max(1, prof.eta.size // 200)
    series = {
        name: list(zip(prof.eta[::step].tolist(), vals[::step].tolist()))
        for name, vals in (("f", prof.f), ("f'", prof.fp), ("f''", prof.fpp))
    }
    _plot(out, man, "blasius.svg", series, "profile", fit={"fpp0": prof.fpp0})
    return EXIT_OK


HANDLERS = {
    "aniso": run_aniso,
    "hydro": run_hydro,
    "verify": run_verify,
    "sweep": run_sweep,
    "blasius": run_blasius,
}


def run(cfg: RunConfig, out_dir: str | Path | None = None) -> int:
    """Execute ``cfg`` into ``out_dir`` (default: the configured directory).

    Partial artifacts are kept on failure; the manifest records the exit code
    and stays ``completed = false`` unless the run reached its end.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = replace(cfg, output_dir=str(out))
    man = Manifest(out, cfg)
    log.info("mode=%s out=%s seed=%d", cfg.mode, out, cfg.seed)
    try:
        code = HANDLERS[cfg.mode](cfg, out, man)
    except NemstripError as exc:
        code = exit_code_for(exc)
        log.error("%s: %s", type(exc).__name__, exc)
        man.finish(code, f"{type(exc).__name__}: {exc}", completed=False)
        return code
    man.finish(code, None, completed=True)
    return code
