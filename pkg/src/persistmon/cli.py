"""Command-line front end: ``run``, ``sweep`` and ``oracle``.

Configuration is flat ``key=value`` text with dotted section prefixes::

    seed=0
    field.source=synth
    mission.rho_threshold=0.6
    planner.rows=12

Command-line flags override file values. Exit codes: 0 success, 1 config or
input error, 2 numerical failure, 3 partial sweep failure.
"""

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import field_io, full_gp, kernel, oracles, planner, sogp
from . import mission as missions
from .errors import ContractError, FieldFormatError, InputError, NumericalError

log = logging.getLogger("persistmon")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3

MISSION_KEYS = ("waypoints_per_plan", "bv_capacity", "rho_threshold", "sample_stride",
                "prior_random_samples", "max_samples", "novelty_threshold",
                "relative_novelty", "measurement_noise")
OPTIMIZER_KEYS = ("learning_rate", "max_iters", "grad_tolerance", "backtrack", "max_halvings")
DEFAULT_HYPER = kernel.Hyperparameters(-2.0, 2.0, (1.0, 1.0))


class ConfigError(InputError):
    pass


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything one mission needs, resolved from file, flags and defaults."""

    seed: int = 0
    field_source: str = "synth"
    field_kind: str = "gaussian_blobs"
    field_rows: int = 128
    field_cols: int = 128
    hyper: kernel.Hyperparameters = DEFAULT_HYPER
    mission: missions.MissionConfig = dataclasses.field(default_factory=missions.MissionConfig)
    raster_format: str = "csv"
    figures: bool = True

    def __post_init__(self):
        if self.raster_format not in ("csv", "pgm"):
            raise ConfigError(f"output.format must be csv or pgm, got {self.raster_format!r}")
        if self.field_source != "synth" and not Path(self.field_source).is_file():
            raise ConfigError(f"field file not found: {self.field_source}")
        if self.mission.rng_seed != self.seed:
            object.__setattr__(self, "mission",
                               dataclasses.replace(self.mission, rng_seed=self.seed))

    def to_text(self):
        m = self.mission
        lines = [f"seed={self.seed}",
                 f"field.source={self.field_source}",
                 f"field.kind={self.field_kind}",
                 f"field.rows={self.field_rows}",
                 f"field.cols={self.field_cols}"]
        lines += [f"hyper.{k}={float(v)!r}" for k, v in zip(self.hyper.keys(), self.hyper.to_vector())]
        lines.append(f"mission.launch={_fmt(m.launch[0])},{_fmt(m.launch[1])}")
        lines += [f"mission.{k}={_fmt(getattr(m, k))}" for k in MISSION_KEYS]
        lines.append(f"planner.rows={m.planner_dims[0]}")
        lines.append(f"planner.cols={m.planner_dims[1]}")
        lines += [f"optimizer.{k}={_fmt(getattr(m.optimizer, k))}" for k in OPTIMIZER_KEYS]
        lines.append(f"output.format={self.raster_format}")
        lines.append(f"output.figures={_fmt(self.figures)}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def parse_point(text):
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 2:
        raise ConfigError(f"expected 'row,col', got {text!r}")
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError:
        raise ConfigError(f"expected numeric 'row,col', got {text!r}") from None


def parse_dims(text):
    parts = text.lower().replace("x", ",").split(",")
    if len(parts) != 2:
        raise ConfigError(f"expected 'ROWSxCOLS', got {text!r}")
    try:
        return (int(parts[0]), int(parts[1]))
    except ValueError:
        raise ConfigError(f"expected integer 'ROWSxCOLS', got {text!r}") from None


def read_config_text(text, origin="<config>"):
    """Parse flat ``key=value`` lines into a dict; ``#`` starts a comment line."""
    items = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        items[key] = value
    return items


_MISSION_PARSERS = {
    "waypoints_per_plan": int, "bv_capacity": int, "rho_threshold": float,
    "sample_stride": int, "prior_random_samples": int, "max_samples": int,
    "novelty_threshold": _optional_float, "relative_novelty": float,
    "measurement_noise": float,
}
_OPTIMIZER_PARSERS = {
    "learning_rate": float, "max_iters": int, "grad_tolerance": float,
    "backtrack": _bool, "max_halvings": int,
}


def build_config(items, base=None):
    """Resolve a :class:`RunConfig` from ``key -> text`` items over ``base``."""
    base = base or RunConfig()
    items = dict(items)
    top, hyper_items, mission_kw, opt_kw = {}, {}, {}, {}
    dims = list(base.mission.planner_dims)
    try:
        for key, value in items.items():
            section, _, name = key.rpartition(".")
            if key == "seed":
                top["seed"] = int(value)
            elif section == "field" and name in ("source", "kind"):
                top[f"field_{name}"] = value
            elif section == "field" and name in ("rows", "cols"):
                top[f"field_{name}"] = int(value)
            elif section == "hyper":
                hyper_items[name] = value
            elif section == "mission" and name == "launch":
                mission_kw["launch"] = parse_point(value)
            elif section == "mission" and name in _MISSION_PARSERS:
                mission_kw[name] = _MISSION_PARSERS[name](value)
            elif section == "planner" and name in ("rows", "cols"):
                dims[0 if name == "rows" else 1] = int(value)
            elif section == "optimizer" and name in _OPTIMIZER_PARSERS:
                opt_kw[name] = _OPTIMIZER_PARSERS[name](value)
            elif section == "output" and name == "format":
                top["raster_format"] = value
            elif section == "output" and name == "figures":
                top["figures"] = _bool(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None

    hyper = base.hyper
    if hyper_items:
        merged = dict(zip(hyper.keys(), map(repr, hyper.to_vector())))
        merged.update(hyper_items)
        try:
            hyper = kernel.Hyperparameters.from_text("".join(f"{k}={v}\n" for k, v in merged.items()))
        except (ValueError, ContractError) as exc:
            raise ConfigError(f"bad hyperparameters: {exc}") from None
    try:
        opt = dataclasses.replace(base.mission.optimizer, **opt_kw)
        m = dataclasses.replace(base.mission, planner_dims=tuple(dims), optimizer=opt, **mission_kw)
    except ContractError as exc:
        raise ConfigError(f"bad mission config: {exc}") from None
    return dataclasses.replace(base, hyper=hyper, mission=m, **top)


def load_config(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return build_config(read_config_text(p.read_text(encoding="utf-8"), str(path)))


def load_field(cfg):
    if cfg.field_source == "synth":
        try:
            return field_io.synth_field(cfg.field_rows, cfg.field_cols, cfg.seed, cfg.field_kind)
        except ContractError as exc:
            raise ConfigError(str(exc)) from None
    if not Path(cfg.field_source).is_file():
        raise ConfigError(f"field file not found: {cfg.field_source}")
    return field_io.load_csv(cfg.field_source)


def _check_dims(cfg, fld):
    try:
        planner.build_plan_grid(fld, *cfg.mission.planner_dims)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    if not fld.is_ocean(cfg.mission.launch):
        raise ConfigError(f"launch {cfg.mission.launch} is not an ocean cell of the field")


# -- outputs ---------------------------------------------------------------

def write_summary(st, cfg, path, status="ok", error=None):
    lines = [f"status={status}"]
    if error:
        lines.append(f"error={error}")
    h = st.history
    lines.append(f"samples={st.samples}")
    lines.append(f"prior_samples={st.prior_samples}")
    if h:
        post_prior = h[st.prior_samples - 1].mse if st.prior_samples else h[0].mse
        lines.append(f"post_prior_mse={post_prior!r}")
        lines.append(f"final_mse={h[-1].mse!r}")
        lines.append(f"final_mean_variance={h[-1].mean_variance!r}")
    lines.append(f"epochs={len(st.epochs)}")
    lines.append(f"reestimates={len(st.reestimates)}")
    for e in st.epochs:
        theta = " ".join(f"{k}={float(v)!r}" for k, v in zip(e.hyper.keys(), e.hyper.to_vector()))
        lines.append(f"epoch {e.epoch}: samples {e.first_sample}-{e.last_sample} "
                     f"plans={len(e.plans)} additions={e.additions} {theta}")
    for ev in st.reestimates:
        lines.append(f"reestimate at sample {ev.sample_index}: epoch={ev.epoch} "
                     f"additions={ev.additions} rho={ev.rho!r} rho_after={ev.rho_after!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_reestimates_csv(st, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("sample_index,epoch,additions,rho,rho_after\n")
        for ev in st.reestimates:
            fh.write(f"{ev.sample_index},{ev.epoch},{ev.additions},{ev.rho!r},{ev.rho_after!r}\n")


def write_outputs(st, fld, cfg, out):
    out = Path(out)
    missions.write_metrics_csv(st.history, out / "metrics.csv")
    write_reestimates_csv(st, out / "reestimates.csv")
    ext = cfg.raster_format
    for e in st.epochs:
        k = e.epoch
        with open(out / f"path_epoch_{k}.txt", "w", newline="\n") as fh:
            for i, plan in enumerate(e.plans):
                fh.write(f"# plan {i} completed={_fmt(plan.completed)}\n")
                fh.write(plan.path.to_text())
        if e.bv_state is not None:
            sogp.write_bv_csv(e.bv_state, out / f"bv_epoch_{k}.csv")
        if e.mean_map is not None:
            field_io.write_raster(e.mean_map, out / f"mean_epoch_{k}.{ext}", ext)
            field_io.write_raster(e.var_map, out / f"var_epoch_{k}.{ext}", ext)
    for i, ev in enumerate(st.reestimates):
        full_gp.write_trace_csv(ev.trace, out / f"trace_reestimate_{i}.csv")
    if cfg.figures:
        _write_figures(st, fld, cfg, out / "figures")


def _write_figures(st, fld, cfg, fig_dir):
    from . import plotting
    fig_dir.mkdir(exist_ok=True)
    plotting.field_figure(fld, fig_dir / "ground_truth.png")
    if st.history:
        plotting.mse_figure(st.history, fig_dir / "mse.png", missions.epoch_boundaries(st),
                            missions.mse_trend(st.history))
    for e in st.epochs:
        if e.mean_map is not None:
            plotting.epoch_figure(e, fig_dir / f"epoch_{e.epoch}.png", cfg.mission.launch)


def execute(cfg, out):
    """Run one mission into ``out``; returns an exit code."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    fld = load_field(cfg)
    _check_dims(cfg, fld)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    try:
        st = missions.run(fld, cfg.hyper, cfg.mission)
    except missions.MissionError as exc:
        log.error("%s", exc)
        if exc.state is not None:
            write_outputs(exc.state, fld, cfg, out)
            write_summary(exc.state, cfg, out / "summary.txt", "failed", str(exc))
        return EXIT_NUMERICAL
    except NumericalError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    write_outputs(st, fld, cfg, out)
    write_summary(st, cfg, out / "summary.txt")
    return EXIT_OK


# -- commands --------------------------------------------------------------

def resolve(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = str(args.seed)
    # sweep takes lists for these two and applies them per combination
    if args.command == "run" and args.launch:
        over["mission.launch"] = args.launch
    if args.command == "run" and args.rho is not None:
        over["mission.rho_threshold"] = str(args.rho)
    if args.budget is not None:
        over["mission.max_samples"] = str(args.budget)
    if args.planner_dims:
        r, c = parse_dims(args.planner_dims)
        over["planner.rows"], over["planner.cols"] = str(r), str(c)
    if args.format:
        over["output.format"] = args.format
    if args.no_figures:
        over["output.figures"] = "false"
    if args.field:
        over["field.source"] = args.field
    return build_config(over, cfg)


def cmd_run(args):
    cfg = resolve(args)
    code = execute(cfg, args.out)
    print(f"run finished with exit code {code}; outputs in {args.out}")
    return code


def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError("empty list")
    return vals


def _sweep_job(job):
    cfg, out = job
    logging.getLogger("persistmon").setLevel(logging.WARNING)
    try:
        return execute(cfg, out)
    except (InputError, ContractError, FieldFormatError, OSError) as exc:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "error.txt").write_text(f"{exc}\n", encoding="utf-8")
        return EXIT_CONFIG


def sweep_dirname(rho, launch):
    return f"rho_{rho:g}_launch_{launch[0]:g}_{launch[1]:g}"


def thread_cap(n_jobs):
    raw = os.environ.get("MONITOR_THREADS", "")
    if not raw.strip():
        return min(n_jobs, os.cpu_count() or 1)
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"MONITOR_THREADS must be an integer, got {raw!r}") from None
    if cap < 0:
        raise ConfigError("MONITOR_THREADS must be >= 0")
    return min(cap, n_jobs)


def cmd_sweep(args):
    base = resolve(args)
    rhos = _float_list(args.rho) if args.rho else [base.mission.rho_threshold]
    launches = [parse_point(v) for v in args.launch] if args.launch else [base.mission.launch]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for launch in launches:
        for rho in rhos:
            cfg = build_config({"mission.rho_threshold": repr(rho),
                                "mission.launch": f"{launch[0]!r},{launch[1]!r}"}, base)
            jobs.append((cfg, out / sweep_dirname(rho, launch)))
    workers = thread_cap(len(jobs))
    if workers <= 1:
        codes = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_sweep_job, jobs))

    curves = {}
    with open(out / "sweep_metrics.csv", "w", newline="\n") as fh:
        fh.write("rho,launch_row,launch_col,sample_index,mse,mean_variance,epoch\n")
        for (cfg, d), code in zip(jobs, codes):
            mfile = d / "metrics.csv"
            if not mfile.is_file():
                continue
            rho, (lr, lc) = cfg.mission.rho_threshold, cfg.mission.launch
            rows = mfile.read_text().splitlines()[1:]
            for row in rows:
                fh.write(f"{rho!r},{lr!r},{lc!r},{row}\n")
            data = np.array([[float(v) for v in r.split(",")[:2]] for r in rows]).reshape(-1, 2)
            curves[f"rho={rho:g} launch=({lr:g},{lc:g})"] = (data[:, 0], data[:, 1])
    with open(out / "sweep_status.csv", "w", newline="\n") as fh:
        fh.write("directory,exit_code\n")
        for (_, d), code in zip(jobs, codes):
            fh.write(f"{d.name},{code}\n")
    if base.figures and curves:
        from . import plotting
        (out / "figures").mkdir(exist_ok=True)
        plotting.sweep_figure(curves, out / "figures" / "sweep_mse.png")

    failed = [d.name for (_, d), c in zip(jobs, codes) if c != EXIT_OK]
    print(f"sweep: {len(jobs) - len(failed)}/{len(jobs)} runs succeeded; outputs in {out}")
    for name in failed:
        print(f"  failed: {name}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_oracle(args):
    names = list(oracles.SUITES) if args.suite == "all" else [args.suite]
    seed = 0 if args.seed is None else args.seed
    ok = True
    for name in names:
        rep = oracles.SUITES[name](seed=seed)
        print(rep.summary())
        for note in rep.notes:
            print(f"  {note}")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser():
    p = argparse.ArgumentParser(prog="persistmon", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log re-estimates and progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--budget", type=int, help="mission sample budget after the prior samples")
        sp.add_argument("--planner-dims", help="planner lattice as ROWSxCOLS, e.g. 12x12")
        sp.add_argument("--format", choices=("csv", "pgm"), help="raster output format")
        sp.add_argument("--field", help="CSV field file (overrides field.source)")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    r = sub.add_parser("run", help="run one mission")
    common(r)
    r.add_argument("--rho", type=float, help="re-estimate threshold")
    r.add_argument("--launch", help="launch cell as row,col")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every (rho, launch) combination")
    common(s)
    s.add_argument("--rho", help="comma-separated thresholds, e.g. 0.2,0.6,1.0")
    s.add_argument("--launch", action="append", help="launch cell row,col; repeat for several")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", help="check implementations against brute-force references")
    o.add_argument("suite", choices=sorted(oracles.SUITES) + ["all"])
    o.add_argument("--seed", type=int, help="suite seed (default 0)")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ContractError, FieldFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
