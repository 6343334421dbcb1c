"""Command-line experiment runner.

Subcommands: ``sample``, ``evaluate``, ``sweep``, ``sector-moments``,
``concentration`` and ``check``.  Exit codes: 0 success, 2 configuration
error, 3 numeric failure recorded in the output, 4 tolerance breach in
``check``.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from kinklap import concentration, geometry, operators, sectors
from kinklap._parallel import map_ordered, worker_count
from kinklap.config import ConfigError, load, parse
from kinklap.sampling import SampleSet, UniformDensity, rejection_sample, sample_uniform

log = logging.getLogger("kinklap")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BREACH = 0, 2, 3, 4
PLOT_SERIES = (("L_nt", "discrete"), ("L_t", "continuum"),
               ("sqrt_t_L_nt", "scaled discrete"), ("sqrt_t_L_t", "scaled continuum"))


# ---------------------------------------------------------------------------
# Table runs
# ---------------------------------------------------------------------------

def _draw(domain, density, n, seed):
    if isinstance(density, UniformDensity):
        return sample_uniform(domain, n, seed)
    peak = _density_peak(domain, density)
    return rejection_sample(domain, density, n, seed, envelope=1.05 * peak)


def _density_peak(domain, density, probes=100_000):
    pts = sample_uniform(domain, probes, seed=0).points
    return float(density.value(pts).max())


def run_table(cfg, out_dir=None):
    """Evaluate every ``(point, t)`` of a configuration.

    Returns ``(tables, metadata)`` where ``tables`` maps point names to CSV
    text.  Files ``<point>.csv`` and ``metadata.json`` are written when
    ``out_dir`` is given.  Failing cells become NaN and are logged in the
    metadata; the run continues.
    """
    start = time.perf_counter()
    domain = cfg.build_domain()
    density = cfg.build_density(domain)
    f = cfg.build_field(domain.dim)
    run = cfg.run
    mode = run["mode"]
    modes = ("discrete", "continuum", "predictor") if mode == "all" else (mode,)
    ts = cfg.t_grid()
    samples = None
    if "discrete" in modes and len(ts):
        samples = _draw(domain, density, run["n"], run["seed"])
    l1 = operators.field_l1_norm(domain, density, f) if len(ts) else 0.0
    errors = []

    def cell(job):
        name, x, t = job
        try:
            return operators.evaluate_point(domain, density, f, x, float(t), eta=run["eta"],
                                            samples=samples, modes=modes, tol=run["tol"],
                                            l1_norm=l1, seed=run["seed"])
        except Exception as exc:  # numeric failure: keep the row, record the cause
            errors.append({"point": name, "t": float(t), "error": f"{type(exc).__name__}: {exc}"})
            log.error("cell %s t=%r failed: %s", name, float(t), exc)
            return None

    jobs = [(name, np.asarray(x, float), t) for name, x in cfg.points.items() for t in ts]
    results = map_ordered(cell, jobs)
    tables = {}
    k = 0
    for name, x in cfg.points.items():
        reports = []
        for t in ts:
            rep = results[k]
            k += 1
            if rep is None:
                rep = operators.OperatorReport(tuple(map(float, x)), float(t), math.nan,
                                               operators.Estimate(math.nan, math.nan),
                                               operators.Estimate(math.nan, math.nan),
                                               trunc_bound=math.nan, eta=run["eta"])
            reports.append(rep)
        tables[name] = operators.reports_to_csv(reports)
    errors.sort(key=lambda e: (e["point"], e["t"]))
    metadata = {
        "seed": run["seed"],
        "n": run["n"],
        "mode": mode,
        "eta": run["eta"],
        "distance_mode": getattr(domain, "distance_mode", "intrinsic"),
        "points": {name: list(map(float, x)) for name, x in cfg.points.items()},
        "t_grid": [float(t) for t in ts],
        "schedule": _schedule_summary(run["n"], ts, domain.dim),
        "workers": worker_count(),
        "wall_time_s": round(time.perf_counter() - start, 3),
        "errors": errors,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in tables.items():
            (out / f"{name}.csv").write_text(text)
        (out / "metadata.json").write_text(json.dumps(metadata, indent=2) + "\n")
    return tables, metadata


def _schedule_summary(n, ts, d):
    if not len(ts):
        return {}
    factors = [concentration.scale_factor(n, float(t), d) for t in ts]
    return {
        "sqrt_n_t_power_min": min(factors),
        "sqrt_n_t_power_max": max(factors),
        "note": "fixed n over a bandwidth grid; divergence of sqrt(n) t^(d/2+1) is not "
                "testable on a single n, values are reported as evidence",
    }


# ---------------------------------------------------------------------------
# Plot scripts
# ---------------------------------------------------------------------------

_SCRIPT_HEAD = '''"""Figure: {title}. Run with: python {name}"""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def read(path):
    with open(HERE / path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [float(r["t"]) for r in rows], rows


fig, ax = plt.subplots(figsize=(6, 4))
'''

_SCRIPT_TAIL = '''ax.set_xscale("log")
ax.set_xlabel("t")
ax.set_title({title!r})
ax.legend()
fig.tight_layout()
fig.savefig(HERE / {png!r}, dpi=150)
'''


def _series_lines(csv_name, columns, label_prefix=""):
    lines = [f"t, rows = read({csv_name!r})"]
    for col, label in columns:
        lines.append(f"ax.plot(t, [float(r[{col!r}]) for r in rows], marker='o', "
                     f"label={label_prefix + label!r})")
    return "\n".join(lines) + "\n"


def emit_plots(report_paths, out_dir, layout="by_point"):
    """Write one standalone plotting script per figure next to the reports.

    ``report_paths`` maps point names to report CSV files.  ``by_point`` gives
    one figure per point with four series; ``by_scale`` gives an unscaled and
    a scaled figure covering all points.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    needed = [c for c, _ in PLOT_SERIES] + ["t"]
    for name, path in report_paths.items():
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), [])
        missing = [c for c in needed if c not in header]
        if missing:
            raise ValueError(f"report {path} lacks columns: {', '.join(missing)}")
    written = []

    def write(stem, title, body):
        script = out / f"plot_{stem}.py"
        script.write_text(_SCRIPT_HEAD.format(title=title, name=script.name) + body
                          + _SCRIPT_TAIL.format(title=title, png=f"{stem}.png"))
        written.append(script)

    rel = {name: Path(path).resolve().relative_to(out.resolve()).as_posix()
           if Path(path).resolve().is_relative_to(out.resolve()) else str(Path(path).resolve())
           for name, path in report_paths.items()}
    if layout == "by_point":
        for name in report_paths:
            write(name, f"graph Laplacian at {name}", _series_lines(rel[name], PLOT_SERIES))
    elif layout == "by_scale":
        for stem, cols in (("unscaled", PLOT_SERIES[:2]), ("scaled", PLOT_SERIES[2:])):
            body = "".join(_series_lines(rel[name], cols, f"{name} ") for name in report_paths)
            write(stem, f"{stem} graph Laplacian", body)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return written


# ---------------------------------------------------------------------------
# Bundled configurations and acceptance check
# ---------------------------------------------------------------------------

def bundled(name):
    """Text of a bundled data file (``ball.ini``, ``cube.ini``, ``expected.csv``)."""
    return resources.files("kinklap").joinpath("data", name).read_text()


def read_expected(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        row["t_index"] = int(row["t_index"])
        row["value"] = float(row["value"])
        row["rel_tol"] = float(row["rel_tol"])
    return rows


def run_check(expected_text, stream=None):
    """Continuum values of the bundled configs against the expected table."""
    stream = stream or sys.stdout
    breaches = 0
    expected = read_expected(expected_text)
    for cfg_name in sorted({row["config"] for row in expected}):
        cfg = parse(bundled(cfg_name))
        domain = cfg.build_domain()
        density = cfg.build_density(domain)
        f = cfg.build_field(domain.dim)
        ts = cfg.t_grid()
        l1 = operators.field_l1_norm(domain, density, f)
        rows = [r for r in expected if r["config"] == cfg_name]

        def evaluate(row):
            x = cfg.points[row["point"]]
            t = float(ts[row["t_index"]])
            est = operators.gauss_operator(domain, density, f, x,
                                           operators.KernelParams(t, cfg.run["eta"]),
                                           l1_norm=l1)
            return t, est.value

        for row, (t, value) in zip(rows, map_ordered(evaluate, rows)):
            rel = abs(value - row["value"]) / abs(row["value"])
            ok = rel <= row["rel_tol"]
            breaches += not ok
            print(f"{'PASS' if ok else 'FAIL'} {cfg_name} {row['point']} t={t:.6f} "
                  f"L_t={value:.6f} expected={row['value']:.6f} rel={rel:.2e} "
                  f"tol={row['rel_tol']:.1e}", file=stream)
    return breaches


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def _vector(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _load_config(args):
    if getattr(args, "config", None):
        return load(args.config)
    if getattr(args, "bundled", None):
        return parse(bundled(args.bundled))
    raise ConfigError("give --config FILE or --bundled NAME")


def cmd_sample(args):
    cfg = _load_config(args)
    domain = cfg.build_domain()
    density = cfg.build_density(domain)
    n = args.n if args.n is not None else cfg.run["n"]
    seed = args.seed if args.seed is not None else cfg.run["seed"]
    samples = _draw(domain, density, n, seed)
    out = Path(args.out)
    if out.suffix.lower() == ".csv":
        samples.to_csv(out)
    else:
        samples.to_binary(out)
    print(f"wrote {samples.n} points to {out}")
    return EXIT_OK


def cmd_evaluate(args):
    cfg = _load_config(args)
    domain = cfg.build_domain()
    density = cfg.build_density(domain)
    f = cfg.build_field(domain.dim)
    x = _vector(args.point) if args.point else cfg.points[args.name]
    if not domain.contains(x):
        raise ConfigError(f"point {x} lies outside the domain")
    mode = args.mode or cfg.run["mode"]
    modes = ("discrete", "continuum", "predictor") if mode == "all" else (mode,)
    samples = None
    if "discrete" in modes:
        samples = (SampleSet.from_binary(args.samples) if args.samples
                   else _draw(domain, density, cfg.run["n"], cfg.run["seed"]))
    rep = operators.evaluate_point(domain, density, f, x, args.t, eta=cfg.run["eta"],
                                   samples=samples, modes=modes, tol=cfg.run["tol"])
    text = operators.reports_to_csv([rep])
    sys.stdout.write(text)
    return EXIT_NUMERIC if "nan" in text.splitlines()[1] and mode == "all" else EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args)
    out_dir = Path(args.out or cfg.run["output"])
    tables, meta = run_table(cfg, out_dir)
    if args.plots:
        emit_plots({name: out_dir / f"{name}.csv" for name in tables}, out_dir,
                   cfg.plots["layout"])
    for name in tables:
        print(f"wrote {out_dir / (name + '.csv')}")
    if meta["errors"]:
        print(f"{len(meta['errors'])} cells failed; see metadata.json", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _make_sector(args):
    d = args.dim
    kind = args.sector
    if kind == "full":
        return geometry.FullSector(d)
    if kind == "half":
        nu = _vector(args.normal) if args.normal else tuple(np.eye(d)[-1])
        return geometry.HalfSpaceSector(tuple(np.asarray(nu) / np.linalg.norm(nu)))
    if kind == "orthant":
        k = args.k
        return geometry.OrthantSector(tuple(tuple(row) for row in np.eye(d)[:k]))
    raise ConfigError(f"unknown sector {kind!r}")


def cmd_sector_moments(args):
    sector = _make_sector(args)
    if args.samples:
        moments = sectors.monte_carlo_moments(sector, samples=args.samples, seed=args.seed)
    else:
        moments = sectors.closed_form_moments(sector)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(("quantity", "index", "value", "stderr", "source"))
    for q, idx, value, err in moments.as_rows():
        writer.writerow((q, idx, repr(float(value)), repr(float(err)), moments.source))
    return EXIT_OK


def cmd_concentration(args):
    cfg = _load_config(args)
    domain = cfg.build_domain()
    density = cfg.build_density(domain)
    f = cfg.build_field(domain.dim)
    x = cfg.points[args.name] if args.name else next(iter(cfg.points.values()))
    schedule = concentration.PowerLaw(args.c0, args.beta, domain.dim)
    n_grid = [int(float(v)) for v in args.n_grid.split(",")]
    table = concentration.deviation_experiment(domain, density, f, x, schedule, n_grid,
                                               args.trials, seed=args.seed, eta=cfg.run["eta"])
    text = table.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    if table.warning:
        print(f"warning: {table.warning}", file=sys.stderr)
    return EXIT_OK


def cmd_check(args):
    text = Path(args.expected).read_text() if args.expected else bundled("expected.csv")
    breaches = run_check(text)
    print(f"{breaches} breach(es)")
    return EXIT_BREACH if breaches else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="kinklap", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--config", help="experiment configuration file")
        g.add_argument("--bundled", help="bundled configuration (ball.ini or cube.ini)")
        return p

    p = with_config(sub.add_parser("sample", help="draw a sample set"))
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help=".csv for text, anything else for KLSS binary")
    p.set_defaults(func=cmd_sample)

    p = with_config(sub.add_parser("evaluate", help="one report row at a point"))
    p.add_argument("--t", type=float, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--point", help="coordinates, comma separated")
    g.add_argument("--name", help="named point from the configuration")
    p.add_argument("--mode", choices=("discrete", "continuum", "predictor", "all"))
    p.add_argument("--samples", help="KLSS sample file for the discrete operator")
    p.set_defaults(func=cmd_evaluate)

    p = with_config(sub.add_parser("sweep", help="reproduce a table over the t grid"))
    p.add_argument("--out", help="output directory (default: [run] output)")
    p.add_argument("--plots", action="store_true", help="also write plot scripts")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sector-moments", help="print sector moments as CSV")
    p.add_argument("--sector", choices=("full", "half", "orthant"), required=True)
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--normal", help="inward normal of a half-space sector")
    p.add_argument("--k", type=int, default=None, help="orthant depth")
    p.add_argument("--samples", type=int, help="use Monte Carlo with this many samples")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sector_moments)

    p = with_config(sub.add_parser("concentration", help="deviation experiment"))
    p.add_argument("--name", help="named point (default: first point)")
    p.add_argument("--beta", type=float, default=0.125)
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--n-grid", default="1000,10000,100000")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_concentration)

    p = sub.add_parser("check", help="compare bundled runs with expected values")
    p.add_argument("--expected", help="expected-values CSV (default: bundled)")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "k", None) is None and getattr(args, "sector", None) == "orthant":
        args.k = args.dim
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (geometry.GeometryError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
