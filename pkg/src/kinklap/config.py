"""Experiment configuration files (INI syntax) and their object model.

Example::

    [domain]
    shape = ball
    dim = 3
    radius = 1.0

    [density]
    kind = uniform

    [field]
    kind = coordinate_sum

    [points]
    interior = 0, 0, 0
    boundary = 1, 0, 0

    [grid]
    count = 20
    start = 0.05
    stop = 0.01
    spacing = linear

    [run]
    n = 1000000
    seed = 20240601
    eta = 0.3
    mode = all
    output = ball_out

    [plots]
    layout = by_scale

Sections and keys are emitted in a fixed order, so ``emit(parse(text))`` is a
canonical form and ``emit(parse(emit(cfg))) == emit(cfg)``.
"""

import configparser
from dataclasses import dataclass, field

import numpy as np

from kinklap import geometry
from kinklap.sampling import CoordinateSum, CustomDensity, Linear, Quadratic, UniformDensity

SHAPES = ("ball", "box", "orthant", "cone", "cusp", "wedge")
MODES = ("discrete", "continuum", "predictor", "all")


class ConfigError(ValueError):
    """Invalid configuration, with the offending section, key and line."""

    def __init__(self, message, section=None, key=None, line=None):
        where = ""
        if section:
            where = f"[{section}]" + (f" {key}" if key else "")
            if line:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)
        self.section, self.key, self.line = section, key, line


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list, np.ndarray)):
        return ", ".join(_fmt(float(c)) for c in np.ravel(v))
    return str(v)


@dataclass
class ExperimentConfig:
    domain: dict
    density: dict
    field: dict
    points: dict  # name -> tuple of floats, insertion ordered
    grid: dict
    run: dict
    plots: dict = field(default_factory=lambda: {"layout": "by_point"})

    # -- derived objects ----------------------------------------------------
    def build_domain(self):
        return build_domain(self.domain)

    def build_density(self, domain):
        return build_density(self.density, domain)

    def build_field(self, dim):
        return build_field(self.field, dim)

    def t_grid(self):
        g = self.grid
        count = g["count"]
        if count == 0:
            return np.empty(0)
        if g["spacing"] == "linear":
            return np.linspace(g["start"], g["stop"], count)
        return np.geomspace(g["start"], g["stop"], count)

    # -- text form ----------------------------------------------------------
    def emit(self):
        out = []
        for name in ("domain", "density", "field", "points", "grid", "run", "plots"):
            section = getattr(self, name)
            out.append(f"[{name}]")
            for key, value in section.items():
                out.append(f"{key} = {_fmt(value)}")
            out.append("")
        return "\n".join(out)


_DOMAIN_KEYS = {
    "ball": {"dim": int, "radius": float, "center": "vector", "distance_mode": str},
    "box": {"lower": "vector", "upper": "vector", "distance_mode": str},
    "orthant": {"dim": int, "k": int, "extent": float, "distance_mode": str},
    "cone": {"dim": int, "half_angle": float, "height": float, "distance_mode": str},
    "cusp": {"dim": int, "beta": float, "variant": str, "height": float, "distance_mode": str},
    "wedge": {"dim": int, "slope": float, "distance_mode": str},
}
_DENSITY_KEYS = {"uniform": {}, "affine": {"gradient": "vector"}}
_FIELD_KEYS = {
    "coordinate_sum": {},
    "linear": {"a": "vector"},
    "quadratic": {"A": "vector", "b": "vector", "c": float},
}
_GRID_KEYS = {"count": int, "start": float, "stop": float, "spacing": str}
_RUN_KEYS = {"n": int, "seed": int, "eta": float, "mode": str, "output": str,
             "tol": float}
_PLOT_KEYS = {"layout": str}

_DEFAULTS = {
    "grid": {"spacing": "log"},
    "run": {"n": 1_000_000, "seed": 0, "eta": 0.3, "mode": "all", "output": "out",
            "tol": 1e-8},
    "plots": {"layout": "by_point"},
}


def _line_of(text, section, key=None):
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None and "=" in line:
            if line.split("=", 1)[0].strip() == key:
                return lineno
    return None


def _convert(text, section, key, raw, kind):
    line = _line_of(text, section, key)
    try:
        if kind == "vector":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {getattr(kind, '__name__', kind)}",
                          section, key, line) from None


def _read_section(parser, text, section, schema, required=(), defaults=None):
    if not parser.has_section(section):
        if required:
            raise ConfigError("missing section", section)
        return dict(defaults or {})
    items = dict(parser.items(section))
    out = {}
    for key, raw in items.items():
        if key not in schema:
            raise ConfigError(f"unknown key (allowed: {', '.join(schema)})", section, key,
                              _line_of(text, section, key))
    for key, kind in schema.items():
        if key in items:
            out[key] = _convert(text, section, key, items[key], kind)
        elif defaults and key in defaults:
            out[key] = defaults[key]
        elif key in required:
            raise ConfigError("missing required key", section, key, _line_of(text, section))
    return out


def parse(text):
    """Parse configuration text into an :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__",
                                       inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}") from None

    if not parser.has_section("domain"):
        raise ConfigError("missing section", "domain")
    shape = parser.get("domain", "shape", fallback=None)
    if shape not in SHAPES:
        raise ConfigError(f"shape must be one of {', '.join(SHAPES)}", "domain", "shape",
                          _line_of(text, "domain", "shape"))
    schema = {"shape": str, **_DOMAIN_KEYS[shape]}
    domain = _read_section(parser, text, "domain", schema)

    kind = parser.get("density", "kind", fallback="uniform")
    if kind not in _DENSITY_KEYS:
        raise ConfigError(f"kind must be one of {', '.join(_DENSITY_KEYS)}", "density", "kind",
                          _line_of(text, "density", "kind"))
    density = _read_section(parser, text, "density", {"kind": str, **_DENSITY_KEYS[kind]},
                            defaults={"kind": "uniform"})

    kind = parser.get("field", "kind", fallback=None)
    if kind not in _FIELD_KEYS:
        raise ConfigError(f"kind must be one of {', '.join(_FIELD_KEYS)}", "field", "kind",
                          _line_of(text, "field", "kind"))
    fld = _read_section(parser, text, "field", {"kind": str, **_FIELD_KEYS[kind]})

    if not parser.has_section("points"):
        raise ConfigError("missing section", "points")
    points = {}
    for name, raw in parser.items("points"):
        points[name] = _convert(text, "points", name, raw, "vector")

    grid = _read_section(parser, text, "grid", _GRID_KEYS, required=("count", "start", "stop"),
                         defaults=_DEFAULTS["grid"])
    if grid["spacing"] not in ("linear", "log"):
        raise ConfigError("spacing must be 'linear' or 'log'", "grid", "spacing",
                          _line_of(text, "grid", "spacing"))
    if grid["count"] < 0:
        raise ConfigError("count must be nonnegative", "grid", "count",
                          _line_of(text, "grid", "count"))
    for key in ("start", "stop"):
        if not 0 < grid[key] < 1:
            raise ConfigError("bandwidth must lie in (0, 1)", "grid", key,
                              _line_of(text, "grid", key))
    run = _read_section(parser, text, "run", _RUN_KEYS, defaults=_DEFAULTS["run"])
    if run["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}", "run", "mode",
                          _line_of(text, "run", "mode"))
    if not 0 < run["eta"] < 0.5:
        raise ConfigError("eta must lie in (0, 1/2)", "run", "eta", _line_of(text, "run", "eta"))
    plots = _read_section(parser, text, "plots", _PLOT_KEYS, defaults=_DEFAULTS["plots"])
    if plots["layout"] not in ("by_point", "by_scale"):
        raise ConfigError("layout must be 'by_point' or 'by_scale'", "plots", "layout",
                          _line_of(text, "plots", "layout"))

    cfg = ExperimentConfig(domain, density, fld, points, grid, run, plots)
    dom = _build_checked(cfg, text)
    for name, coords in points.items():
        if len(coords) != dom.dim:
            raise ConfigError(f"point has dimension {len(coords)}, domain has {dom.dim}",
                              "points", name, _line_of(text, "points", name))
        if not dom.contains(coords):
            raise ConfigError("point lies outside the domain", "points", name,
                              _line_of(text, "points", name))
    return cfg


def _build_checked(cfg, text):
    try:
        return cfg.build_domain()
    except (geometry.GeometryError, TypeError) as exc:
        raise ConfigError(str(exc), "domain", None, _line_of(text, "domain")) from None


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse(text)


def build_domain(options):
    options = dict(options)
    shape = options.pop("shape")
    if shape == "ball":
        if "center" in options:
            options["center"] = tuple(options["center"])
        return geometry.Ball(**options)
    if shape == "box":
        return geometry.Box(**options)
    if shape == "orthant":
        return geometry.OrthantModel(**options)
    if shape == "cone":
        return geometry.Cone(**options)
    if shape == "cusp":
        return geometry.CuspEpigraph(**options)
    if shape == "wedge":
        dim = options.get("dim", 3)
        slope = options.get("slope", 1.0)
        mode = options.get("distance_mode", "intrinsic")

        def wedge(yp):
            return slope * np.abs(yp[:, 0])

        wedge.__name__ = f"wedge_{slope!r}"
        return geometry.Epigraph(dim=dim, gamma=wedge, lipschitz_bound=abs(slope),
                                 lower=(-1.0,) * dim, upper=(1.0,) * dim,
                                 is_convex=slope >= 0, distance_mode=mode)
    raise ConfigError(f"unknown shape {shape!r}", "domain", "shape")


def build_density(options, domain):
    if options.get("kind", "uniform") == "uniform":
        return UniformDensity(domain.volume)
    grad = np.asarray(options["gradient"], dtype=float)
    if grad.size != domain.dim:
        raise ConfigError("gradient has the wrong dimension", "density", "gradient")
    from kinklap.operators import total_mass
    raw = CustomDensity(lambda y: 1.0 + np.atleast_2d(y) @ grad, 1.0,
                        grad=lambda x: grad.copy(), higher=lambda x, m: np.zeros((len(grad),) * m),
                        label="affine")
    mass = total_mass(domain, raw)
    return CustomDensity(raw.evaluator, mass, grad=raw.grad,
                         higher=lambda x, m: np.zeros((len(grad),) * m), label="affine")


def build_field(options, dim):
    kind = options["kind"]
    if kind == "coordinate_sum":
        return CoordinateSum(dim)
    if kind == "linear":
        if len(options["a"]) != dim:
            raise ConfigError("a has the wrong dimension", "field", "a")
        return Linear(tuple(options["a"]))
    A = np.asarray(options["A"], dtype=float)
    if A.size != dim * dim:
        raise ConfigError(f"A needs {dim * dim} entries", "field", "A")
    return Quadratic(A.reshape(dim, dim), np.asarray(options.get("b", (0.0,) * dim)),
                     float(options.get("c", 0.0)))
