"""Experiment configuration: INI sections with key = value lines, dataclass-backed."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace

from .core import ConfigError, FracParams, GridSpec, PowerWeight, StretchedExpWeight

EXPERIMENTS = ("spectrum", "groundstate", "heatkernel", "inequalities", "classify", "falsify",
               "mc-compare", "report-all")


@dataclass(frozen=True)
class GridConfig:
    d: int = 1
    R: float = 200.0
    n: int = 4001


@dataclass(frozen=True)
class FracConfig:
    alpha: float = 0.5


@dataclass(frozen=True)
class WeightConfig:
    variant: str = "power"
    beta: float = 1.5
    delta: float | None = None
    c1: float = 1.0
    c2: float | None = None
    c3: float = 1.0


@dataclass(frozen=True)
class SolverConfig:
    k_eigs: int | None = None  # None means the full spectrum
    tol: float = 1e-8
    backend: str = "dense"


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 200_000
    ds: float = 1e-3
    seed: int = 20240611
    t_points: tuple = (0.5,)
    x0: float = 0.0
    workers: int = 1


@dataclass(frozen=True)
class FitConfig:
    n_lo: int = 10
    n_hi: int | None = None  # None means min(100, n/4)
    t_lo: float = 0.05
    t_hi: float = 1.0
    n_t: int = 12
    r_lo: float = 25.0
    r_hi: float = 100.0
    floor_factor: float = 20.0
    l_list: tuple = (10.0, 15.0, 20.0, 30.0, 40.0, 50.0)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "spectrum"
    out: str = "results"
    grid: GridConfig = field(default_factory=GridConfig)
    frac: FracConfig = field(default_factory=FracConfig)
    weight: WeightConfig = field(default_factory=WeightConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mc: MCConfig = field(default_factory=MCConfig)
    fit: FitConfig = field(default_factory=FitConfig)

    def grid_spec(self) -> GridSpec:
        return GridSpec(d=self.grid.d, R=self.grid.R, n_per_axis=self.grid.n)

    def frac_params(self) -> FracParams:
        return FracParams(alpha=self.frac.alpha, d=self.grid.d)

    def weight_spec(self):
        w = self.weight
        if w.variant == "power":
            return PowerWeight(beta=w.beta)
        if w.variant == "stretched_exp":
            return StretchedExpWeight(beta=w.beta, delta=w.delta, alpha=self.frac.alpha,
                                      c1=w.c1, c2=w.c2, c3=w.c3)
        raise ConfigError(f"unknown weight variant {w.variant!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# keys that must appear whenever their section is present in a file
REQUIRED = {
    "grid": ("d", "R", "n"),
    "frac": ("alpha",),
    "weight": ("variant", "beta"),
}


def _parse_value(raw: str, default, key: str):
    raw = raw.strip()
    if isinstance(default, tuple):
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if raw.lower() in ("", "none", "all"):
        return None
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int) or key in ("n_hi", "k_eigs"):
        return int(raw)
    if isinstance(default, float) or default is None:
        return float(raw)
    return raw


def _section(cls, values: dict, section: str):
    base = cls()
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}")
        try:
            kwargs[key] = _parse_value(raw, getattr(base, key), key)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {section}.{key} = {raw!r}") from exc
    return replace(base, **kwargs)


SECTIONS = {"grid": GridConfig, "frac": FracConfig, "weight": WeightConfig,
            "solver": SolverConfig, "mc": MCConfig, "fit": FitConfig}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (R)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    parts = {}
    for sec in cp.sections():
        if sec == "experiment":
            continue
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        values = dict(cp.items(sec))
        for key in REQUIRED.get(sec, ()):
            if key not in values:
                raise ConfigError(f"missing key {sec}.{key}")
        if sec == "weight" and values.get("variant", "").strip() == "stretched_exp" and "delta" not in values:
            raise ConfigError("missing key weight.delta")
        parts[sec] = _section(SECTIONS[sec], values, sec)
    exp = dict(cp.items("experiment")) if cp.has_section("experiment") else {}
    unknown = set(exp) - {"name", "out"}
    if unknown:
        raise ConfigError(f"unknown key experiment.{sorted(unknown)[0]}")
    cfg = ExperimentConfig(**parts)
    if "name" in exp:
        cfg = replace(cfg, name=exp["name"].strip())
    if "out" in exp:
        cfg = replace(cfg, out=exp["out"].strip())
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that parses back to ``cfg``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["experiment"] = {"name": cfg.name, "out": cfg.out}
    for sec in SECTIONS:
        vals = {}
        for k, v in asdict(getattr(cfg, sec)).items():
            if isinstance(v, (tuple, list)):
                v = ", ".join(repr(float(x)) for x in v)
            vals[k] = "none" if v is None else str(v)
        cp[sec] = vals
    import io
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def validate(cfg: ExperimentConfig) -> None:
    """Cross-parameter constraints, checked before any compute."""
    if cfg.name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.name!r}")
    cfg.grid_spec()
    frac = cfg.frac_params()
    w = cfg.weight_spec()
    if cfg.name not in ("classify", "falsify", "report-all") and not cfg.weight.beta > frac.alpha:
        raise ConfigError(f"experiment {cfg.name!r} needs beta > alpha "
                          f"(got beta={cfg.weight.beta}, alpha={frac.alpha})")
    if cfg.name == "falsify" and cfg.weight.beta > frac.alpha:
        raise ConfigError("falsify needs beta <= alpha")
    if cfg.solver.backend not in ("dense", "arpack"):
        raise ConfigError(f"unknown solver backend {cfg.solver.backend!r}")
    if cfg.mc.n_paths < 1 or not cfg.mc.ds > 0:
        raise ConfigError("mc.n_paths must be >= 1 and mc.ds > 0")
    if cfg.mc.workers < 1:
        raise ConfigError("mc.workers must be >= 1")
    del w
