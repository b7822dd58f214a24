"""Run configuration: flat ``key=value`` files, test presets and initial data."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .closures import ClosureTable, ModelParams, get_table
from .errors import ConfigError, DomainError
from .grid import GridSpec, State
from .reactions import ReactionSpec


@dataclass(frozen=True)
class RunConfig:
    test: str = "1"
    nx: int = 32
    ny: int = 32
    dt: float = 1e-4
    t_final: float = 2.0
    scheme: str = "explicit"
    a: float = 2.0
    b: float = 2.0
    kappa: float = 1.0
    n: int = 3
    alpha: tuple = (1.0,)
    eps: float = 0.1
    bc: str = "mixed"
    reaction: str = "relaxation"
    sample_every: int = 100
    out: str = "diagnostics.csv"
    seed: int = 0


KEYS = tuple(f.name for f in fields(RunConfig))

PRESETS = {
    "1": dict(a=2.0, b=2.0, kappa=1.0, eps=0.1, dt=1e-4, n=3, bc="mixed",
              reaction="relaxation"),
    "2": dict(a=1.0, b=2.0, kappa=0.9, eps=0.1, dt=1e-4, n=3, bc="neumann",
              reaction="none"),
}


def _convert(key, raw):
    raw = raw.strip()
    try:
        if key in ("nx", "ny", "n", "sample_every", "seed"):
            v = int(raw)
        elif key in ("dt", "t_final", "a", "b", "kappa", "eps"):
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError(raw)
        elif key == "alpha":
            v = tuple(float(x) for x in raw.split(",") if x.strip())
            if not v:
                raise ValueError(raw)
        else:
            v = raw
    except ValueError as err:
        raise ConfigError(f"bad value for {key}: {raw!r}") from err
    return v


def parse_pairs(lines):
    """Parse ``key=value`` lines (``#`` comments and blank lines ignored)."""
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def make_config(pairs: dict) -> RunConfig:
    """Apply the test preset (if any) and then the explicit settings."""
    unknown = set(pairs) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    test = pairs.get("test", RunConfig.test).strip()
    if test not in ("1", "2", "custom"):
        raise ConfigError(f"test must be 1, 2 or custom, got {test!r}")
    cfg = replace(RunConfig(), test=test, **PRESETS.get(test, {}))
    vals = {k: _convert(k, v) for k, v in pairs.items() if k != "test"}
    cfg = replace(cfg, **vals)
    validate(cfg)
    return cfg


def load_config(path=None, overrides=()) -> RunConfig:
    pairs = {}
    if path is not None:
        try:
            with open(path) as fh:
                pairs.update(parse_pairs(fh))
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
    pairs.update(parse_pairs(overrides))
    return make_config(pairs)


def validate(cfg: RunConfig):
    if cfg.nx < 2 or cfg.ny < 1:
        raise ConfigError("nx must be >= 2 and ny >= 1")
    if cfg.dt <= 0 or cfg.t_final < 0:
        raise ConfigError("dt must be positive and t_final nonnegative")
    if cfg.scheme not in ("explicit", "implicit"):
        raise ConfigError(f"scheme must be explicit or implicit, got {cfg.scheme!r}")
    if cfg.bc not in ("mixed", "neumann"):
        raise ConfigError(f"bc must be mixed or neumann, got {cfg.bc!r}")
    if cfg.reaction not in ("relaxation", "none"):
        raise ConfigError(f"reaction must be relaxation or none, got {cfg.reaction!r}")
    if cfg.sample_every < 1:
        raise ConfigError("sample_every must be >= 1")
    if cfg.n < 1 or len(cfg.alpha) not in (1, cfg.n):
        raise ConfigError("alpha must have one entry or n entries")
    if not (cfg.eps > 0 and cfg.n * cfg.eps < 1):
        raise ConfigError("eps must be positive with n * eps < 1")
    if cfg.test in ("1", "2") and cfg.n != 3:
        raise ConfigError("the block initial data of tests 1 and 2 need n = 3")


@dataclass
class Problem:
    params: ModelParams
    grid: GridSpec
    table: ClosureTable
    reaction: ReactionSpec
    state: State
    u_ref: np.ndarray


def block_initial_data(grid: GridSpec, eps: float, tol: float = 1e-12):
    """Three species at background ``eps``, each raised by ``eps`` on its block.

    Blocks (closed, ``y <= 0.2``): x in [0.2, 0.5], [0.5, 0.8] and [0.2, 0.8].
    """
    X, Y = np.meshgrid(grid.x, grid.y)
    low = Y <= 0.2 + tol
    u = np.full((3,) + grid.shape, eps)
    for i, (x0, x1) in enumerate(((0.2, 0.5), (0.5, 0.8), (0.2, 0.8))):
        u[i][low & (X >= x0 - tol) & (X <= x1 + tol)] += eps
    return u


def random_initial_data(grid: GridSpec, n: int, eps: float, seed: int, modes: int = 3):
    """``eps`` plus a seeded smooth perturbation of relative size at most 1/2."""
    rng = np.random.default_rng(seed)
    X, Y = np.meshgrid(grid.x, grid.y)
    u = np.empty((n,) + grid.shape)
    for i in range(n):
        c = rng.uniform(-1.0, 1.0, (modes, modes))
        pert = sum(c[k, m] * np.cos(k * np.pi * X) * np.cos(m * np.pi * Y)
                   for k in range(modes) for m in range(modes) if k or m)
        pert /= max(np.max(np.abs(pert)), 1e-300)
        u[i] = eps * (1.0 + 0.5 * pert)
    return u


def build_problem(cfg: RunConfig) -> Problem:
    try:
        params = ModelParams(cfg.a, cfg.b, cfg.kappa, cfg.n, cfg.alpha)
        u_D = (cfg.eps,) * cfg.n
        grid = GridSpec(cfg.nx, cfg.ny, cfg.bc, u_D if cfg.bc == "mixed" else ())
    except DomainError as err:
        raise ConfigError(str(err)) from err
    table = get_table(params)
    if cfg.test in ("1", "2"):
        u0 = block_initial_data(grid, cfg.eps)
    else:
        u0 = random_initial_data(grid, cfg.n, cfg.eps, cfg.seed)
    if cfg.bc == "mixed":
        u0[:, grid.dirichlet_mask] = cfg.eps
    reaction = ReactionSpec.relaxation(u_D) if cfg.reaction == "relaxation" else ReactionSpec.none()
    if cfg.bc == "mixed":
        u_ref = np.asarray(u_D)
    else:
        u_ref = np.tensordot(u0, grid.weights, axes=([1, 2], [0, 1]))
    return Problem(params, grid, table, reaction, State(u0, 0.0), u_ref)
