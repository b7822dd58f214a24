"""Command-line entry point.

    biofilm-xdiff run [CONFIG] [key=value ...]
    biofilm-xdiff verify [full=1]
    biofilm-xdiff fit in=CSV [model=exponential|algebraic]
    biofilm-xdiff lattice-study [a=.. b=.. kappa=.. n=.. refinements=16,32,64 t_end=..]
    biofilm-xdiff validate-reactions [reaction=relaxation|none a=.. b=.. kappa=.. n=.. eps=.. samples=.. seed=..]

Exit status: 0 success, 1 numerical failure (or a failed check), 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from .errors import BiofilmError, ConfigError, NumericalError

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


def _split_tokens(tokens):
    """Separate ``key=value`` overrides from at most one positional path."""
    pairs, paths = [], []
    for tok in tokens:
        (pairs if "=" in tok else paths).append(tok)
    if len(paths) > 1:
        raise ConfigError(f"expected at most one config path, got {paths}")
    return (paths[0] if paths else None), pairs


def _options(pairs, allowed, defaults):
    from .config import parse_pairs

    opts = dict(defaults)
    given = parse_pairs(pairs)
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    opts.update(given)
    return opts


def _float(opts, key):
    try:
        return float(opts[key])
    except ValueError as err:
        raise ConfigError(f"bad value for {key}: {opts[key]!r}") from err


def cmd_run(tokens):
    from .config import load_config
    from .diagnostics import fit_decay
    from .solver import run

    path, pairs = _split_tokens(tokens)
    cfg = load_config(path, pairs)
    res = run(cfg)
    last = res.rows[-1]
    print(f"test={cfg.test} scheme={cfg.scheme} grid={cfg.nx}x{cfg.ny} dt={cfg.dt!r} "
          f"t_final={cfg.t_final!r} rows={len(res.rows)}")
    print(f"H_rel: {res.rows[0].H_rel!r} -> {last.H_rel!r}")
    print(f"mass_mean: {res.rows[0].mass_mean!r} -> {last.mass_mean!r}")
    print(f"max_M over samples: {max(r.max_M for r in res.rows)!r}")
    if len(res.rows) >= 10:
        print(f"exponential rate beta: {fit_decay(res.rows).beta!r}")
    if cfg.out:
        print(f"wrote {cfg.out}")
    return EXIT_OK


def cmd_verify(tokens):
    from .verify import run_suite

    opts = _options(tokens, ("full",), {"full": "0"})
    reports = run_suite(quick=opts["full"] not in ("1", "true", "yes"))
    for r in reports:
        print(r.format())
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    return EXIT_OK if not failed else EXIT_NUMERIC


def cmd_fit(tokens):
    from .diagnostics import fit_decay, read_csv

    opts = _options(tokens, ("in", "model"), {"model": "exponential"})
    if "in" not in opts:
        raise ConfigError("fit needs in=<csv path>")
    try:
        rows = read_csv(opts["in"])
    except OSError as err:
        raise ConfigError(f"cannot read {opts['in']}: {err}") from err
    except ValueError as err:
        raise ConfigError(str(err)) from err
    try:
        rep = fit_decay(rows, opts["model"])
    except ValueError as err:
        raise ConfigError(str(err)) from err
    print(rep.format())
    return EXIT_OK


def _lattice_profile(n):
    def profile(x):
        cols = [0.15 + 0.08 * np.cos(np.pi * (i + 1) * x) for i in range(n)]
        return np.column_stack(cols) / max(1.0, n / 3.0)
    return profile


def cmd_lattice(tokens):
    from .closures import ModelParams
    from .lattice import diffusive_limit_study

    defaults = {"a": "2", "b": "2", "kappa": "1", "n": "2", "refinements": "16,32,64",
                "t_end": "0.05"}
    opts = _options(tokens, tuple(defaults), defaults)
    try:
        refs = tuple(int(s) for s in opts["refinements"].split(","))
        n = int(opts["n"])
    except ValueError as err:
        raise ConfigError(str(err)) from err
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = ModelParams(_float(opts, "a"), _float(opts, "b"), _float(opts, "kappa"), n)
    study = diffusive_limit_study(_lattice_profile(n), params, refs, _float(opts, "t_end"))
    print(study.format())
    print(f"observed order: {study.observed_order:.3f}")
    return EXIT_OK if study.monotone else EXIT_NUMERIC


def cmd_validate(tokens):
    from .closures import ModelParams
    from .reactions import ReactionSpec, validate_assumptions

    defaults = {"reaction": "relaxation", "a": "2", "b": "2", "kappa": "1", "n": "3",
                "eps": "0.1", "samples": "100000", "seed": "0"}
    opts = _options(tokens, tuple(defaults), defaults)
    try:
        n, samples, seed = int(opts["n"]), int(opts["samples"]), int(opts["seed"])
    except ValueError as err:
        raise ConfigError(str(err)) from err
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = ModelParams(_float(opts, "a"), _float(opts, "b"), _float(opts, "kappa"), n)
    if opts["reaction"] == "relaxation":
        spec = ReactionSpec.relaxation((_float(opts, "eps"),) * n)
    elif opts["reaction"] == "none":
        spec = ReactionSpec.none()
    else:
        raise ConfigError(f"unknown reaction {opts['reaction']!r}")
    print(validate_assumptions(spec, params, samples, seed).format())
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "verify": cmd_verify,
    "fit": cmd_fit,
    "lattice-study": cmd_lattice,
    "validate-reactions": cmd_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="biofilm-xdiff",
        description="Volume-filling cross-diffusion biofilm simulator and verification suite.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("tokens", nargs="*", help="config path and/or key=value overrides")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return COMMANDS[args.command](args.tokens)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except BiofilmError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
