"""Regenerate ``oracle_values.json`` from the independent oracles.

    python3 tests/fixtures/make_oracle_fixture.py

Values come only from :mod:`biofilm_xdiff.verify` (graded quadrature in the
original variable, hypergeometric Q) and from scipy quadrature on top of it.
None of them touch the closure table.
"""
import json
import math
import pathlib
import warnings

import numpy as np
from scipy import integrate

from biofilm_xdiff.closures import ModelParams
from biofilm_xdiff.verify import oracle_log_q, oracle_Q

HERE = pathlib.Path(__file__).resolve().parent
M_POINTS = [1e-3, 0.05, 0.3, 0.5, 0.9, 0.99, 0.999]


def log_q_over_p(M, params):
    return oracle_log_q(M, params) + (1.0 - M) ** -params.kappa


def entropy_brute_force(u, params):
    """``sum(u log u - u + 1) + int_0^M log(q/p)``; the ``a log s`` part is done exactly."""
    M = float(sum(u))
    a = params.a
    smooth, err = integrate.quad(lambda s: log_q_over_p(s, params) - a * math.log(s), 0.0, M,
                                 epsabs=1e-13, epsrel=1e-13, limit=200)
    first = sum(x * math.log(x) - x + 1.0 for x in u)
    return first + smooth + a * (M * math.log(M) - M), err


def main():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sets = {"test1": ModelParams(2, 2, 1), "test2": ModelParams(1, 2, 0.9)}
    out = {"M": M_POINTS}
    for name, p in sets.items():
        out[name] = {
            "params": [p.a, p.b, p.kappa],
            "log_q": [oracle_log_q(m, p) for m in M_POINTS],
            "Q": [float(oracle_Q(m, p)) for m in M_POINTS],
        }
    h, err = entropy_brute_force((0.1, 0.1, 0.1), sets["test1"])
    out["test1"]["entropy_u_0.1x3"] = h
    out["test1"]["entropy_quad_error"] = err
    (HERE / "oracle_values.json").write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
