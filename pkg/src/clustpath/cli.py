"""Command-line interface: ``clustpath {path,solve,cv,synth,certify}``.

Exit codes: 0 success, 1 certificate check failed, 2 input error,
3 numerical or degeneracy error, 4 iteration cap reached.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .certify import certify
from .core_model import Model, PathConfig
from .cv import run_cv
from .errors import ClustPathError, InputError, IterationCapError
from .io import (
    RunManifest,
    column_stats,
    emit_path,
    ingest_csv,
    load_xy,
    make_dataset,
    synth_generate,
    write_dataset,
    write_table,
)
from .path import run_path

logger = logging.getLogger("clustpath")


def _positive(x):
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {x}")
    return v


def _nonneg(x):
    v = float(x)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {x}")
    return v


def _model_opts(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=[m.value for m in Model], default="classo")
    p.add_argument("--lambda1-bar", type=_nonneg, default=0.0, help="l1 weight along the ray")
    p.add_argument("--lambda2-bar", type=_positive, default=1.0, help="pairwise weight along the ray")
    p.add_argument("--eta-max", type=_positive, default=None, help="stop the path at this eta")
    p.add_argument("--max-iters", type=int, default=None, help="event cap (default 50 p^2)")


def _data_opts(p: argparse.ArgumentParser):
    p.add_argument("data", help="CSV file with a header row")
    p.add_argument("--response", default=None, help="response column (default: first column)")
    p.add_argument("--standardize", action="store_true", help="centre and scale predictors")
    p.add_argument("--ridge", type=_positive, default=None, metavar="EPS",
                   help="append sqrt(EPS) * I rows so that the design has full rank")


def _out_opts(p: argparse.ArgumentParser, formats=True):
    p.add_argument("--out", default=".", help="output directory")
    if formats:
        p.add_argument("--format", choices=["csv", "json"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clustpath", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("path", help="compute the full solution path")
    _data_opts(p)
    _model_opts(p)
    _out_opts(p)

    p = sub.add_parser("solve", help="solution at a single eta")
    _data_opts(p)
    _model_opts(p)
    p.add_argument("--eta", type=_nonneg, required=True)
    _out_opts(p)

    p = sub.add_parser("cv", help="cross-validate lambda1_bar and eta")
    _data_opts(p)
    _model_opts(p)
    p.add_argument("--test", default=None, help="held-out CSV (same columns) for test MSE")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--lambda1-grid", type=_nonneg, nargs="+", default=[0.0, 0.5, 1.0, 2.0])
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="fold assignment seed")
    p.add_argument("--jobs", type=int, default=1)
    _out_opts(p, formats=False)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    _out_opts(p, formats=False)

    p = sub.add_parser("certify", help="check optimality of a coefficient vector")
    _data_opts(p)
    p.add_argument("--model", choices=[m.value for m in Model], default="classo")
    p.add_argument("--beta", required=True, help="CSV with the coefficients (one row or one column)")
    p.add_argument("--eta", type=_nonneg, required=True)
    p.add_argument("--lambda1-bar", type=_nonneg, default=0.0)
    p.add_argument("--lambda2-bar", type=_positive, default=1.0)
    p.add_argument("--tie-tol", type=_positive, default=1e-10)
    _out_opts(p, formats=False)
    return ap


def _config(args) -> PathConfig:
    return PathConfig(lambda1_bar=args.lambda1_bar, lambda2_bar=args.lambda2_bar,
                      model=Model(args.model), eta_max=args.eta_max, max_iters=args.max_iters)


def _echo(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def _write_manifest(man: RunManifest, out: str, t0: float):
    man.wall_time = time.perf_counter() - t0
    fname = os.path.join(out, "manifest.json")
    man.outputs.append(fname)
    with open(fname, "w") as fh:
        json.dump(man.to_dict(), fh, indent=1)
        fh.write("\n")


def _load(args):
    return ingest_csv(args.data, args.response, args.standardize, args.ridge)


def cmd_path(args) -> int:
    t0 = time.perf_counter()
    data, _ = _load(args)
    path = run_path(data, _config(args))
    man = RunManifest("path", [args.data], _echo(args), None, [], __version__)
    files = emit_path(path, args.format, args.out, man)
    man.outputs.extend(files)
    _write_manifest(man, args.out, t0)
    st = path.stats
    print(f"{len(path.breakpoints)} breakpoints, terminal eta {path.terminal_eta:.6g} "
          f"({path.reason}); T_fuse={st.T_fuse} T_split={st.T_split} T_switch={st.T_switch}")
    if path.near_degenerate:
        logger.warning("final slope norm %.3g is close to slope_tol", path.final_slope_norm)
    if path.truncated:
        raise IterationCapError(f"iteration cap reached at eta={path.terminal_eta:.6g}; "
                                "output holds the partial path")
    return 0


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    data, names = _load(args)
    cfg = _config(args)
    if args.eta > 0:
        # no need to go past the requested point
        cfg = replace(cfg, eta_max=args.eta)
    path = run_path(data, cfg)
    if path.truncated:
        raise IterationCapError("iteration cap reached before the requested eta")
    beta = path.solution_at(args.eta)
    os.makedirs(args.out, exist_ok=True)
    fname = os.path.join(args.out, f"solve.{args.format}")
    if args.format == "csv":
        write_table(fname, ["name", "beta"], [[n, float(b)] for n, b in zip(names, beta)])
    else:
        with open(fname, "w") as fh:
            json.dump({"eta": args.eta, "names": names, "beta": [float(b) for b in beta]}, fh, indent=1)
            fh.write("\n")
    man = RunManifest("solve", [args.data], _echo(args), None, [fname], __version__)
    _write_manifest(man, args.out, t0)
    for n, b in zip(names, beta):
        print(f"{n}\t{float(b)!r}")
    return 0


def cmd_cv(args) -> int:
    t0 = time.perf_counter()
    y, X, names = load_xy(args.data, args.response)
    test = None
    if args.test:
        ty, tX, tnames = load_xy(args.test, args.response)
        if tnames != names:
            raise InputError(f"test columns {tnames} do not match training columns {names}")
    if args.standardize:
        # the test set is scaled with the training statistics
        mu, sd = column_stats(X)
        X = (X - mu) / sd
        if args.test:
            tX = (tX - mu) / sd
    if args.test:
        test = (ty, tX)
    data = make_dataset(y, X, args.ridge)
    rep = run_cv(data, _config(args), folds=args.folds, lambda1_grid=args.lambda1_grid,
                 seed=args.seed, test=test, grid_size=args.grid_size, n_jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    curve_file = os.path.join(args.out, "cv_curves.csv")
    rows = [[c.mode, c.lambda1_bar, float(e), float(m)]
            for c in rep.curves for e, m in zip(c.etas, c.cv_mse)]
    write_table(curve_file, ["mode", "lambda1_bar", "eta", "cv_mse"], rows)
    summary = os.path.join(args.out, "cv_summary.json")
    with open(summary, "w") as fh:
        json.dump(rep.to_dict(), fh, indent=1)
        fh.write("\n")
    man = RunManifest("cv", [args.data] + ([args.test] if args.test else []), _echo(args),
                      args.seed, [curve_file, summary], __version__)
    _write_manifest(man, args.out, t0)
    for mode, c in rep.best.items():
        test_s = "" if c.test_mse is None else f" test_mse={c.test_mse:.6g}"
        print(f"{mode}: lambda1_bar={c.lambda1_bar:g} eta={c.eta:.6g} "
              f"cv_mse={c.cv_mse:.6g}{test_s} gnnz={c.gnnz}")
    return 0


def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    X, y, beta = synth_generate(args.n, args.p, args.seed)
    os.makedirs(args.out, exist_ok=True)
    data_file = os.path.join(args.out, "synth.csv")
    beta_file = os.path.join(args.out, "synth_beta.csv")
    write_dataset(data_file, y, X)
    write_table(beta_file, ["name", "beta"], [[f"x{j + 1}", float(b)] for j, b in enumerate(beta)])
    man = RunManifest("synth", [], _echo(args), args.seed, [data_file, beta_file], __version__)
    _write_manifest(man, args.out, t0)
    print(data_file)
    return 0


def _read_beta(fname, p):
    """Coefficients from a ``beta`` column (as written by ``solve``), one row or one column."""
    try:
        with open(fname, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise InputError(f"cannot read {fname}: {exc.strerror}") from exc
    if rows and "beta" in rows[0]:
        j = rows[0].index("beta")
        cells = [r[j] for r in rows[1:]]
    else:
        if rows and not _numeric(rows[0]):
            rows = rows[1:]
        if len(rows) == 1:
            cells = rows[0]
        elif rows and all(len(r) == 1 for r in rows):
            cells = [r[0] for r in rows]
        else:
            raise InputError(f"{fname}: expected a 'beta' column, one row or one column")
    try:
        vec = np.array([float(c) for c in cells])
    except ValueError:
        raise InputError(f"{fname}: non-numeric coefficient") from None
    if vec.size != p:
        raise InputError(f"{fname}: {vec.size} coefficients for {p} predictors")
    return vec


def _numeric(row):
    try:
        [float(c) for c in row]
    except ValueError:
        return False
    return True


def cmd_certify(args) -> int:
    t0 = time.perf_counter()
    data, _ = _load(args)
    beta = _read_beta(args.beta, data.p)
    rep = certify(data, beta, args.eta * args.lambda1_bar, args.eta * args.lambda2_bar,
                  args.model, tie_tol=args.tie_tol)
    os.makedirs(args.out, exist_ok=True)
    fname = os.path.join(args.out, "certify.json")
    with open(fname, "w") as fh:
        json.dump(rep.to_dict(), fh, indent=1)
        fh.write("\n")
    man = RunManifest("certify", [args.data, args.beta], _echo(args), None, [fname], __version__)
    _write_manifest(man, args.out, t0)
    for g in rep.groups:
        status = "pass" if g.passes else f"FAIL (k={g.closed_form.violating_k})"
        print(f"group {g.label:+d} size {len(g.members)}: {status}")
    if not rep.consistent:
        logger.error("closed-form and flow certificates disagree")
    return 0 if rep.passes else 1


COMMANDS = {
    "path": cmd_path,
    "solve": cmd_solve,
    "cv": cmd_cv,
    "synth": cmd_synth,
    "certify": cmd_certify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ClustPathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
