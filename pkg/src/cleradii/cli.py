"""Command-line interface: closed forms, simulation, verification, gasket and martingale runs.

Every command writes a table: CSV with a first line ``# {manifest JSON}``
followed by a header and rows, or (``--format json``) one JSON object with
the manifest, the columns, the rows and a summary.  The manifest records the
command, every parameter, the RNG version, the seed, the software version and
the wall-clock duration; everything below it depends only on the parameters.

Exit status: 0 when every statistical gate passes, 2 when one fails (or a run
is censored beyond the allowed fraction), 3 on domain or usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .diffusion import RNG_VERSION, SimConfig, path_functional_martingale, simulate_exits
from .errors import (CensoringError, CleRadiiError, DomainError, InsufficientDataError,
                     ManifestError)
from .gasket import (MIN_SURVIVORS, covering_exponent_fit, covering_sum, sample_nested_many,
                     survival_probability, tail_exponent_fit)
from .lawlib import (as_kappa, cdf_B, cdf_B_value, density_B, gasket_exponents, mean_B,
                     mgf_abscissa, mgf_B, thickness_mgf)
from .martingales import M_even
from .stats import EmpiricalLaw, ks_critical_value, ks_statistic, slope_fit

EXIT_OK = 0
EXIT_GATE = 2
EXIT_USAGE = 3

SAMPLE_COLUMNS = ["seed_index", "exit_time", "exit_side", "steps"]
# relative tolerance on fitted tail exponents
TAIL_RTOL = 0.10
# absolute tolerance on the covering exponent and bound on the ratio spread
COVER_ATOL = 0.02
COVER_RATIO_SPREAD = 3.0
NSIGMA = 3.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# argument helpers
# --------------------------------------------------------------------------

def _complex(text: str) -> complex:
    try:
        return complex(text.replace("i", "j").replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def _grid(text: str) -> np.ndarray:
    try:
        start, stop, steps = text.split(":")
        start, stop, steps = float(start), float(stop), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be 'start:stop:steps', got {text!r}") from None
    if steps < 1:
        raise argparse.ArgumentTypeError("grid needs at least one step")
    return np.linspace(start, stop, steps)


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        n = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {n}")
    return n


def _num(x) -> str:
    """Shortest repr that round-trips (identical bytes for identical values)."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, complex):
        return {"re": _jsonable(v.real), "im": _jsonable(v.imag)}
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _manifest(command: str, params: dict, seed, started: float) -> dict:
    return {
        "command": command,
        "params": _jsonable(params),
        "rng": RNG_VERSION,
        "seed": seed,
        "version": __version__,
        "duration_s": round(time.perf_counter() - started, 3),
    }


def render(manifest: dict, columns, rows, summary: dict, fmt: str) -> str:
    if fmt == "json":
        doc = {"manifest": manifest, "columns": list(columns),
               "rows": [_jsonable(list(r)) for r in rows], "summary": _jsonable(summary)}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    buf.write("# " + json.dumps({**manifest, "summary": _jsonable(summary)}, sort_keys=True) + "\n")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_num(v) for v in r) + "\n")
    return buf.getvalue()


def _emit(text: str, output: str | None):
    if output:
        with open(output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

_LAW_SCALARS = ("mean", "alpha", "dimension", "abscissa")
_LAW_COMPLEX = ("mgf", "thickness-mgf")


def cmd_law(args) -> tuple[list, list, dict, int]:
    kap = as_kappa(args.kappa)
    what = args.what
    if what in _LAW_SCALARS:
        value = {"mean": lambda: mean_B(kap),
                 "alpha": lambda: gasket_exponents(kap).alpha,
                 "dimension": lambda: gasket_exponents(kap).expectation_dimension,
                 "abscissa": lambda: mgf_abscissa(kap)}[what]()
        return ["kappa", "value", "error_bound"], [(kap.kappa, value, 0.0)], {}, EXIT_OK
    if what in _LAW_COMPLEX:
        fn = mgf_B if what == "mgf" else thickness_mgf
        lams = [args.lam] if args.grid is None else [complex(x) for x in args.grid]
        rows = []
        for lam in lams:
            v = complex(fn(kap, lam))
            rows.append((lam.real, lam.imag, v.real, v.imag, 0.0))
        return ["lambda_re", "lambda_im", "value_re", "value_im", "error_bound"], rows, {}, EXIT_OK
    grid = args.grid if args.grid is not None else np.linspace(0.5, 40.0, 80)
    if np.any(grid <= 0):
        raise DomainError(f"{what} needs x > 0 on the whole grid")
    rows = []
    for x in grid:
        sv = density_B(kap, float(x)) if what == "density" else cdf_B_value(kap, float(x))
        rows.append((float(x), float(sv.value.real), sv.error_bound))
    return ["x", "value", "error_bound"], rows, {}, EXIT_OK


def _sim_config(args) -> SimConfig:
    return SimConfig(args.kappa, theta0=args.theta0, dt_max=args.dt_max, dt_floor=args.dt_floor,
                     seed=args.seed, max_time=args.max_time)


def cmd_simulate(args):
    cfg = _sim_config(args)
    batch = simulate_exits(cfg, args.n)
    rows = list(zip(batch.index.tolist(), batch.exit_time.tolist(),
                    batch.exit_side.tolist(), batch.steps.tolist()))
    summary = {"n": args.n, "n_exits": len(batch), "censored": batch.censored,
               "config": cfg.as_dict(), "provenance": batch.provenance}
    return SAMPLE_COLUMNS, rows, summary, EXIT_OK


def read_samples(path: str):
    """Manifest and columns of a file written by ``simulate`` (CSV or JSON)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from None
    if not text.strip():
        raise ManifestError(f"{path} is empty")
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
            manifest = {**doc["manifest"], "summary": doc["summary"]}
            columns, rows = doc["columns"], doc["rows"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ManifestError(f"malformed JSON sample file: {exc}") from None
    else:
        first, _, rest = text.partition("\n")
        if not first.startswith("# "):
            raise ManifestError("missing '# {manifest}' header line")
        try:
            manifest = json.loads(first[2:])
        except ValueError as exc:
            raise ManifestError(f"malformed manifest: {exc}") from None
        reader = csv.reader(io.StringIO(rest))
        try:
            columns = next(reader)
        except StopIteration:
            raise ManifestError("missing column header") from None
        rows = [r for r in reader if r]
    if manifest.get("command") != "simulate":
        raise ManifestError(f"not a simulate output (command={manifest.get('command')!r})")
    if list(columns) != SAMPLE_COLUMNS:
        raise ManifestError(f"unexpected columns {columns}")
    if manifest.get("rng") != RNG_VERSION:
        raise ManifestError(f"RNG version {manifest.get('rng')!r} differs from {RNG_VERSION!r}")
    summary = manifest.get("summary", {})
    try:
        data = np.array(rows, dtype=float).reshape(-1, len(SAMPLE_COLUMNS))
    except ValueError as exc:
        raise ManifestError(f"malformed rows: {exc}") from None
    if summary.get("n_exits") != data.shape[0]:
        raise ManifestError(f"manifest lists {summary.get('n_exits')} exits, file has {data.shape[0]}")
    if data.shape[0] == 0:
        raise ManifestError("no samples in file")
    return manifest, data


def verify_samples(kappa, times, sides) -> dict:
    """Gates: KS against cdf_B, mean against mean_B, tail slope against -alpha, coin symmetry."""
    kap = as_kappa(kappa)
    law = EmpiricalLaw(times)
    n = law.n
    report = {}
    ks = ks_statistic(law, lambda x: cdf_B(kap, x))
    crit = ks_critical_value(n)
    report["ks"] = {"statistic": ks, "threshold": crit, "pass": ks < crit}
    m, se, ref = law.mean(), law.stderr(), mean_B(kap)
    report["mean"] = {"sample": m, "stderr": se, "reference": ref,
                      "z": (m - ref) / se if se > 0 else math.inf,
                      "pass": abs(m - ref) <= NSIGMA * se}
    alpha = gasket_exponents(kap).alpha
    lo = float(np.quantile(law.samples, 0.5))
    hi = float(law.samples[n - MIN_SURVIVORS]) if n > MIN_SURVIVORS else lo
    tail = {"alpha": alpha, "window": [lo, hi]}
    if hi > lo:
        s = np.linspace(lo, hi, 20)
        fit = slope_fit(np.column_stack([s, np.log(law.survival(s))]))
        tol = max(NSIGMA * fit.stderr, TAIL_RTOL * alpha)
        tail.update(slope=fit.slope, stderr=fit.stderr, tolerance=tol,
                    **{"pass": abs(fit.slope + alpha) <= tol})
    else:
        tail.update(slope=None, **{"pass": False, "insufficient_survivals": True})
    report["tail"] = tail
    plus = float(np.mean(np.asarray(sides) > 0))
    half_width = NSIGMA * math.sqrt(0.25 / len(sides))
    report["symmetry"] = {"fraction_plus": plus, "tolerance": half_width,
                          "pass": abs(plus - 0.5) <= half_width}
    report["pass"] = all(v["pass"] for v in report.values())
    return report


def cmd_verify(args):
    manifest, data = read_samples(args.path)
    kappa = args.kappa if args.kappa is not None else manifest["params"]["kappa"]
    report = verify_samples(kappa, data[:, 1], data[:, 2])
    rows = [(name, g["pass"]) for name, g in report.items() if isinstance(g, dict)]
    report["source"] = {"path": args.path, "manifest_kappa": manifest["params"].get("kappa"),
                        "seed": manifest.get("seed")}
    return ["gate", "pass"], rows, report, EXIT_OK if report["pass"] else EXIT_GATE


def _tail_gate(slope, stderr, alpha):
    tol = max(NSIGMA * stderr, TAIL_RTOL * alpha)
    return {"slope": slope, "stderr": stderr, "target": -alpha, "tolerance": tol,
            "pass": abs(slope + alpha) <= tol}


def cmd_gasket(args):
    kap = as_kappa(args.kappa)
    ex = gasket_exponents(kap)
    if args.mode == "survival":
        s = args.grid if args.grid is not None else np.linspace(10.0, 60.0, 11)
        est = survival_probability(kap, s, args.n, args.seed, dt_max=args.dt_max)
        rows = list(zip(est.s, est.estimate, est.stderr, est.survivors, est.exact, est.degenerate))
        summary = {"alpha": ex.alpha, "insufficient_survivals": bool(est.degenerate.any())}
        try:
            fit = tail_exponent_fit(est)
        except InsufficientDataError as exc:
            summary["fit"] = {"pass": False, "error": str(exc)}
            code = EXIT_GATE
        else:
            summary["fit"] = _tail_gate(fit.slope, fit.stderr, ex.alpha)
            code = EXIT_OK if summary["fit"]["pass"] else EXIT_GATE
        cols = ["s", "estimate", "stderr", "survivors", "exact", "degenerate"]
        return cols, rows, summary, code
    if args.mode == "covering":
        # grid in -log2(eps)
        k = args.grid if args.grid is not None else np.linspace(6.0, 14.0, 9)
        eps = 2.0 ** -np.asarray(k, dtype=float)
        covers = [covering_sum(kap, e) for e in eps]
        rows = [(c.epsilon, c.expected_disk_count, c.exponent_fit, c.ratio) for c in covers]
        fit = covering_exponent_fit(kap, eps)
        ratios = np.array([c.ratio for c in covers])
        spread = float(ratios.max() / ratios.min())
        target = ex.alpha - 2.0
        summary = {"alpha": ex.alpha, "expectation_dimension": ex.expectation_dimension,
                   "fit": {"slope": fit.slope, "stderr": fit.stderr, "target": target,
                           "dimension": -fit.slope, "tolerance": COVER_ATOL,
                           "pass": abs(fit.slope - target) <= COVER_ATOL},
                   "ratio": {"min": float(ratios.min()), "max": float(ratios.max()),
                             "spread": spread, "pass": spread < COVER_RATIO_SPREAD}}
        ok = summary["fit"]["pass"] and summary["ratio"]["pass"]
        return (["epsilon", "count", "local_exponent", "ratio"], rows, summary,
                EXIT_OK if ok else EXIT_GATE)
    # nested
    inc = sample_nested_many(kap, args.depth, args.n, args.seed, dt_max=args.dt_max)
    log_cr = -np.cumsum(inc, axis=1)
    rows = [(j, k + 1, log_cr[j, k]) for j in range(inc.shape[0]) for k in range(inc.shape[1])]
    per_step = log_cr[:, -1] / args.depth
    m = float(per_step.mean())
    se = float(per_step.std(ddof=1) / math.sqrt(per_step.size)) if per_step.size > 1 else math.inf
    ref = -mean_B(kap)
    summary = {"mean_log_cr_per_step": m, "stderr": se, "reference": ref,
               "pass": abs(m - ref) <= NSIGMA * se}
    return ["sequence", "k", "log_cr"], rows, summary, EXIT_OK if summary["pass"] else EXIT_GATE


def cmd_martingale(args):
    cfg = _sim_config(args)
    cps = args.checkpoints if args.grid is None else args.grid
    res = path_functional_martingale(cfg, args.lam, cps, args.n)
    ok = res.within(NSIGMA)
    rows = [(t, m.real, m.imag, s.real, s.imag, bool(g))
            for t, m, s, g in zip(res.checkpoints, res.means, res.stderrs, ok)]
    summary = {"reference": complex(res.reference), "n": res.n, "pass": bool(ok.all()),
               "M_even_theta0": complex(M_even(cfg.kappa, args.lam, cfg.theta0))}
    cols = ["t", "mean_re", "mean_im", "stderr_re", "stderr_im", "pass"]
    return cols, rows, summary, EXIT_OK if ok.all() else EXIT_GATE


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _common(p, *, sim=False, n_default=100_000):
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--output", default=None, help="output path (default: stdout)")
    if sim:
        p.add_argument("--n", type=_positive_int, default=n_default)
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--dt-max", type=float, default=1e-3)
        p.add_argument("--dt-floor", type=float, default=1e-9)
        p.add_argument("--max-time", type=float, default=None)
        p.add_argument("--theta0", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cleradii", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("law", help="closed-form laws of B")
    _common(p)
    p.add_argument("--what", required=True,
                   choices=["density", "cdf", "mgf", "mean", "alpha", "dimension", "abscissa",
                            "thickness-mgf"])
    p.add_argument("--lambda", dest="lam", type=_complex, default=0j)
    p.add_argument("--grid", type=_grid, default=None,
                   help="start:stop:steps over x (density, cdf) or real lambda (mgf)")

    p = sub.add_parser("simulate", help="exit-time samples of the lifted diffusion")
    _common(p, sim=True)

    p = sub.add_parser("verify", help="check a simulate output against the closed forms")
    p.add_argument("path")
    p.add_argument("--kappa", type=float, default=None,
                   help="law to test against (default: the kappa in the manifest)")
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.add_argument("--output", default=None)

    p = sub.add_parser("gasket", help="tail exponent, covering sums and nested radii")
    _common(p, sim=True)
    p.add_argument("--mode", choices=["survival", "covering", "nested"], required=True)
    p.add_argument("--grid", type=_grid, default=None,
                   help="s values (survival) or -log2(eps) values (covering)")
    p.add_argument("--depth", type=_positive_int, default=1, help="nested mode: loops per sequence")

    p = sub.add_parser("martingale", help="constancy of e^{lambda t} M(theta_t) at checkpoints")
    _common(p, sim=True, n_default=10_000)
    p.add_argument("--lambda", dest="lam", type=_complex, default=-0.1 + 0j)
    p.add_argument("--checkpoints", type=_floats, default=np.array([1.0, 5.0, 20.0]))
    p.add_argument("--grid", type=_grid, default=None, help="checkpoints as start:stop:steps")
    return parser


_COMMANDS = {"law": cmd_law, "simulate": cmd_simulate, "verify": cmd_verify,
             "gasket": cmd_gasket, "martingale": cmd_martingale}


def main(argv=None) -> int:
    started = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        columns, rows, summary, code = _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CensoringError, InsufficientDataError) as exc:
        print(f"gate failure: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (CleRadiiError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    params = {k: v for k, v in vars(args).items() if k not in ("output", "format", "command")}
    manifest = _manifest(args.command, params, getattr(args, "seed", None), started)
    _emit(render(manifest, columns, rows, summary, args.format), args.output)
    return code


if __name__ == "__main__":
    sys.exit(main())
