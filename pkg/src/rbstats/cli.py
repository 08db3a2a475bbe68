"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import formats
from .adaptive import (
    AdaptiveConfig,
    AdaptiveError,
    AnalyticOracle,
    GateLevelOracle,
    ReplayDataError,
    ReplayOracle,
    run_adaptive,
)
from .cliffsim import parse_noise
from .design import DesignInput, heuristic_m2, optimal_m2, variance_landscape
from .estimate import (
    lognormal_interval,
    ratio_estimate,
    summary_from_dataset,
    unitarity_estimate,
)
from .model import DecayParams
from .sampler import (
    AnalyticSource,
    DesignRow,
    DriftSpec,
    GateLevelSource,
    export_summary_csv,
    generate,
    generate_unitarity,
    summarize,
    unitarity_summaries,
)
from .studies import StudyConfig, run_study
from .validate import consistency_test

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DegenerateError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _params(args) -> DecayParams:
    try:
        if args.visibility is not None:
            return DecayParams.from_visibility(args.visibility, args.B, args.p)
        if args.A is None:
            raise UsageError("give --A or --visibility")
        return DecayParams(args.A, args.B, args.p)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_params(p):
    p.add_argument("--A", type=float, help="decay amplitude")
    p.add_argument("--visibility", type=float, help="alternative to --A: A = visibility * (1 - B)")
    p.add_argument("--B", type=float, default=0.5, help="offset (default 0.5)")
    p.add_argument("--p", type=float, help="decay parameter")


def _drift(text: str | None, n_sequences: int):
    if text is None:
        return None
    parts = text.split(":")
    if len(parts) != 3 or parts[0] != "linear":
        raise UsageError(f"--drift must look like linear:P_START:P_END, got {text!r}")
    try:
        return DriftSpec.linear(float(parts[1]), float(parts[2]), n_sequences)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(doc: dict, out: str | None):
    if out:
        formats.write_json(doc, out)
    else:
        sys.stdout.write(formats.dumps(doc))


# ----------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.backend == "analytic" and args.kind == "unitarity":
        raise UsageError("unitarity data needs --backend gate-level")
    if args.backend == "gate-level":
        try:
            noise = parse_noise(args.noise) if args.noise else None
            source = GateLevelSource(noise, args.qubits)
            if args.qubits not in (1, 2):
                raise ValueError("--qubits must be 1 or 2")
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        if args.p is None:
            raise UsageError("analytic backend needs --p")
        source = AnalyticSource(_params(args), args.spread)

    if args.kind == "unitarity":
        if not args.lengths or args.sequences is None:
            raise UsageError("unitarity simulation needs --lengths and --sequences")
        try:
            uds = generate_unitarity(args.lengths, args.sequences, source, args.seed, args.shots)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        _emit(uds.to_dict(), args.out)
        return EXIT_OK

    if not args.design:
        raise UsageError("give at least one --design m:b:k:n")
    try:
        design = [DesignRow.parse(d) for d in args.design]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    drift = _drift(args.drift, sum(r.k for r in design))
    try:
        ds = generate(design, source, drift, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(ds.to_dict(), args.out)
    return EXIT_OK


def _degenerate_flags(flags) -> list[str]:
    return [f for f in flags if f.startswith("truncated") or f == "degenerate"]


def cmd_estimate(args) -> int:
    doc = formats.load(args.data)
    if doc["schema"] == "rb-unitarity/1":
        return _estimate_unitarity(args, formats.read_unitarity(args.data))
    ds = formats.read_dataset(args.data)
    if args.m1 >= args.m2:
        raise UsageError("need --m1 < --m2")
    if args.mode == "known-B" and args.B is None:
        raise UsageError("known-B mode needs --B")
    try:
        if args.interval == "lognormal":
            if not ds.is_arb:
                raise UsageError("the log-normal interval needs single-shot data (n = 1 per sequence)")
            if args.mode != "known-B":
                raise UsageError("the log-normal interval is defined for known-B data")
            g1, g2 = ds.group(args.m1, 0), ds.group(args.m2, 0)
            est = lognormal_interval(
                int(g1.successes.sum()), g1.k, int(g2.successes.sum()), g2.k,
                args.m1, args.m2, args.B, args.coverage,
            )
        else:
            s = summary_from_dataset(ds, args.m1, args.m2, args.mode, args.B)
            est = ratio_estimate(s, args.delta, args.bias_correct, args.k_cheb)
    except KeyError as exc:
        raise formats.DataError(str(exc).strip("'\"")) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(est.to_dict(), args.out)
    lo, hi = est.interval
    print(
        f"p_hat = {est.p_hat:.6f}  r_hat = {est.r_hat:.3e}  A_hat = {est.A_hat:.4f}  "
        f"{est.method} {est.coverage:.3f} interval [{lo:.6f}, {hi:.6f}]",
        file=sys.stderr,
    )
    bad = _degenerate_flags(est.flags)
    if bad:
        raise DegenerateError(f"estimate is degenerate ({', '.join(bad)})")
    return EXIT_OK


def _estimate_unitarity(args, uds) -> int:
    try:
        s1 = unitarity_summaries(uds, args.m1, args.normalization, args.leakage)
        s2 = unitarity_summaries(uds, args.m2, args.normalization, args.leakage)
    except KeyError as exc:
        raise formats.DataError(str(exc).strip("'\"")) from None
    try:
        est = unitarity_estimate(s1.a, s2.a, s1.b, s2.b, args.m1, args.m2, args.delta)
    except ValueError as exc:
        raise DegenerateError(str(exc)) from None
    _emit(est.to_dict(), args.out)
    print(f"u_hat = {est.u:.6f}  l_hat = {est.l:.6f}", file=sys.stderr)
    bad = _degenerate_flags(est.flags)
    if bad:
        raise DegenerateError(f"estimate is degenerate ({', '.join(bad)})")
    return EXIT_OK


def cmd_design(args) -> int:
    if args.p is None:
        raise UsageError("design needs --p")
    P = _params(args)
    try:
        inp = DesignInput(P, args.m1, args.k1, args.k2)
        m_opt = optimal_m2(inp, weighted=args.weighted)
        m_heur = heuristic_m2(P.p)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"optimal m2: {m_opt}")
    print(f"heuristic m2: {m_heur}")
    if args.landscape:
        upper = args.m2_max or int(np.ceil(5.0 / (1.0 - P.p)))
        rows = variance_landscape(inp, range(args.m1 + 1, upper + 1))
        formats.write_csv(rows, ("m2", "variance"), args.landscape)
    return EXIT_OK


def cmd_adaptive(args) -> int:
    try:
        cfg = AdaptiveConfig(args.epsilon, args.delta, "auto" if args.t is None else args.t, args.max_doublings)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rng = np.random.default_rng(np.random.SeedSequence([args.seed]))
    if args.backend == "analytic":
        if args.p is None:
            raise UsageError("analytic backend needs --p")
        A = 0.8 if args.A is None else args.A
        try:
            oracle = AnalyticOracle(DecayParams(A, 0.0, args.p), rng)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    elif args.backend == "gate-level":
        try:
            oracle = GateLevelOracle(parse_noise(args.noise) if args.noise else None, rng, args.qubits)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        if not args.data:
            raise UsageError("replay backend needs --data")
        oracle = ReplayOracle(formats.read_dataset(args.data), args.mode, args.B or 0.0)
    try:
        res = run_adaptive(oracle, cfg)
    except ReplayDataError as exc:
        raise formats.DataError(str(exc)) from None
    except AdaptiveError as exc:
        raise DegenerateError(str(exc)) from None
    _emit(res.to_dict(), args.out)
    print(f"p_hat = {res.p_hat:.6f}  r_hat = {res.r_hat:.3e}  ell = {res.ell}  shots = {res.total_shots}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    ds = formats.read_dataset(args.data)
    est = formats.read_estimate(args.estimate)
    holdout = [int(x) for h in args.holdout for x in h.split(",") if x]
    try:
        rep = consistency_test(
            ds, est, holdout, args.alpha, args.mode, args.B, amplitude_uncertainty=not args.conservative
        )
    except KeyError as exc:
        raise formats.DataError(str(exc).strip("'\"")) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(rep.to_dict(), args.out)
    print(rep.format_table(), file=sys.stderr)
    return EXIT_OK


def cmd_summarize(args) -> int:
    ds = formats.read_dataset(args.data)
    if args.out:
        export_summary_csv(ds, args.out)
    else:
        print("m,b,k,shots,mean,variance")
        for pt in sorted(ds.points, key=lambda p: (p.m, p.b)):
            s = summarize(ds, pt.m, pt.b)
            print(f"{s.m},{s.b},{s.k},{s.n_total},{s.mean!r},{s.variance!r}")
    return EXIT_OK


def cmd_study(args) -> int:
    try:
        cfg = StudyConfig.from_file(args.config)
    except FileNotFoundError:
        raise formats.DataError(f"{args.config}: no such file") from None
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    overrides = {}
    if args.out_dir:
        overrides["out_dir"] = args.out_dir
    if args.workers:
        overrides["workers"] = args.workers
    if overrides:
        cfg = StudyConfig.from_dict({**cfg.__dict__, **overrides})
    res = run_study(cfg)
    print(f"wrote {', '.join(res.files)} and manifest.json to {cfg.out_dir}", file=sys.stderr)
    return EXIT_OK


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rbstats", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate an RB dataset")
    p.add_argument("--backend", choices=("analytic", "gate-level"), default="analytic")
    p.add_argument("--kind", choices=("rb", "unitarity"), default="rb")
    _add_params(p)
    p.add_argument("--spread", type=float, help="Beta concentration for per-sequence variation")
    p.add_argument("--noise", help="e.g. depolarizing:0.02+rotation:z:0.05")
    p.add_argument("--qubits", type=int, default=1)
    p.add_argument("--design", action="append", help="m:b:k:n (repeatable)")
    p.add_argument("--drift", help="linear:P_START:P_END across all sequences")
    p.add_argument("--lengths", type=int, nargs="+", help="unitarity lengths")
    p.add_argument("--sequences", type=int, help="unitarity sequences per length")
    p.add_argument("--shots", type=int, help="unitarity shots per Pauli (exact if omitted)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="two-length estimate of p")
    p.add_argument("--data", required=True)
    p.add_argument("--m1", type=int, default=4)
    p.add_argument("--m2", type=int, required=True)
    p.add_argument("--mode", choices=("known-B", "difference"), default="difference")
    p.add_argument("--B", type=float)
    p.add_argument("--bias-correct", choices=("auto", "on", "off"), default="auto")
    p.add_argument("--interval", choices=("chebyshev", "lognormal"), default="chebyshev")
    p.add_argument("--coverage", type=float, default=0.95, help="log-normal interval coverage")
    p.add_argument("--k-cheb", type=float, default=3.0)
    p.add_argument("--delta", type=float, default=1e-6, help="truncation floor")
    p.add_argument("--normalization", choices=("printed", "pauli_average"), default="printed")
    p.add_argument("--leakage", choices=("trace", "pauli_mean"), default="trace")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("design", help="recommend the second sequence length")
    _add_params(p)
    p.add_argument("--m1", type=int, default=4)
    p.add_argument("--k1", type=int, default=1)
    p.add_argument("--k2", type=int, default=1)
    p.add_argument("--weighted", action="store_true", help="use the actual k1, k2 weights")
    p.add_argument("--landscape", help="write the variance landscape CSV here")
    p.add_argument("--m2-max", type=int)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("adaptive", help="run the doubling estimator")
    p.add_argument("--backend", choices=("analytic", "gate-level", "replay"), default="analytic")
    p.add_argument("--A", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--noise")
    p.add_argument("--qubits", type=int, default=1)
    p.add_argument("--data")
    p.add_argument("--mode", choices=("known-B", "difference"), default="difference")
    p.add_argument("--B", type=float)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--t", type=int, help="shots per estimate (default from the sampling bound)")
    p.add_argument("--max-doublings", type=int, default=40)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_adaptive)

    p = sub.add_parser("validate", help="test held-out lengths against a fit")
    p.add_argument("--data", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--holdout", action="append", required=True, help="length(s), comma separated or repeated")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--mode", choices=("known-B", "difference"), default="difference")
    p.add_argument("--B", type=float)
    p.add_argument("--conservative", action="store_true", help="ignore amplitude uncertainty in predictions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("summarize", help="per-group means and variances")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("study", help="run a study from a JSON config")
    p.add_argument("config")
    p.add_argument("--out-dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except formats.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateError as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
