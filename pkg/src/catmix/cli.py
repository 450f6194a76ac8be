"""
Command line entry points.

Every subcommand honors ``--seed`` for end-to-end reproducibility,
writes data files atomically (temp file plus rename), and logs only to
standard error.  Exit codes: 0 on success, 1 on runtime or contract
errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from catmix import core, inference, metrics, sampler, synth

__all__ = ["main", "build_parser"]


# ---------------------------------------------------------------------------
# Flag helpers
# ---------------------------------------------------------------------------

def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _rate(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _rate_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(
            f"expected two comma-separated rates, got {text!r}"
        )
    return (_rate(parts[0]), _rate(parts[1]))


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(f) for f in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None


def _write_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _add_gibbs_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--burnin", type=_nonneg_int, default=200,
                     help="discarded initial sweeps (default 200)")
    sub.add_argument("--samples", type=_positive_int, default=100,
                     help="retained posterior draws (default 100)")
    sub.add_argument("--thin", type=_positive_int, default=2,
                     help="sweeps between retained draws (default 2)")
    sub.add_argument("--alpha", type=_positive_float, default=0.25,
                     help="partition concentration (default 0.25)")
    sub.add_argument("--beta", type=_positive_float, default=1.0,
                     help="flat Dirichlet pseudo-count (default 1.0)")
    sub.add_argument("--progress-every", type=_nonneg_int, default=50,
                     help="progress line interval in sweeps; 0 silences")


def _add_mechanism_flags(sub: argparse.ArgumentParser, *, with_none: bool) -> None:
    choices = ["mcar", "mar", "mnar"] + (["none"] if with_none else [])
    sub.add_argument("--mechanism", choices=choices,
                     default="none" if with_none else "mcar",
                     help="missingness mechanism")
    sub.add_argument("--mcar-rate", type=_rate, default=0.2,
                     help="MCAR per-cell masking rate (default 0.2)")
    sub.add_argument("--mar-rates", type=_rate_pair, default=(0.1, 0.3),
                     metavar="R1,R2",
                     help="MAR rates keyed on the first variable (default 0.1,0.3)")
    sub.add_argument("--mnar-rates", type=_rate_pair, default=(0.1, 0.3),
                     metavar="R1,R2",
                     help="MNAR rates keyed on the cell value (default 0.1,0.3)")


def _mechanism(args) -> synth.MechanismSpec | None:
    if args.mechanism == "none":
        return None
    return synth.MechanismSpec(
        kind=args.mechanism,
        mcar_rate=args.mcar_rate,
        mar_rates=args.mar_rates,
        mnar_rates=args.mnar_rates,
    )


def _gibbs_config(args) -> sampler.GibbsConfig:
    return sampler.GibbsConfig(
        burnin=args.burnin, samples=args.samples, thin=args.thin,
        seed=args.seed,
    )


def _progress_stream(args):
    return sys.stderr if args.progress_every > 0 else None


def _khist_csv(sample: sampler.PosteriorSample) -> str:
    lines = ["k,count"]
    for k, count in sorted(sample.k_histogram.items()):
        lines.append(f"{k},{count}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_fit(args) -> int:
    text = Path(args.input).read_text()
    schema = core.CategoricalSchema(args.schema) if args.schema else None
    data = core.parse_dataset(text, schema)
    priors = core.Priors.flat(data.schema, alpha=args.alpha, beta_value=args.beta)
    sample = sampler.run_gibbs(
        data, priors, _gibbs_config(args), seed=args.seed,
        progress=_progress_stream(args),
        progress_every=args.progress_every or 50,
    )
    if args.summary:
        payload = core.serialize_model(inference.pool_draws(sample))
    else:
        payload = core.serialize_models(sample.draws)
    _write_atomic(args.out, payload)
    khist_path = args.k_histogram or f"{args.out}.khist.csv"
    _write_atomic(khist_path, _khist_csv(sample))
    _log(
        f"fit: {data.n_rows} rows, {data.n_variables} variables, "
        f"{len(sample.draws)} draws, modal k={sample.modal_k}, "
        f"{sample.elapsed_seconds:.1f}s"
    )
    return 0


def _cmd_impute(args) -> int:
    draws = core.deserialize_models(Path(args.model).read_text())
    schema = draws[0].schema
    data = core.parse_dataset(Path(args.input).read_text(), schema)
    result = inference.impute(data, draws, rule=args.rule, seed=args.seed)
    _write_atomic(args.out, core.dataset_to_csv(result.completed))

    lines = ["row,column,category,probability"]
    for (i, j), vec in result.cell_posteriors.items():
        name = data.column_names[j]
        for c, prob in enumerate(vec, start=1):
            lines.append(f"{i},{name},{c},{float(prob)!r}")
    cell_path = args.cell_posterior or f"{args.out}.cells.csv"
    _write_atomic(cell_path, "\n".join(lines) + "\n")
    _log(
        f"impute: filled {len(result.cell_posteriors)} cells "
        f"({args.rule} rule) in {data.n_rows} rows"
    )
    return 0


def _cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.protocol == "mixture":
        data, truth = synth.sample_mixture_dataset(
            n=args.n or 50, p=args.p, k=args.k,
            cardinality=args.cardinality, seed=rng,
        )
        truth_model = truth
    else:
        data, joint = synth.sample_xor_dataset(n=args.n or 300, seed=rng)
        truth_model = inference.saturated_model(joint)

    mechanism = _mechanism(args)
    if mechanism is None:
        out_data, record = data, None
    else:
        out_data, record = synth.mask(data, mechanism, seed=rng)

    _write_atomic(args.out, core.dataset_to_csv(out_data))
    if args.complete_out:
        _write_atomic(args.complete_out, core.dataset_to_csv(data))
    if args.truth_out:
        _write_atomic(args.truth_out, core.serialize_model(truth_model))
    if args.mask_out:
        lines = ["row,column,value"]
        if record is not None:
            for i, j, v in zip(record.rows, record.cols, record.values):
                lines.append(f"{i},{data.column_names[j]},{v}")
        _write_atomic(args.mask_out, "\n".join(lines) + "\n")
    masked = len(record) if record is not None else 0
    _log(
        f"simulate: {data.n_rows}x{data.n_variables} {args.protocol} data, "
        f"{masked} cells masked"
    )
    return 0


def _cmd_benchmark(args) -> int:
    mechanism = _mechanism(args)
    gibbs = _gibbs_config(args)
    master = np.random.SeedSequence(args.seed)
    children = master.spawn(args.reps)
    task = partial(
        metrics._replicate, protocol=args.protocol, mechanism=mechanism,
        gibbs=gibbs, n=args.n or metrics._PROTOCOL_N[args.protocol],
        p=args.p, k=args.k, cardinality=args.cardinality,
    )

    results: list[dict] = []
    failed = False
    out = open(args.out, "w") if args.out else None
    try:
        if args.jobs > 1:
            from concurrent.futures import ProcessPoolExecutor
            pool = ProcessPoolExecutor(max_workers=args.jobs)
            stream = pool.map(task, children)
        else:
            pool = None
            stream = map(task, children)
        try:
            for i, rep in enumerate(stream):
                results.append(rep)
                if out is not None:
                    if i == 0:
                        out.write(",".join(("replication",) + tuple(rep)) + "\n")
                    out.write(
                        ",".join([str(i)] + [repr(float(v)) for v in rep.values()])
                        + "\n"
                    )
                    out.flush()
                shown = ", ".join(f"{k}={v:.4f}" for k, v in rep.items())
                _log(f"replication {i + 1}/{args.reps}: {shown}")
        except Exception as exc:
            failed = True
            _log(f"replication {len(results) + 1} failed: {exc}")
        finally:
            if pool is not None:
                pool.shutdown()
    finally:
        if out is not None:
            out.close()

    if not results:
        return 1
    report = metrics.ReplicationReport(
        protocol=args.protocol,
        mechanism=mechanism,
        per_replication=tuple(results),
        gibbs=gibbs,
        seed=args.seed,
    )
    if args.summary_out:
        _write_atomic(args.summary_out, json.dumps(report.summary(), indent=2) + "\n")
    for name in report.metric_names:
        _log(f"{name}: mean={report.means[name]:.4f} sd={report.sds[name]:.4f}")
    return 1 if failed else 0


def _cmd_test_independence(args) -> int:
    models = core.deserialize_models(Path(args.model).read_text())
    pooled = inference.pool_draws(models)
    pairs = inference.pairwise_independence(pooled, args.n)
    lines = ["j1,j2,p_value"]
    for j1, j2, p in pairs:
        lines.append(f"{j1},{j2},{p!r}")
    payload = "\n".join(lines) + "\n"
    if args.out:
        _write_atomic(args.out, payload)
    else:
        sys.stdout.write(payload)
    _log(f"test-independence: {len(pairs)} pairs at n={args.n}")
    return 0


def _cmd_preprocess_ratings(args) -> int:
    triples = synth.parse_ratings_csv(Path(args.input).read_text())
    data = synth.preprocess_ratings(
        triples,
        item_threshold=args.item_threshold,
        user_threshold=args.user_threshold,
        coding=args.coding,
        cutoff=args.cutoff,
    )
    _write_atomic(args.out, core.dataset_to_csv(data))
    _log(
        f"preprocess-ratings: {data.n_rows} users x {data.n_variables} items, "
        f"{data.n_missing() / data.cells.size:.2%} missing"
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catmix",
        description=(
            "Mixture modeling and imputation for incomplete categorical data."
        ),
    )
    subs = parser.add_subparsers(dest="subcommand", required=True)

    fit = subs.add_parser("fit", help="fit the mixture to a CSV dataset")
    fit.add_argument("input", help="dataset CSV (codes 1..d, NA = missing)")
    fit.add_argument("--out", required=True, help="model JSON output path")
    fit.add_argument("--schema", type=_int_list, default=None,
                     metavar="D1,D2,...",
                     help="explicit cardinalities (default: inferred)")
    fit.add_argument("--summary", action="store_true",
                     help="write one pooled model instead of all draws")
    fit.add_argument("--k-histogram", default=None,
                     help="component-count histogram CSV (default OUT.khist.csv)")
    fit.add_argument("--seed", type=int, default=None)
    _add_gibbs_flags(fit)
    fit.set_defaults(func=_cmd_fit)

    imp = subs.add_parser("impute", help="fill missing cells from a fitted model")
    imp.add_argument("input", help="dataset CSV")
    imp.add_argument("model", help="model JSON from fit")
    imp.add_argument("--out", required=True, help="completed CSV output path")
    imp.add_argument("--cell-posterior", default=None,
                     help="per-cell predictive CSV (default OUT.cells.csv)")
    imp.add_argument("--rule", choices=["argmax", "sample"], default="argmax")
    imp.add_argument("--seed", type=int, default=None,
                     help="seed for the sample rule")
    imp.set_defaults(func=_cmd_impute)

    sim = subs.add_parser("simulate", help="generate synthetic benchmark data")
    sim.add_argument("--protocol", choices=["mixture", "xor"], required=True)
    sim.add_argument("--out", required=True, help="dataset CSV output path")
    sim.add_argument("--complete-out", default=None,
                     help="also write the unmasked data")
    sim.add_argument("--truth-out", default=None,
                     help="write the generating mixture as model JSON")
    sim.add_argument("--mask-out", default=None,
                     help="write masked coordinates and true values as CSV")
    sim.add_argument("--n", type=_positive_int, default=None,
                     help="rows (default 50 mixture / 300 xor)")
    sim.add_argument("--p", type=_positive_int, default=20,
                     help="variables, mixture protocol (default 20)")
    sim.add_argument("--k", type=_positive_int, default=3,
                     help="components, mixture protocol (default 3)")
    sim.add_argument("--cardinality", type=_positive_int, default=2,
                     help="categories per variable, mixture protocol")
    sim.add_argument("--seed", type=int, default=None)
    _add_mechanism_flags(sim, with_none=True)
    sim.set_defaults(func=_cmd_simulate)

    bench = subs.add_parser("benchmark", help="run replicated benchmarks")
    bench.add_argument("--protocol", choices=["mixture", "xor"], required=True)
    bench.add_argument("--reps", type=_positive_int, default=20)
    bench.add_argument("--out", default=None,
                       help="per-replication CSV (written incrementally)")
    bench.add_argument("--summary-out", default=None,
                       help="summary JSON output path")
    bench.add_argument("--jobs", type=_positive_int,
                       default=os.cpu_count() or 1,
                       help="worker processes (default: available cores)")
    bench.add_argument("--n", type=_positive_int, default=None,
                       help="rows (default 50 mixture / 300 xor)")
    bench.add_argument("--p", type=_positive_int, default=20)
    bench.add_argument("--k", type=_positive_int, default=3)
    bench.add_argument("--cardinality", type=_positive_int, default=2)
    bench.add_argument("--seed", type=int, default=None)
    _add_mechanism_flags(bench, with_none=False)
    _add_gibbs_flags(bench)
    bench.set_defaults(func=_cmd_benchmark)

    ind = subs.add_parser(
        "test-independence",
        help="Fisher exact tests for all variable pairs of a binary model",
    )
    ind.add_argument("model", help="model JSON from fit")
    ind.add_argument("--n", type=_positive_int, required=True,
                     help="effective sample size for the count tables")
    ind.add_argument("--out", default=None,
                     help="output CSV (default: stdout); 0-based indices, "
                          "sorted by ascending p-value")
    ind.set_defaults(func=_cmd_test_independence)

    prep = subs.add_parser(
        "preprocess-ratings",
        help="filter and code a (user,item,rating) CSV into a dataset",
    )
    prep.add_argument("input", help="ratings CSV with a header row")
    prep.add_argument("--out", required=True, help="dataset CSV output path")
    prep.add_argument("--coding", choices=["binary", "five"], default="binary")
    prep.add_argument("--cutoff", type=_positive_float, default=3.0,
                      help="binary coding like-threshold (default 3.0)")
    prep.add_argument("--item-threshold", type=_rate, default=0.25,
                      help="keep items rated by > this fraction of users")
    prep.add_argument("--user-threshold", type=_rate, default=0.95,
                      help="keep users rating > this fraction of kept items")
    prep.set_defaults(func=_cmd_preprocess_ratings)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
