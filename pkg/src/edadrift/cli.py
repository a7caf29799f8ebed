"""Command-line entry point: ``edadrift <subcommand> [--config FILE] [flags]``.

Exit status is 0 on success, 1 on invalid input (config, flags, parameters,
output path) and 2 when an experiment fails or a check does not hold.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import dominance, lab, markov, moments
from .config import ConfigError, ProcessFields, dump_config, load_config, read_config_file
from .eda import fitness_by_name
from .errors import DomainError, ExperimentFailed, InfeasibleSizeError, InvalidSpecError, SingularSystemError

# (flag, dest, argparse keywords) per subcommand
_PROCESS = [
    ("--algo", {}),
    ("--K", {"type": int}),
    ("--mu", {"type": int}),
    ("--lam", {"type": int}),
    ("--rho", {"type": float}),
    ("--schedule", {"type": float, "nargs": "+"}),
    ("--margins", {"action": "store_const", "const": True}),
    ("--dim", {"type": int}),
]
_STOP = [
    ("--stop", {}),
    ("--lo", {}),
    ("--hi", {}),
    ("--level", {}),
    ("--c", {"type": float}),
    ("--epsilon", {"type": float}),
    ("--horizon", {"type": int}),
]
FLAGS = {
    "simulate": _PROCESS + _STOP + [
        ("--fitness", {}),
        ("--track", {"type": int}),
        ("--replicas", {"type": int}),
        ("--budget", {"type": int}),
        ("--sweep-param", {}),
        ("--sweep-values", {"type": float, "nargs": "+"}),
    ],
    "exact": [("--algo", {}), ("--K", {"type": int}), ("--mu", {"type": int}),
              ("--sizes", {"type": int, "nargs": "+"})] + _STOP,
    "scaling": [("--algo", {}), ("--sizes", {"type": int, "nargs": "+"}), ("--mode", {}),
                ("--replicas", {"type": int}), ("--budget", {"type": int})] + _STOP,
    "tailcheck": _PROCESS + [
        ("--gamma", {"type": float}),
        ("--horizons", {"type": int, "nargs": "+"}),
        ("--replicas", {"type": int}),
    ],
    "runaway": [
        ("--mu", {"type": int, "nargs": "+"}),
        ("--rho", {"type": float, "nargs": "+"}),
        ("--c", {"type": float}),
        ("--epsilon", {"type": float}),
        ("--replicas", {"type": int}),
        ("--budget", {"type": int}),
    ],
    "dominance": _PROCESS + [
        ("--fitness", {}),
        ("--reference", {}),
        ("--bit", {"type": int}),
        ("--steps", {"type": int}),
        ("--mode", {}),
        ("--replicas", {"type": int}),
        ("--alpha", {"type": float}),
    ],
    "advise": [
        ("--algo", {}),
        ("--budget", {"type": float}),
        ("--dim", {"type": int}),
        ("--gamma", {"type": float}),
        ("--delta", {"type": float}),
        ("--lam", {"type": int}),
        ("--rho", {"type": float}),
    ],
    "moments-check": [
        ("--algo", {}),
        ("--K", {"type": int, "nargs": "+"}),
        ("--mu", {"type": int, "nargs": "+"}),
        ("--rho", {"nargs": "+"}),
        ("--sqrt-samples", {"type": int}),
    ],
}


class CheckFailed(Exception):
    """A verification subcommand ran but its check did not hold."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edadrift", description="Genetic drift experiments for univariate EDAs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, flags in FLAGS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", help="file receiving the full results")
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker cap (default: $EDADRIFT_THREADS or CPU count)")
        p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
        for flag, kw in flags:
            p.add_argument(flag, dest=flag[2:].replace("-", "_"), **kw)
    return parser


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def _summary_row(s: lab.HittingSummary) -> list:
    return [s.n, s.completed, s.mean, s.stderr, s.ci95[0], s.ci95[1], s.median, s.budget_exhausted, s.flagged]


_SUMMARY_HEADER = ["n", "completed", "mean", "stderr", "ci95_low", "ci95_high", "median", "budget_exhausted", "flagged"]


def cmd_simulate(cfg, workers):
    stop = cfg.stopping_rule()
    common = dict(stop=stop, replicas=cfg.replicas, master_seed=cfg.seed, budget=cfg.budget)
    if cfg.fitness is not None:
        fitness_by_name(cfg.fitness, cfg.track)
        config = lab.ExperimentConfig(eda=cfg.eda_spec(), fitness=cfg.fitness, track=cfg.track, **common)
    else:
        config = lab.ExperimentConfig(process=cfg.process_spec(), **common)
    if cfg.sweep_param is not None:
        values = [v if cfg.sweep_param == "rho" else int(v) for v in cfg.sweep_values]
        config = lab.ExperimentConfig.from_dict({**config.to_dict(), "sweep": {"param": cfg.sweep_param, "values": values}})
        points = lab.run_sweep(config, workers)
        payload = {"config": config.to_dict(), "points": [{"value": v, **s.to_dict()} for v, s in points]}
        line = "sweep " + ", ".join(f"{cfg.sweep_param}={v}: {s.mean!r}" for v, s in points)
        csv_text = _table([cfg.sweep_param] + _SUMMARY_HEADER, [[v] + _summary_row(s) for v, s in points])
        return line, payload, csv_text
    records = lab.run_replicas(config, workers)
    s = lab.summarize(records)
    buf = io.StringIO()
    lab.write_samples_csv(records, buf)
    line = f"mean={s.mean!r} stderr={s.stderr!r} n={s.n} budget_exhausted={s.budget_exhausted}"
    return line, {"config": config.to_dict(), "summary": s.to_dict()}, buf.getvalue()


def cmd_exact(cfg, workers):
    stop = cfg.stopping_rule()
    if cfg.sizes:
        points = [(n, lab.exact_hitting_time(cfg.algo, n, stop)) for n in cfg.sizes]
        payload = {"algo": cfg.algo, "stop": stop.to_dict(), "points": [{"size": n, "expected_time": t} for n, t in points]}
        return " ".join(repr(t) for _, t in points), payload, _table(["size", "expected_time"], points)
    t = lab.exact_hitting_time(cfg.algo, cfg.size, stop)
    kernel = markov.build_cga_kernel(cfg.size) if cfg.algo == "cga" else markov.build_umda_kernel(cfg.size)
    buf = io.StringIO()
    kernel.to_csv(buf)
    payload = {"algo": cfg.algo, "size": cfg.size, "stop": stop.to_dict(), "expected_time": t}
    return repr(t), payload, buf.getvalue()


def cmd_scaling(cfg, workers):
    stop = cfg.stopping_rule()
    if cfg.mode == "exact":
        pts, fit = lab.exact_scaling(cfg.algo, cfg.sizes, stop)
        rows = [{"size": n, "mean": t} for n, t in pts]
    else:
        key = "K" if cfg.algo == "cga" else "mu"
        base = ProcessFields(algo=cfg.algo, **{key: cfg.sizes[0]}).process_spec()
        config = lab.ExperimentConfig(stop, process=base, replicas=cfg.replicas, master_seed=cfg.seed,
                                      budget=cfg.budget, sweep=(key, tuple(cfg.sizes)))
        sweep = lab.run_sweep(config, workers)
        rows = [{"size": n, "mean": s.mean, "stderr": s.stderr, "budget_exhausted": s.budget_exhausted}
                for n, s in sweep]
        fit = lab.fit_scaling_law([(n, s.mean) for n, s in sweep])
    payload = {"algo": cfg.algo, "mode": cfg.mode, "stop": stop.to_dict(), "points": rows, "fit": fit.to_dict()}
    line = f"exponent={fit.exponent!r} constant={fit.constant!r} r_squared={fit.r_squared!r}"
    header = list(rows[0])
    return line, payload, _table(header, [[r[h] for h in header] for r in rows])


def cmd_tailcheck(cfg, workers):
    report = lab.validate_tail_bound(cfg.process_spec(), cfg.gamma, cfg.horizons, cfg.replicas, cfg.seed, workers)
    header = ["horizon", "bound", "empirical", "lower99", "upper99", "exact", "violated"]
    rows = [[getattr(r, h) for h in header] for r in report.rows]
    line = f"horizons={len(report.rows)} violations={report.violations}"
    if report.violations:
        raise CheckFailed(line, report.to_dict(), _table(header, rows))
    return line, report.to_dict(), _table(header, rows)


def cmd_runaway(cfg, workers):
    summaries, fit_mu, fit_rho = lab.runaway_scaling(cfg.mu, cfg.rho, cfg.replicas, cfg.seed, cfg.c, cfg.epsilon, workers)
    payload = {
        "c": cfg.c,
        "epsilon": cfg.epsilon,
        "points": [s.to_dict() for s in summaries],
        "fit_mu": fit_mu.to_dict() if fit_mu else None,
        "fit_rho": fit_rho.to_dict() if fit_rho else None,
    }
    parts = [f"mu={s.extra['mu']},rho={s.extra['rho']}: {s.mean!r}" for s in summaries]
    if fit_mu:
        parts.append(f"mu-exponent={fit_mu.exponent!r}")
    if fit_rho:
        parts.append(f"rho-exponent={fit_rho.exponent!r}")
    rows = [[s.extra["mu"], s.extra["rho"]] + _summary_row(s) for s in summaries]
    return "; ".join(parts), payload, _table(["mu", "rho"] + _SUMMARY_HEADER, rows)


def cmd_dominance(cfg, workers):
    spec = cfg.eda_spec()
    f = fitness_by_name(cfg.fitness, cfg.bit)
    g = fitness_by_name(cfg.reference, cfg.bit)
    recs = dominance.multistep_dominance_check(
        spec, f, spec, g, cfg.steps, mode=cfg.mode, bit=cfg.bit, replicas=cfg.replicas,
        master_seed=cfg.seed, alpha=cfg.alpha, workers=workers,
    )
    header = ["t", "dominates", "max_violation", "witness", "slack"]
    rows = [[getattr(r, h) for h in header] for r in recs]
    payload = {"spec": spec.to_dict(), "fitness": cfg.fitness, "reference": cfg.reference, "mode": cfg.mode,
               "records": [dict(zip(header, r)) for r in rows]}
    ok = all(r.dominates for r in recs)
    line = f"{cfg.fitness} vs {cfg.reference}: dominance {'holds' if ok else 'violated'} for t=0..{cfg.steps}"
    if not ok:
        raise CheckFailed(line, payload, _table(header, rows))
    return line, payload, _table(header, rows)


def cmd_advise(cfg, workers):
    a = lab.advise_parameters(cfg.algo, cfg.budget, cfg.dim, cfg.gamma, cfg.delta, cfg.lam, cfg.rho)
    return f"{a.parameter}={a.value}", a.to_dict(), _table(list(a.to_dict()), [list(a.to_dict().values())])


def cmd_moments(cfg, workers):
    rows = []
    if cfg.algo == "pbil":
        for mu in cfg.mu:
            for rho in cfg.rho:
                rows.append(["pbil", f"mu={mu},rho={rho}", moments.pbil_formula_error(mu, Fraction(rho)), True])
    else:
        for K in cfg.K:
            err, zero = moments.cga_formula_error(K)
            rows.append(["cga", f"K={K}", err, zero])
    sqrt_ok = True
    if cfg.sqrt_samples:
        rng = np.random.default_rng(cfg.seed)
        z0 = rng.uniform(1e-3, 4.0, cfg.sqrt_samples)
        z = rng.uniform(0.0, 8.0, cfg.sqrt_samples)
        sqrt_ok = bool(np.all(moments.check_sqrt_bound(z, z0).holds))
        sqrt_ok &= bool(np.all(moments.check_sqrt_bound(np.zeros_like(z0), z0).holds))
        eq = moments.check_sqrt_bound(z0, z0)
        sqrt_ok &= bool(np.max(np.abs(eq.lhs - eq.rhs)) <= 1e-12)
    worst = max(r[2] for r in rows)
    ok = worst <= 1e-12 and all(r[3] for r in rows) and sqrt_ok
    payload = {"rows": [dict(zip(["algo", "setting", "max_rel_error", "third_ok"], r)) for r in rows],
               "max_rel_error": worst, "sqrt_bound_holds": sqrt_ok, "sqrt_samples": cfg.sqrt_samples}
    line = f"max_rel_error={worst!r} sqrt_bound={'holds' if sqrt_ok else 'fails'}"
    csv_text = _table(["algo", "setting", "max_rel_error", "third_ok"], rows)
    if not ok:
        raise CheckFailed(line, payload, csv_text)
    return line, payload, csv_text


COMMANDS = {
    "simulate": cmd_simulate,
    "exact": cmd_exact,
    "scaling": cmd_scaling,
    "tailcheck": cmd_tailcheck,
    "runaway": cmd_runaway,
    "dominance": cmd_dominance,
    "advise": cmd_advise,
    "moments-check": cmd_moments,
}


def _check_out(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if os.path.isdir(path) or not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise ConfigError(f"--out: cannot write to {path!r}")


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as e:
        raise ConfigError(f"--out: cannot write to {path!r}: {e.strerror}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    names = {flag[2:].replace("-", "_") for flag, _ in FLAGS[args.command]} | {"seed"}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    try:
        file_values, text = read_config_file(args.config) if args.config else ({}, "")
        cfg = load_config(args.command, file_values, overrides, args.config, text)
        if args.dump_config:
            sys.stdout.write(dump_config(cfg))
            return 0
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.out:
            _check_out(args.out)
        try:
            line, payload, csv_text = COMMANDS[args.command](cfg, args.threads)
            status = 0
        except CheckFailed as e:
            line, payload, csv_text = e.args
            status = 2
    except (ConfigError, InvalidSpecError, DomainError, InfeasibleSizeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ExperimentFailed, SingularSystemError) as e:
        print(f"experiment failed: {e}", file=sys.stderr)
        return 2
    if args.out:
        out = csv_text if args.format == "csv" else json.dumps(payload, indent=2, sort_keys=True) + "\n"
        try:
            _write(args.out, out)
        except ConfigError as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
    print(line)
    return status


if __name__ == "__main__":
    sys.exit(main())
