"""Run configurations, table/figure reproduction, and the CLI.

Every command writes CSV with a two-line header comment (artifact version,
config hash, seed); reruns with the same config and seed are byte
identical at any thread count.  Exit codes: 0 success, 2 configuration
error, 3 numerical non-convergence.
"""

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import (ConfigError, DegenerateZ0Error, InfeasibleDataError,
                     InfeasibleSupportError, ModeInfeasibleError,
                     NonConvergenceError, NotGeneralPositionError)
from .estimators import (error_new, error_prior, estimate_U_delta, beta,
                         optimize_new_bound, paired_estimates,
                         u_delta_l1_closed_form, u_delta_l12_closed_form)
from .operators import (RNG_DOMAIN_HARNESS, AnalysisOperator,
                        make_finite_difference, make_identity, make_random1,
                        make_random2, make_wavelet, philox_rng)
from .recovery import phase_sweep
from .scenarios import (StructuredSignal, gen_cosparse, gen_failure_signal,
                        gen_random1_tall_adversarial, gen_simple_ground_truth,
                        gen_tall_pair)
from .subdifferentials import build_model, weak_decomposability_check

EXPERIMENTS = ("table1", "table2", "table3", "table4", "fig1", "fig2", "fig3",
               "bounds", "beta", "decomposability", "sweep")

NUMERIC_ERRORS = (NonConvergenceError, InfeasibleDataError, ModeInfeasibleError,
                  InfeasibleSupportError, NotGeneralPositionError, DegenerateZ0Error)

REQUIRED_FIELDS = {
    "table1": ("n", "s_list"),
    "table2": ("n", "rows"),
    "table3": ("rows",),
    "table4": ("rows",),
    "fig1": ("n", "s_list"),
    "fig2": ("q", "block_len", "s_list"),
    "fig3": ("n1", "n2", "r_list"),
    "bounds": ("instance",),
    "beta": ("instance",),
    "decomposability": (),
    "sweep": ("instance", "m_grid", "trials_per_m"),
}


@dataclass
class RunConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    samples: int = 2000
    seed: int = 0
    output_path: str = "out.csv"
    threads: int = 1

    @classmethod
    def from_dict(cls, data):
        if "experiment" not in data:
            raise ConfigError("missing field: experiment", fields=["experiment"])
        exp = data["experiment"]
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}", fields=["experiment"])
        missing = [f for f in REQUIRED_FIELDS[exp] if f not in data]
        if missing:
            raise ConfigError(f"missing fields for {exp}: {', '.join(missing)}",
                              fields=missing)
        params = {k: v for k, v in data.items()
                  if k not in ("experiment", "samples", "seed", "out", "threads")}
        cfg = cls(experiment=exp, params=params,
                  samples=int(data.get("samples", 2000)),
                  seed=int(data.get("seed", 0)),
                  output_path=str(data.get("out", "out.csv")),
                  threads=int(data.get("threads", 1)))
        if cfg.samples < 1:
            raise ConfigError("samples must be positive", fields=["samples"])
        return cfg

    def hash(self):
        payload = dict(self.params)
        payload["experiment"] = self.experiment
        payload["samples"] = self.samples
        payload["seed"] = self.seed
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows, config):
    lines = [f"# conewidth {__version__}",
             f"# config_hash={config.hash()} seed={config.seed}",
             ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    data = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as f:
        f.write(data)
    return path


# ---------------------------------------------------------------------------
# instance construction from config dictionaries


def build_operator(spec, seed):
    kind = spec.get("kind")
    if kind == "identity":
        return make_identity(int(spec["n"]))
    if kind == "finite_difference":
        return make_finite_difference(int(spec["n"]))
    if kind == "random1":
        diag = spec.get("diag")
        if isinstance(diag, dict):  # {"low": a, "high": b} row scaling
            rng = philox_rng(seed, stream=977, domain=RNG_DOMAIN_HARNESS)
            diag = rng.uniform(diag["low"], diag["high"], size=int(spec["p"]))
        return make_random1(int(spec["p"]), int(spec["n"]), int(spec["r"]),
                            diag=diag, seed=seed)
    if kind == "random2":
        return make_random2(int(spec["p"]), int(spec["n"]),
                            float(spec.get("sigma", 1.0)), seed=seed)
    if kind == "wavelet":
        return make_wavelet(int(spec["n"]), int(spec.get("levels", 1)),
                            spec.get("bands", "all"))
    raise ConfigError(f"unknown operator kind {kind!r}", fields=["kind"])


def build_instance(spec, seed):
    """(model, signal, omega_or_None) for a family/instance description."""
    family = spec.get("family")
    if family == "l1":
        sig = gen_simple_ground_truth("sparse", int(spec["n"]), int(spec["s"]), seed)
        return build_model("l1", sig), sig, None
    if family == "l12":
        sig = gen_simple_ground_truth("block_sparse",
                                      (int(spec["q"]), int(spec["block_len"])),
                                      int(spec["s"]), seed)
        return build_model("l12", sig), sig, None
    if family == "nuclear":
        sig = gen_simple_ground_truth("low_rank", (int(spec["n1"]), int(spec["n2"])),
                                      int(spec["r"]), seed)
        return build_model("nuclear", sig), sig, None
    if family == "analysis":
        op_spec = dict(spec["operator"])
        if spec.get("generator") == "tall_adversarial":
            omega, sig = gen_random1_tall_adversarial(
                int(spec["abs_S"]), int(spec["abs_Sbar"]), int(op_spec["n"]),
                np.full(int(spec["abs_S"]), float(spec.get("d1_scale", 1.0))),
                np.full(int(spec["abs_Sbar"]), float(spec.get("d2_scale", 1.0))),
                float(spec.get("alpha", 0.0)), seed)
        elif spec.get("generator") == "tall_pair":
            omega, sig = gen_tall_pair(int(spec["abs_S"]), int(spec["abs_Sbar"]),
                                       int(op_spec["n"]), float(spec["sigma"]), seed)
        else:
            omega = build_operator(op_spec, seed)
            gen = spec.get("generator", "cosparse")
            if gen in ("cosparse", "sphere"):
                sig = gen_cosparse(omega, int(spec["s"]), seed)
            elif gen in ("null_shift", "singular_shift"):
                base = gen_cosparse(omega, int(spec["s"]), seed)
                sig = gen_failure_signal(omega, base.support, gen,
                                         float(spec.get("alpha", 0.0)), seed)
            else:
                raise ConfigError(f"unknown generator {gen!r}", fields=["generator"])
        return build_model("analysis_l1", sig, omega), sig, omega
    raise ConfigError(f"unknown family {family!r}", fields=["family"])


# ---------------------------------------------------------------------------
# tables


def run_table(config):
    exp = config.experiment
    if exp == "table1":
        return _table1(config)
    if exp == "table2":
        return _table2(config)
    if exp in ("table3", "table4"):
        return _table34(config)
    raise ConfigError(f"not a table experiment: {exp}", fields=["experiment"])


def _table1(config):
    n = int(config.params["n"])
    rows = []
    for s in config.params["s_list"]:
        sig = gen_simple_ground_truth("sparse", n, int(s), config.seed)
        model = build_model("l1", sig)
        est = paired_estimates(model, config.samples, config.seed, config.threads)
        ep = error_prior(model, sig)
        closed, _ = u_delta_l1_closed_form(n, int(s))
        rows.append([est["U_delta"].value, est["delta"].value,
                     est["E_delta"].value / n, ep / n, int(s), closed,
                     est["U_delta"].std_error, est["delta"].std_error, config.seed])
    cols = ["U_delta", "delta", "E_delta_over_n", "Ep_over_n", "s",
            "U_delta_closed_form", "U_std_error", "delta_std_error", "seed"]
    return write_csv(config.output_path, cols, rows, config)


def _table2(config):
    n = int(config.params["n"])
    omega = make_finite_difference(n)
    rows_out = []
    for i, row in enumerate(config.params["rows"]):
        s = int(row["s"])
        alpha = float(row.get("alpha", 0.0))
        seed = config.seed + i
        if alpha > 0.0:
            base = gen_cosparse(omega, s, seed)
            sig = gen_failure_signal(omega, base.support, "null_shift", alpha, seed)
        else:
            sig = gen_cosparse(omega, s, seed)
        model = build_model("analysis_l1", sig, omega)
        est = paired_estimates(model, config.samples, seed, config.threads)
        ep = error_prior(model, sig)
        ox = omega.entries @ sig.payload
        rows_out.append([est["U_delta"].value, est["delta"].value,
                         est["E_delta"].value / n, ep / n,
                         float(np.abs(sig.payload).mean()),
                         float(np.abs(ox).max()), s,
                         est["U_delta"].std_error, est["delta"].std_error, seed])
    cols = ["U_delta", "delta", "E_delta_over_n", "Ep_over_n", "avg_amplitude",
            "omega_x_inf", "s", "U_std_error", "delta_std_error", "seed"]
    return write_csv(config.output_path, cols, rows_out, config)


def _table34(config):
    rows_out = []
    for i, row in enumerate(config.params["rows"]):
        seed = config.seed + i
        model, sig, omega = build_instance(row, seed)
        n = sig.payload.size
        est = paired_estimates(model, config.samples, seed, config.threads)
        b = beta(model)
        report = error_new(model, est["omega"], sig)
        kappa = omega.condition_number() if omega is not None else 1.0
        rank = omega.rank() if omega is not None else n
        p = omega.p if omega is not None else n
        rows_out.append([row.get("label", row.get("family", "")), p, n, rank,
                         sig.support.size, kappa, b,
                         report.e_p_numerator_interval[0],
                         report.e_p / n, report.e_n / n,
                         est["E_delta"].value / n, 1, seed])
    cols = ["kind", "p", "n", "r", "s", "kappa", "beta", "Num_E",
            "Ep_over_n", "En_over_n", "E_delta_over_n", "qualitative", "seed"]
    return write_csv(config.output_path, cols, rows_out, config)


# ---------------------------------------------------------------------------
# figures


def run_figure(config):
    exp = config.experiment
    rows = []
    if exp == "fig1":
        n = int(config.params["n"])
        for s in config.params["s_list"]:
            prior = 2.0 * np.sqrt(n) / np.sqrt(float(s))
            u, _ = u_delta_l1_closed_form(n, int(s))
            new, _, _ = optimize_new_bound(np.sqrt(u), 1.0)
            rows.append([int(s), prior, new])
        cols = ["sparsity", "prior_bound", "new_bound"]
    elif exp == "fig2":
        q = int(config.params["q"])
        blen = int(config.params["block_len"])
        for s in config.params["s_list"]:
            prior = 2.0 * np.sqrt(q) / np.sqrt(float(s))
            u, _ = u_delta_l12_closed_form(q, blen, int(s))
            new, _, _ = optimize_new_bound(np.sqrt(u), 1.0)
            rows.append([int(s), prior, new])
        cols = ["sparsity", "prior_bound", "new_bound"]
    elif exp == "fig3":
        n1, n2 = int(config.params["n1"]), int(config.params["n2"])
        for r in config.params["r_list"]:
            prior = 2.0 * np.sqrt(n2) / np.sqrt(float(r))
            sig = gen_simple_ground_truth("low_rank", (n1, n2), int(r), config.seed)
            model = build_model("nuclear", sig)
            u_rep = estimate_U_delta(model, config.samples, config.seed, config.threads)
            new, _, _ = optimize_new_bound(np.sqrt(u_rep.value), 1.0)
            rows.append([int(r), prior, new])
        cols = ["rank", "prior_bound", "new_bound"]
    else:
        raise ConfigError(f"not a figure experiment: {exp}", fields=["experiment"])
    return write_csv(config.output_path, cols, rows, config)


# ---------------------------------------------------------------------------
# single-instance commands


def run_bounds(config):
    model, sig, _ = build_instance(config.params["instance"], config.seed)
    est = paired_estimates(model, config.samples, config.seed, config.threads,
                           include_gap=True)
    b = beta(model)
    report = error_new(model, est["omega"], sig)
    desc = json.dumps(config.params["instance"], sort_keys=True).replace(",", ";")
    rows = [est[k].csv_row(desc) for k in ("delta", "U_delta", "omega", "E_delta",
                                           "foygel_gap")]
    rows.append(["E_p", repr(float(report.e_p)), "", str(config.samples),
                 str(config.seed), "0", desc])
    rows.append(["E_n", repr(float(report.e_n)), "", str(config.samples),
                 str(config.seed), "0", desc])
    rows.append(["beta", repr(float(b)), "", str(config.samples),
                 str(config.seed), "0", desc])
    cols = ["quantity", "value", "std_error", "samples", "seed", "failures",
            "instance"]
    return write_csv(config.output_path, cols, rows, config)


def run_beta(config):
    model, sig, _ = build_instance(config.params["instance"], config.seed)
    b = beta(model)
    z0n = float(np.linalg.norm(model.z0))
    z1n = float(np.linalg.norm(model.z1))
    upper = float(np.linalg.norm(model.center)) / z0n if z0n else np.inf
    rows = [[b, z0n, z1n, upper, config.seed]]
    cols = ["beta", "z0_norm", "z1_norm", "beta_upper_bound", "seed"]
    return write_csv(config.output_path, cols, rows, config)


def run_decomposability(config, stream=sys.stdout):
    params = config.params
    if "omega" in params:
        omega = AnalysisOperator(np.asarray(params["omega"], dtype=float))
        x = np.asarray(params["x"], dtype=float)
        S = np.asarray(params["S"], dtype=int)
    else:
        # the standard counterexample triple
        omega = AnalysisOperator(np.array([[1.0, 1.0], [2.0, 1.0], [1.0, 2.0]]))
        x = np.array([-0.4472, 0.8944])
        S = np.array([0, 2])
    sig = StructuredSignal(x, "analysis_sparse", support=S)
    holds, v0, sup = weak_decomposability_check(omega, sig, S)
    print(f"v0 = {np.array2string(v0, precision=6)}, sup_norm = {sup:.6g}, "
          f"holds = {str(holds).lower()}", file=stream)
    rows = [[holds, sup] + [float(v) for v in v0]]
    cols = ["holds", "sup_norm"] + [f"v0_{i}" for i in range(v0.size)]
    return write_csv(config.output_path, cols, rows, config)


def run_sweep(config):
    model, sig, _ = build_instance(config.params["instance"], config.seed)
    grid = config.params["m_grid"]
    if isinstance(grid, dict):
        grid = list(range(int(grid["start"]), int(grid["stop"]) + 1, int(grid["step"])))
    result = phase_sweep(model, sig, grid, int(config.params["trials_per_m"]),
                         seed=config.seed, delta_samples=config.samples,
                         threads=config.threads)
    rows = result.csv_rows()
    path = write_csv(config.output_path, ["m", "successes", "trials"], rows, config)
    summary = result.summary()
    with open(os.path.splitext(config.output_path)[0] + ".json", "w") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
    return path


# ---------------------------------------------------------------------------
# CLI


RUNNERS = {
    "table1": run_table, "table2": run_table, "table3": run_table,
    "table4": run_table, "fig1": run_figure, "fig2": run_figure,
    "fig3": run_figure, "bounds": run_bounds, "beta": run_beta,
    "decomposability": run_decomposability, "sweep": run_sweep,
}


def _load_config(args, subcommand):
    data = {}
    if args.config:
        try:
            with open(args.config) as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}", fields=["config"])
    if subcommand in ("bounds", "beta", "decomposability", "sweep"):
        data.setdefault("experiment", subcommand)
    if subcommand == "table" and data.get("experiment") not in (
            "table1", "table2", "table3", "table4"):
        raise ConfigError("table requires experiment table1..table4",
                          fields=["experiment"])
    if subcommand == "figure" and data.get("experiment") not in ("fig1", "fig2", "fig3"):
        raise ConfigError("figure requires experiment fig1..fig3",
                          fields=["experiment"])
    if args.seed is not None:
        data["seed"] = args.seed
    if args.samples is not None:
        data["samples"] = args.samples
    if args.out is not None:
        data["out"] = args.out
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("CONEWIDTH_THREADS", "1"))
    data["threads"] = threads
    return RunConfig.from_dict(data)


def cli_entry(argv):
    parser = argparse.ArgumentParser(prog="conewidth",
                                     description="phase-transition quantities "
                                                 "for random linear inverse problems")
    sub = parser.add_subparsers(dest="command")
    for name in ("table", "figure", "bounds", "beta", "decomposability", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--threads", type=int, default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        config = _load_config(args, args.command)
        runner = RUNNERS[config.experiment]
        runner(config)
        return 0
    except ConfigError as exc:
        fields = f" (fields: {', '.join(exc.fields)})" if exc.fields else ""
        print(f"config error: {exc}{fields}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(cli_entry(sys.argv[1:]))


if __name__ == "__main__":
    main()
