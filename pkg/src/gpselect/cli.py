"""Command-line interface: spectrum/entropy/small-ball diagnostics, prior
sampling, model fitting, and the consistency experiment driver."""

from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import eigen, harness, inference, prior, rkhs, smallball
from .rkhs import SmoothnessSpec


def _emit(rows: list[dict], fmt: str):
    if fmt == "json":
        click.echo(json.dumps(rows, indent=2))
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


@click.group()
def main():
    """Variable-selecting rescaled-SE GP regression and its theory lab."""


@main.command("eigen")
@click.option("--xi", type=float, default=1.0, show_default=True)
@click.option("--a", type=float, default=1.0, show_default=True)
@click.option("--gamma-size", type=int, default=1, show_default=True)
@click.option("--budget", type=int, default=20, show_default=True)
@click.option("--emit", type=click.Choice(["json", "csv"]), default="json")
def eigen_cmd(xi, a, gamma_size, budget, emit):
    """Ordered spectrum and eigen-constants."""
    c = eigen.compute_constants(xi, a)
    gamma = eigen.SparsityPattern.from_indices(gamma_size, range(gamma_size))
    spec = eigen.enumerate_spectrum(gamma, c, budget)
    rows = [
        {"index": k, "multi_index": "/".join(map(str, mi)), "eigenvalue": mu}
        for k, (mi, mu) in enumerate(spec.order)
    ]
    if emit == "json":
        out = {
            "constants": {
                "v1": c.v1, "v2": c.v2, "v3": c.v3, "V": c.V, "B": c.B,
            },
            "spectrum": rows,
        }
        click.echo(json.dumps(out, indent=2))
    else:
        _emit(rows, "csv")


@main.command("rkhs")
@click.option("--xi", type=float, default=1.0, show_default=True)
@click.option("--a", type=float, default=1.0, show_default=True)
@click.option("--gamma-size", type=int, default=1, show_default=True)
@click.option("--epsilon-grid", default="0.1,0.05,0.02", show_default=True)
@click.option("--emit", type=click.Choice(["json", "csv"]), default="csv")
def rkhs_cmd(xi, a, gamma_size, epsilon_grid, emit):
    """Entropy bounds over an epsilon grid."""
    c = eigen.compute_constants(xi, a)
    gamma = eigen.SparsityPattern.from_indices(gamma_size, range(gamma_size))
    spec = eigen.enumerate_spectrum(gamma, c, 10)
    ell = rkhs.Ellipsoid(spec)
    rows = []
    for tok in epsilon_grid.split(","):
        eps = float(tok)
        est = rkhs.entropy_bounds(ell, eps)
        if isinstance(est, rkhs.HypothesisViolation):
            rows.append({"epsilon": eps, "status": est.reason})
        else:
            rows.append(
                {
                    "epsilon": eps,
                    "status": "ok",
                    "m_star": est.m_star,
                    "tau": est.tau,
                    "log_lower": est.log_lower,
                    "log_upper": est.log_upper,
                }
            )
    _emit(rows, emit)


@main.command("smallball")
@click.option("--xi", type=float, default=1.0, show_default=True)
@click.option("--a", type=float, default=1.0, show_default=True)
@click.option("--gamma-size", type=int, default=1, show_default=True)
@click.option("--epsilon", type=float, default=0.2, show_default=True)
@click.option("--samples", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--emit", type=click.Choice(["json", "csv"]), default="json")
def smallball_cmd(xi, a, gamma_size, epsilon, samples, seed, emit):
    """Centered small-ball probability estimate."""
    c = eigen.compute_constants(xi, a)
    gamma = eigen.SparsityPattern.from_indices(gamma_size, range(gamma_size))
    budget = eigen.truncation_budget(gamma_size, c, epsilon**2 / 100.0)
    spec = eigen.enumerate_spectrum(gamma, c, budget)
    est = smallball.centered_small_ball(spec, epsilon, samples, seed)
    _emit([est.__dict__ | {"prob": est.prob}], emit)


@main.command("prior-sample")
@click.option("--config", type=click.Path(exists=True), required=True)
@click.option("--n-draws", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def prior_sample_cmd(config, n_draws, seed):
    """Diagnostic draws from the hierarchical prior (JSON config)."""
    cfg = json.loads(Path(config).read_text())
    blk = cfg["prior"]
    xi = blk.get("xi", 1.0)
    d_n = blk.get("d_n", 8)
    n = blk.get("n", 100)
    sp = prior.SparsityPriorConfig(
        kind=blk["size_prior"]["kind"], d_n=d_n, n=n,
        k=blk["size_prior"].get("k", 1.0),
    )
    rs = prior.RescalingPriorConfig(rate=blk["rescaling"].get("rate", 1.0), xi=xi)
    design = eigen.DesignSpec(dim=d_n, xi=xi)
    rows = []
    for i in range(n_draws):
        gamma, a, _fn = prior.sample_prior_function(sp, rs, design, 20, [seed, i])
        rows.append(
            {"draw": i, "gamma": "".join(map(str, gamma.bits)), "a": a}
        )
    _emit(rows, "json")


@main.command("fit")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--config", type=click.Path(exists=True), required=True)
@click.option("--iters", type=int, default=5000, show_default=True)
@click.option("--burn-in", type=int, default=1000, show_default=True)
@click.option("--chains", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--trace-out", type=click.Path(), default=None)
@click.option("--emit", type=click.Choice(["json", "csv"]), default="json")
def fit_cmd(data_path, config, iters, burn_in, chains, seed, sigma, trace_out, emit):
    """Fit the model to CSV data (columns x1..xd, y)."""
    rows = list(csv.DictReader(open(data_path)))
    d = sum(1 for k in rows[0] if k.startswith("x"))
    X = np.array([[float(r[f"x{j + 1}"]) for j in range(d)] for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    data = inference.Dataset(X=X, y=y, sigma=sigma)

    cfg = json.loads(Path(config).read_text())
    blk = cfg["prior"]
    xi = blk.get("xi", 1.0)
    sp = prior.SparsityPriorConfig(
        kind=blk["size_prior"]["kind"], d_n=d, n=len(y),
        k=blk["size_prior"].get("k", 1.0),
    )
    rs = prior.RescalingPriorConfig(rate=blk["rescaling"].get("rate", 1.0), xi=xi)
    cache = inference.MarginalCache(data)
    seeds = np.random.SeedSequence(seed).spawn(chains)
    traces = [
        inference.mcmc_run(data, sp, rs, iters, s, cache=cache) for s in seeds
    ]
    if trace_out:
        with open(trace_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "gamma_bits_hex", "log_a", "log_marginal"])
            for ci, t in enumerate(traces):
                for i, s in enumerate(t.states):
                    bits_hex = hex(int("".join(map(str, s.gamma.bits)), 2))
                    w.writerow([i, bits_hex, s.log_a, s.log_marginal])
    summary = inference.summarize(traces, burn_in=burn_in, xi=xi)
    out = {
        "inclusion_probs": summary.inclusion_probs.tolist(),
        "top_models": [
            {"gamma": "".join(map(str, b)), "frequency": f}
            for b, f in summary.top_models
        ],
        "acceptance_rates": [t.acceptance_rate for t in traces],
    }
    click.echo(json.dumps(out, indent=2))


@main.command("simulate")
@click.option("--d0", type=int, default=2, show_default=True)
@click.option("--d-n", type=int, default=8, show_default=True)
@click.option("--n", type=int, default=200, show_default=True)
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--xi", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=1.001, show_default=True)
@click.option("--alpha", type=float, default=1.4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def simulate_cmd(d0, d_n, n, sigma, xi, beta, alpha, seed, out):
    """Emit a synthetic dataset CSV."""
    spec = harness.TruthSpec(
        d0=d0, smoothness=SmoothnessSpec(beta=beta, alpha=alpha, d0=d0), seed=seed
    )
    truth = harness.make_truth(spec)
    design = eigen.DesignSpec(dim=d_n, xi=xi)
    data = harness.generate_dataset(truth, design, n, sigma, seed)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(d_n)] + ["y"])
        for i in range(n):
            w.writerow(list(data.X[i]) + [data.y[i]])
    click.echo(f"wrote {n} rows to {out} (signal strength {truth.delta_hat:.4f})")


@main.command("consistency")
@click.option("--plan", "plan_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--workers", type=int, default=None)
def consistency_cmd(plan_path, out, workers):
    """Run the full consistency sweep from a JSON plan file."""
    if plan_path:
        raw = json.loads(Path(plan_path).read_text())
        plan_kwargs = raw.get("plan", {})
        if "n_grid" in plan_kwargs:
            plan_kwargs["n_grid"] = tuple(plan_kwargs["n_grid"])
        plan = harness.ExperimentPlan(**plan_kwargs)
        t = raw.get("truth", {})
        spec = harness.TruthSpec(
            d0=t.get("d0", 2),
            smoothness=SmoothnessSpec(
                beta=t.get("beta", 1.001), alpha=t.get("alpha", 1.4),
                d0=t.get("d0", 2),
            ),
            seed=t.get("seed", 7),
            delta_floor=t.get("delta_floor", 0.05),
        )
    else:
        plan = harness.default_plan()
        spec = harness.default_truth_spec()
    truth = harness.make_truth(spec)
    rows = harness.run_consistency(plan, truth, out, workers=workers)
    click.echo(f"completed {len(rows)} cells -> {out}")


@main.command("report")
@click.option("--results", type=click.Path(exists=True), required=True)
@click.option("--d0", type=int, default=2, show_default=True)
@click.option("--beta", type=float, default=1.001, show_default=True)
@click.option("--emit", type=click.Choice(["json", "csv"]), default="json")
def report_cmd(results, d0, beta, emit):
    """Slope fits and per-n medians from a sweep CSV."""
    rows = list(csv.DictReader(open(results)))
    fit = harness.contraction_slope(rows, d0=d0, beta=beta)
    ns = sorted({int(r["n"]) for r in rows})
    med = []
    for n in ns:
        sub = [r for r in rows if int(r["n"]) == n]
        med.append(
            {
                "n": n,
                "median_prob_true_model": float(
                    np.median([float(r["prob_true_model"]) for r in sub])
                ),
                "median_fp_mass": float(np.median([float(r["fp_mass"]) for r in sub])),
                "median_l2_error": float(
                    np.median([float(r["l2_error_of_mean"]) for r in sub])
                ),
            }
        )
    out = {
        "slope": fit.slope,
        "slope_ci": [fit.ci_low, fit.ci_high],
        "theoretical_target": fit.target,
        "per_n": med,
    }
    if emit == "json":
        click.echo(json.dumps(out, indent=2))
    else:
        _emit(med, "csv")


if __name__ == "__main__":
    main()
