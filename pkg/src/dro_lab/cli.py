"""Command-line front end: calibrate, worst-case, solve, verify, experiment."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import backend
from .calibration import (
    CalibrationError,
    CalibrationInput,
    chi2_ball_size,
    mmd_ball_size,
    w1_ball_size,
)
from .core import (
    DiscreteSupport,
    QuadLinearLoss,
    RngStream,
    SampleSet,
    UniformBox,
    loss_from_json,
    sample,
    spec_from_json,
)
from .distances import CHI2_NEYMAN, DiscreteDist
from .kernels import GaussianKernel, median_heuristic
from .lab import ExperimentConfig, write_outputs
from .robustify import (
    AmbiguitySet,
    DualWeights,
    KernelDual,
    MMDFamily,
    PhiBall,
    SolverConfig,
    W1Family,
    mmd_worst_case,
    phi_worst_case,
    w1_worst_case,
)
from .solve import dro_solve, erm_solve
from .verifier import coverage_chi2, coverage_mmd, decomposition_trials


@click.group()
@click.version_option(package_name="dro-lab")
def main():
    """Distributionally robust optimization workbench."""


def _emit(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


@main.command()
@click.option("--family", type=click.Choice(["mmd", "w1", "chi2"]), required=True)
@click.option("--n", type=int, required=True)
@click.option("--delta", type=float, required=True)
@click.option("--kernel-bound", "K", type=float, default=1.0, show_default=True)
@click.option("--m", type=int, default=None, help="support size (chi2)")
@click.option("--d", type=int, default=None, help="dimension (w1)")
@click.option("--c1", type=float, default=1.0, show_default=True)
@click.option("--c2", type=float, default=1.0, show_default=True)
@click.option("--shift", type=float, default=None, help="train-test distance to add")
def calibrate(family, n, delta, K, m, d, c1, c2, shift):
    """Print the concentration-calibrated ball radius as JSON."""
    inp = CalibrationInput(n=n, delta=delta, K=K, m=m, d=d, c1=c1, c2=c2, shift=shift)
    try:
        if family == "mmd":
            eta = mmd_ball_size(inp)
            formula = "(K/sqrt(n)) (1 + sqrt(2 log(1/delta)))" + (" + shift" if shift else "")
        elif family == "w1":
            eta = w1_ball_size(inp)
            formula = "(log(c1/delta)/(c2 n))^(1/max(d,2))" + (" + shift" if shift else "")
        else:
            eta = chi2_ball_size(inp)
            formula = "(m + 2 log(4/delta) + 2 sqrt(m log(4/delta)))/n"
    except CalibrationError as exc:
        raise click.ClickException(str(exc))
    _emit({"family": family, "eta": eta, "formula": formula, "n": n, "delta": delta})


# ---------------------------------------------------------------------------
# shared problem parsing
# ---------------------------------------------------------------------------


def _load_problem(path):
    with open(path) as fh:
        obj = json.load(fh)
    loss = loss_from_json(obj["loss"])
    box = spec_from_json(obj["box"]) if "box" in obj else None
    if "data" in obj:
        center = SampleSet(data=np.asarray(obj["data"], float))
    elif "center" in obj:
        c = obj["center"]
        center = DiscreteSupport(points=np.asarray(c["points"], float), probs=np.asarray(c["probs"], float))
    else:
        raise click.ClickException("problem needs either 'data' or 'center'")
    return obj, loss, center, box


def _ambiguity(obj, family, center):
    eta = float(obj["radius"])
    if family == "mmd":
        if "sigma" in obj:
            kernel = GaussianKernel(sigma=float(obj["sigma"]))
        else:
            data = center.data if isinstance(center, SampleSet) else center.points
            kernel = GaussianKernel(sigma=median_heuristic(SampleSet(data=data)))
        return AmbiguitySet(family=MMDFamily(kernel=kernel), center=center, radius=eta)
    if family == "w1":
        return AmbiguitySet(family=W1Family(), center=center, radius=eta)
    return AmbiguitySet(family=PhiBall(family=CHI2_NEYMAN), center=center, radius=eta)


def _wc_report_json(rep):
    cert = rep.certificate
    if isinstance(cert, DualWeights):
        cert_obj = {
            "kind": "dual-weights",
            "points": cert.worst_dist.points.tolist(),
            "probs": cert.worst_dist.probs.tolist(),
        }
    elif isinstance(cert, KernelDual):
        cert_obj = {
            "kind": "kernel-dual",
            "centers": cert.coeffs.centers.tolist(),
            "weights": cert.coeffs.weights.tolist(),
            "feasibility_residual": cert.feasibility_residual,
            "gap_estimate": cert.gap_estimate,
        }
    else:
        cert_obj = {"kind": "w1-dual", "lam": cert.lam}
    out = {
        "value": rep.value,
        "empirical_mean": rep.empirical_mean,
        "iterations": rep.iterations,
        "tolerance_met": rep.tolerance_met,
        "certificate": cert_obj,
    }
    if rep.upper_bound is not None:
        out["upper_bound"] = rep.upper_bound
    return out


@main.command("worst-case")
@click.option("--problem", type=click.Path(exists=True), required=True, help="JSON problem file")
@click.option("--family", type=click.Choice(["mmd", "w1", "chi2"]), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
def worst_case(problem, family, seed):
    """Worst-case expected loss over the chosen ambiguity ball."""
    obj, loss, center, box = _load_problem(problem)
    theta = np.asarray(obj["theta"], float)
    aset = _ambiguity(obj, family, center)
    cfg = SolverConfig()
    if family == "mmd":
        if box is None or not isinstance(box, UniformBox):
            raise click.ClickException("mmd worst-case needs a 'box' for constraint sampling")
        rep = mmd_worst_case(aset, loss, theta, box, cfg=cfg, rng=RngStream(seed=seed))
    elif family == "w1":
        rep = w1_worst_case(aset, loss, theta, box=box, cfg=cfg)
    else:
        rep = phi_worst_case(aset, loss, theta, cfg=cfg)
    _emit(_wc_report_json(rep))


@main.command()
@click.option("--method", type=click.Choice(["erm", "mmd-dro", "w1-dro", "chi2-dro"]), required=True)
@click.option("--problem", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), default=None, help="also write the report here")
def solve(method, problem, out):
    """Solve the outer minimization and print a SolveReport as JSON."""
    obj, loss, center, box = _load_problem(problem)
    if method == "erm":
        data = center if isinstance(center, SampleSet) else SampleSet(data=center.points)
        rep = erm_solve(loss, data)
    else:
        aset = _ambiguity(obj, method.split("-")[0], center)
        rep = dro_solve(loss, aset, box=box)
    payload = {
        "theta": rep.theta.tolist(),
        "objective": rep.objective,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "method": rep.method,
    }
    _emit(payload)
    if out:
        Path(out).write_text(json.dumps(payload, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


@main.group()
def verify():
    """Monte-Carlo verification of coverage and decomposition properties."""


def _coverage_out(rep, out):
    payload = {
        "trials": rep.trials,
        "hits": rep.hits,
        "rate": rep.rate,
        "target": rep.target,
        "ci_halfwidth": rep.ci_halfwidth,
        "below_regime": rep.below_regime,
        "passed": rep.rate >= rep.target - rep.ci_halfwidth,
    }
    _emit(payload)
    if out:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(sorted(payload))
            w.writerow([payload[k] for k in sorted(payload)])
    sys.exit(0 if payload["passed"] else 1)


@verify.command("coverage-mmd")
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--delta", type=float, default=0.05, show_default=True)
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--b", "B", type=float, default=1.0, show_default=True)
@click.option("--d", type=int, default=1, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def verify_coverage_mmd(n, delta, trials, B, d, sigma, seed, out):
    box = UniformBox.symmetric(B, d)
    rep = coverage_mmd(box, GaussianKernel(sigma=sigma), n, delta, trials, RngStream(seed=seed))
    _coverage_out(rep, out)


@verify.command("coverage-chi2")
@click.option("--probs", type=str, required=True, help="comma-separated support probabilities")
@click.option("--n", type=int, default=2000, show_default=True)
@click.option("--delta", type=float, default=0.2, show_default=True)
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def verify_coverage_chi2(probs, n, delta, trials, seed, out):
    p = np.array([float(x) for x in probs.split(",")])
    dist = DiscreteDist(points=np.arange(len(p), dtype=float)[:, None], probs=p)
    rep = coverage_chi2(dist, n, delta, trials, RngStream(seed=seed))
    _coverage_out(rep, out)


@verify.command("decomposition")
@click.option("--family", type=click.Choice(["mmd", "w1", "chi2"]), default="mmd", show_default=True)
@click.option("--n", type=int, default=50, show_default=True)
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--b", "B", type=float, default=1.0, show_default=True)
@click.option("--d", type=int, default=5, show_default=True)
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--eta", type=float, default=None, help="ball radius; default from calibration (mmd) or 0.5")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def verify_decomposition(family, n, trials, B, d, delta, eta, seed, out):
    box = UniformBox.symmetric(B, d)
    if eta is None:
        eta = mmd_ball_size(CalibrationInput(n=n, delta=delta)) if family == "mmd" else 0.5

    def make_instance(stream):
        gen = stream.child(0).generator()
        v = 0.5 + 0.5 * gen.random(d)
        loss = QuadLinearLoss(v=v)
        data = sample(box, n, stream.child(1))
        if family == "mmd":
            kernel = GaussianKernel(sigma=median_heuristic(data))
            fam = MMDFamily(kernel=kernel)
            center = data
        elif family == "w1":
            fam = W1Family()
            center = data
        else:
            fam = PhiBall(family=CHI2_NEYMAN)
            center = data
        aset = AmbiguitySet(family=fam, center=center, radius=eta)
        return loss, aset, data, box, v

    summary = decomposition_trials(make_instance, trials, RngStream(seed=seed))
    payload = {
        "family": family,
        "trials": summary.trials,
        "used": summary.used,
        "excluded": summary.excluded,
        "term2_ok": summary.term2_ok,
        "term2_rate": summary.term2_rate,
        "covered": summary.covered,
        "term1_ok_given_covered": summary.term1_ok_given_covered,
        "passed": summary.term2_ok == summary.used and summary.excluded <= 0.01 * summary.trials,
    }
    _emit(payload)
    if out:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "term1", "term2", "term3", "excess", "covered", "converged"])
            for i, r in enumerate(summary.reports):
                w.writerow([i, repr(r.term1), repr(r.term2), repr(r.term3), repr(r.excess), r.covered, r.converged])
    sys.exit(0 if payload["passed"] else 1)


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


@main.command()
@click.option("--config", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="override the config seed")
@click.option("--threads", type=int, default=1, show_default=True)
def experiment(config, out, seed, threads):
    """Run a sweep from a JSON config; exit 0 only if its assertions pass."""
    with open(config) as fh:
        obj = json.load(fh)
    if seed is not None:
        obj["seed"] = seed
    cfg = ExperimentConfig.from_json(obj)
    records, rows, checks = write_outputs(cfg, out, threads=threads)
    click.echo(f"wrote {len(records)} records to {out} (backend: {backend.BACKEND})")
    failed = 0
    for desc, ok in checks:
        click.echo(("PASS " if ok else "FAIL ") + desc)
        failed += 0 if ok else 1
    sys.exit(0 if failed == 0 else 1)


if __name__ == "__main__":
    main()
