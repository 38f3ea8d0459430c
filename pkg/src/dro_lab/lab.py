"""Experiment harness: sweeps, trial records, summaries, and SVG figures.

The synthetic task is the quadratic loss with a linear perturbation,
l(theta, z) = 0.5||theta - v||^2 + z.(theta - v), with z uniform on
[-B, B]^d and the target v drawn fresh each trial from [1/2, 1]^d (the
learner is told v, so the loss is fully specified). Excess risk has the
closed form 0.5||theta - v + mu||^2 with mu the evaluation mean, so every
recorded number is exact, not simulated.

All artifacts are pure functions of (config, seed): CSV and SVG bytes are
reproducible. Timing is off by default for that reason; enabling it fills
the wallclock_s column with measured values and gives up byte-identity.
"""

from __future__ import annotations

import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    QuadLinearLoss,
    RngStream,
    ShiftedPair,
    UniformBox,
    ValidationError,
    excess_risk,
    sample,
    spec_from_json,
    spec_to_json,
)
from .distances import CHI2_NEYMAN, DiscreteDist
from .kernels import GaussianKernel, median_heuristic
from .qp import min_mean_sq_in_mmd_ball, zero_mean_stage
from .robustify import AmbiguitySet, PhiBall, SolverConfig
from .solve import dro_solve

__all__ = [
    "METHODS",
    "DEFAULT_ETA_GRID",
    "ExperimentConfig",
    "TrialRecord",
    "SummaryRow",
    "run_experiment",
    "summarize",
    "render_lines",
    "records_csv",
    "summary_csv",
    "write_outputs",
    "evaluate_assertions",
]

METHODS = ("erm", "mmd-dro", "w1-dro", "chi2-dro")
DEFAULT_ETA_GRID = (0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

RECORDS_HEADER = "trial_id,method,n,eta,B,d,seed,excess_risk,converged,wallclock_s"
SUMMARY_HEADER = "method,n,eta,B,count,mean,median,q1,q3,converged_rate,oracle_best"


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 5
    B: float = 1.0
    n_grid: Tuple[int, ...] = (50,)
    eta_grid: Tuple[float, ...] = DEFAULT_ETA_GRID
    methods: Tuple[str, ...] = ("erm", "mmd-dro")
    trials: int = 100
    delta: float = 0.05
    shift: Optional[ShiftedPair] = None
    seed: int = 0
    measure_time: bool = False
    assertions: Tuple[dict, ...] = ()

    def __post_init__(self):
        if self.d < 1 or self.B <= 0:
            raise ValidationError("need d >= 1 and B > 0")
        if not self.n_grid or not self.eta_grid:
            raise ValidationError("n and eta grids must be nonempty")
        if self.trials < 10:
            raise ValidationError("need at least 10 trials")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValidationError(f"unknown methods {bad}; choose from {METHODS}")

    @staticmethod
    def from_json(obj: dict) -> "ExperimentConfig":
        kw = dict(obj)
        for key in ("n_grid", "eta_grid", "methods", "assertions"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if kw.get("shift") is not None:
            pair = kw["shift"]
            kw["shift"] = ShiftedPair(
                train=spec_from_json(pair["train"]), test=spec_from_json(pair["test"])
            )
        return ExperimentConfig(**kw)

    def to_json(self) -> dict:
        out = {
            "d": self.d,
            "B": self.B,
            "n_grid": list(self.n_grid),
            "eta_grid": list(self.eta_grid),
            "methods": list(self.methods),
            "trials": self.trials,
            "delta": self.delta,
            "seed": self.seed,
            "measure_time": self.measure_time,
            "assertions": [dict(a) for a in self.assertions],
        }
        if self.shift is not None:
            out["shift"] = {
                "train": spec_to_json(self.shift.train),
                "test": spec_to_json(self.shift.test),
            }
        return out


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    method: str
    n: int
    eta: float
    B: float
    d: int
    seed: int
    v: np.ndarray
    theta: np.ndarray
    excess_risk: float
    converged: bool
    wallclock: float

    def __post_init__(self):
        if self.excess_risk < -1e-12:
            raise ValidationError(f"negative excess risk {self.excess_risk}")


# ---------------------------------------------------------------------------
# the sweep
# ---------------------------------------------------------------------------


def _trial(cfg: ExperimentConfig, n: int, trial: int, stream: RngStream) -> List[TrialRecord]:
    box = UniformBox.symmetric(cfg.B, cfg.d)
    train_spec = cfg.shift.train if cfg.shift is not None else box
    test_spec = cfg.shift.test if cfg.shift is not None else box

    gen_v = stream.child(0).generator()
    v = 0.5 + 0.5 * gen_v.random(cfg.d)
    loss = QuadLinearLoss(v=v)
    data = sample(train_spec, n, stream.child(1))
    zbar = np.mean(data.data, axis=0)

    clock = time.perf_counter if cfg.measure_time else (lambda: 0.0)
    out: List[TrialRecord] = []

    def rec(method, eta, theta, converged, dt):
        ex = excess_risk(loss, test_spec, theta)
        out.append(
            TrialRecord(
                trial_id=trial, method=method, n=n, eta=float(eta), B=cfg.B, d=cfg.d,
                seed=cfg.seed, v=v, theta=np.asarray(theta, float),
                excess_risk=ex, converged=converged, wallclock=dt,
            )
        )

    # discrete view of the sample, shared by the restricted-support solvers
    uniq, inv = np.unique(data.data, axis=0, return_inverse=True)
    probs = np.bincount(inv, minlength=uniq.shape[0]) / n
    center = DiscreteDist(points=uniq, probs=probs)

    for method in cfg.methods:
        if method == "erm":
            t0 = clock()
            theta = v - zbar
            rec("erm", 0.0, theta, True, clock() - t0)
            continue

        if method == "mmd-dro":
            sigma = median_heuristic(data)
            kernel = GaussianKernel(sigma=sigma)
            K = kernel.matrix(uniq, uniq)
            stage1 = zero_mean_stage(uniq, K, probs)
            for eta in cfg.eta_grid:
                t0 = clock()
                q, _ = min_mean_sq_in_mmd_ball(uniq, K, probs, eta, stage1=stage1)
                theta = v - uniq.T @ q
                rec("mmd-dro", eta, theta, True, clock() - t0)
            continue

        if method == "w1-dro":
            nz = float(np.linalg.norm(zbar))
            for eta in cfg.eta_grid:
                t0 = clock()
                scale = max(nz - eta, 0.0) / nz if nz > 0 else 0.0
                theta = v - scale * zbar
                rec("w1-dro", eta, theta, True, clock() - t0)
            continue

        # chi2-dro on the empirical support (the only center the restricted
        # analysis covers for continuous z)
        fam = PhiBall(family=CHI2_NEYMAN)
        for eta in cfg.eta_grid:
            t0 = clock()
            aset = AmbiguitySet(family=fam, center=center, radius=eta)
            rep = dro_solve(loss, aset, cfg=SolverConfig())
            rec("chi2-dro", eta, rep.theta, rep.converged, clock() - t0)

    return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> List[TrialRecord]:
    """Run the full sweep; deterministic in (cfg.seed, cfg) for any thread count."""
    root = RngStream(seed=cfg.seed)
    jobs = []
    for ni, n in enumerate(cfg.n_grid):
        for t in range(cfg.trials):
            jobs.append((n, t, root.child(ni).child(t)))
    if threads <= 1:
        chunks = [_trial(cfg, n, t, s) for n, t, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_trial, cfg, n, t, s) for n, t, s in jobs]
            chunks = [f.result() for f in futures]
    records: List[TrialRecord] = []
    for chunk in chunks:
        records.extend(chunk)
    records.sort(key=lambda r: (r.n, r.trial_id, METHODS.index(r.method), r.eta))
    return records


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    method: str
    n: int
    eta: float
    B: float
    count: int
    mean: float
    median: float
    q1: float
    q3: float
    converged_rate: float
    oracle_best: bool = False


def summarize(records: Sequence[TrialRecord]) -> List[SummaryRow]:
    """Per-(method, n, eta, B) statistics, with the best eta per (method, n, B)
    flagged oracle_best (tuned on the true excess risk)."""
    if not records:
        raise ValidationError("no records to summarize")
    groups: Dict[Tuple, List[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.method, r.n, r.eta, r.B), []).append(r)
    rows = []
    for (method, n, eta, B), rs in sorted(
        groups.items(), key=lambda kv: (kv[0][1], METHODS.index(kv[0][0]), kv[0][2])
    ):
        x = np.array([r.excess_risk for r in rs])
        rows.append(
            SummaryRow(
                method=method, n=n, eta=eta, B=B, count=len(rs),
                mean=float(np.mean(x)), median=float(np.median(x)),
                q1=float(np.quantile(x, 0.25)), q3=float(np.quantile(x, 0.75)),
                converged_rate=float(np.mean([r.converged for r in rs])),
            )
        )
    # flag the oracle-tuned eta: lowest median, ties to lowest mean then eta
    best: Dict[Tuple, SummaryRow] = {}
    for row in rows:
        key = (row.method, row.n, row.B)
        cur = best.get(key)
        if cur is None or (row.median, row.mean, row.eta) < (cur.median, cur.mean, cur.eta):
            best[key] = row
    chosen = {id(v) for v in best.values()}
    return [replace(r, oracle_best=id(r) in chosen) for r in rows]


def records_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    buf.write(RECORDS_HEADER + "\n")
    for r in records:
        buf.write(
            f"{r.trial_id},{r.method},{r.n},{r.eta!r},{r.B!r},{r.d},{r.seed},"
            f"{r.excess_risk!r},{int(r.converged)},{r.wallclock:.6f}\n"
        )
    return buf.getvalue()


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    buf.write(SUMMARY_HEADER + "\n")
    for r in rows:
        buf.write(
            f"{r.method},{r.n},{r.eta!r},{r.B!r},{r.count},{r.mean!r},{r.median!r},"
            f"{r.q1!r},{r.q3!r},{r.converged_rate!r},{int(r.oracle_best)}\n"
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# SVG rendering (hand-emitted, byte-stable)
# ---------------------------------------------------------------------------

_W, _H = 800, 500
_ML, _MR, _MT, _MB = 70, 160, 40, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_FLOOR = 1e-20  # log-scale floor; exact zeros are clamped here, not dropped


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def render_lines(
    series: Sequence[Tuple[str, Sequence[Tuple[float, float]]]],
    xlabel: str,
    ylabel: str = "excess risk",
    title: str = "",
) -> str:
    """800x500 SVG line chart with a log10 y axis.

    `series` is an ordered list of (label, [(x, y), ...]). Non-finite y
    values are dropped and counted in a footnote; zeros are clamped to the
    plot floor so the log axis can show them.
    """
    dropped = 0
    clean: List[Tuple[str, List[Tuple[float, float]]]] = []
    for label, pts in series:
        keep = []
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                dropped += 1
                continue
            keep.append((float(x), max(float(y), _FLOOR)))
        clean.append((label, keep))

    xs = [x for _, pts in clean for x, _ in pts]
    ys = [y for _, pts in clean for _, y in pts]
    if not xs:
        xs, ys = [0.0, 1.0], [_FLOOR, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    ly_lo = math.floor(math.log10(min(ys)))
    ly_hi = math.ceil(math.log10(max(ys)))
    if ly_hi == ly_lo:
        ly_hi += 1

    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(x: float) -> float:
        return _ML + pw * (x - x_lo) / (x_hi - x_lo)

    def py(y: float) -> float:
        return _MT + ph * (ly_hi - math.log10(y)) / (ly_hi - ly_lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" '
        f'width="{_W}" height="{_H}" font-family="sans-serif" font-size="13">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{_ML}" y="{_MT - 12}" font-size="15">{title}</text>')

    # y decade gridlines and labels
    step = max(1, (ly_hi - ly_lo) // 10)
    for e in range(ly_lo, ly_hi + 1, step):
        y = py(10.0**e)
        out.append(
            f'<line x1="{_ML}" y1="{_fmt(y)}" x2="{_ML + pw}" y2="{_fmt(y)}" '
            f'stroke="#dddddd"/>'
        )
        out.append(f'<text x="{_ML - 8}" y="{_fmt(y + 4)}" text-anchor="end">1e{e}</text>')
    # x ticks at distinct data positions (up to 15)
    ticks = sorted(set(xs))
    if len(ticks) > 15:
        ticks = ticks[:: max(1, len(ticks) // 15)]
    for x in ticks:
        out.append(
            f'<line x1="{_fmt(px(x))}" y1="{_MT + ph}" x2="{_fmt(px(x))}" '
            f'y2="{_MT + ph + 5}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_fmt(px(x))}" y="{_MT + ph + 20}" text-anchor="middle">{x:g}</text>'
        )
    out.append(
        f'<text x="{_ML + pw / 2:.1f}" y="{_H - 18}" text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="18" y="{_MT + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_MT + ph / 2:.1f})">{ylabel}</text>'
    )

    for i, (label, pts) in enumerate(clean):
        color = _COLORS[i % len(_COLORS)]
        if pts:
            coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in pts)
            out.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
            for x, y in pts:
                out.append(
                    f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" fill="{color}"/>'
                )
        ly = _MT + 16 + 20 * i
        lx = _ML + pw + 14
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{lx + 30}" y="{ly}">{label}</text>')

    if dropped > 0:
        out.append(
            f'<text x="{_ML}" y="{_H - 4}" font-size="11" fill="#777777">'
            f"{dropped} non-finite point(s) dropped</text>"
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _series_vs_n(rows: Sequence[SummaryRow], methods: Sequence[str]):
    series = []
    for m in methods:
        pts = [(float(r.n), r.median) for r in rows if r.method == m and (m == "erm" or r.oracle_best)]
        series.append((m if m == "erm" else f"{m} (oracle-tuned eta)", sorted(pts)))
    return series


def _series_vs_eta(rows: Sequence[SummaryRow], methods: Sequence[str], n: int):
    etas = sorted({r.eta for r in rows if r.method != "erm" and r.n == n})
    series = []
    for m in methods:
        if m == "erm":
            med = [r.median for r in rows if r.method == "erm" and r.n == n]
            if med and etas:
                series.append(("erm", [(e, med[0]) for e in etas]))
            continue
        pts = sorted((r.eta, r.median) for r in rows if r.method == m and r.n == n)
        series.append((m, pts))
    return series


def evaluate_assertions(rows: Sequence[SummaryRow], assertions: Sequence[dict]) -> List[Tuple[str, bool]]:
    """Check config-supplied assertions against the summary.

    Supported kinds: median_excess_max {method, n, max, eta: number|"best"}
    and mean_excess_range {method, n, eta, min, max}.
    """
    results = []
    for a in assertions:
        kind = a["kind"]
        sel = [r for r in rows if r.method == a["method"] and r.n == a["n"]]
        if a.get("eta") == "best":
            sel = [r for r in sel if r.oracle_best]
        elif a.get("eta") is not None:
            sel = [r for r in sel if r.eta == a["eta"]]
        if not sel:
            results.append((f"{kind}({a['method']}, n={a['n']}): no matching rows", False))
            continue
        r = sel[0]
        if kind == "median_excess_max":
            ok = r.median <= a["max"]
            results.append((f"median_excess_max({a['method']}, n={a['n']}): {r.median!r} <= {a['max']!r}", ok))
        elif kind == "mean_excess_range":
            ok = a["min"] <= r.mean <= a["max"]
            results.append(
                (f"mean_excess_range({a['method']}, n={a['n']}): {a['min']!r} <= {r.mean!r} <= {a['max']!r}", ok)
            )
        else:
            results.append((f"unknown assertion kind {kind!r}", False))
    return results


def write_outputs(cfg: ExperimentConfig, out_dir, threads: int = 1):
    """Run the sweep and write records.csv, summary.csv, fig_n.svg, fig_eta.svg.

    Returns (records, summary rows, assertion results).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = run_experiment(cfg, threads=threads)
    rows = summarize(records)
    (out / "records.csv").write_text(records_csv(records))
    (out / "summary.csv").write_text(summary_csv(rows))
    n_big = max(cfg.n_grid)
    fig_n = render_lines(
        _series_vs_n(rows, cfg.methods), xlabel="n",
        title=f"excess risk vs n (B={cfg.B:g}, d={cfg.d}, {cfg.trials} trials, median)",
    )
    fig_eta = render_lines(
        _series_vs_eta(rows, cfg.methods, n_big), xlabel="eta",
        title=f"excess risk vs eta (n={n_big}, B={cfg.B:g}, d={cfg.d}, median)",
    )
    (out / "fig_n.svg").write_text(fig_n)
    (out / "fig_eta.svg").write_text(fig_eta)
    checks = evaluate_assertions(rows, cfg.assertions)
    return records, rows, checks
