"""Seeded experiment harness with CSV output.

Each experiment splits its work into a fixed number of independent streams
keyed by (master seed, experiment, stream index); workers only change how
streams are scheduled, never what they compute, and aggregation runs in
stream order, so rows are bit-identical for a fixed (config, seed, workers)
and stable across worker counts.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import barrier, cue, gaussian_field as gf, toeplitz
from .geometry import hyp_dist
from .rng import stream_rng

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# config and result plumbing

DEFAULT_PARAMS: dict[str, dict] = {
    "toeplitz-verify": {
        "instances": 200,
        "max_n": 12,
        "tolerance": 1e-8,
        "streams": 8,
    },
    "moments": {
        "n_values": [2, 4, 8],
        "samples": 200_000,
        "k_factor": 2,
        "streams": 8,
    },
    "domination": {
        "n": 64,
        "samples": 100_000,
        "lambdas": [1.0, -1.0, 2.0, -2.0],
        "streams": 8,
    },
    "max-law": {
        "n_values": [128, 256, 512, 1024, 2048, 4096],
        "samples": 200,
        "quantiles": [0.25, 0.5, 0.75],
    },
    "gaussian-max": {
        "n_values": [128, 256, 512, 1024, 2048, 4096],
        "samples": 200,
        "quantiles": [0.25, 0.5, 0.75],
    },
    "biased-mean": {
        "dim": 512,
        "m_param": 1.0,
        "samples": 2_000_000,
        "control_samples": 100_000,
        "ess_floor": 500.0,
        "streams": 8,
    },
    "ballot": {
        "n_values": [64, 256, 1024],
        "x": 3.0,
        "y": 3.0,
        "samples": 10_000_000,
        "streams": 8,
    },
    "relaxation": {
        "n_values": [64, 256],
        "configs": 100,
        "m_param": 2.0,
        "grid": 16_384,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 1
    workers: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in DEFAULT_PARAMS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ValueError("seed must fit in 64 bits")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        defaults = DEFAULT_PARAMS[self.experiment]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValueError(f"unknown parameter keys {sorted(unknown)}")
        merged = {**defaults, **self.params}
        object.__setattr__(self, "params", merged)

    @staticmethod
    def from_json(path, experiment: str, seed: int = 1, workers: int = 1) -> "ExperimentConfig":
        """Config files are experiment-keyed: {"ballot": {...}, "moments": {...}}."""
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError("config root must be an object keyed by experiment")
        unknown = set(doc) - set(DEFAULT_PARAMS)
        if unknown:
            raise ValueError(f"unknown experiment keys in config: {sorted(unknown)}")
        return ExperimentConfig(experiment, seed, workers, doc.get(experiment, {}))


@dataclass(frozen=True)
class Row:
    param: dict
    statistic: str
    value: float
    std_error: float | None
    samples: int


@dataclass
class RunResult:
    experiment: str
    rows: list[Row]
    manifest: dict

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("experiment,param_json,statistic,value,std_error,samples\n")
            for row in self.rows:
                pj = json.dumps(row.param, sort_keys=True, separators=(",", ":"))
                se = "" if row.std_error is None else FLOAT_FMT % row.std_error
                fh.write(
                    f'{self.experiment},"{pj.replace(chr(34), chr(34) * 2)}",'
                    f"{row.statistic},{FLOAT_FMT % row.value},{se},{row.samples}\n"
                )

    def write_manifest(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def value(self, statistic: str, **param) -> float:
        for row in self.rows:
            if row.statistic == statistic and all(row.param.get(k) == v for k, v in param.items()):
                return row.value
        raise KeyError(f"no row {statistic} with {param}")


def _map_streams(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# workers (top level for pickling)


def _toeplitz_task(task) -> list:
    seed, stream, count, max_n, tol = task
    rng = stream_rng(seed, "toeplitz-verify", stream)
    failures = 0
    worst = 0.0
    checked = 0
    for _ in range(count):
        ell = int(rng.integers(0, 4))
        m = int(rng.integers(0, 4))
        k = int(rng.integers(0, 3))
        a = tuple(rng.uniform(0.1, 0.9) * np.exp(2j * np.pi * rng.random()) for _ in range(ell))
        b = tuple(rng.uniform(0.1, 0.9) * np.exp(2j * np.pi * rng.random()) for _ in range(m))
        roots: list[complex] = []
        guard = 0
        while len(roots) < 2 * k and guard < 200:
            guard += 1
            c = rng.uniform(0.1, 0.9) * np.exp(2j * np.pi * rng.random())
            if all(abs(c - w) >= 0.05 for w in list(a) + roots) and abs(c) >= 0.05:
                roots.append(c)
        if len(roots) < 2 * k:
            continue
        scale = np.exp(2j * np.pi * rng.random())
        sym = toeplitz.RationalSymbol(a=a, b=b, p_roots=tuple(roots), scale=scale, shift=k)
        for n in range(max(ell - k, 1), max_n + 1):
            if k == 0 and not (n >= ell or n >= m):
                continue
            if k > 0 and (n + 3 * k < ell + m + 2 or n < max(ell - k, 1)):
                continue
            dd = toeplitz.direct_det(sym, n)
            cd = toeplitz.corrected_det(sym, n)
            rel = abs(dd - cd) / max(abs(dd), 1e-300)
            worst = max(worst, rel)
            checked += 1
            if rel > tol:
                failures += 1
    return [failures, worst, checked]


def run_toeplitz_verify(config: ExperimentConfig) -> RunResult:
    p = config.params
    counts = _split_count(p["instances"], p["streams"])
    tasks = [
        (config.seed, i, c, p["max_n"], p["tolerance"]) for i, c in enumerate(counts)
    ]
    parts = _map_streams(_toeplitz_task, tasks, config.workers)
    failures = sum(x[0] for x in parts)
    worst = max(x[1] for x in parts)
    checked = sum(x[2] for x in parts)
    rows = [
        Row({"instances": p["instances"]}, "identity_failures", float(failures), None, checked),
        Row({"instances": p["instances"]}, "max_rel_err", worst, None, checked),
    ]
    return _finish(config, rows)


def _moments_task(task) -> dict:
    seed, stream, n, count, k_max, method = task
    if method == "qr":
        ph = cue.sample_eigenphase_batch(n, count, stream_rng(seed, "moments-qr", n, stream))
        traces = np.stack(
            [np.exp(1j * k * ph).sum(axis=1) for k in range(1, k_max + 1)], axis=1
        )
    else:
        coeffs = cue.secular_coeff_batch(n, count, stream_rng(seed, "moments-szego", n, stream))
        traces = cue.trace_power_sums(coeffs, k_max)
    sq = np.abs(traces) ** 2
    return {"n": n, "sum": sq.sum(axis=0), "sumsq": (sq**2).sum(axis=0), "count": count}


def run_moments(config: ExperimentConfig) -> RunResult:
    p = config.params
    rows = []
    for method in ("qr", "szego"):
        for n in p["n_values"]:
            k_max = p["k_factor"] * n
            tasks = [
                (config.seed, i, n, c, k_max, method)
                for i, c in enumerate(_split_count(p["samples"], p["streams"]))
            ]
            parts = _map_streams(_moments_task, tasks, config.workers)
            total = sum(x["sum"] for x in parts)
            total_sq = sum(x["sumsq"] for x in parts)
            count = sum(x["count"] for x in parts)
            mean = total / count
            se = np.sqrt(np.maximum(total_sq / count - mean**2, 0.0) / count)
            for ki in range(k_max):
                rows.append(
                    Row(
                        {"n": n, "k": ki + 1, "sampler": method},
                        "trace_sq_mean",
                        float(mean[ki]),
                        float(se[ki]),
                        count,
                    )
                )
                rows.append(
                    Row(
                        {"n": n, "k": ki + 1, "sampler": method},
                        "trace_sq_expected",
                        float(min(ki + 1, n)),
                        None,
                        count,
                    )
                )
    return _finish(config, rows)


def _domination_task(task) -> dict:
    seed, stream, n, count, lam_sets = task
    rng = stream_rng(seed, "domination", stream)
    out = []
    for points, lams in lam_sets:
        vals = cue.szego_point_values(n, points, count, rng)
        w = np.exp(vals @ np.asarray(lams))
        out.append((w.sum(), (w**2).sum()))
    return {"acc": out, "count": count}


def run_domination(config: ExperimentConfig) -> RunResult:
    p = config.params
    n = p["n"]
    r = 1.0 - 5.0 / n
    lam_sets = [
        ((r, -0.5 * r), (lam, lam / 2.0)) for lam in p["lambdas"]
    ]
    tasks = [
        (config.seed, i, n, c, lam_sets)
        for i, c in enumerate(_split_count(p["samples"], p["streams"]))
    ]
    parts = _map_streams(_domination_task, tasks, config.workers)
    count = sum(x["count"] for x in parts)
    rows = []
    for j, (points, lams) in enumerate(lam_sets):
        total = sum(x["acc"][j][0] for x in parts)
        total_sq = sum(x["acc"][j][1] for x in parts)
        mean = total / count
        se = math.sqrt(max(total_sq / count - mean**2, 0.0) / count)
        bound = _gaussian_exp_moment(points, lams)
        param = {"n": n, "lambdas": list(lams)}
        rows.append(Row(param, "cue_mgf_mc", mean, se, count))
        rows.append(Row(param, "gaussian_mgf", bound, None, count))
        rows.append(Row(param, "domination_margin", bound + 4.0 * se - mean, se, count))
    return _finish(config, rows)


def _gaussian_exp_moment(points, lams) -> float:
    pts = np.asarray(points, dtype=complex)
    lam = np.asarray(lams, dtype=float)
    cov = np.asarray(gf.cov_kernel(pts[:, None], pts[None, :]), dtype=float)
    return float(np.exp(0.5 * lam @ cov @ lam))


def _max_law_task(task) -> dict:
    seed, n, count, gaussian = task
    m = n * int(math.ceil(math.log(n)))
    radius = 1.0 - 1.0 / n
    if gaussian:
        sampler = gf.CircleSampler(radius, m, tol=1e-10)
        vals = sampler.sample(count, stream_rng(seed, "gaussian-max", n))
        return {"n": n, "maxima": vals.max(axis=1)}
    coeffs = cue.secular_coeff_batch(n, count, stream_rng(seed, "max-law", n))
    k = np.arange(n + 1)
    scaled = coeffs * (radius**k)[None, :]
    folded = np.zeros((count, m), dtype=complex)
    np.add.at(folded, (slice(None), k % m), scaled)
    values = np.log(np.abs(np.fft.ifft(folded, axis=1) * m))
    return {"n": n, "maxima": values.max(axis=1)}


def _run_max_family(config: ExperimentConfig, gaussian: bool) -> RunResult:
    p = config.params
    tasks = [(config.seed, n, p["samples"], gaussian) for n in p["n_values"]]
    parts = _map_streams(_max_law_task, tasks, config.workers)
    rows = []
    xs, ys = [], []
    for part in parts:
        n = part["n"]
        mx = part["maxima"]
        count = len(mx)
        mean = float(mx.mean())
        se = float(mx.std(ddof=1) / math.sqrt(count))
        param = {"n": n}
        rows.append(Row(param, "max_mean", mean, se, count))
        rows.append(Row(param, "max_minus_logn_mean", mean - math.log(n), se, count))
        rows.append(Row(param, "max_over_logn_mean", mean / math.log(n), se / math.log(n), count))
        for q in p["quantiles"]:
            rows.append(Row(param, f"max_q{q}", float(np.quantile(mx, q)), None, count))
        xs.append(math.log(math.log(n)))
        ys.append(mean - math.log(n))
    if len(xs) >= 2:
        slope, intercept = np.polyfit(xs, ys, 1)
        rows.append(Row({}, "loglog_slope", float(slope), None, p["samples"]))
        rows.append(Row({}, "loglog_intercept", float(intercept), None, p["samples"]))
    return _finish(config, rows)


def run_max_law(config: ExperimentConfig) -> RunResult:
    return _run_max_family(config, gaussian=False)


def run_gaussian_max(config: ExperimentConfig) -> RunResult:
    return _run_max_family(config, gaussian=True)


def _biased_mean_task(task) -> dict:
    seed, stream, dim, count, ray = task
    vals = cue.szego_point_values(dim, ray, count, stream_rng(seed, "biased-mean", stream))
    w = np.exp(2.0 * vals[:, -1])
    return {
        "w": w.sum(),
        "w2": (w**2).sum(),
        "wx": (w[:, None] * vals).sum(axis=0),
        "w2x": ((w**2)[:, None] * vals).sum(axis=0),
        "w2x2": ((w**2)[:, None] * vals**2).sum(axis=0),
        "count": count,
    }


def run_biased_mean(config: ExperimentConfig) -> RunResult:
    """Importance-sampled means of U along the ray under the endpoint tilt.

    The tilt is e^{2 U(zeta_n)} with n = floor(d(0, 1 - m/N)); closed-form
    Gaussian targets are 2 cov(zeta_i, zeta_n).  A Gaussian control run with
    the identical estimator validates the machinery exactly.
    """
    p = config.params
    dim = p["dim"]
    n_ray = int(math.floor(float(hyp_dist(0.0, 1.0 - p["m_param"] / dim))))
    ray = np.tanh(np.arange(1, n_ray + 1) / 2.0)
    targets = 2.0 * np.asarray(gf.cov_kernel(ray, ray[-1]), dtype=float)

    tasks = [
        (config.seed, i, dim, c, ray)
        for i, c in enumerate(_split_count(p["samples"], p["streams"]))
    ]
    parts = _map_streams(_biased_mean_task, tasks, config.workers)
    rows = _biased_rows(parts, ray, targets, "cue", p["ess_floor"])

    # Gaussian control: same estimator on exact field samples
    sampler = gf.CholeskySampler(ray)
    g = sampler.sample(p["control_samples"], stream_rng(config.seed, "biased-mean-control"))
    w = np.exp(2.0 * g[:, -1])
    control = [{
        "w": w.sum(), "w2": (w**2).sum(),
        "wx": (w[:, None] * g).sum(axis=0),
        "w2x": ((w**2)[:, None] * g).sum(axis=0),
        "w2x2": ((w**2)[:, None] * g**2).sum(axis=0),
        "count": p["control_samples"],
    }]
    rows += _biased_rows(control, ray, targets, "gaussian-control", 0.0)
    return _finish(config, rows, extra={"ray_depth": n_ray})


def _biased_rows(parts, ray, targets, label, ess_floor) -> list[Row]:
    w = sum(x["w"] for x in parts)
    w2 = sum(x["w2"] for x in parts)
    wx = sum(x["wx"] for x in parts)
    w2x = sum(x["w2x"] for x in parts)
    w2x2 = sum(x["w2x2"] for x in parts)
    count = sum(x["count"] for x in parts)
    ess = w**2 / w2
    if ess < ess_floor:
        raise RuntimeError(
            f"effective sample size {ess:.1f} below floor {ess_floor}; "
            f"increase samples for the biased-mean run"
        )
    rows = [Row({"sampler": label}, "ess", float(ess), None, count)]
    mean = wx / w
    se = np.sqrt(np.maximum(w2x2 - 2 * mean * w2x + mean**2 * w2, 0.0)) / w
    for i in range(len(ray)):
        param = {"sampler": label, "i": i + 1}
        rows.append(Row(param, "is_mean", float(mean[i]), float(se[i]), count))
        rows.append(Row(param, "gaussian_mean", float(targets[i]), None, count))
    return rows


def _ballot_task(task) -> dict:
    seed, stream, n, count, x, y = task
    est = barrier.ballot_mc(n, x, y, count, stream_rng(seed, "ballot", n, stream))
    return {"n": n, "hits": round(est.probability * est.samples), "count": est.samples}


def run_ballot(config: ExperimentConfig) -> RunResult:
    p = config.params
    rows = []
    for n in p["n_values"]:
        tasks = [
            (config.seed, i, n, c, p["x"], p["y"])
            for i, c in enumerate(_split_count(p["samples"], p["streams"]))
        ]
        parts = _map_streams(_ballot_task, tasks, config.workers)
        hits = sum(x["hits"] for x in parts)
        count = sum(x["count"] for x in parts)
        est = barrier.MCEstimate.from_counts(hits, count)
        norm = n**1.5 / (p["x"] * p["y"])
        param = {"n": n, "x": p["x"], "y": p["y"]}
        rows.append(Row(param, "probability", est.probability, est.std_error, count))
        rows.append(Row(param, "normalized", est.probability * norm, est.std_error * norm, count))
    return _finish(config, rows)


def run_relaxation(config: ExperimentConfig) -> RunResult:
    p = config.params
    rows = []
    per_n = _split_count(p["configs"], len(p["n_values"]))
    for n, count in zip(p["n_values"], per_n):
        violations = 0
        slide_slack = math.inf
        max_slack = math.inf
        for i in range(count):
            ph = cue.PhaseVector(
                cue.sample_eigenphase_batch(n, 1, stream_rng(config.seed, "relaxation", n, i))[0]
            )
            rep = cue.relaxation_check(ph, p["m_param"], p["grid"])
            slide_slack = min(slide_slack, rep.radial_slide_slack)
            max_slack = min(max_slack, rep.max_slack)
            if rep.radial_slide_slack < -1e-10 or rep.max_slack < -1e-10:
                violations += 1
        param = {"n": n, "m": p["m_param"]}
        rows.append(Row(param, "violations", float(violations), None, count))
        rows.append(Row(param, "min_radial_slide_slack", slide_slack, None, count))
        rows.append(Row(param, "min_max_slack", max_slack, None, count))
    return _finish(config, rows)


RUNNERS = {
    "toeplitz-verify": run_toeplitz_verify,
    "moments": run_moments,
    "domination": run_domination,
    "max-law": run_max_law,
    "gaussian-max": run_gaussian_max,
    "biased-mean": run_biased_mean,
    "ballot": run_ballot,
    "relaxation": run_relaxation,
}


def run_experiment(config: ExperimentConfig) -> RunResult:
    started = time.time()
    result = RUNNERS[config.experiment](config)
    result.manifest["wall_time_s"] = time.time() - started
    return result


def _split_count(total: int, streams: int) -> list[int]:
    streams = max(1, min(streams, total))
    base = total // streams
    rem = total % streams
    return [base + (1 if i < rem else 0) for i in range(streams)]


def _finish(config: ExperimentConfig, rows: list[Row], extra: dict | None = None) -> RunResult:
    manifest = {
        "experiment": config.experiment,
        "seed": config.seed,
        "workers": config.workers,
        "params": config.params,
        "rows": len(rows),
    }
    if extra:
        manifest.update(extra)
    return RunResult(config.experiment, rows, manifest)


def normality_pvalue(values: np.ndarray) -> float:
    """Kolmogorov-Smirnov p-value against a standard normal."""
    v = np.asarray(values, dtype=float)
    v = (v - v.mean()) / v.std(ddof=1)
    return float(stats.kstest(v, "norm").pvalue)
