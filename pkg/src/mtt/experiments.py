"""Experiment harness: data generators, trial runner and image pipeline.

Every generator is a pure function of its seed, and every trial owns a
seed-derived RNG stream, so aggregates do not depend on scheduling order.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import pgm
from .errors import CorpusError
from .solver import BRANCH_INIT, MttConfig, mtt_fit, mtt_init
from .transforms import apply_transform, gbt1_fit, reconstruction_error, step1_fit


# ---------------------------------------------------------------------------
# generators

def _example1_parts(seed, m=100, n_samples=300):
    """Source, mask and noise draws behind :func:`gen_example1`."""
    rng = np.random.default_rng(seed)
    x = rng.random((m, n_samples))
    mask = rng.random((m, n_samples))
    noise = rng.standard_normal((m, n_samples))
    return x, mask, noise


def gen_example1(seed, m=100, n_samples=300, noise_amp=10.0):
    """Hadamard-masked source with additive Gaussian noise.

    X and the mask S are i.i.d. uniform on [0, 1]; the observation is
    Y = S * X + noise_amp * N with N standard normal (entrywise product).
    """
    x, mask, noise = _example1_parts(seed, m, n_samples)
    return x, mask * x + noise_amp * noise


def _example3_parts(seed, q, m=50, n_samples=100, sigma=2.0):
    """Source, noise and injection draws behind :func:`gen_example3`.

    The data stream is independent of ``q`` so the same seed yields the
    same (X, Y) for every injection dimension, which pairs trials across
    a q sweep.
    """
    data_key, injection_key = np.random.SeedSequence(seed).spawn(2)
    data_rng = np.random.default_rng(data_key)
    x = data_rng.random((m, n_samples))
    xi = sigma * data_rng.standard_normal((m, n_samples))
    v = np.random.default_rng(injection_key).standard_normal((q, n_samples))
    return x, xi, v


def gen_example3(seed, q, m=50, n_samples=100, sigma=2.0):
    """Uniform source plus white noise of per-coordinate variance sigma^2,
    with a Gaussian injection of dimension ``q``."""
    x, xi, v = _example3_parts(seed, q, m, n_samples, sigma)
    return x, x + xi, v


def sample_covariance(a):
    """Sample covariance ``(1/s) A A^T`` (symmetric PSD)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] < 1:
        raise ValueError(f"need an n x s matrix with s >= 1, got {a.shape}")
    c = a @ a.T / a.shape[1]
    return (c + c.T) / 2.0


def trial_seeds(seed, n_trials):
    """Independent per-trial integer seeds derived from a root seed."""
    return [int(v) for v in np.random.SeedSequence(seed).generate_state(n_trials)]


# ---------------------------------------------------------------------------
# trial runner

@dataclass
class TrialReport:
    """Per-trial record: baselines, solver trace and final error."""

    trial_id: int
    seed: int
    cfg: MttConfig
    m: int
    n: int
    n_samples: int
    gbt1_error: float
    step1_error: float
    final_error: float
    trace: object
    wall_time: float


@dataclass
class TrialAggregate:
    """Order-independent summary over the successful trials."""

    n_trials: int
    n_failed: int
    m: int
    n: int
    n_samples: int
    median_eps0: float
    median_final: float
    median_gbt1: float
    median_improvement_vs_gbt1: float
    median_improvement_vs_eps0: float
    median_iterations: float
    quantile_iters: np.ndarray     # iteration indices of the bands
    quantile_bands: np.ndarray     # rows: q25, median, q75 per iteration
    failures: list


def _run_one_trial(trial_id, seed, generator, cfg):
    start = time.perf_counter()
    x, y = generator(seed)
    trial_cfg = replace(cfg, seed=seed)
    pair = gbt1_fit(x, y, cfg.k1 + cfg.k2, cfg.pinv_tol)
    gbt1_error = reconstruction_error(x, pair.D @ (pair.C @ y)).raw
    model, trace = mtt_fit(x, y, trial_cfg)
    return TrialReport(
        trial_id=trial_id,
        seed=seed,
        cfg=trial_cfg,
        m=x.shape[0],
        n=y.shape[0],
        n_samples=x.shape[1],
        gbt1_error=gbt1_error,
        step1_error=float(trace.errors[0]),
        final_error=float(trace.errors[-1]),
        trace=trace,
        wall_time=time.perf_counter() - start,
    )


def run_trials(generator, cfg, n_trials, jobs=None):
    """Run independent seeded trials; returns ``(reports, aggregate)``.

    ``generator`` maps a seed to an ``(X, Y)`` pair.  Individual trial
    failures are recorded in the aggregate rather than raised, unless
    every trial fails.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    seeds = trial_seeds(cfg.seed, n_trials)
    results = [None] * n_trials
    failures = []

    def work(i):
        return _run_one_trial(i, seeds[i], generator, cfg)

    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs > 1 and n_trials > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(work, i): i for i in range(n_trials)}
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    failures.append((i, f"{type(exc).__name__}: {exc}"))
    else:
        for i in range(n_trials):
            try:
                results[i] = work(i)
            except Exception as exc:
                failures.append((i, f"{type(exc).__name__}: {exc}"))

    reports = [r for r in results if r is not None]
    if not reports:
        raise RuntimeError(f"all {n_trials} trials failed: {failures}")
    return reports, aggregate_trials(reports, failures)


def aggregate_trials(reports, failures=()):
    """Medians and per-iteration quantile bands over trial reports."""
    eps0 = np.array([r.step1_error for r in reports])
    final = np.array([r.final_error for r in reports])
    gbt1 = np.array([r.gbt1_error for r in reports])
    iters = np.array([r.trace.iterations for r in reports])
    length = int(max(r.trace.errors.size for r in reports))
    padded = np.empty((len(reports), length))
    for i, r in enumerate(reports):
        e = r.trace.errors
        padded[i, : e.size] = e
        padded[i, e.size :] = e[-1]    # carry converged value forward
    bands = np.quantile(padded, [0.25, 0.5, 0.75], axis=0)
    return TrialAggregate(
        n_trials=len(reports) + len(failures),
        n_failed=len(failures),
        m=reports[0].m,
        n=reports[0].n,
        n_samples=reports[0].n_samples,
        median_eps0=float(np.median(eps0)),
        median_final=float(np.median(final)),
        median_gbt1=float(np.median(gbt1)),
        median_improvement_vs_gbt1=float(np.median((gbt1 - final) / gbt1)),
        median_improvement_vs_eps0=float(np.median((eps0 - final) / eps0)),
        median_iterations=float(np.median(iters)),
        quantile_iters=np.arange(length),
        quantile_bands=bands,
        failures=list(failures),
    )


# ---------------------------------------------------------------------------
# injection-dimension sweep

@dataclass
class QSweepRow:
    q: int
    mean_eps0: float
    std_eps0: float
    n_trials: int


def q_sweep(q_values, cfg, n_trials, generator=None, jobs=None):
    """Initial two-term error versus injection dimension.

    For each ``q`` the same per-trial seeds are reused, so the rows are
    paired through identical (X, Y) draws.  ``generator`` maps
    ``(seed, q)`` to ``(X, Y, V)``; the default is :func:`gen_example3`.
    Rows come back sorted by ``q``.
    """
    q_values = list(q_values)
    if not q_values:
        raise ValueError("q_values must be non-empty")
    for q in q_values:
        if q < cfg.k2:
            raise ValueError(f"every q must be >= k2={cfg.k2}, got {q}")
    if generator is None:
        generator = gen_example3
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    seeds = trial_seeds(cfg.seed, n_trials)

    def eps0_of(q, seed):
        x, y, v = generator(seed, q)
        t = step1_fit(x, y, v, cfg.k1, cfg.k2, cfg.pinv_tol)
        return reconstruction_error(x, apply_transform(t, y, v)).raw

    tasks = [(q, s) for q in q_values for s in seeds]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(lambda qs: eps0_of(*qs), tasks))
    else:
        values = [eps0_of(q, s) for q, s in tasks]
    rows = []
    for i, q in enumerate(q_values):
        chunk = np.array(values[i * n_trials : (i + 1) * n_trials])
        rows.append(
            QSweepRow(
                q=q,
                mean_eps0=float(np.mean(chunk)),
                std_eps0=float(np.std(chunk, ddof=1)) if n_trials > 1 else 0.0,
                n_trials=n_trials,
            )
        )
    rows.sort(key=lambda r: r.q)
    return rows


# ---------------------------------------------------------------------------
# image corpus pipeline

@dataclass(frozen=True)
class CorpusSpec:
    """Parameters of an image-corpus experiment.

    ``count`` images are loaded from ``source`` (sorted PGM files);
    ``sample_size`` of them form the fitting sample.  ``match_tol`` is a
    per-pixel mean-squared-distance bound for the nearest-sample match;
    queries beyond it are flagged in the report.  ``width``/``height``
    default to the first image's size.
    """

    source: str
    count: int
    sample_size: int
    width: int | None = None
    height: int | None = None
    noise_amp: float = 1.0
    match_tol: float = math.inf

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if not 1 <= self.sample_size <= self.count:
            raise ValueError(
                f"sample_size must be in [1, count={self.count}], "
                f"got {self.sample_size}"
            )
        if self.match_tol < 0:
            raise ValueError(f"match_tol must be >= 0, got {self.match_tol}")


@dataclass
class ImageResult:
    index: int
    name: str
    matched_index: int
    match_dist: float
    within_tol: bool
    mse_gbt1: float
    mse_gbt2: float
    mse_mtt: float


@dataclass
class ImageCorpusReport:
    spec: CorpusSpec
    cfg: MttConfig
    sample_indices: list
    names: list
    per_image: list
    mean_mse: dict
    trace: object
    reconstructions: dict    # method -> list of float images in [0, 1]


def load_corpus(spec):
    """Load and validate the corpus; returns ``(names, images)``.

    Images are floats in [0, 1].  Missing files, unreadable files and
    size mismatches raise :class:`CorpusError` listing the offenders.
    """
    root = Path(spec.source)
    if not root.is_dir():
        raise CorpusError(f"corpus directory not found: {root}")
    paths = sorted(root.glob("*.pgm"))
    if len(paths) < spec.count:
        raise CorpusError(
            f"need {spec.count} images, found {len(paths)} in {root}"
        )
    paths = paths[: spec.count]
    images = []
    bad = []
    want = None
    if spec.height is not None and spec.width is not None:
        want = (spec.height, spec.width)
    for p in paths:
        try:
            img = pgm.read_pgm(p)
        except (OSError, ValueError) as exc:
            bad.append(f"{p}: {exc}")
            continue
        if want is None:
            want = img.shape
        if img.shape != want:
            bad.append(f"{p}: size {img.shape[1]}x{img.shape[0]}, "
                       f"expected {want[1]}x{want[0]}")
            continue
        images.append(img)
    if bad:
        raise CorpusError("corpus ingestion failed", bad)
    return [p.name for p in paths], images


def image_corpus_experiment(spec, cfg, injection_blocks=None):
    """Compression/denoising over a corpus of grayscale images.

    Fits the transform on ``sample_size`` noisy images against their
    clean references, then reconstructs every image in the pool from its
    noisy version, using the projected-injection block of the nearest
    sample.  Baselines: the single-term transform at the full budget
    k1 + k2 and the two-term fit at the initial injection.  The injection
    is one uniform block per sample slot (``injection_blocks`` overrides
    the number of distinct blocks; they repeat cyclically).
    """
    names, clean = load_corpus(spec)
    h, w = clean[0].shape
    if cfg.k1 + cfg.k2 > h:
        raise ValueError(
            f"k1 + k2 = {cfg.k1 + cfg.k2} exceeds image height {h}"
        )
    noise_key, perm_key, inj_key = np.random.SeedSequence(cfg.seed).spawn(3)
    noise_rng = np.random.default_rng(noise_key)
    noisy = [
        img + spec.noise_amp * noise_rng.standard_normal((h, w))
        for img in clean
    ]
    perm_rng = np.random.default_rng(perm_key)
    sample = [int(i) for i in perm_rng.permutation(spec.count)[: spec.sample_size]]

    x = np.hstack([clean[i] for i in sample])
    y = np.hstack([noisy[i] for i in sample])
    g_blocks = injection_blocks or spec.sample_size
    if g_blocks < 1:
        raise ValueError(f"injection_blocks must be >= 1, got {g_blocks}")
    inj_rng = np.random.default_rng(inj_key)
    blocks = [inj_rng.random((h, w)) for _ in range(g_blocks)]
    v0 = np.hstack([blocks[j % g_blocks] for j in range(spec.sample_size)])

    run_cfg = replace(cfg, q=h)
    full_pair = gbt1_fit(x, y, cfg.k1 + cfg.k2, cfg.pinv_tol)
    init_model, _ = mtt_init(x, y, run_cfg, v0=v0)
    model, trace = mtt_fit(x, y, run_cfg, v0=v0)

    per_image = []
    recon = {"gbt1": [], "gbt2": [], "mtt": []}
    sums = {"gbt1": 0.0, "gbt2": 0.0, "mtt": 0.0}
    for idx in range(spec.count):
        yq = noisy[idx]
        dists = [float(np.sum((noisy[j] - yq) ** 2)) for j in sample]
        pos = int(np.argmin(dists))
        match_dist = dists[pos] / (h * w)
        block = slice(pos * w, (pos + 1) * w)
        estimates = {
            "gbt1": full_pair.D @ (full_pair.C @ yq),
            "gbt2": init_model.first.D @ (init_model.first.C @ yq)
            + init_model.second.D @ (init_model.second.C @ init_model.Z[:, block]),
            "mtt": model.first.D @ (model.first.C @ yq)
            + model.second.D @ (model.second.C @ model.Z[:, block]),
        }
        mses = {}
        for method, xhat in estimates.items():
            mses[method] = float(np.sum((clean[idx] - xhat) ** 2)) / (h * w)
            sums[method] += mses[method]
            recon[method].append(xhat)
        per_image.append(
            ImageResult(
                index=idx,
                name=names[idx],
                matched_index=sample[pos],
                match_dist=match_dist,
                within_tol=match_dist <= spec.match_tol,
                mse_gbt1=mses["gbt1"],
                mse_gbt2=mses["gbt2"],
                mse_mtt=mses["mtt"],
            )
        )
    mean_mse = {m: sums[m] / spec.count for m in sums}
    return ImageCorpusReport(
        spec=spec,
        cfg=run_cfg,
        sample_indices=sample,
        names=names,
        per_image=per_image,
        mean_mse=mean_mse,
        trace=trace,
        reconstructions=recon,
    )


def write_reconstructions(report, out_dir):
    """Write every method's reconstructions as PGM files under out_dir."""
    out_dir = Path(out_dir)
    written = []
    for method, images in report.reconstructions.items():
        sub = out_dir / f"recon_{method}"
        sub.mkdir(parents=True, exist_ok=True)
        for name, img in zip(report.names, images):
            path = sub / name
            pgm.write_pgm(path, img)
            written.append(path)
    return written


# ---------------------------------------------------------------------------
# CSV output

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_trials_csv(path, reports):
    """Long-form error traces: one row per (trial, iteration)."""
    rows = []
    for r in reports:
        branches = [BRANCH_INIT] + list(r.trace.branches)
        for i, eps in enumerate(r.trace.errors.tolist()):
            rows.append((r.trial_id, r.seed, i, eps, branches[i]))
    _write_csv(path, ("trial_id", "seed", "iter", "epsilon", "branch"), rows)


def write_summary_csv(path, aggregate, cfg):
    header = (
        "k1", "k2", "q", "delta", "max_iter", "seed", "pinv_tol",
        "n_trials", "n_failed", "m", "n", "n_samples", "compression_ratio",
        "median_eps0", "median_final", "median_gbt1",
        "median_improvement_vs_gbt1", "median_improvement_vs_eps0",
        "median_iterations",
    )
    c = (cfg.k1 + cfg.k2) / min(aggregate.m, aggregate.n)
    row = (
        cfg.k1, cfg.k2, cfg.q, cfg.delta, cfg.max_iter, cfg.seed,
        cfg.pinv_tol, aggregate.n_trials, aggregate.n_failed,
        aggregate.m, aggregate.n, aggregate.n_samples, c,
        aggregate.median_eps0, aggregate.median_final, aggregate.median_gbt1,
        aggregate.median_improvement_vs_gbt1,
        aggregate.median_improvement_vs_eps0,
        aggregate.median_iterations,
    )
    _write_csv(path, header, [row])


def write_qsweep_csv(path, rows):
    _write_csv(
        path,
        ("q", "mean_eps0", "std_eps0", "n_trials"),
        [(r.q, r.mean_eps0, r.std_eps0, r.n_trials) for r in rows],
    )


def write_image_csv(path, report):
    rows = [
        (
            r.index, r.name, r.matched_index, r.match_dist,
            int(r.within_tol), r.mse_gbt1, r.mse_gbt2, r.mse_mtt,
        )
        for r in report.per_image
    ]
    _write_csv(
        path,
        ("index", "file", "matched_index", "match_dist", "within_tol",
         "mse_gbt1", "mse_gbt2", "mse_mtt"),
        rows,
    )


def write_image_summary_csv(path, report):
    rows = [(m, report.mean_mse[m]) for m in ("gbt1", "gbt2", "mtt")]
    _write_csv(path, ("method", "mean_mse"), rows)
