"""Synthetic fixtures and empirical verification harnesses.

Everything here is seeded and deterministic: fixtures derive one child seed
per image, Monte Carlo verdicts accumulate integer counts, and report
artifacts contain no volatile values, so a rerun with the same arguments
reproduces every byte.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.stats import beta as beta_dist

from .correct import (CorrectionParams, ValidationBoundInputs,
                      required_validation_size, spatial_correction)
from .grid import as_mask, dice, threshold
from .model import LogisticSegmenter, TrainConfig, draw_offsets
from .noise import MarkovNoiseParams, bayes_mask_one_step, expected_label_mc, generate
from .sdf import signed_distance

__all__ = [
    "SynthSpec",
    "synth_masks",
    "synth_dataset",
    "centered_disk",
    "interior_hole_flips",
    "TrialReport",
    "write_trial_report",
    "verify_bayes_mask",
    "verify_validation_bound",
    "PipelineResult",
    "run_pipeline",
    "sweep",
]


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic segmentation dataset description.

    Masks are random blobs (single balls or unions of 1-3 axis-aligned
    ellipses) kept at least ``margin`` sites away from the grid edge.
    Images are ``contrast * blur(mask) + N(0, noise_sigma)``. The optional
    ``holes=(count, radius)`` punches that many interior background balls
    into every mask, each fully surrounded by foreground.
    """

    count: int
    shape: tuple[int, ...]
    family: str = "disks"
    contrast: float = 1.0
    blur_sigma: float = 1.5
    noise_sigma: float = 0.3
    holes: tuple[int, int] | None = None
    margin: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if len(self.shape) not in (2, 3):
            raise ValueError(f"shape must be 2D or 3D, got {self.shape}")
        if min(self.shape) < 12:
            raise ValueError("extents below 12 leave no room for shapes with margin")
        if self.family not in ("disks", "ellipse-unions"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.contrast <= 0:
            raise ValueError("contrast must be positive")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("sigmas must be >= 0")
        if self.margin < 2:
            raise ValueError("margin must be >= 2")
        if self.holes is not None:
            hc, hr = self.holes
            if hc < 1 or hr < 1:
                raise ValueError("holes=(count, radius) must both be >= 1")


def _ball(shape: tuple[int, ...], center: np.ndarray, radii: np.ndarray) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, e) for e in shape)]
    q = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii))
    return q <= 1.0


def _draw_mask(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    """Draw one mask. Draw order (normative for reproducibility): shape count
    (ellipse unions only), then per shape the radius/semi-axes per axis, then
    the center per axis; hole centers last."""
    lo = max(2, min(spec.shape) // 8)
    hi = max(lo, min(spec.shape) // 4)
    mask = np.zeros(spec.shape, dtype=bool)
    n_shapes = 1 if spec.family == "disks" else int(rng.integers(1, 4))
    for _ in range(n_shapes):
        if spec.family == "disks":
            radii = np.full(len(spec.shape), int(rng.integers(lo, hi + 1)), dtype=float)
        else:
            radii = rng.integers(lo, hi + 1, size=len(spec.shape)).astype(float)
        center = np.array([
            int(rng.integers(spec.margin + int(r), e - spec.margin - int(r)))
            for e, r in zip(spec.shape, radii)
        ], dtype=float)
        mask |= _ball(spec.shape, center, radii)
    if spec.holes is not None:
        hc, hr = spec.holes
        depth_needed = hr + 2  # hole stays strictly interior: a full FG layer survives
        phi = signed_distance(mask)
        candidates = np.flatnonzero(phi <= -depth_needed)
        if candidates.size < hc:
            raise ValueError(f"mask too small for {hc} holes of radius {hr}")
        picks = rng.choice(candidates, size=hc, replace=False)
        for flat in picks:
            center = np.array(np.unravel_index(flat, spec.shape), dtype=float)
            mask &= ~_ball(spec.shape, center, np.full(len(spec.shape), float(hr)))
    return mask


def synth_masks(spec: SynthSpec) -> list[np.ndarray]:
    """The masks of synth_dataset(spec), without paying for the images."""
    children = np.random.SeedSequence(spec.seed).spawn(spec.count)
    return [_draw_mask(np.random.default_rng(c), spec) for c in children]


def synth_dataset(spec: SynthSpec) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Generate (images, masks). Image i continues mask i's child stream."""
    children = np.random.SeedSequence(spec.seed).spawn(spec.count)
    images, masks = [], []
    for child in children:
        rng = np.random.default_rng(child)
        mask = _draw_mask(rng, spec)
        clean = spec.contrast * (
            ndimage.gaussian_filter(mask.astype(np.float64), spec.blur_sigma,
                                    mode="constant", cval=0.0, truncate=3.0)
            if spec.blur_sigma > 0 else mask.astype(np.float64))
        img = clean + spec.noise_sigma * rng.standard_normal(spec.shape)
        images.append(img)
        masks.append(mask)
    return images, masks


def centered_disk(shape: tuple[int, ...], radius: int | None = None) -> np.ndarray:
    """Deterministic centered ball fixture (radius defaults to min extent / 4)."""
    if radius is None:
        radius = max(2, min(shape) // 4)
    center = np.array([(e - 1) / 2.0 for e in shape])
    return _ball(tuple(shape), center, np.full(len(shape), float(radius)))


def interior_hole_flips(mask, rate: float, min_depth: int = 3, seed: int = 0) -> np.ndarray:
    """Flip deep-interior foreground sites to background with probability ``rate``.

    Only sites at signed distance <= -min_depth are eligible, so the flips
    form holes strictly inside the object. Eligible sites are visited in
    row-major order; one coin each.
    """
    m = as_mask(mask)
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    if min_depth < 2:
        raise ValueError("min_depth must be >= 2 to keep holes interior")
    phi = signed_distance(m)
    sites = np.flatnonzero(phi <= -float(min_depth))
    out = m.copy()
    if sites.size:
        hit = sites[np.random.default_rng(seed).random(sites.size) < rate]
        out.reshape(-1)[hit] = False
    return out


# ---------------------------------------------------------------------------
# reports


@dataclass
class TrialReport:
    """Outcome of one verification run.

    ``wall_time_s`` is kept in memory for operators but deliberately left
    out of serialized artifacts so reruns are byte-identical.
    """

    name: str
    passed: bool
    seed: int
    params: dict
    measurements: dict
    wall_time_s: float = 0.0

    def rows(self) -> list[tuple[str, str]]:
        def fmt(v) -> str:
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, float):
                return repr(v)
            return str(v)

        out = [("name", self.name), ("passed", fmt(self.passed)), ("seed", str(self.seed))]
        out += [(f"params.{k}", fmt(v)) for k, v in self.params.items()]
        out += [(f"measurements.{k}", fmt(v)) for k, v in self.measurements.items()]
        return out


def write_trial_report(report: TrialReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        w.writerows(report.rows())


# ---------------------------------------------------------------------------
# harness 1: one-step expected label vs the closed-form most-likely mask


def verify_bayes_mask(mask, theta1: float, theta2: float, theta3: float,
                      n_samples: int, *, seed: int = 0, threads: int = 1) -> TrialReport:
    """Monte Carlo check of the one-step most-likely-label mask.

    Estimates the per-site foreground frequency over ``n_samples`` single
    step draws, thresholds it at 1/2, and compares with
    ``bayes_mask_one_step`` on every *decided* site: a site is undecided
    when its frequency lies within 3 binomial standard errors of 1/2, where
    a vote either way would be noise.
    """
    t0 = time.perf_counter()
    m = as_mask(mask)
    params = MarkovNoiseParams(steps=1, theta1=theta1, theta2=theta2,
                               theta3=theta3, seed=seed)
    mean = expected_label_mc(m, params, n_samples, threads=threads)
    expected = bayes_mask_one_step(m, theta1, theta2)
    sigma = np.sqrt(mean * (1.0 - mean) / n_samples)
    decided = np.abs(mean - 0.5) > 3.0 * sigma
    mc_mask = mean >= 0.5
    disagree = int((decided & (mc_mask != expected)).sum())
    if theta1 * theta2 >= 0.5:
        regime = "expand"
    elif 1.0 + theta1 * theta2 - theta2 < 0.5:
        regime = "shrink"
    else:
        regime = "identity"
    report = TrialReport(
        name="bayes-mask-one-step",
        passed=disagree == 0,
        seed=seed,
        params={"theta1": theta1, "theta2": theta2, "theta3": theta3,
                "n_samples": n_samples, "grid": "x".join(map(str, m.shape))},
        measurements={"regime": regime,
                      "decided_fraction": float(decided.mean()),
                      "n_decided": int(decided.sum()),
                      "n_sites": int(m.size),
                      "n_disagree": disagree},
        wall_time_s=time.perf_counter() - t0,
    )
    return report


# ---------------------------------------------------------------------------
# harness 2: empirical check of the validation-set size bound


def verify_validation_bound(inputs: ValidationBoundInputs, n_trials: int, *,
                            theta1: float = 0.7, theta2: float = 0.9,
                            grid_shape: tuple[int, ...] | None = None,
                            holdout: int = 200, family: str = "disks",
                            max_pool: int | None = None,
                            seed: int = 0) -> TrialReport:
    """Empirically test the validation-size bound on a synthetic pool.

    Builds a pool of clean masks whose "predictor" is the one-step
    most-likely mask's SDF plus a controlled per-image offset (mean
    magnitude eps0, sup eps1). Each trial re-draws the offsets, samples the
    bound's V validation images, estimates the bias as the grand mean of
    per-image mean SDF gaps, and measures the residual sup error on the
    held-out images. A trial fails when the held-out mean sup error exceeds
    eps + eps0; the run passes unless the one-sided exact binomial test is
    95% confident the failure rate exceeds alpha.

    Per-trial draw order: offset hit coins, offset sign coins, then the
    pool permutation.
    """
    t0 = time.perf_counter()
    if inputs.alpha > 1.0:
        raise ValueError("alpha must be <= 1 for an empirical failure-rate test")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if holdout < 1:
        raise ValueError("holdout must be >= 1")
    if grid_shape is None:
        side = math.isqrt(inputs.image_size)
        if side * side != inputs.image_size:
            raise ValueError("image_size is not a perfect square; pass grid_shape explicitly")
        grid_shape = (side, side)
    if int(np.prod(grid_shape)) != inputs.image_size:
        raise ValueError(f"grid_shape {grid_shape} has {int(np.prod(grid_shape))} sites, "
                         f"inputs.image_size says {inputs.image_size}")
    v_needed = required_validation_size(inputs)
    if v_needed < 1:
        raise ValueError("the bound asks for zero validation images; nothing to verify")
    pool_size = v_needed + holdout
    if max_pool is not None and pool_size > max_pool:
        raise ValueError(f"required V={v_needed} plus holdout={holdout} exceeds "
                         f"the fixture pool cap of {max_pool} images")

    pool_ss, trial_ss = np.random.SeedSequence(seed).spawn(2)
    spec = SynthSpec(count=pool_size, shape=tuple(grid_shape), family=family,
                     seed=int(pool_ss.generate_state(1)[0]))
    gaps = np.empty(pool_size)
    lo = np.empty(pool_size)
    hi = np.empty(pool_size)
    for i, mask in enumerate(synth_masks(spec)):
        phi = signed_distance(mask)
        base = signed_distance(bayes_mask_one_step(mask, theta1, theta2))
        diff = base - phi
        gaps[i] = diff.mean()
        lo[i] = diff.min()
        hi[i] = diff.max()

    failures = 0
    error_sum = 0.0
    fail_threshold = inputs.eps + inputs.eps0
    for child in trial_ss.spawn(n_trials):
        rng = np.random.default_rng(child)
        offs = draw_offsets(rng, pool_size, inputs.eps0, inputs.eps1)
        perm = rng.permutation(pool_size)
        val, held = perm[:v_needed], perm[v_needed:]
        delta_hat = float(np.mean(gaps[val] + offs[val]))
        shift = offs[held] - delta_hat
        sup_err = np.maximum(np.abs(lo[held] + shift), np.abs(hi[held] + shift))
        err = float(sup_err.mean())
        error_sum += err
        if err > fail_threshold:
            failures += 1

    rate = failures / n_trials
    lb = float(beta_dist.ppf(0.05, failures, n_trials - failures + 1)) if failures else 0.0
    ci_lo = float(beta_dist.ppf(0.025, failures, n_trials - failures + 1)) if failures else 0.0
    ci_hi = (float(beta_dist.ppf(0.975, failures + 1, n_trials - failures))
             if failures < n_trials else 1.0)
    return TrialReport(
        name="validation-size-bound",
        passed=lb <= inputs.alpha,
        seed=seed,
        params={"eps0": inputs.eps0, "eps1": inputs.eps1, "eps": inputs.eps,
                "alpha": inputs.alpha, "image_size": inputs.image_size,
                "theta1": theta1, "theta2": theta2, "n_trials": n_trials,
                "holdout": holdout, "family": family},
        measurements={"v_required": v_needed, "pool_size": pool_size,
                      "failures": failures, "failure_rate": rate,
                      "rate_lower_95_one_sided": lb,
                      "rate_ci95_low": ci_lo, "rate_ci95_high": ci_hi,
                      "mean_error": error_sum / n_trials,
                      "fail_threshold": fail_threshold},
        wall_time_s=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# end-to-end pipeline and sweeps

LabelNoise = MarkovNoiseParams | Callable[[np.ndarray, int], np.ndarray]


@dataclass
class PipelineResult:
    metrics: list[dict]
    sc_records: list
    train_masks: list[np.ndarray]
    noisy_labels: list[np.ndarray]
    corrected_labels: list[np.ndarray]


def _apply_noise(noise: LabelNoise, mask: np.ndarray, seed: int) -> np.ndarray:
    if isinstance(noise, MarkovNoiseParams):
        return generate(mask, replace(noise, seed=seed))
    return noise(mask, seed)


def _mean_test_dsc(model, images, masks) -> float:
    return float(np.mean([dice(threshold(model.predict_logits(x), 0.0, mode="ge"), m)
                          for x, m in zip(images, masks)]))


def run_pipeline(spec: SynthSpec, noise: LabelNoise,
                 correction: CorrectionParams | None = None,
                 train_cfg: TrainConfig | None = None, *,
                 n_val: int, n_test: int, seed: int = 0,
                 n_val_used: int | None = None,
                 metrics_path=None, sc_report_path=None) -> PipelineResult:
    """Three-arm comparison on one synthetic dataset.

    Splits ``spec.count`` images into train/val/test, corrupts the training
    labels with ``noise`` (a parameter set or any ``(mask, seed) -> mask``
    callable), and reports the test Dice of three identically configured
    models: trained on clean labels (ceiling), on the noisy labels
    (baseline), and with the correction loop driven by ``n_val_used``
    (default: all) of the clean validation images.

    All randomness derives from ``seed``; ``spec.seed`` is ignored so one
    argument controls the whole experiment.
    """
    correction = correction or CorrectionParams()
    train_cfg = train_cfg or TrainConfig()
    n_train = spec.count - n_val - n_test
    if n_train < 1 or n_val < 1 or n_test < 1:
        raise ValueError(f"bad split: {n_train} train / {n_val} val / {n_test} test")
    used = n_val if n_val_used is None else n_val_used
    if not 1 <= used <= n_val:
        raise ValueError(f"n_val_used must be in [1, {n_val}], got {used}")

    data_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    images, masks = synth_dataset(replace(spec, seed=int(data_ss.generate_state(1)[0])))
    tr = slice(0, n_train)
    va = slice(n_train, n_train + used)
    te = slice(spec.count - n_test, spec.count)

    noisy = [_apply_noise(noise, m, int(c.generate_state(1)[0]))
             for m, c in zip(masks[tr], noise_ss.spawn(n_train))]

    metrics = []
    clean_model = LogisticSegmenter(train_cfg).fit(images[tr], masks[tr], seed)
    metrics.append({"arm": "clean", "seed": seed,
                    "test_dsc": _mean_test_dsc(clean_model, images[te], masks[te])})
    noisy_model = LogisticSegmenter(train_cfg).fit(images[tr], noisy, seed)
    metrics.append({"arm": "noisy", "seed": seed,
                    "test_dsc": _mean_test_dsc(noisy_model, images[te], masks[te])})
    sc = spatial_correction(images[tr], noisy, images[va], masks[va],
                            LogisticSegmenter(train_cfg), correction, seed=seed,
                            train_truth=masks[tr], report_path=sc_report_path)
    metrics.append({"arm": "sc", "seed": seed,
                    "test_dsc": _mean_test_dsc(sc.model, images[te], masks[te])})

    if metrics_path is not None:
        with open(metrics_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["arm", "seed", "test_dsc"])
            for row in metrics:
                w.writerow([row["arm"], row["seed"], repr(row["test_dsc"])])
    return PipelineResult(metrics=metrics, sc_records=sc.records,
                          train_masks=list(masks[tr]), noisy_labels=noisy,
                          corrected_labels=sc.labels)


def sweep(kind: str, values: Sequence[int], spec: SynthSpec, noise: MarkovNoiseParams,
          correction: CorrectionParams | None = None,
          train_cfg: TrainConfig | None = None, *,
          n_val: int, n_test: int, seed: int = 0, csv_path=None) -> list[dict]:
    """Run the pipeline along one axis; one output row per setting per arm.

    ``kind="noise_level"`` varies the step count T, ``kind="val_size"``
    varies how many validation images the correction loop may use. Every
    cell reuses the same seed so the underlying data is held fixed.
    """
    if kind not in ("noise_level", "val_size"):
        raise ValueError(f"kind must be 'noise_level' or 'val_size', got {kind!r}")
    rows: list[dict] = []
    for value in values:
        v = int(value)
        if kind == "noise_level":
            res = run_pipeline(spec, replace(noise, steps=v), correction, train_cfg,
                               n_val=n_val, n_test=n_test, seed=seed)
        else:
            res = run_pipeline(spec, noise, correction, train_cfg,
                               n_val=n_val, n_test=n_test, seed=seed, n_val_used=v)
        for m in res.metrics:
            rows.append({"kind": kind, "value": v, "arm": m["arm"],
                         "seed": seed, "test_dsc": m["test_dsc"]})
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "value", "arm", "seed", "test_dsc"])
            for r in rows:
                w.writerow([r["kind"], r["value"], r["arm"], r["seed"], repr(r["test_dsc"])])
    return rows
