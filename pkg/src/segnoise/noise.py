"""Markov boundary noise for binary masks.

A noisy mask is produced from a clean one by T boundary steps followed by a
sparse flip pass:

* each step draws one coin (probability theta1) choosing expansion or
  shrinkage, then flips an independent theta2 coin at every site of the
  relevant boundary layer (background boundary when expanding, foreground
  boundary when shrinking); winners change label. Expansion and shrinkage
  therefore move the contour by at most one layer per step.
* after the steps (and an optional Gaussian smoothing of the intermediate
  mask) every *stable* site, one whose label survived all steps, flips with
  probability theta3. Sites the walk changed are never flipped.

Randomness is reproducible: a parameter set fixes the PCG64 stream and the
draw order is part of the contract. Per step, the expansion coin is drawn
first, then one coin per boundary site in row-major order; flip coins come
last, one per stable site in row-major order. Monte Carlo helpers derive one
child seed per sample from the base seed, so sample i is the same no matter
how many samples are drawn around it.
"""

from __future__ import annotations

import configparser
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import as_mask, dilate_one, erode_one, neighborhood_structure

__all__ = [
    "MarkovNoiseParams",
    "NoisePreset",
    "PRESETS",
    "preset",
    "load_presets",
    "markov_step",
    "generate",
    "expected_label_mc",
    "bayes_mask_one_step",
    "dilate_erode_noise",
]


@dataclass(frozen=True)
class MarkovNoiseParams:
    """Noise process parameters.

    steps: number of boundary steps (T >= 0).
    theta1: probability a step expands rather than shrinks.
    theta2: per-site probability a boundary site changes in a step.
    theta3: per-site flip probability on stable sites; must stay below 0.5
        or flipped sites would dominate their own signal.
    smooth_sigma: if positive, the mask after the steps is blurred with a
        Gaussian (truncated at 3 sigma) and re-thresholded at 0.5 before
        the flip pass.
    seed: base seed for the PCG64 stream.
    """

    steps: int
    theta1: float
    theta2: float
    theta3: float = 0.0
    smooth_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        for name in ("theta1", "theta2", "theta3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.theta3 >= 0.5:
            raise ValueError(f"theta3 must be < 0.5, got {self.theta3}")
        if self.theta3 > 0.1:
            warnings.warn(f"theta3={self.theta3} is unusually high; flips will "
                          "dominate thin structures", stacklevel=2)
        if self.smooth_sigma < 0:
            raise ValueError("smooth_sigma must be >= 0")


@dataclass(frozen=True)
class NoisePreset:
    name: str
    params: MarkovNoiseParams
    paper: bool  # False for desk-scale presets meant for small demo grids


def _p(steps, theta1, theta2, theta3):
    return MarkovNoiseParams(steps=steps, theta1=theta1, theta2=theta2, theta3=theta3)


PRESETS: dict[str, NoisePreset] = {
    p.name: p
    for p in [
        NoisePreset("jsrt-lung-se", _p(180, 0.7, 0.03, 0.1), True),
        NoisePreset("jsrt-heart-se", _p(180, 0.7, 0.03, 0.1), True),
        NoisePreset("jsrt-clavicle-se", _p(100, 0.7, 0.03, 0.1), True),
        NoisePreset("jsrt-lung-ss", _p(200, 0.3, 0.05, 0.1), True),
        NoisePreset("jsrt-heart-ss", _p(200, 0.3, 0.05, 0.1), True),
        NoisePreset("jsrt-clavicle-ss", _p(120, 0.3, 0.05, 0.1), True),
        NoisePreset("isic-se", _p(200, 0.8, 0.05, 0.1), True),
        NoisePreset("isic-ss", _p(200, 0.2, 0.05, 0.1), True),
        NoisePreset("brats-se", _p(80, 0.7, 0.05, 0.1), True),
        NoisePreset("brats-ss", _p(80, 0.3, 0.05, 0.1), True),
        # desk-scale expansion/shrinkage pair for ~64x64 grids
        NoisePreset("tiny-se", _p(8, 0.8, 0.5, 0.02), False),
        NoisePreset("tiny-ss", _p(8, 0.2, 0.5, 0.02), False),
    ]
}


def preset(name: str) -> MarkovNoiseParams:
    """Look up a named parameter preset."""
    try:
        return PRESETS[name].params
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ValueError(f"unknown preset {name!r}; known presets: {known}") from None


def load_presets(path) -> dict[str, MarkovNoiseParams]:
    """Read presets from an INI-style file.

    Each ``[preset.NAME]`` section may set ``T``, ``theta1``, ``theta2``,
    ``theta3`` and ``smooth_sigma``; T, theta1 and theta2 are required,
    theta3 and smooth_sigma default to 0. Unknown sections or keys are
    rejected.
    """
    cp = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh, source=str(path))
    out: dict[str, MarkovNoiseParams] = {}
    for section in cp.sections():
        if not section.startswith("preset."):
            raise ValueError(f"{path}: unexpected section [{section}]")
        name = section[len("preset."):]
        if not name:
            raise ValueError(f"{path}: empty preset name")
        keys = set(cp[section])
        # configparser lowercases keys, so "T" arrives as "t"
        unknown = {k for k in keys if k not in {"t", "theta1", "theta2", "theta3", "smooth_sigma"}}
        if unknown:
            raise ValueError(f"{path}: unknown keys in [{section}]: {sorted(unknown)}")
        for req in ("t", "theta1", "theta2"):
            if req not in keys:
                raise ValueError(f"{path}: [{section}] is missing key {req.upper() if req == 't' else req}")
        sec = cp[section]
        out[name] = MarkovNoiseParams(
            steps=sec.getint("t"),
            theta1=sec.getfloat("theta1"),
            theta2=sec.getfloat("theta2"),
            theta3=sec.getfloat("theta3", fallback=0.0),
            smooth_sigma=sec.getfloat("smooth_sigma", fallback=0.0),
        )
    return out


def markov_step(mask, expand: bool, march) -> np.ndarray:
    """One deterministic boundary step.

    With ``expand`` true, background-boundary sites selected by ``march``
    join the foreground; otherwise foreground-boundary sites selected by
    ``march`` leave it. Sites of ``march`` away from the relevant boundary
    have no effect.
    """
    m = as_mask(mask)
    sel = as_mask(march)
    if sel.shape != m.shape:
        raise ValueError(f"shape mismatch: {m.shape} vs {sel.shape}")
    st = neighborhood_structure(m.ndim)
    if expand:
        band = ~m & ndimage.binary_dilation(m, st, border_value=0)
        return m | (sel & band)
    band = m & ~ndimage.binary_erosion(m, st, border_value=1)
    return m & ~(sel & band)


def _run_process(mask: np.ndarray, params: MarkovNoiseParams,
                 rng: np.random.Generator) -> np.ndarray:
    """Drive the full process with a caller-supplied generator."""
    st = neighborhood_structure(mask.ndim)
    out = mask.copy()
    flat = out.reshape(-1)
    for _ in range(params.steps):
        expand = rng.random() < params.theta1
        if expand:
            band = ~out & ndimage.binary_dilation(out, st, border_value=0)
        else:
            band = out & ~ndimage.binary_erosion(out, st, border_value=1)
        sites = np.flatnonzero(band)  # row-major draw order
        if sites.size:
            march = rng.random(sites.size) < params.theta2
            flat[sites[march]] = expand
    if params.smooth_sigma > 0:
        blurred = ndimage.gaussian_filter(out.astype(np.float64), params.smooth_sigma,
                                          mode="constant", cval=0.0, truncate=3.0)
        out = blurred >= 0.5
        flat = out.reshape(-1)
    if params.theta3 > 0:
        stable = np.flatnonzero(flat == mask.reshape(-1))  # row-major
        if stable.size:
            hit = stable[rng.random(stable.size) < params.theta3]
            flat[hit] = ~flat[hit]
    return out


def generate(mask, params: MarkovNoiseParams) -> np.ndarray:
    """Sample one noisy mask; identical inputs give identical output bits."""
    m = as_mask(mask)
    return _run_process(m, params, np.random.default_rng(params.seed))


def expected_label_mc(mask, params: MarkovNoiseParams, n_samples: int,
                      threads: int = 1) -> np.ndarray:
    """Per-site foreground frequency over independent noise draws.

    Sample i uses a child seed spawned from ``params.seed``, so results do
    not depend on n_samples beyond truncation, and the integer vote counts
    make the reduction exact regardless of thread scheduling.
    """
    m = as_mask(mask)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    children = np.random.SeedSequence(params.seed).spawn(n_samples)

    def count_range(lo: int, hi: int) -> np.ndarray:
        counts = np.zeros(m.shape, dtype=np.int64)
        for i in range(lo, hi):
            counts += _run_process(m, params, np.random.default_rng(children[i]))
        return counts

    threads = max(1, int(threads))
    if threads == 1 or n_samples < 2 * threads:
        total = count_range(0, n_samples)
    else:
        from concurrent.futures import ThreadPoolExecutor

        edges = np.linspace(0, n_samples, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(count_range, edges[:-1], edges[1:]))
        total = np.sum(parts, axis=0)  # integer sum: order-independent
    return total / float(n_samples)


def bayes_mask_one_step(mask, theta1: float, theta2: float) -> np.ndarray:
    """Most-likely-label mask after a single noise step.

    A single step moves only boundary sites, so thresholding the expected
    noisy label at 1/2 yields the whole dilated mask when boundary sites are
    more likely on than off (theta1*theta2 >= 1/2), the eroded mask when
    foreground-boundary sites are more likely lost than kept
    (1 + theta1*theta2 - theta2 < 1/2), and the input mask otherwise. The
    two conditions are mutually exclusive.
    """
    for name, v in (("theta1", theta1), ("theta2", theta2)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    m = as_mask(mask)
    if theta1 * theta2 >= 0.5:
        return dilate_one(m)
    if 1.0 + theta1 * theta2 - theta2 < 0.5:
        return erode_one(m)
    return m.copy()


def dilate_erode_noise(mask, max_pixels: int, seed: int = 0) -> np.ndarray:
    """Uniformly dilate or erode by a uniform 1..max_pixels layers.

    The direction coin is drawn first, then the layer count. Erosion stops
    early once the foreground vanishes (the remaining layers are no-ops and
    are skipped; the result stays empty).
    """
    m = as_mask(mask)
    if max_pixels < 1:
        raise ValueError("max_pixels must be >= 1")
    rng = np.random.default_rng(seed)
    grow = rng.random() < 0.5
    k = int(rng.integers(1, max_pixels + 1))
    out = m
    for _ in range(k):
        out = dilate_one(out) if grow else erode_one(out)
        if not grow and not out.any():
            break
    return out
