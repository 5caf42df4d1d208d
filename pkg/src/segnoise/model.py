"""Trainable per-pixel segmenters and controlled-error oracle predictors.

The segmenter contract is deliberately small: ``fit(images, labels, seed)``
trains from scratch and ``predict_logits(image)`` returns a per-site score
field whose sign is the predicted label (>= 0 means foreground). Anything
honoring that contract can drive the correction loop, including a process
living outside this package (see ExternalSegmenter).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .grid import as_field, as_mask
from .noise import MarkovNoiseParams, bayes_mask_one_step
from .sdf import signed_distance

__all__ = [
    "Segmenter",
    "TrainConfig",
    "TrainingDivergedError",
    "LogisticSegmenter",
    "fit_logistic",
    "loss_and_grad",
    "OracleErrorSpec",
    "PerturbedOracle",
    "perturbed_oracle",
    "ExternalSegmenter",
]


@runtime_checkable
class Segmenter(Protocol):
    """Anything that can be trained on masks and scored per site."""

    def fit(self, images: Sequence[np.ndarray], labels: Sequence[np.ndarray],
            seed: int | None = None) -> "Segmenter": ...

    def predict_logits(self, image: np.ndarray) -> np.ndarray: ...


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during gradient descent."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 400
    l2: float = 1e-4
    feature_radii: tuple[int, ...] = (1, 3)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if any(r < 1 for r in self.feature_radii):
            raise ValueError("feature radii must be >= 1")


def _features(image: np.ndarray, radii: tuple[int, ...]) -> np.ndarray:
    """Per-site design matrix: constant, intensity, and box means."""
    img = as_field(image)
    cols = [np.ones(img.size), img.reshape(-1)]
    for r in radii:
        cols.append(ndimage.uniform_filter(img, size=2 * r + 1, mode="nearest").reshape(-1))
    return np.stack(cols, axis=1)


def loss_and_grad(w: np.ndarray, X: np.ndarray, y: np.ndarray,
                  l2: float) -> tuple[float, np.ndarray]:
    """Mean logistic cross-entropy with an L2 penalty on the non-bias weights.

    Returns (loss, gradient); both are exact, which makes the gradient easy
    to validate against finite differences.
    """
    f = X @ w
    # log(1 + e^f) - y*f, computed stably
    loss = float(np.mean(np.logaddexp(0.0, f) - y * f))
    reg = w.copy()
    reg[0] = 0.0
    loss += 0.5 * l2 * float(reg @ reg)
    grad = X.T @ (expit(f) - y) / y.size + l2 * reg
    return loss, grad


class LogisticSegmenter:
    """Per-pixel logistic regression on intensity and box-mean features.

    Trained by full-batch gradient descent from zero weights, so a fit is a
    pure function of the data and config; ``seed`` is accepted for contract
    compatibility and recorded but does not influence the result.
    """

    def __init__(self, cfg: TrainConfig | None = None):
        self.cfg = cfg or TrainConfig()
        self.weights: np.ndarray | None = None
        self.losses: list[float] = []
        self.seed: int | None = None

    def fit(self, images, labels, seed=None):
        if len(images) != len(labels) or not images:
            raise ValueError("need equally many images and label masks, at least one")
        X = np.concatenate([_features(img, self.cfg.feature_radii) for img in images])
        y = np.concatenate([as_mask(lbl).reshape(-1) for lbl in labels]).astype(np.float64)
        if X.shape[0] != y.shape[0]:
            raise ValueError("image and label shapes disagree")
        w = np.zeros(X.shape[1])
        losses = []
        # overflow to inf is the divergence signal itself, not a stray warning
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(self.cfg.epochs):
                loss, grad = loss_and_grad(w, X, y, self.cfg.l2)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"loss diverged under {self.cfg}")
                losses.append(loss)
                w -= self.cfg.learning_rate * grad
        self.weights = w
        self.losses = losses
        self.seed = self.cfg.seed if seed is None else seed
        return self

    def predict_logits(self, image):
        if self.weights is None:
            raise RuntimeError("fit() the model before predicting")
        img = as_field(image)
        X = _features(img, self.cfg.feature_radii)
        return (X @ self.weights).reshape(img.shape)

    # --- plain-JSON persistence, used by the train/predict commands ---

    def to_json(self) -> str:
        if self.weights is None:
            raise RuntimeError("fit() the model before saving")
        return json.dumps({
            "kind": "logistic",
            "weights": [float(v) for v in self.weights],
            "config": {
                "learning_rate": self.cfg.learning_rate,
                "epochs": self.cfg.epochs,
                "l2": self.cfg.l2,
                "feature_radii": list(self.cfg.feature_radii),
                "seed": self.cfg.seed,
            },
        }, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "LogisticSegmenter":
        doc = json.loads(text)
        if doc.get("kind") != "logistic":
            raise ValueError(f"not a logistic model file (kind={doc.get('kind')!r})")
        c = doc["config"]
        model = cls(TrainConfig(learning_rate=c["learning_rate"], epochs=c["epochs"],
                                l2=c["l2"], feature_radii=tuple(c["feature_radii"]),
                                seed=c["seed"]))
        model.weights = np.asarray(doc["weights"], dtype=np.float64)
        return model


def fit_logistic(images, labels, cfg: TrainConfig | None = None,
                 seed: int | None = None) -> LogisticSegmenter:
    """Train a LogisticSegmenter; convenience wrapper around the class."""
    return LogisticSegmenter(cfg).fit(images, labels, seed)


@dataclass(frozen=True)
class OracleErrorSpec:
    """Controlled additive error for oracle predictors.

    Each image receives a constant offset ``a = sign * eps1 * b`` with
    ``b ~ Bernoulli(eps0/eps1)`` and a fair sign coin, so the mean absolute
    offset is exactly eps0 and no offset ever exceeds eps1.
    """

    eps0: float
    eps1: float
    seed: int = 0

    def __post_init__(self):
        if self.eps0 < 0:
            raise ValueError("eps0 must be >= 0")
        if self.eps1 < self.eps0:
            raise ValueError("eps1 must be >= eps0")


def draw_offsets(rng: np.random.Generator, n: int, eps0: float, eps1: float) -> np.ndarray:
    """Per-image offsets; hit coins are drawn first, then sign coins."""
    if eps1 == 0:
        # eps0 <= eps1 forces eps0 == 0: every offset is exactly zero
        return np.zeros(n)
    hit = rng.random(n) < (eps0 / eps1)
    sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    return sign * eps1 * hit


class PerturbedOracle:
    """Signed-distance predictor with exactly controlled per-image error.

    Wraps a list of base fields; image i is predicted as base[i] plus a
    constant offset drawn once at construction.
    """

    def __init__(self, base_sdfs: Sequence[np.ndarray], err: OracleErrorSpec):
        self._base = [as_field(f) for f in base_sdfs]
        self.err = err
        self.offsets = draw_offsets(np.random.default_rng(err.seed),
                                    len(self._base), err.eps0, err.eps1)

    def __len__(self) -> int:
        return len(self._base)

    def predict_sdf(self, i: int) -> np.ndarray:
        return self._base[i] + self.offsets[i]


def perturbed_oracle(clean_masks, noise_params: MarkovNoiseParams,
                     err: OracleErrorSpec) -> PerturbedOracle:
    """Oracle whose base prediction is the one-step most-likely mask's SDF."""
    base = [signed_distance(bayes_mask_one_step(m, noise_params.theta1,
                                                noise_params.theta2))
            for m in clean_masks]
    return PerturbedOracle(base, err)


def _digest(image: np.ndarray) -> str:
    arr = np.ascontiguousarray(as_field(image))
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


class ExternalSegmenter:
    """Segmenter served by an external process through a shared directory.

    Layout under ``root`` (all tensors in the GTF container format):

    * ``images/train_00000.gtf ...`` and ``images/val_00000.gtf ...`` are
      written once at construction.
    * each ``fit`` call opens ``round_000/``, ``round_001/`` ... containing
      ``labels/train_*.gtf`` (the current training labels) and, once all are
      written, an empty ``LABELS_DONE`` sentinel.
    * the external process trains on the round's labels and writes
      ``logits/train_*.gtf`` and ``logits/val_*.gtf`` (f32 fields, same
      index spaces), then an empty ``DONE`` sentinel.
    * this class polls for ``DONE`` every ``poll_interval`` seconds, loads
      the logits, and serves them from memory; ``predict_logits`` matches
      images by content hash, so it only answers for the registered images.
    """

    def __init__(self, root, train_images, val_images,
                 poll_interval: float = 0.5, timeout: float | None = None):
        from . import formats  # local import: formats has no model dependency

        self._formats = formats
        self.root = Path(root)
        self.poll_interval = float(poll_interval)
        self.timeout = timeout
        self._train = [as_field(x) for x in train_images]
        self._val = [as_field(x) for x in val_images]
        self._round = -1
        self._logits: dict[str, np.ndarray] = {}
        img_dir = self.root / "images"
        img_dir.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(self._train):
            formats.save_field(img, img_dir / f"train_{i:05d}.gtf")
        for i, img in enumerate(self._val):
            formats.save_field(img, img_dir / f"val_{i:05d}.gtf")

    def fit(self, images, labels, seed=None):
        if len(images) != len(self._train):
            raise ValueError("fit() must receive the registered training images")
        for given, registered in zip(images, self._train):
            if _digest(given) != _digest(registered):
                raise ValueError("fit() images differ from the registered training images")
        if len(labels) != len(self._train):
            raise ValueError("need one label mask per training image")
        self._round += 1
        rdir = self.root / f"round_{self._round:03d}"
        (rdir / "labels").mkdir(parents=True)
        for i, lbl in enumerate(labels):
            self._formats.save_mask(as_mask(lbl), rdir / "labels" / f"train_{i:05d}.gtf")
        (rdir / "LABELS_DONE").touch()
        self._wait_for(rdir / "DONE")
        self._logits = {}
        for i, img in enumerate(self._train):
            self._logits[_digest(img)] = self._formats.load_field(
                rdir / "logits" / f"train_{i:05d}.gtf").astype(np.float64)
        for i, img in enumerate(self._val):
            self._logits[_digest(img)] = self._formats.load_field(
                rdir / "logits" / f"val_{i:05d}.gtf").astype(np.float64)
        return self

    def _wait_for(self, sentinel: Path) -> None:
        start = time.monotonic()
        while not sentinel.exists():
            if self.timeout is not None and time.monotonic() - start > self.timeout:
                raise TimeoutError(f"no {sentinel.name} after {self.timeout}s in {sentinel.parent}")
            time.sleep(self.poll_interval)

    def predict_logits(self, image):
        key = _digest(image)
        if key not in self._logits:
            raise KeyError("image was not part of the registered train/val sets "
                           "or fit() has not completed a round yet")
        return self._logits[key].copy()
