"""Reference classifier over pooled MS-TRS stacks, trained under mask regimes.

The model is multinomial logistic regression: every feature channel is
average-pooled to ``P x P``, flattened, standardized with statistics from
a calibration pass, and fed to a softmax layer trained with Adam.

Coded-aperture observations are simulated on the fly for every batch so
that the regime decides which mask each batch sees:

``m1m1``
    one fixed mask for training, the same mask for validation.
``m1m2``
    one fixed mask for training, a different fixed mask for validation.
``dm1dm2``
    a fresh pseudorandom mask per training batch (shared by all clips in
    the batch) and separately drawn masks for validation.
"""

from __future__ import annotations

import base64
import csv
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .clip import Clip
from .errors import DimensionError, DivergenceError, FormatError, ParameterError
from .features import StrideConfig, extract_mstrs
from .mask import generate_mask
from .motion import DEFAULT_EPSILON
from .optics import CaptureConfig, capture_frames
from .synth import augment, resize_frames

log = logging.getLogger(__name__)

REGIMES = ("m1m1", "m1m2", "dm1dm2")
INPUTS = ("mstrs", "t", "ca")
# epoch key reserved for the feature-statistics pass
CALIBRATION_EPOCH = 1 << 30


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass(frozen=True)
class MaskRegime:
    mode: str = "dm1dm2"
    train_seed: int = 1
    val_seed: int = 2

    def __post_init__(self):
        if self.mode not in REGIMES:
            raise ParameterError(f"unknown regime {self.mode!r}; expected one of {REGIMES}")
        if self.mode != "m1m1" and self.train_seed == self.val_seed:
            raise ParameterError(f"{self.mode} needs distinct train and val mask seeds")

    def train_mask_seed(self, epoch: int, batch: int) -> int:
        if self.mode == "dm1dm2":
            return derive_seed(self.train_seed, epoch, batch)
        return self.train_seed

    def val_mask_seed(self, batch: int) -> int:
        if self.mode == "m1m1":
            return self.train_seed
        if self.mode == "m1m2":
            return self.val_seed
        return derive_seed(self.val_seed, 1 << 20, batch)


@dataclass
class Hyper:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    l2: float = 0.0
    pool: int = 8
    input: str = "mstrs"
    epsilon: float = DEFAULT_EPSILON
    boundary_effect: bool = False
    augment: bool = True
    calibration_clips: int = 64
    aug_views: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.input not in INPUTS:
            raise ParameterError(f"unknown input {self.input!r}; expected one of {INPUTS}")
        if self.batch_size < 1 or self.epochs < 0 or self.pool < 1:
            raise ParameterError("batch_size and pool must be >= 1, epochs >= 0")


def average_pool(tensor: np.ndarray, p: int) -> np.ndarray:
    """Average-pool each channel of ``(C, H, W)`` to ``(C, p, p)`` over near-equal blocks."""
    c, h, w = tensor.shape
    if p > min(h, w):
        raise ParameterError(f"pool size {p} exceeds map size {h}x{w}")
    rows = np.linspace(0, h, p + 1).astype(int)
    cols = np.linspace(0, w, p + 1).astype(int)
    sums = np.add.reduceat(np.add.reduceat(tensor, rows[:-1], axis=1), cols[:-1], axis=2)
    area = np.outer(np.diff(rows), np.diff(cols))
    return sums / area


def clip_view(
    clip: Clip,
    cfg: StrideConfig,
    start: int,
    aug_seed: int | None = None,
    scale: int | None = None,
) -> np.ndarray:
    """The ``cfg.clip_length`` raw frames used for one sample, at ``cfg.sim_size``.

    Training views are augmented (rescale, flip, crop to ``crop_size``);
    test views are resized to ``scale x scale`` and center-cropped. Both
    are then resized to the simulation resolution.
    """
    n = cfg.clip_length
    if start < 0 or start + n > len(clip):
        raise ParameterError(f"clip of {len(clip)} frames is too short for l={n} at start {start}")
    window = clip.replace(frames=clip.frames[start:start + n])
    crop = cfg.crop_size
    if aug_seed is not None:
        frames = augment(window, crop, aug_seed).frames
    else:
        if scale is not None:
            frames = resize_frames(window.frames, (scale, scale))
        else:
            frames = window.frames
        h, w = frames.shape[1:]
        if min(h, w) < crop:
            raise ParameterError(f"frames of {h}x{w} are smaller than crop size {crop}")
        y0, x0 = (h - crop) // 2, (w - crop) // 2
        frames = frames[:, y0:y0 + crop, x0:x0 + crop]
    return resize_frames(frames, (cfg.sim_size, cfg.sim_size))


def sample_features(frames: np.ndarray, mask, cfg: StrideConfig, hyper: Hyper) -> np.ndarray:
    """Pooled, flattened feature vector for raw frames already at ``sim_size``."""
    cap = CaptureConfig(boundary_effect=hyper.boundary_effect, noise_sigma=0.0, normalize_output=True)
    ca = capture_frames(frames, mask, cap)
    if hyper.input == "ca":
        crop = cfg.crop_size
        o = (cfg.sim_size - crop) // 2
        tensor = ca[:, o:o + crop, o:o + crop]
    else:
        kinds = ("T", "RS") if hyper.input == "mstrs" else ("T",)
        tensor = extract_mstrs(ca, cfg, hyper.epsilon, kinds=kinds).tensor.astype(np.float64)
    return average_pool(tensor, hyper.pool).ravel()


def _mask(seed: int, cfg: StrideConfig):
    return generate_mask("pseudorandom", cfg.sim_size, cfg.sim_size, 0.5, seed)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class Model:
    weights: np.ndarray
    bias: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    classes: list[str]
    cfg: StrideConfig
    hyper: Hyper
    m_w: np.ndarray = None
    v_w: np.ndarray = None
    m_b: np.ndarray = None
    v_b: np.ndarray = None
    step: int = 0

    def __post_init__(self):
        for name in ("m_w", "v_w"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros_like(self.weights))
        for name in ("m_b", "v_b"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros_like(self.bias))

    @classmethod
    def zeros(cls, n_features: int, classes, cfg, hyper, mean=None, std=None) -> "Model":
        k = len(classes)
        return cls(
            np.zeros((n_features, k)),
            np.zeros(k),
            np.zeros(n_features) if mean is None else mean,
            np.ones(n_features) if std is None else std,
            list(classes),
            cfg,
            hyper,
        )

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_mean) / self.feature_std

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities for raw (unstandardized) pooled features ``(B, D)``."""
        return _softmax(self.standardize(np.atleast_2d(x)) @ self.weights + self.bias)


def loss_and_grad(weights, bias, x, y, l2: float = 0.0):
    """Mean cross-entropy (plus ``l2/2 * |W|^2``) and its gradient for standardized ``x``."""
    b = x.shape[0]
    p = _softmax(x @ weights + bias)
    loss = -np.mean(np.log(p[np.arange(b), y] + 1e-300)) + 0.5 * l2 * np.sum(weights**2)
    delta = p.copy()
    delta[np.arange(b), y] -= 1.0
    delta /= b
    return loss, x.T @ delta + l2 * weights, delta.sum(axis=0)


def adam_step(model: Model, grad_w, grad_b) -> None:
    h = model.hyper
    model.step += 1
    t = model.step
    for param, grad, m, v in (
        (model.weights, grad_w, model.m_w, model.v_w),
        (model.bias, grad_b, model.m_b, model.v_b),
    ):
        m *= h.beta1
        m += (1 - h.beta1) * grad
        v *= h.beta2
        v += (1 - h.beta2) * grad**2
        m_hat = m / (1 - h.beta1**t)
        v_hat = v / (1 - h.beta2**t)
        param -= h.lr * m_hat / (np.sqrt(v_hat) + h.adam_eps)


@dataclass
class TrainReport:
    regime: str
    config: dict
    epochs: list[dict] = field(default_factory=list)
    test: dict | None = None

    def to_json(self) -> dict:
        return {"regime": self.regime, "config": self.config, "epochs": self.epochs, "test": self.test}

    def write(self, json_path: str | os.PathLike, csv_path: str | os.PathLike | None = None) -> None:
        with open(json_path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
        if csv_path is not None and self.epochs:
            with open(csv_path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(self.epochs[0]))
                writer.writeheader()
                writer.writerows(self.epochs)


def _starts(n_frames: int, clip_length: int, rng: np.random.Generator) -> int:
    return int(rng.integers(0, n_frames - clip_length + 1))


def _center_start(n_frames: int, clip_length: int) -> int:
    return (n_frames - clip_length) // 2


def _batch_features(clips, mask, cfg, hyper, starts, aug_seeds):
    return np.stack([
        sample_features(clip_view(c, cfg, s, a), mask, cfg, hyper)
        for c, s, a in zip(clips, starts, aug_seeds)
    ])


def _val_features(clips, regime, cfg, hyper):
    if not clips:
        return None
    feats = []
    for b0 in range(0, len(clips), hyper.batch_size):
        batch = clips[b0:b0 + hyper.batch_size]
        mask = _mask(regime.val_mask_seed(b0 // hyper.batch_size), cfg)
        starts = [_center_start(len(c), cfg.clip_length) for c in batch]
        feats.append(_batch_features(batch, mask, cfg, hyper, starts, [None] * len(batch)))
    return np.concatenate(feats)


def _accuracy(model, x, y):
    p = model.predict_proba(x)
    loss = -np.mean(np.log(p[np.arange(len(y)), y] + 1e-300))
    return float(np.mean(p.argmax(axis=1) == y)), float(loss)


def train(
    train_clips: list[Clip],
    val_clips: list[Clip],
    cfg: StrideConfig,
    regime: MaskRegime,
    hyper: Hyper,
    classes=None,
) -> tuple[Model, TrainReport]:
    """Fit the classifier; every random choice derives from ``hyper.seed`` and the regime seeds."""
    if not train_clips:
        raise ParameterError("training split is empty")
    for c in list(train_clips) + list(val_clips):
        if len(c) < cfg.clip_length:
            raise DimensionError(f"clip of {len(c)} frames is shorter than l={cfg.clip_length}")
    if classes is None:
        k = max(c.label for c in list(train_clips) + list(val_clips)) + 1
        names = {c.label: c.label_name for c in list(train_clips) + list(val_clips)}
        classes = [names.get(i, str(i)) for i in range(k)]
    y_train = np.array([c.label for c in train_clips])
    y_val = np.array([c.label for c in val_clips])
    n = len(train_clips)

    cache = {} if (hyper.aug_views and regime.mode != "dm1dm2") else None

    def features_for(idx, epoch, batch):
        mask_seed = regime.train_mask_seed(epoch, batch)
        mask = _mask(mask_seed, cfg)
        rows = []
        for i in idx:
            view = epoch % hyper.aug_views if hyper.aug_views else epoch
            rng = np.random.default_rng([hyper.seed, i, view, 7])
            start = _starts(len(train_clips[i]), cfg.clip_length, rng)
            aug_seed = derive_seed(hyper.seed, i, view) if hyper.augment else None
            key = (i, view)
            if cache is not None and key in cache:
                rows.append(cache[key])
                continue
            row = sample_features(clip_view(train_clips[i], cfg, start, aug_seed), mask, cfg, hyper)
            if cache is not None:
                cache[key] = row
            rows.append(row)
        return np.stack(rows)

    # calibration pass: feature statistics under the regime's own masks
    calib_rng = np.random.default_rng([hyper.seed, 99])
    calib_idx = calib_rng.permutation(n)[: min(n, hyper.calibration_clips)]
    calib = np.concatenate([
        features_for(calib_idx[b0:b0 + hyper.batch_size], CALIBRATION_EPOCH, b0 // hyper.batch_size)
        for b0 in range(0, len(calib_idx), hyper.batch_size)
    ])
    mean = calib.mean(axis=0)
    std = calib.std(axis=0) + 1e-8
    model = Model.zeros(calib.shape[1], classes, cfg, hyper, mean, std)

    x_val = _val_features(list(val_clips), regime, cfg, hyper)
    report = TrainReport(
        regime=regime.mode,
        config={"stride": dataclasses.asdict(cfg), "hyper": dataclasses.asdict(hyper), "regime": dataclasses.asdict(regime)},
    )
    for epoch in range(hyper.epochs):
        order = np.random.default_rng([hyper.seed, epoch, 1]).permutation(n)
        losses, correct = [], 0
        for bi, b0 in enumerate(range(0, n, hyper.batch_size)):
            idx = order[b0:b0 + hyper.batch_size]
            x = model.standardize(features_for(idx, epoch, bi))
            loss, gw, gb = loss_and_grad(model.weights, model.bias, x, y_train[idx], hyper.l2)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {bi}")
            correct += int(np.sum((x @ model.weights + model.bias).argmax(axis=1) == y_train[idx]))
            adam_step(model, gw, gb)
            losses.append(loss * len(idx))
        row = {"epoch": epoch, "train_loss": float(np.sum(losses) / n), "train_acc": correct / n}
        if x_val is not None:
            row["val_acc"], row["val_loss"] = _accuracy(model, x_val, y_val)
        report.epochs.append(row)
        log.info("epoch %d %s", epoch, row)
    return model, report


@dataclass
class EvalReport:
    n_videos: int
    clips_per_video: list[int]
    top1: float
    top2: float
    top3: float
    per_class: dict
    scores: list[list[float]] = field(repr=False)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def protocol_starts(n_frames: int, clip_length: int, n_starts: int) -> list[int]:
    """``n_starts`` clip start frames spread evenly over the video."""
    if n_frames < clip_length:
        raise ParameterError(f"video of {n_frames} frames is shorter than l={clip_length}")
    return [min(i * n_frames // n_starts, n_frames - clip_length) for i in range(n_starts)]


def video_scores(model: Model, clip: Clip, mask, scales=(None,), n_starts: int = 1) -> tuple[np.ndarray, int]:
    """Mean softmax over every (scale, start) crop of one video, and the crop count."""
    cfg = model.cfg
    rows = []
    for scale in scales:
        for start in protocol_starts(len(clip), cfg.clip_length, n_starts):
            frames = clip_view(clip, cfg, start, None, scale)
            rows.append(sample_features(frames, mask, cfg, model.hyper))
    probs = model.predict_proba(np.stack(rows))
    return probs.mean(axis=0), len(rows)


def evaluate(model: Model, clips: list[Clip], mask_seed: int, scales=(None,), n_starts: int = 1) -> EvalReport:
    """Score every video under one mask; top-k accuracy overall and per class."""
    mask = _mask(mask_seed, model.cfg)
    scores, counts = [], []
    for clip in clips:
        s, k = video_scores(model, clip, mask, scales, n_starts)
        scores.append(s)
        counts.append(k)
    scores = np.array(scores)
    labels = np.array([c.label for c in clips])
    ranks = np.argsort(-scores, axis=1)

    def topk(k, sel=slice(None)):
        hit = np.any(ranks[sel, :k] == labels[sel, None], axis=1)
        return float(hit.mean()) if hit.size else float("nan")

    per_class = {}
    for lab in np.unique(labels):
        sel = labels == lab
        name = model.classes[lab] if lab < len(model.classes) else str(lab)
        per_class[name] = {"n": int(sel.sum()), "top1": topk(1, sel), "top2": topk(2, sel), "top3": topk(3, sel)}
    return EvalReport(len(clips), counts, topk(1), topk(2), topk(3), per_class, scores.tolist())


def _b64(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f4").tobytes()).decode("ascii")


def _unb64(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f4").astype(np.float64).reshape(shape)


def save_model(model: Model, path: str | os.PathLike) -> None:
    """JSON with base64 little-endian float32 arrays."""
    doc = {
        "format": "camotion-softmax",
        "version": 1,
        "classes": model.classes,
        "n_features": int(model.weights.shape[0]),
        "stride_config": dataclasses.asdict(model.cfg),
        "hyper": dataclasses.asdict(model.hyper),
        "step": model.step,
        "arrays": {
            name: _b64(getattr(model, name))
            for name in ("weights", "bias", "feature_mean", "feature_std", "m_w", "v_w", "m_b", "v_b")
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path: str | os.PathLike) -> Model:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "camotion-softmax":
        raise FormatError(f"{path}: not a camotion model")
    d, k = doc["n_features"], len(doc["classes"])
    shapes = {"weights": (d, k), "m_w": (d, k), "v_w": (d, k), "bias": (k,), "m_b": (k,), "v_b": (k,),
              "feature_mean": (d,), "feature_std": (d,)}
    arrays = {name: _unb64(doc["arrays"][name], shape) for name, shape in shapes.items()}
    cfg = doc["stride_config"]
    cfg["strides"] = tuple(cfg["strides"])
    return Model(
        classes=doc["classes"],
        cfg=StrideConfig(**cfg),
        hyper=Hyper(**doc["hyper"]),
        step=doc["step"],
        **arrays,
    )
