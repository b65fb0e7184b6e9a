"""Sample-set evaluation: deterministic feature extraction plus FID and KID.

The pretrained-backbone features of common FID tooling are replaced by a
seeded frozen random convolutional stack (or an optional small classifier
trained on class-fraction regression), so scores are reproducible without
external weights. Absolute values are only comparable under one extractor
fingerprint; the pipeline uses them directionally.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .diffusion import fields_to_training_tensor
from .errors import ConfigurationError, DataError
from .fields import class_fractions
from .validation import check_finite

EXTRACTORS = ("fixed_random_conv", "trained_classifier")


@dataclass(frozen=True)
class FeatureSpec:
    extractor: str = "fixed_random_conv"
    feature_dim: int = 256
    input_side: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.extractor not in EXTRACTORS:
            raise ConfigurationError(f"extractor must be one of {EXTRACTORS}")
        if self.feature_dim < 8:
            raise ConfigurationError("feature_dim must be >= 8")


def _conv_stack(in_channels: int, feature_dim: int) -> nn.Sequential:
    widths = [in_channels, 32, 64, 128, feature_dim]
    layers = []
    for cin, cout in zip(widths[:-1], widths[1:]):
        layers.append(nn.Conv2d(cin, cout, 3, stride=2, padding=1, bias=False))
        layers.append(nn.LeakyReLU(0.2))
    layers.append(nn.AdaptiveAvgPool2d(1))
    return nn.Sequential(*layers)


def _seed_weights(module: nn.Module, seed: int) -> None:
    generator = torch.Generator("cpu").manual_seed(seed)
    for p in module.parameters():
        fan_in = p.shape[1] * p.shape[2] * p.shape[3] if p.ndim == 4 else p.shape[-1]
        with torch.no_grad():
            p.copy_(torch.randn(p.shape, generator=generator) * (2.0 / fan_in) ** 0.5)


class FixedRandomConvExtractor:
    """Frozen random conv stack; deterministic given (seed, dims, classes)."""

    def __init__(self, n_classes: int, spec: FeatureSpec):
        self.spec = spec
        self.n_classes = n_classes
        self.net = _conv_stack(n_classes, spec.feature_dim)
        _seed_weights(self.net, spec.seed)
        self.net.eval()

    @property
    def fingerprint(self) -> str:
        s = self.spec
        return f"fixed_random_conv:seed={s.seed}:dim={s.feature_dim}:side={s.input_side}:classes={self.n_classes}"

    def __call__(self, fields: list) -> np.ndarray:
        return _run_extractor(self.net, fields, self.spec, batch=64)


class TrainedClassifierExtractor:
    """Conv features fitted to regress per-class pixel fractions on a corpus."""

    def __init__(self, n_classes: int, spec: FeatureSpec):
        self.spec = spec
        self.n_classes = n_classes
        self.net = _conv_stack(n_classes, spec.feature_dim)
        _seed_weights(self.net, spec.seed)
        self.head = nn.Linear(spec.feature_dim, n_classes)
        self.fitted_ = False

    @property
    def fingerprint(self) -> str:
        s = self.spec
        return f"trained_classifier:seed={s.seed}:dim={s.feature_dim}:side={s.input_side}:classes={self.n_classes}"

    def fit(self, corpus: list, epochs: int = 5, batch_size: int = 32, lr: float = 1e-3):
        if not corpus:
            raise ConfigurationError("trained_classifier extractor needs a nonempty corpus")
        palette = corpus[0].palette
        x = fields_to_training_tensor(corpus, palette, self.spec.input_side, "one_hot")
        y = torch.tensor(
            [
                [class_fractions(f).get(c, 0.0) for c in range(self.n_classes)]
                for f in corpus
            ],
            dtype=torch.float32,
        )
        torch.manual_seed(self.spec.seed)
        params = list(self.net.parameters()) + list(self.head.parameters())
        optimizer = torch.optim.Adam(params, lr=lr)
        shuffler = np.random.default_rng(self.spec.seed)
        self.net.train()
        for _ in range(epochs):
            order = shuffler.permutation(len(corpus))
            for start in range(0, len(corpus), batch_size):
                idx = order[start : start + batch_size]
                feats = self.net(x[idx]).flatten(1)
                loss = torch.mean((self.head(feats) - y[idx]) ** 2)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
        self.net.eval()
        self.fitted_ = True
        return self

    def __call__(self, fields: list) -> np.ndarray:
        if not self.fitted_:
            raise ConfigurationError("trained_classifier extractor is not fitted")
        return _run_extractor(self.net, fields, self.spec, batch=64)


def _run_extractor(net, fields, spec: FeatureSpec, batch: int) -> np.ndarray:
    if not fields:
        raise DataError("cannot extract features from an empty field list")
    palette = fields[0].palette
    x = fields_to_training_tensor(fields, palette, spec.input_side, "one_hot")
    rows = []
    with torch.no_grad():
        for start in range(0, x.shape[0], batch):
            feats = net(x[start : start + batch]).flatten(1)
            rows.append(feats.double().numpy())
    return np.concatenate(rows, axis=0)


def make_extractor(spec: FeatureSpec, n_classes: int, corpus: list | None = None):
    if spec.extractor == "fixed_random_conv":
        return FixedRandomConvExtractor(n_classes, spec)
    extractor = TrainedClassifierExtractor(n_classes, spec)
    if corpus is None:
        raise ConfigurationError("trained_classifier extractor requires a training corpus")
    return extractor.fit(corpus)


def extract_features(fields: list, spec_or_extractor) -> np.ndarray:
    """Feature matrix (one row per field) under a spec or a built extractor."""
    if isinstance(spec_or_extractor, FeatureSpec):
        if not fields:
            raise DataError("cannot extract features from an empty field list")
        extractor = make_extractor(spec_or_extractor, len(fields[0].palette))
    else:
        extractor = spec_or_extractor
    return extractor(fields)


# -- metrics ------------------------------------------------------------------

COV_REG = 1e-6


def _sym_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Fréchet distance between Gaussian fits of two feature sets.

    Covariances are regularized by +1e-6 I; the cross term uses the symmetric
    square root via eigen-decomposition with negative eigenvalues clipped.
    """
    a = check_finite(np.asarray(features_a, dtype=np.float64), "features A")
    b = check_finite(np.asarray(features_b, dtype=np.float64), "features B")
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DataError("feature matrices must be N x D with matching D")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    d = a.shape[1]
    cov_a = np.cov(a, rowvar=False).reshape(d, d) + COV_REG * np.eye(d)
    cov_b = np.cov(b, rowvar=False).reshape(d, d) + COV_REG * np.eye(d)
    sqrt_a = _sym_sqrt(cov_a)
    cross = np.clip(np.linalg.eigvalsh(sqrt_a @ cov_b @ sqrt_a), 0.0, None)
    diff = mu_a - mu_b
    value = diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.sum(np.sqrt(cross))
    return float(max(value, 0.0))


def kid(features_a: np.ndarray, features_b: np.ndarray, kernel_degree: int = 3) -> float:
    """Unbiased squared MMD with the polynomial kernel (x.y/D + 1)^degree.

    Within-set sums exclude the diagonal; slightly negative values are
    expected under the null (unbiased estimator).
    """
    a = check_finite(np.asarray(features_a, dtype=np.float64), "features A")
    b = check_finite(np.asarray(features_b, dtype=np.float64), "features B")
    n, m = a.shape[0], b.shape[0]
    if n < 2 or m < 2:
        raise DataError("kid needs at least 2 samples per set")
    d = a.shape[1]

    def kernel(x, y):
        return (x @ y.T / d + 1.0) ** kernel_degree

    kaa = kernel(a, a)
    kbb = kernel(b, b)
    kab = kernel(a, b)
    term_a = (kaa.sum() - np.trace(kaa)) / (n * (n - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (m * (m - 1))
    return float(term_a + term_b - 2.0 * kab.mean())


@dataclass(frozen=True)
class ScoreReport:
    fid: float
    kid: float
    n_a: int
    n_b: int
    extractor_fingerprint: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "fid": self.fid,
                "kid": self.kid,
                "n_a": self.n_a,
                "n_b": self.n_b,
                "extractor": self.extractor_fingerprint,
            },
            indent=2,
        )


def score_sets(fields_a: list, fields_b: list, spec: FeatureSpec | None = None) -> ScoreReport:
    """FID and KID between two sets of fields under one extractor."""
    spec = spec or FeatureSpec()
    if not fields_a or not fields_b:
        raise DataError("both field sets must be nonempty")
    extractor = make_extractor(spec, len(fields_a[0].palette))
    fa = extractor(fields_a)
    fb = extractor(fields_b)
    return ScoreReport(fid(fa, fb), kid(fa, fb), len(fields_a), len(fields_b), extractor.fingerprint)
