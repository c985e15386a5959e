"""sklearn-style estimator facade over the semantic codec.

``SemanticCodec.fit`` trains the knowledge base on a corpus of
grayscale images, ``transform`` encodes images to semantic frames, and
``inverse_transform`` reconstructs them, so the codec drops into
pipelines and hyperparameter searches like any other transformer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .importance import builtin_saliency, make_provider
from .kb import KbParams
from .semcodec import CodecConfig, ImageGray, SemanticFrame, build_kb, decode, encode, image_from_array


def as_image(x) -> ImageGray:
    """Accept ImageGray or a 2-D uint8-convertible array."""
    if isinstance(x, ImageGray):
        return x
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ValueError("images must be 2-D grayscale arrays")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return image_from_array(arr)


def check_image_list(X) -> list[ImageGray]:
    imgs = [as_image(x) for x in X]
    if not imgs:
        raise ValueError("expected at least one image")
    return imgs


class SemanticCodec(TransformerMixin, BaseEstimator):
    """Mixed-granularity semantic image codec with a fitted KB.

    Parameters mirror the codec configuration; ``importance`` selects
    the heatmap provider ("builtin" or "file:PATH").
    """

    def __init__(
        self,
        k_coarse: int = 256,
        k_fine: int = 64,
        p_fine: float = 0.20,
        p_protect: float = 0.50,
        kmeans_max_iters: int = 100,
        kmeans_tol: float = 1e-6,
        seed: int = 0,
        importance: str = "builtin",
    ):
        self.k_coarse = k_coarse
        self.k_fine = k_fine
        self.p_fine = p_fine
        self.p_protect = p_protect
        self.kmeans_max_iters = kmeans_max_iters
        self.kmeans_tol = kmeans_tol
        self.seed = seed
        self.importance = importance

    def _config(self) -> CodecConfig:
        return CodecConfig(
            p_fine=self.p_fine,
            p_protect=self.p_protect,
            k_coarse=self.k_coarse,
            k_fine=self.k_fine,
            kmeans_max_iters=self.kmeans_max_iters,
            kmeans_tol=self.kmeans_tol,
            seed=self.seed,
        )

    def _provider(self):
        return make_provider(self.importance) if self.importance != "builtin" else builtin_saliency

    def fit(self, X, y=None):
        imgs = check_image_list(X)
        self.kb_ = build_kb(imgs, self._config(), self._provider(), params=KbParams())
        return self

    def _check_fitted(self):
        if not hasattr(self, "kb_"):
            raise NotFittedError("SemanticCodec must be fitted before use")

    def transform(self, X) -> list[SemanticFrame]:
        self._check_fitted()
        provider = self._provider()
        config = self._config()
        out = []
        for img in check_image_list(X):
            out.append(encode(img, self.kb_, provider(img), config))
        return out

    def inverse_transform(self, frames) -> list[np.ndarray]:
        self._check_fitted()
        out = []
        for frame in frames:
            img = decode(frame, self.kb_)
            out.append(img.pixels[: img.original_height, : img.original_width].copy())
        return out
