"""Input validation helpers shared by the estimators and the CLI."""

import numpy as np

from .exceptions import AspectMismatch
from .imagecore import ImageBuffer


def check_image(X, channels=None, name="image"):
    """Coerce ``X`` to an :class:`ImageBuffer`.

    Accepts an ImageBuffer or an array of shape (H, W) / (H, W, C). Integer
    arrays are rescaled from their dtype range to [0, 1].
    """
    if isinstance(X, ImageBuffer):
        img = X
    else:
        arr = np.asarray(X)
        if np.issubdtype(arr.dtype, np.integer):
            arr = arr.astype(np.float32) / np.iinfo(arr.dtype).max
        img = ImageBuffer(arr)
    if channels is not None and img.channels not in np.atleast_1d(channels):
        raise ValueError(f"{name} must have {channels} channel(s), got {img.channels}")
    return img


def check_dual_frame(X):
    """Validate a side-by-side dual-fisheye frame (width == 2 * height)."""
    img = check_image(X, name="dual-fisheye frame")
    if img.width != 2 * img.height:
        raise AspectMismatch(
            f"dual-fisheye frame must be 2:1, got {img.width}x{img.height}", stage="input")
    return img


def check_pano_height(h):
    h = int(h)
    if h < 16:
        raise ValueError(f"panorama height {h} too small")
    return h
