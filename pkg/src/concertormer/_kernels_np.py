"""Pure-NumPy compute kernels, the fallback when the compiled extension is absent.

Both backends accumulate in float64 with the reduction index ascending
(products of float32 operands are exact in float64), so their outputs are
bit-identical and golden files do not depend on which backend is active.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def _pad_tail(arr: np.ndarray) -> np.ndarray:
    """Append a zero slot on the last axis.

    einsum switches to a pairwise-reduction dot kernel when the output's
    trailing axis has size 1, which breaks the ascending-order contract; a
    dummy output slot keeps it on the standard loop.
    """
    return np.concatenate([arr, np.zeros_like(arr[..., :1])], axis=-1)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched matrix product over the last two axes.

    Leading axes must match exactly; the caller broadcasts beforehand.
    """
    if b.shape[-1] == 1:
        return matmul(a, _pad_tail(b))[..., :1].copy()
    out = np.einsum("...mp,...pq->...mq", a, b, dtype=np.float64)
    return np.ascontiguousarray(out.astype(a.dtype, copy=False))


def conv2d(x: np.ndarray, w: np.ndarray, stride: int, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    """Cross-correlation of x (h, w, cin) with w (kh, kw, cin/groups, cout).

    Zero padding is explicit (top/bottom/left/right); groups are inferred from
    the channel extents. groups == cin with a single input channel per filter
    is the depth-wise fast path.
    """
    kh, kw, cin_g, cout = w.shape
    cin = x.shape[2]
    groups = cin // cin_g
    if cout == 1:  # necessarily dense: groups must divide cout
        return conv2d(x, _pad_tail(w), stride, pt, pb, pl, pr)[..., :1].copy()
    xp = np.pad(x, ((pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))
    if stride != 1:
        win = win[::stride, ::stride]
    # (oh, ow, cin, kh, kw) -> (oh, ow, kh, kw, cin): reduction runs (kh, kw, cin)
    # ascending per output element, matching the compiled loops.
    win = win.transpose(0, 1, 3, 4, 2)
    if groups == 1:
        out = np.einsum("hwklc,klco->hwo", win, w, dtype=np.float64)
    elif cin_g == 1 and cout == cin:
        out = np.einsum("hwklc,klc->hwc", win, w[:, :, 0, :], dtype=np.float64)
    else:
        cout_g = cout // groups
        oh, ow = win.shape[:2]
        out = np.empty((oh, ow, cout), dtype=np.float64)
        for g in range(groups):
            wg = w[:, :, :, g * cout_g:(g + 1) * cout_g]
            if cout_g == 1:
                wg = _pad_tail(wg)
            res = np.einsum("hwklc,klco->hwo", win[:, :, :, :, g * cin_g:(g + 1) * cin_g],
                            wg, dtype=np.float64)
            out[:, :, g * cout_g:(g + 1) * cout_g] = res[:, :, :cout_g]
    return np.ascontiguousarray(out.astype(x.dtype, copy=False))


def conv2d_grad_weight(x: np.ndarray, gy: np.ndarray, kh: int, kw: int, stride: int,
                       pt: int, pb: int, pl: int, pr: int, groups: int) -> np.ndarray:
    """Weight gradient of conv2d; reduction over output pixels, row-major ascending."""
    cin = x.shape[2]
    cout = gy.shape[2]
    cin_g = cin // groups
    xp = np.pad(x, ((pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))
    if stride != 1:
        win = win[::stride, ::stride]
    win = win[: gy.shape[0], : gy.shape[1]].transpose(0, 1, 3, 4, 2)
    if groups == 1:
        gyp = _pad_tail(gy) if cout == 1 else gy
        gw = np.einsum("hwklc,hwo->klco", win, gyp, dtype=np.float64)[:, :, :, :cout]
    elif cin_g == 1 and cout == cin:
        gw = np.einsum("hwklc,hwc->klc", win, gy, dtype=np.float64)[:, :, None, :]
    else:
        cout_g = cout // groups
        gw = np.empty((kh, kw, cin_g, cout), dtype=np.float64)
        for g in range(groups):
            gy_g = gy[:, :, g * cout_g:(g + 1) * cout_g]
            if cout_g == 1:
                gy_g = _pad_tail(gy_g)
            res = np.einsum("hwklc,hwo->klco", win[:, :, :, :, g * cin_g:(g + 1) * cin_g],
                            gy_g, dtype=np.float64)
            gw[:, :, :, g * cout_g:(g + 1) * cout_g] = res[:, :, :, :cout_g]
    return np.ascontiguousarray(gw.astype(x.dtype, copy=False))
