"""Kernel backend selection and the shared array-level compute layer.

The compiled extension (`concertormer._kernels`) is preferred; the pure-NumPy
twin (`concertormer._kernels_np`) is used when the extension is unavailable or
when ``CONCERTORMER_KERNELS=numpy`` is set. The two produce bit-identical
results, so the choice only affects speed.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_np

try:
    from . import _kernels as _ext
except ImportError:  # extension not built
    _ext = None

_FORCE = os.environ.get("CONCERTORMER_KERNELS", "").strip().lower()
if _FORCE in ("numpy", "py", "python"):
    _impl = _kernels_np
elif _FORCE in ("cython", "c", "ext"):
    if _ext is None:
        raise ImportError("CONCERTORMER_KERNELS=cython but the compiled extension is not built")
    _impl = _ext
else:
    _impl = _ext if _ext is not None else _kernels_np

KERNEL_BACKEND: str = _impl.BACKEND


class ShapeError(ValueError):
    pass


def available_backends() -> dict:
    """Name -> module for every importable kernel backend."""
    out = {"numpy": _kernels_np}
    if _ext is not None:
        out["cython"] = _ext
    return out


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a)


def _common(*arrays):
    """Coerce to a shared float32/float64 dtype (widest wins)."""
    dt = np.result_type(*(a.dtype for a in arrays))
    dt = np.float64 if dt == np.float64 else np.float32
    return tuple(a.astype(dt, copy=False) for a in arrays)


def matmul(a: np.ndarray, b: np.ndarray, impl=None) -> np.ndarray:
    """Matrix product over the last two axes; leading axes broadcast."""
    impl = impl or _impl
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    a, b = _common(a, b)
    m, p, q = a.shape[-2], a.shape[-1], b.shape[-1]
    if b.ndim == 2:
        # shared right operand: fold the batch into rows instead of tiling b
        out = impl.matmul(_c(a).reshape(1, -1, p), _c(b).reshape(1, p, q))
        return out.reshape(a.shape[:-1] + (q,))
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    ab = _c(np.broadcast_to(a, lead + (m, p))).reshape(-1, m, p)
    bb = _c(np.broadcast_to(b, lead + (p, q))).reshape(-1, p, q)
    out = impl.matmul(ab, bb)
    return out.reshape(lead + (m, q))


def conv_pads(h: int, w: int, kh: int, kw: int, stride: int, pad: str) -> tuple:
    if pad == "same":
        oh = -(-h // stride)
        ow = -(-w // stride)
        th = max(0, (oh - 1) * stride + kh - h)
        tw = max(0, (ow - 1) * stride + kw - w)
        return th // 2, th - th // 2, tw // 2, tw - tw // 2
    if pad == "valid":
        return 0, 0, 0, 0
    raise ValueError(f"unknown padding mode {pad!r}")


def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: str = "same", impl=None) -> np.ndarray:
    impl = impl or _impl
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeError(f"conv2d expects x (h,w,cin) and w (kh,kw,cin/g,cout), got {x.shape} and {w.shape}")
    kh, kw, cin_g, cout = w.shape
    cin = x.shape[2]
    if cin_g == 0 or cin % cin_g != 0:
        raise ShapeError(f"channels {cin} not divisible by kernel group width {cin_g}: {x.shape} x {w.shape}")
    groups = cin // cin_g
    if cout % groups != 0:
        raise ShapeError(f"output channels {cout} not divisible by groups {groups}: {x.shape} x {w.shape}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    x, w = _common(x, w)
    pt, pb, pl, pr = conv_pads(x.shape[0], x.shape[1], kh, kw, stride, pad)
    return impl.conv2d(_c(x), _c(w), stride, pt, pb, pl, pr)


def conv2d_grad_weight(x: np.ndarray, gy: np.ndarray, kh: int, kw: int, stride: int,
                       pad: str, groups: int, impl=None) -> np.ndarray:
    impl = impl or _impl
    x, gy = _common(x, gy)
    pt, pb, pl, pr = conv_pads(x.shape[0], x.shape[1], kh, kw, stride, pad)
    return impl.conv2d_grad_weight(_c(x), _c(gy), kh, kw, stride, pt, pb, pl, pr, groups)


def conv2d_grad_input(gy: np.ndarray, w: np.ndarray, stride: int, pad: str,
                      in_shape: tuple, impl=None) -> np.ndarray:
    """Input gradient, expressed as a stride-1 conv of the (dilated) output
    gradient with the spatially flipped, channel-swapped kernel."""
    impl = impl or _impl
    gy, w = _common(gy, w)
    kh, kw, cin_g, cout = w.shape
    h, wd, cin = in_shape
    groups = cin // cin_g
    cout_g = cout // groups
    pt, _pb, pl, _pr = conv_pads(h, wd, kh, kw, stride, pad)
    oh, ow = gy.shape[0], gy.shape[1]
    if stride == 1:
        gyd = gy
    else:
        gyd = np.zeros(((oh - 1) * stride + 1, (ow - 1) * stride + 1, cout), dtype=gy.dtype)
        gyd[::stride, ::stride] = gy
    # flipped kernel mapping gy channels back to x channels, group-blocked
    wf = w[::-1, ::-1]  # (kh, kw, cin_g, cout)
    if groups == 1:
        wflip = wf.transpose(0, 1, 3, 2)  # (kh, kw, cout, cin)
    else:
        wflip = np.zeros((kh, kw, cout_g, cin), dtype=w.dtype)
        for g in range(groups):
            blk = wf[:, :, :, g * cout_g:(g + 1) * cout_g]  # (kh, kw, cin_g, cout_g)
            wflip[:, :, :, g * cin_g:(g + 1) * cin_g] = blk.transpose(0, 1, 3, 2)
    pt2 = kh - 1 - pt
    pl2 = kw - 1 - pl
    pb2 = h - 1 - (oh - 1) * stride + pt
    pr2 = wd - 1 - (ow - 1) * stride + pl
    return impl.conv2d(_c(gyd), _c(wflip), 1, pt2, pb2, pl2, pr2)
