"""Hardy-Littlewood and smooth maximal functions, and weighted L^p quasinorms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .grid import GridFunction, GridSpec
from .weights import Weight


def sliding_max(x: np.ndarray, m: int, axis: int = -1) -> np.ndarray:
    """Max over every length-m window along ``axis`` (output shrinks by m-1).

    Block prefix/suffix maxima, so the cost is linear in the input size.
    """
    x = np.moveaxis(np.asarray(x), axis, -1)
    n = x.shape[-1]
    if m == 1:
        return np.moveaxis(x.copy(), -1, axis)
    nb = -(-n // m)
    pad = nb * m - n
    xp = np.concatenate([x, np.full(x.shape[:-1] + (pad,), -np.inf)], axis=-1) if pad else x
    blocks = xp.reshape(x.shape[:-1] + (nb, m))
    pre = np.maximum.accumulate(blocks, axis=-1).reshape(xp.shape)
    suf = np.flip(np.maximum.accumulate(np.flip(blocks, -1), axis=-1), -1).reshape(xp.shape)
    out = np.maximum(suf[..., : n - m + 1], pre[..., m - 1: n])
    return np.moveaxis(out, -1, axis)


def _containing_max(avg: np.ndarray, m: int, axis: int) -> np.ndarray:
    """For window averages indexed by start, the max over windows containing each cell."""
    pad_shape = list(avg.shape)
    pad_shape[axis] = m - 1
    fill = np.full(pad_shape, -np.inf)
    padded = np.concatenate([fill, avg, fill], axis=axis)
    return sliding_max(padded, m, axis=axis)


def hl_maximal(f: GridFunction) -> GridFunction:
    """Uncentered maximal function over cell-aligned windows containing each cell.

    1D takes every window length; 2D takes squares of dyadic side with every
    translate.  Window sums come from one prefix table, so the result is exact
    up to the rounding of those differences; single cells use |f| itself so
    Mf >= |f| holds exactly.
    """
    spec = f.spec
    a = np.abs(f.samples).astype(float)
    N = spec.N
    if spec.dim == 1:
        P = np.concatenate([[0.0], np.cumsum(a)])
        out = a.copy()
        for m in range(2, N + 1):
            avg = (P[m:] - P[:-m]) / m
            np.maximum(out, _containing_max(avg, m, 0), out=out)
        return GridFunction(spec, out)
    P = np.zeros((N + 1, N + 1))
    P[1:, 1:] = a.cumsum(0).cumsum(1)
    out = a.copy()
    m = 2
    while m <= N:
        box = P[m:, m:] - P[:-m, m:] - P[m:, :-m] + P[:-m, :-m]
        avg = box / (m * m)
        np.maximum(out, _containing_max(_containing_max(avg, m, 0), m, 1), out=out)
        m *= 2
    return GridFunction(spec, out)


def hl_maximal_bruteforce(f: GridFunction) -> GridFunction:
    """O(N^3) reference for 1D: every (cell, window) pair, window sums from the prefix table."""
    if f.spec.dim != 1:
        raise ValueError("brute force reference is 1D only")
    a = np.abs(f.samples).astype(float)
    N = a.size
    P = np.concatenate([[0.0], np.cumsum(a)])
    out = np.zeros(N)
    for i in range(N):
        best = a[i]
        for lo in range(i + 1):
            for hi in range(i, N):
                if hi == lo:
                    continue
                v = (P[hi + 1] - P[lo]) / (hi - lo + 1)
                if v > best:
                    best = v
        out[i] = best
    return GridFunction(f.spec, out)


@dataclass(frozen=True)
class SmoothKernel:
    """Normalized quartic bump c(1-|x|^2)^2 on the unit ball with a dilation ladder.

    ``scales=None`` means t = 2^-j L for every j with t >= h.
    """

    dim: int = 1
    scales: tuple[float, ...] | None = None

    @property
    def norm(self) -> float:
        # 1D: int (1-x^2)^2 = 16/15; 2D: int over the disk = pi/3
        return 15.0 / 16.0 if self.dim == 1 else 3.0 / math.pi

    def profile(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.norm * np.where(r < 1.0, (1.0 - r * r) ** 2, 0.0)

    def ladder(self, spec: GridSpec) -> list[float]:
        if self.scales is not None:
            return list(self.scales)
        out, t = [], spec.L
        while t >= spec.h * (1 - 1e-12):
            out.append(t)
            t /= 2
        return out

    def discrete(self, spec: GridSpec, t: float) -> np.ndarray:
        """Dilate phi_t sampled at cell offsets, renormalized to unit sum."""
        R = int(math.ceil(t / spec.h))
        d = np.arange(-R, R + 1) * spec.h / t
        if self.dim == 1:
            k = self.profile(np.abs(d))
        else:
            X, Y = np.meshgrid(d, d, indexing="ij")
            k = self.profile(np.hypot(X, Y))
        return k / k.sum()


def smooth_maximal(f: GridFunction, kernel: SmoothKernel | None = None) -> GridFunction:
    """max over the dilation ladder of |phi_t * f| (zero extension outside the domain)."""
    spec = f.spec
    kernel = SmoothKernel(spec.dim) if kernel is None else kernel
    out = np.zeros(spec.shape)
    for t in kernel.ladder(spec):
        k = kernel.discrete(spec, t)
        conv = signal.convolve(f.samples, k, mode="same")
        np.maximum(out, np.abs(conv), out=out)
    return GridFunction(spec, out)


def lpw_norm(f: GridFunction, p: float, w: Weight | None = None) -> float:
    """(sum |f|^p w h^n)^{1/p}; p = inf gives the max of |f| (unweighted)."""
    a = np.abs(f.samples)
    if math.isinf(p):
        return float(a.max())
    if not p > 0:
        raise ValueError(f"exponent must be positive, got {p}")
    ws = 1.0 if w is None else w.samples
    return float((np.sum(a ** p * ws) * f.spec.cell_volume) ** (1.0 / p))
