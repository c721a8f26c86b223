"""Operators on 1D grid functions (truncated/maximal Hilbert transform, Fourier
partial sums and their maximal version), plus measured size conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import signal

from .blocks import Block, ls_norm
from .grid import GridFunction, GridSpec
from .maximal import hl_maximal, smooth_maximal


def _require_1d(spec: GridSpec, what: str) -> None:
    if spec.dim != 1:
        raise ValueError(f"{what} is implemented on 1D grids only")


def _min_offset(spec: GridSpec, eps: float) -> int:
    if eps < spec.h * (1 - 1e-9):
        raise ValueError(f"truncation eps={eps} is below the cell size h={spec.h}")
    return max(1, int(math.ceil(eps / spec.h - 1e-9)))


def _hilbert_samples(x: np.ndarray, m0: int) -> np.ndarray:
    n = x.shape[-1]
    d = np.arange(-(n - 1), n)
    k = np.zeros(d.shape)
    far = np.abs(d) >= m0
    k[far] = 1.0 / (math.pi * d[far])
    full = signal.convolve(x, k, mode="full")
    return full[n - 1: 2 * n - 1]


def hilbert_truncated(f: GridFunction, eps: float | None = None) -> GridFunction:
    """(1/pi) sum over cells with |x - y| >= eps of f(y) h / (x - y), at midpoints.

    ``eps=None`` means eps = h: only the singular cell is dropped.  Complex
    samples are allowed (used by the Fourier partial sums).
    """
    spec = f.spec
    _require_1d(spec, "truncated Hilbert transform")
    m0 = 1 if eps is None else _min_offset(spec, eps)
    out = _hilbert_samples(np.asarray(f.samples), m0)
    return GridFunction(spec, out)


def hilbert_ladder(spec: GridSpec) -> list[float]:
    """Truncations h, 2h, 4h, ..., 2L."""
    out, m = [], 1
    while m <= spec.N:
        out.append(m * spec.h)
        m *= 2
    return out


def hilbert_maximal(f: GridFunction, eps_ladder=None) -> GridFunction:
    spec = f.spec
    _require_1d(spec, "maximal Hilbert transform")
    ladder = hilbert_ladder(spec) if eps_ladder is None else eps_ladder
    out = np.zeros(spec.shape)
    for eps in ladder:
        np.maximum(out, np.abs(hilbert_truncated(f, eps).samples), out=out)
    return GridFunction(spec, out)


def modulate(f: GridFunction, freq: float) -> GridFunction:
    """e^{2 pi i freq x} f(x) at cell midpoints."""
    x = f.spec.midpoints()
    return GridFunction(f.spec, np.exp(2j * math.pi * freq * x) * f.samples)


def nyquist(spec: GridSpec) -> float:
    return 1.0 / (2.0 * spec.h)


def fourier_partial_sum(f: GridFunction, freq: float) -> GridFunction:
    """Frequency truncation to |xi| <= freq through modulated Hilbert transforms.

    S_N f = (i/2)(Mod_{-N} H Mod_N f - Mod_N H Mod_{-N} f) with H the truncated
    Hilbert transform at eps = h.  Real input gives the real part.
    """
    spec = f.spec
    _require_1d(spec, "Fourier partial sum")
    if freq < 0 or freq > nyquist(spec):
        raise ValueError(f"frequency {freq} outside [0, Nyquist={nyquist(spec)}]")
    up = modulate(hilbert_truncated(modulate(f, freq)), -freq).samples
    down = modulate(hilbert_truncated(modulate(f, -freq)), freq).samples
    out = 0.5j * (up - down)
    if np.isrealobj(f.samples):
        out = out.real
    return GridFunction(spec, out)


def spectral_partial_sum(f: GridFunction, freq: float) -> GridFunction:
    """Oracle: discrete Fourier truncation of the periodized samples."""
    spec = f.spec
    _require_1d(spec, "spectral partial sum")
    F = np.fft.fft(f.samples)
    xi = np.fft.fftfreq(spec.N, d=spec.h)
    F[np.abs(xi) > freq] = 0
    out = np.fft.ifft(F)
    if np.isrealobj(f.samples):
        out = out.real
    return GridFunction(spec, out)


def frequency_ladder(spec: GridSpec, fraction: float = 0.25) -> list[float]:
    """Dyadic frequencies 2^j / (2L) up to ``fraction`` of Nyquist."""
    out, j = [], 0
    top = fraction * nyquist(spec)
    while (2.0 ** j) / (2 * spec.L) <= top:
        out.append((2.0 ** j) / (2 * spec.L))
        j += 1
    return out


def fourier_maximal(f: GridFunction, freqs=None) -> GridFunction:
    spec = f.spec
    freqs = frequency_ladder(spec) if freqs is None else freqs
    out = np.zeros(spec.shape)
    for N in freqs:
        np.maximum(out, np.abs(fourier_partial_sum(f, N).samples), out=out)
    return GridFunction(spec, out)


@dataclass
class OperatorHandle:
    name: str
    kind: str  # "linear" or "maximal"
    apply: Callable[[GridFunction], GridFunction]
    params: dict = field(default_factory=dict)

    def __call__(self, f: GridFunction) -> GridFunction:
        return self.apply(f)


def make_operator(name: str) -> OperatorHandle:
    """Build an operator from ``name[:param]``.

    identity, hilbert_trunc[:eps], hilbert_max, hl_max, smooth_max,
    fourier:<freq>, fourier_max.
    """
    base, _, arg = name.partition(":")
    if base == "identity":
        return OperatorHandle(name, "linear", lambda f: f)
    if base == "hilbert_trunc":
        eps = float(arg) if arg else None
        return OperatorHandle(name, "linear", lambda f: hilbert_truncated(f, eps), {"eps": eps})
    if base == "hilbert_max":
        return OperatorHandle(name, "maximal", hilbert_maximal)
    if base == "hl_max":
        return OperatorHandle(name, "maximal", hl_maximal)
    if base == "smooth_max":
        return OperatorHandle(name, "maximal", smooth_maximal)
    if base == "fourier":
        freq = float(arg)
        return OperatorHandle(name, "linear", lambda f: fourier_partial_sum(f, freq), {"freq": freq})
    if base == "fourier_max":
        return OperatorHandle(name, "maximal", fourier_maximal)
    raise ValueError(f"unknown operator {name!r}")


def _outside_dilate(b: Block) -> tuple[np.ndarray, np.ndarray]:
    """Mask of cells outside the 2 sqrt(n) dilate of the support cube, and |x - x0|."""
    spec = b.spec
    x0 = b.center()
    half = math.sqrt(spec.dim) * b.cube.side(spec)
    sup = np.zeros(spec.shape)
    eucl = np.zeros(spec.shape)
    for ax, x in enumerate(spec.mesh()):
        sup = np.maximum(sup, np.abs(x - x0[ax]))
        eucl = eucl + (x - x0[ax]) ** 2
    return sup >= half, np.sqrt(eucl)


def size_condition_check(T: OperatorHandle, b: Block) -> float:
    """sup over cells outside 2 sqrt(n) Q of |Tb(x)| |x - x0|^n / ||b||_1 (0 for the zero block)."""
    l1 = ls_norm(b.samples, 1.0)
    if l1 == 0:
        return 0.0
    Tb = np.abs(T(b.samples).samples)
    out, dist = _outside_dilate(b)
    if not out.any():
        return 0.0
    return float(np.max(Tb[out] * dist[out] ** b.spec.dim) / l1)


def local_ls_check(T: OperatorHandle, b: Block, s: float) -> float:
    """(int over 2 sqrt(n) Q of |Tb|^s) / (int_Q |b|^s); NaN flags a zero denominator."""
    den = ls_norm(b.samples, s)
    if den == 0:
        return math.nan
    out, _ = _outside_dilate(b)
    Tb = T(b.samples)
    near = GridFunction(b.spec, np.where(out, 0.0, np.abs(Tb.samples)))
    if math.isinf(s):
        return ls_norm(near, s) / den
    return (ls_norm(near, s) / den) ** s
