"""Two-layer Gabor scattering for patches, and its size-pooled variant.

The transform convolves a patch with a bank of oriented band-pass filters,
takes the complex modulus, and averages the result under a wide Gaussian
window, then repeats the convolve-modulus step once more along coarser
scales before averaging again.  Each path collapses to a single scalar, so
a patch becomes a short nonnegative coefficient vector: order 0 is the
windowed mean, order 1 indexes (scale, rotation), order 2 indexes scale
pairs with the second scale strictly coarser.

Filters are Morlet-style Gabors: a complex carrier under an elongated
Gaussian envelope, with the DC component subtracted at construction so
constant patches produce no band-pass response, and the modulus mass
normalized to one.  All convolutions are circular; a frequency-domain path
is used for larger patches and must agree with the direct path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, TextIO, Tuple

import numpy as np
from scipy import ndimage

from .image import ImageBuffer, SupportError, extract_patch
from .descriptor import Keypoint, SizePrior

__all__ = [
    "FilterBank",
    "ScatteringVector",
    "build_filter_bank",
    "scatter",
    "dsp_scatter",
    "dump_scattering",
]


@dataclass(frozen=True)
class FilterBank:
    """Immutable bank of band-pass kernels plus low-pass averaging scale.

    ``kernels[j][l]`` is the complex filter at dyadic scale j and rotation
    angle 2*pi*l/L, so the bank covers the full circle and the filter at
    l + L/2 is the complex conjugate of the one at l.  ``phi_sigma`` is
    the scale of the Gaussian averaging
    window applied after each modulus.  Frequency-domain copies of the
    kernels are cached per patch shape; the cache is excluded from
    comparison and never affects results.
    """

    scales: int
    rotations: int
    xi: float
    sigma: float
    slant: float
    kernels: Tuple[Tuple[np.ndarray, ...], ...]
    phi_sigma: float
    _fft_cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def max_radius(self) -> int:
        return (self.kernels[-1][0].shape[0] - 1) // 2

    def kernel_ffts(self, shape: Tuple[int, int]) -> np.ndarray:
        """Stacked FFTs of every kernel embedded in ``shape``, origin at (0,0)."""
        cached = self._fft_cache.get(shape)
        if cached is None:
            h, w = shape
            stack = np.zeros((self.scales * self.rotations, h, w), dtype=complex)
            for j in range(self.scales):
                for l in range(self.rotations):
                    k = self.kernels[j][l]
                    r = (k.shape[0] - 1) // 2
                    buf = np.zeros((h, w), dtype=complex)
                    buf[: k.shape[0], : k.shape[1]] = k
                    stack[j * self.rotations + l] = np.fft.fft2(np.roll(buf, (-r, -r), axis=(0, 1)))
            stack.flags.writeable = False
            cached = self._fft_cache[shape] = stack
        return cached


def _gabor_kernel(sigma: float, xi: float, theta: float, slant: float) -> np.ndarray:
    radius = int(math.ceil(4.0 * sigma))
    coords = np.arange(-radius, radius + 1, dtype=float)
    xx, yy = np.meshgrid(coords, coords)
    c, s = math.cos(theta), math.sin(theta)
    xr = c * xx + s * yy
    yr = -s * xx + c * yy
    envelope = np.exp(-(xr * xr + (yr * yr) / (slant * slant)) / (2.0 * sigma * sigma))
    carrier = np.exp(1j * xi * xr)
    # subtracting the envelope-weighted mean of the carrier kills the DC
    # response exactly
    beta = (envelope * carrier).sum() / envelope.sum()
    psi = envelope * (carrier - beta)
    psi /= np.abs(psi).sum()
    psi.flags.writeable = False
    return psi


def build_filter_bank(
    scales: int = 3,
    rotations: int = 8,
    xi: float = 3.0 * np.pi / 4.0,
    sigma: float = 0.8,
    slant: float = 0.5,
) -> FilterBank:
    """Construct the Gabor bank: dilations by 2**j, rotations by 2*pi*l/L."""
    if scales < 1:
        raise ValueError(f"need at least one scale, got {scales}")
    if rotations < 2:
        raise ValueError(f"need at least two rotations, got {rotations}")
    if not (xi > 0 and sigma > 0 and slant > 0):
        raise ValueError("xi, sigma, and slant must be positive")
    kernels = tuple(
        tuple(
            _gabor_kernel(sigma * 2.0**j, xi / 2.0**j, 2.0 * np.pi * l / rotations, slant)
            for l in range(rotations)
        )
        for j in range(scales)
    )
    return FilterBank(scales, rotations, xi, sigma, slant, kernels, sigma * 2.0**scales)


@dataclass(frozen=True)
class ScatteringVector:
    """Collapsed scattering coefficients of one patch.

    ``order1[j, l]`` averages the modulus of the (j, l) response;
    ``order2[p, l1, l2]`` does the same for the cascade whose scale pair
    is ``pairs[p]`` (always j1 < j2).  Every entry is nonnegative.
    """

    order0: float
    order1: np.ndarray
    order2: np.ndarray
    pairs: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        o1 = np.asarray(self.order1, dtype=float)
        o2 = np.asarray(self.order2, dtype=float)
        if self.order0 < 0 or (o1 < 0).any() or (o2 < 0).any():
            raise ValueError("scattering coefficients must be nonnegative")
        if o2.shape[0] != len(self.pairs):
            raise ValueError("order2 leading dimension must match the scale pairs")
        for arr in (o1, o2):
            arr.flags.writeable = False
        object.__setattr__(self, "order1", o1)
        object.__setattr__(self, "order2", o2)

    def flatten(self) -> np.ndarray:
        return np.concatenate(([self.order0], self.order1.ravel(), self.order2.ravel()))

    def labels(self) -> List[str]:
        out = ["0"]
        J, L = self.order1.shape
        out.extend(f"1:{j},{l}" for j in range(J) for l in range(L))
        for j1, j2 in self.pairs:
            out.extend(f"2:{j1},{l1}>{j2},{l2}" for l1 in range(L) for l2 in range(L))
        return out


def _lowpass_weights(shape: Tuple[int, int], sigma: float) -> np.ndarray:
    h, w = shape
    cu, cv = (w - 1) / 2.0, (h - 1) / 2.0
    uu, vv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    weights = np.exp(-0.5 * ((uu - cu) ** 2 + (vv - cv) ** 2) / (sigma * sigma))
    return weights / weights.sum()


def _conv_direct(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    real = ndimage.convolve(values, kernel.real, mode="wrap")
    imag = ndimage.convolve(values, kernel.imag, mode="wrap")
    return real + 1j * imag


def _conv_fft_batch(fx: np.ndarray, kernel_ffts: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(fx[None, :, :] * kernel_ffts, axes=(-2, -1))


def scatter(
    patch: ImageBuffer,
    bank: FilterBank,
    order: int = 2,
    method: str = "auto",
) -> ScatteringVector:
    """Scattering coefficients of a patch, collapsed to one value per path.

    ``method`` selects the convolution path: 'fft', 'direct', or 'auto'
    (frequency domain once the smaller patch side reaches 32 px).
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if method not in ("auto", "fft", "direct"):
        raise ValueError(f"unknown method {method!r}")
    values = patch.values
    h, w = values.shape
    if bank.max_radius > min(h, w) // 2:
        raise SupportError(
            f"largest kernel radius {bank.max_radius} exceeds half the "
            f"{w}x{h} patch; use a smaller bank or a larger patch"
        )
    use_fft = method == "fft" or (method == "auto" and min(h, w) >= 32)
    J, L = bank.scales, bank.rotations
    weights = _lowpass_weights(values.shape, bank.phi_sigma)

    if use_fft:
        ffts = bank.kernel_ffts(values.shape)
        u1 = np.abs(_conv_fft_batch(np.fft.fft2(values), ffts)).reshape(J, L, h, w)
    else:
        u1 = np.empty((J, L, h, w))
        for j in range(J):
            for l in range(L):
                u1[j, l] = np.abs(_conv_direct(values, bank.kernels[j][l]))

    order0 = float((weights * values).sum())
    order1 = (u1 * weights).sum(axis=(2, 3))

    pairs = tuple((j1, j2) for j1 in range(J) for j2 in range(j1 + 1, J)) if order == 2 else ()
    order2 = np.zeros((len(pairs), L, L))
    if order == 2 and pairs:
        pair_index = {p: i for i, p in enumerate(pairs)}
        for j1 in range(J):
            coarser = [j2 for j2 in range(j1 + 1, J)]
            if not coarser:
                continue
            for l1 in range(L):
                if use_fft:
                    fu = np.fft.fft2(u1[j1, l1])
                    rows = np.concatenate([ffts[j2 * L : (j2 + 1) * L] for j2 in coarser])
                    u2 = np.abs(_conv_fft_batch(fu, rows))
                    means = (u2 * weights).sum(axis=(1, 2)).reshape(len(coarser), L)
                    for idx, j2 in enumerate(coarser):
                        order2[pair_index[(j1, j2)], l1] = means[idx]
                else:
                    for j2 in coarser:
                        for l2 in range(L):
                            resp = np.abs(_conv_direct(u1[j1, l1], bank.kernels[j2][l2]))
                            order2[pair_index[(j1, j2)], l1, l2] = (resp * weights).sum()

    return ScatteringVector(order0, order1, order2, pairs)


def dsp_scatter(
    img: ImageBuffer,
    kp: Keypoint,
    prior: SizePrior = SizePrior.default(),
    bank: Optional[FilterBank] = None,
    order: int = 2,
    support_factor: float = 3.0,
    sample_side: int = 32,
    method: str = "auto",
) -> ScatteringVector:
    """Average scattering vectors over the size prior.

    Each prior sample selects a window of side multiplier * base_size *
    support_factor around the keypoint; windows are resampled to a common
    ``sample_side`` so coefficient vectors share an index set, then
    averaged coefficient-wise with the prior weights.
    """
    if bank is None:
        bank = build_filter_bank()
    patches = []
    bad = []
    for mult in prior.multipliers:
        side = mult * kp.base_size * support_factor
        try:
            patches.append(extract_patch(img, (kp.u, kp.v), side, sample_side))
        except SupportError:
            bad.append(side)
    if bad:
        raise SupportError(
            "window sides out of bounds at ({:.1f}, {:.1f}): {}".format(
                kp.u, kp.v, ", ".join(f"{s:.2f}" for s in bad)
            )
        )
    total0 = 0.0
    total1 = total2 = None
    pairs = ()
    for patch, weight in zip(patches, prior.weights):
        vec = scatter(patch, bank, order=order, method=method)
        if total1 is None:
            total1 = weight * vec.order1
            total2 = weight * vec.order2
            pairs = vec.pairs
        else:
            total1 = total1 + weight * vec.order1
            total2 = total2 + weight * vec.order2
        total0 += weight * vec.order0
    return ScatteringVector(total0, total1, total2, pairs)


def dump_scattering(vec: ScatteringVector, out: TextIO) -> None:
    """One CSV row per path: order, scale/rotation indices, value."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["order", "j1", "l1", "j2", "l2", "value"])
    writer.writerow(["0", "", "", "", "", repr(vec.order0)])
    J, L = vec.order1.shape
    for j in range(J):
        for l in range(L):
            writer.writerow(["1", j, l, "", "", repr(float(vec.order1[j, l]))])
    for p, (j1, j2) in enumerate(vec.pairs):
        for l1 in range(L):
            for l2 in range(L):
                writer.writerow(["2", j1, l1, j2, l2, repr(float(vec.order2[p, l1, l2]))])
