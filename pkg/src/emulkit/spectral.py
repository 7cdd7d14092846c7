"""Frequency-domain model of strided / transposed circular convolution.

Conventions (chosen so the frequency-domain formulas hold with no stray
factors):

* signal spectra are Fourier-series coefficients,
  ``u_hat[k] = (1/N) sum_x u[x] exp(-2i pi k x / N)``, so that
  ``u[x] = sum_k u_hat[k] exp(+2i pi k x / N)``;
* filter spectra are transfer functions,
  ``g_hat[k] = sum_n g[n] exp(-2i pi k n / N)`` (taps zero-padded to N);
* the strided convolution is ``y[m] = (g * u)[m P]`` (circular convolution);
* the transposed convolution is the correlation of ``h`` with the
  zero-stuffed input, with interpolation gain ``P``:
  ``v[x] = P sum_m y[m] conj(h[(m P - x) mod N])``.

Everything uses a dense DFT matrix; the sizes here are tiny and the dense
form keeps the arithmetic transparent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError


@lru_cache(maxsize=64)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
    mat.flags.writeable = False
    return mat


def dft(x) -> np.ndarray:
    """Unnormalized forward DFT."""
    x = np.asarray(x)
    return _dft_matrix(x.shape[-1]) @ x


def idft(x_hat) -> np.ndarray:
    x_hat = np.asarray(x_hat)
    n = x_hat.shape[-1]
    return np.conj(_dft_matrix(n)) @ x_hat / n


@dataclass(frozen=True, eq=False)
class Spectrum:
    """DFT bins ``k = 0..N-1`` of a 1-D signal (Fourier-series scaling)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128).reshape(-1)
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def of_signal(cls, u) -> "Spectrum":
        u = np.asarray(u)
        return cls(dft(u) / u.shape[-1])

    def signal(self) -> np.ndarray:
        return idft(self.coeffs) * self.n

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.coeffs if dtype is None else self.coeffs.astype(dtype)

    def __len__(self):
        return self.n

    def is_conjugate_symmetric(self, rtol=1e-12) -> bool:
        c = self.coeffs
        mirrored = np.conj(c[(-np.arange(self.n)) % self.n])
        scale = max(np.max(np.abs(c)), np.finfo(float).tiny)
        return bool(np.max(np.abs(c - mirrored)) <= rtol * scale)


def filter_response(taps, n: int) -> np.ndarray:
    taps = np.asarray(taps)
    if taps.ndim != 1 or taps.shape[0] > n:
        raise DimensionError(f"filter needs at most {n} taps, got shape {taps.shape}")
    padded = np.zeros(n, dtype=np.result_type(taps, np.float64))
    padded[: taps.shape[0]] = taps
    return dft(padded)


@dataclass(frozen=True, eq=False)
class ResampleSetup:
    """Length-``n`` signal, downsample rate ``p``, analysis ``g``, synthesis ``h``."""

    n: int
    p: int
    g: np.ndarray
    h: np.ndarray
    g_hat: np.ndarray = field(init=False, repr=False)
    h_hat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.n % self.p:
            raise DimensionError(f"downsample rate {self.p} must divide N={self.n}")
        object.__setattr__(self, "g", np.array(self.g))
        object.__setattr__(self, "h", np.array(self.h))
        object.__setattr__(self, "g_hat", filter_response(self.g, self.n))
        object.__setattr__(self, "h_hat", filter_response(self.h, self.n))

    @property
    def m(self) -> int:
        return self.n // self.p


def _coeffs(x, length, what):
    c = np.asarray(x, dtype=np.complex128)
    if c.ndim != 1 or c.shape[0] != length:
        raise DimensionError(f"{what} must have {length} bins, got shape {c.shape}")
    return c


def strided_conv_freq(setup: ResampleSetup, u_hat) -> Spectrum:
    """``y_hat[k] = sum_j g_hat[k + jM] u_hat[k + jM]`` for ``k < M``."""
    u = _coeffs(u_hat, setup.n, "u_hat")
    return Spectrum((setup.g_hat * u).reshape(setup.p, setup.m).sum(axis=0))


def transposed_conv_freq(setup: ResampleSetup, y_hat) -> Spectrum:
    """``v_hat[k] = conj(h_hat[k]) y_hat[k mod M]``."""
    y = _coeffs(y_hat, setup.m, "y_hat")
    return Spectrum(np.conj(setup.h_hat) * y[np.arange(setup.n) % setup.m])


def autoencode_freq(setup: ResampleSetup, u_hat) -> Spectrum:
    """Encode then decode, written out term by term over the alias family."""
    u = _coeffs(u_hat, setup.n, "u_hat")
    n, m = setup.n, setup.m
    k = np.arange(n)
    out = np.conj(setup.h_hat) * setup.g_hat * u
    for j in range(1, setup.p):
        src = (k + j * m) % n
        out = out + np.conj(setup.h_hat) * setup.g_hat[src] * u[src]
    return Spectrum(out)


def shift_phase(n: int, s: int) -> np.ndarray:
    """Spectrum multiplier of ``np.roll(u, s)``."""
    k = np.arange(n)
    # Reduce k*s mod n in integers before the exponential for exact periodicity.
    return np.exp(-2j * np.pi * ((k * s) % n) / n)


def jittered_autoencode(setup: ResampleSetup, u_hat, shift: int) -> Spectrum:
    """Roll by ``shift``, encode/decode, roll back."""
    u = _coeffs(u_hat, setup.n, "u_hat")
    if shift < 0:
        raise ValueError("shift must be non-negative")
    phase = shift_phase(setup.n, shift)
    v = autoencode_freq(setup, phase * u).coeffs
    return Spectrum(np.conj(phase) * v)


def jitter_expectation(setup: ResampleSetup, u_hat) -> Spectrum:
    """Average of :func:`jittered_autoencode` over every integer shift."""
    u = _coeffs(u_hat, setup.n, "u_hat")
    acc = np.zeros(setup.n, dtype=np.complex128)
    for s in range(setup.n):
        acc += jittered_autoencode(setup, u, s).coeffs
    return Spectrum(acc / setup.n)


def unaliased_response(setup: ResampleSetup, u_hat) -> Spectrum:
    u = _coeffs(u_hat, setup.n, "u_hat")
    return Spectrum(np.conj(setup.h_hat) * setup.g_hat * u)


# --- spatial-domain O(N^2) oracles -------------------------------------------

def _padded_taps(taps, n):
    out = np.zeros(n, dtype=np.result_type(np.asarray(taps), np.float64))
    out[: len(taps)] = taps
    return out


def strided_conv_spatial(u, g, p: int) -> np.ndarray:
    """Direct circular convolution, then keep every ``p``-th sample."""
    u = np.asarray(u)
    n = u.shape[0]
    g = _padded_taps(g, n)
    x = np.arange(n)
    # conv_matrix[x, t] = g[(x - t) mod n]
    conv_matrix = g[(x[:, None] - x[None, :]) % n]
    return (conv_matrix @ u)[::p]


def transposed_conv_spatial(y, h, p: int) -> np.ndarray:
    """``v[x] = p * sum_m y[m] conj(h[(m p - x) mod n])``."""
    y = np.asarray(y)
    n = y.shape[0] * p
    h = _padded_taps(h, n)
    x = np.arange(n)
    mp = np.arange(y.shape[0]) * p
    scatter = np.conj(h[(mp[None, :] - x[:, None]) % n])
    return p * (scatter @ y)


def autoencode_spatial(u, g, h, p: int) -> np.ndarray:
    return transposed_conv_spatial(strided_conv_spatial(u, g, p), h, p)


def jittered_autoencode_spatial(u, g, h, p: int, shift: int) -> np.ndarray:
    return np.roll(autoencode_spatial(np.roll(u, shift), g, h, p), -shift)


# --- audits -------------------------------------------------------------------

def alias_bins(n: int, m: int, k: int) -> np.ndarray:
    """Bins ``k' != k`` with ``k' = k (mod m)``."""
    family = (k + m * np.arange(n // m)) % n
    return family[family != k % n]


def relative_error(got, want) -> float:
    got, want = np.asarray(got), np.asarray(want)
    scale = max(float(np.max(np.abs(want))), np.finfo(float).tiny)
    return float(np.max(np.abs(got - want))) / scale


def random_setup(n: int, p: int, rng, taps=None) -> ResampleSetup:
    taps = n if taps is None else taps
    return ResampleSetup(n, p, rng.standard_normal(taps), rng.standard_normal(taps))


def identity_sweep(ns=(8, 12, 16, 32), ps=(1, 2, 4), seeds=100, seed=0) -> dict:
    """Max relative error of every identity over a parameter sweep.

    Keys: ``strided``, ``transposed``, ``composed`` and ``jittered`` compare
    frequency-domain operators with the spatial oracles (spectra of oracle
    outputs taken with ``numpy.fft``); ``composition`` checks the composed
    formula against the two-step pipeline; ``expectation`` checks the
    shift-average against the un-aliased closed form.
    """
    worst = dict.fromkeys(
        ("strided", "transposed", "composed", "composition", "jittered", "expectation"), 0.0
    )
    root = np.random.default_rng(seed)
    for n in ns:
        for p in ps:
            if n % p:
                continue
            for child in root.spawn(seeds):
                rng = np.random.default_rng(child)
                setup = random_setup(n, p, rng)
                u = rng.standard_normal(n)
                y = rng.standard_normal(setup.m)
                u_hat = np.fft.fft(u) / n
                fwd = strided_conv_freq(setup, u_hat).coeffs
                y_or = strided_conv_spatial(u, setup.g, p)
                worst["strided"] = max(worst["strided"], relative_error(fwd, np.fft.fft(y_or) / setup.m))
                back = transposed_conv_freq(setup, np.fft.fft(y) / setup.m).coeffs
                v_or = transposed_conv_spatial(y, setup.h, p)
                worst["transposed"] = max(worst["transposed"], relative_error(back, np.fft.fft(v_or) / n))
                comp = autoencode_freq(setup, u_hat).coeffs
                v_or = autoencode_spatial(u, setup.g, setup.h, p)
                worst["composed"] = max(worst["composed"], relative_error(comp, np.fft.fft(v_or) / n))
                two = transposed_conv_freq(setup, strided_conv_freq(setup, u_hat)).coeffs
                worst["composition"] = max(worst["composition"], relative_error(comp, two))
                s = int(rng.integers(n))
                jit = jittered_autoencode(setup, u_hat, s).coeffs
                j_or = jittered_autoencode_spatial(u, setup.g, setup.h, p, s)
                worst["jittered"] = max(worst["jittered"], relative_error(jit, np.fft.fft(j_or) / n))
                exp = jitter_expectation(setup, u_hat).coeffs
                worst["expectation"] = max(
                    worst["expectation"], relative_error(exp, unaliased_response(setup, u_hat).coeffs)
                )
    return worst


TOLERANCES = {
    "strided": 1e-10,
    "transposed": 1e-10,
    "composed": 1e-10,
    "composition": 1e-12,
    "jittered": 1e-10,
    "expectation": 1e-9,
}
