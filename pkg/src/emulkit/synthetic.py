"""Periodic linear-advection trajectories with an analytic solution.

``u(x, t) = u0(x - nu t)`` on the unit torus. Grid positions are kept in
cell units, so a velocity of exactly one cell per step reproduces
``np.roll`` bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensorfield import Boundary, BoundarySpec, Trajectory

KINDS = ("advection", "pure-mode", "mixed")
NU_RANGE = (0.05, 0.25)
CENTER_RANGE = (0.25, 0.75)
SIGMA_RANGE = (0.05, 0.25)


@dataclass(frozen=True)
class AdvectionCase:
    kind: str
    extents: tuple
    velocity: tuple      # domain lengths per unit time, per axis
    center: tuple
    sigma: float
    mode: tuple          # integer wavenumber per axis
    dt: float

    def initial(self, x):
        """``u0`` at fractional positions ``x`` (``(dim, ...)``, in [0, 1))."""
        out = np.zeros(x.shape[1:])
        if self.kind in ("advection", "mixed"):
            r2 = np.zeros(x.shape[1:])
            for a, c in enumerate(self.center):
                d = (x[a] - c + 0.5) % 1.0 - 0.5   # nearest periodic image
                r2 = r2 + d * d
            out = out + np.exp(-r2 / (2 * self.sigma**2))
        if self.kind in ("pure-mode", "mixed"):
            phase = sum(2 * np.pi * k * x[a] for a, k in enumerate(self.mode))
            out = out + np.cos(phase)
        return out

    def solution(self, t: int) -> np.ndarray:
        """Exact field at step ``t``."""
        grids = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in self.extents),
                            indexing="ij")
        pos = []
        for a, n in enumerate(self.extents):
            shift = self.velocity[a] * self.dt * t * n   # in cells
            pos.append(((grids[a] - shift) % n) / n)
        return self.initial(np.stack(pos))

    def trajectory(self, steps: int) -> Trajectory:
        arr = np.stack([self.solution(t) for t in range(steps)])[:, None]
        boundary = BoundarySpec.uniform(Boundary.PERIODIC, len(self.extents))
        return Trajectory.from_array(("u",), (0,), arr, boundary=boundary)


def draw_case(kind: str, extents, rng, dt: float = 0.1, velocity=None,
              mode=None) -> AdvectionCase:
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; choose from {KINDS}")
    extents = tuple(int(e) for e in extents)
    if len(extents) not in (2, 3) or min(extents) < 1:
        raise ConfigError(f"extents must be 2 or 3 positive sizes, got {extents}")
    dim = len(extents)
    if velocity is None:
        speed = rng.uniform(*NU_RANGE, size=dim)
        velocity = tuple(speed * rng.choice((-1.0, 1.0), size=dim))
    center = tuple(rng.uniform(*CENTER_RANGE, size=dim))
    sigma = float(rng.uniform(*SIGMA_RANGE))
    if mode is None:
        mode = tuple(int(rng.integers(1, max(2, e // 4))) if e > 1 else 0 for e in extents)
    return AdvectionCase(kind, extents, tuple(float(v) for v in velocity), center,
                         sigma, tuple(mode), dt)


def gen_synthetic(kind: str, extents, steps: int, seed: int, **kwargs) -> Trajectory:
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    return draw_case(kind, extents, rng, **kwargs).trajectory(steps)
