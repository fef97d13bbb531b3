"""Synthetic lunar heightmaps.

Terrain is built by alternating two processes over a number of epochs:
stochastic cratering drawn from a truncated power-law size-frequency
distribution, and topographic diffusion that degrades everything already
on the surface. Early craters come out soft and shallow, late ones sharp.

Coordinates: pixel ``(i, j)`` sits at ``x = j * cell_size``,
``y = i * cell_size`` (meters).
"""

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from ._validation import check_grid, check_positive, check_random_state

BOUNDARIES = ("neumann", "periodic")

# Explicit 5-point stencil is stable and monotone for kappa*dt/dx^2 <= 1/4.
CFL_LIMIT = 0.25


@dataclass
class HeightMap:
    """Square grid of elevations (meters) with its physical cell size."""

    elevations: np.ndarray
    cell_size: float = 2.0
    seed: int = 0

    def __post_init__(self):
        self.elevations = check_grid(self.elevations, "elevations")
        h, w = self.elevations.shape
        if h != w:
            raise ValueError(f"heightmap must be square, got {h}x{w}")
        if h < 32:
            raise ValueError(f"heightmap must be at least 32x32, got {h}x{w}")
        self.cell_size = check_positive(self.cell_size, "cell_size")
        if int(self.seed) < 0:
            raise ValueError("seed must be unsigned")
        self.seed = int(self.seed)

    @property
    def shape(self):
        return self.elevations.shape

    @property
    def size(self):
        return self.elevations.shape[0]

    @property
    def extent(self):
        return self.size * self.cell_size

    def copy(self, elevations=None):
        elev = self.elevations.copy() if elevations is None else elevations
        return HeightMap(elev, self.cell_size, self.seed)


class CraterEvent(NamedTuple):
    center_x: float
    center_y: float
    diameter: float
    epoch_index: int = 0

    @property
    def radius(self):
        return 0.5 * self.diameter


@dataclass
class TerrainGenConfig:
    """Parameters of the cratering/diffusion generator.

    Ages are in abstract units; only ``crater_rate * dt`` and
    ``diffusivity * dt`` matter.
    """

    size: int = 256
    cell_size: float = 2.0
    target_age: float = 1.0
    n_epochs: int = 8
    sfd_exponent: float = 2.0
    crater_rate: float = 2e-3
    d_min: float = 6.0
    d_max: float = 150.0
    diffusivity: float = 40.0
    depth_ratio: float = 0.2
    rim_height_ratio: float = 0.04
    rim_floor_ratio: float = 0.01
    boundary: str = "neumann"

    def __post_init__(self):
        if int(self.size) < 32:
            raise ValueError("size must be >= 32")
        check_positive(self.cell_size, "cell_size")
        check_positive(self.target_age, "target_age", strict=False)
        if int(self.n_epochs) < 1:
            raise ValueError("n_epochs must be >= 1")
        check_positive(self.sfd_exponent, "sfd_exponent")
        check_positive(self.crater_rate, "crater_rate", strict=False)
        check_positive(self.d_min, "d_min")
        check_positive(self.d_max, "d_max")
        if not self.d_min < self.d_max:
            raise ValueError("require 0 < d_min < d_max")
        check_positive(self.diffusivity, "diffusivity", strict=False)
        if not 0 < self.depth_ratio <= 0.5:
            raise ValueError("depth_ratio must lie in (0, 0.5]")
        if not 0 <= self.rim_height_ratio <= 0.2:
            raise ValueError("rim_height_ratio must lie in [0, 0.2]")
        if not 0 < self.rim_floor_ratio < 1:
            raise ValueError("rim_floor_ratio must lie in (0, 1)")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        self.size = int(self.size)
        self.n_epochs = int(self.n_epochs)

    @property
    def epoch_duration(self):
        return self.target_age / self.n_epochs

    def to_dict(self):
        return asdict(self)


def sample_diameters(n, d_min, d_max, b, rng):
    """Inverse-CDF draws from N(>D) ~ D**-b truncated to [d_min, d_max]."""
    lo, hi = d_min ** -b, d_max ** -b
    u = rng.random(n)
    return (lo - u * (lo - hi)) ** (-1.0 / b)


def sample_crater_population(config, epoch, rng=None):
    """Draw the cratering events of one epoch.

    The count is Poisson with mean ``crater_rate * area * epoch_duration``;
    centers are uniform over the grid padded by each crater's radius.
    """
    if not 0 <= epoch < config.n_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.n_epochs})")
    rate = config.crater_rate
    if not math.isfinite(rate) or rate < 0:
        raise ValueError(f"crater_rate must be finite and >= 0, got {rate}")
    rng = check_random_state(rng)
    extent = config.size * config.cell_size
    mean = rate * extent * extent * config.epoch_duration
    if mean == 0:
        return []
    n = int(rng.poisson(mean))
    diam = sample_diameters(n, config.d_min, config.d_max, config.sfd_exponent, rng)
    u = rng.random((n, 2))
    radius = 0.5 * diam
    cx = -radius + u[:, 0] * (extent + 2 * radius)
    cy = -radius + u[:, 1] * (extent + 2 * radius)
    return [CraterEvent(x, y, d, epoch)
            for x, y, d in zip(cx.tolist(), cy.tolist(), diam.tolist())]


def crater_profile(r, diameter, depth_ratio=0.2, rim_height_ratio=0.04, rim_floor_ratio=0.01):
    """Fresh crater relief relative to the reference level, as a function of radius.

    Parabolic bowl from ``-depth`` at the center to ``+rim`` at the crest,
    then an ``(R/r)**3`` decay outside until it drops below
    ``rim_floor_ratio * rim``.
    """
    r = np.asarray(r, dtype=np.float64)
    R = 0.5 * diameter
    depth = depth_ratio * diameter
    rim = rim_height_ratio * diameter
    q = r / R
    inside = -depth + (depth + rim) * q * q
    with np.errstate(divide="ignore"):
        outside = rim * np.where(q > 0, q, 1.0) ** -3
    outside = np.where(outside >= rim_floor_ratio * rim, outside, 0.0)
    return np.where(q <= 1.0, inside, outside)


def _rim_cutoff_radius(event, config):
    if config.rim_height_ratio == 0:
        return event.radius
    return event.radius * config.rim_floor_ratio ** (-1.0 / 3.0)


def _stamp_inplace(elev, cell_size, event, config):
    n_rows, n_cols = elev.shape
    R = event.radius
    reach = _rim_cutoff_radius(event, config)
    j0 = max(int(math.floor((event.center_x - reach) / cell_size)), 0)
    j1 = min(int(math.ceil((event.center_x + reach) / cell_size)) + 1, n_cols)
    i0 = max(int(math.floor((event.center_y - reach) / cell_size)), 0)
    i1 = min(int(math.ceil((event.center_y + reach) / cell_size)) + 1, n_rows)
    if i0 >= i1 or j0 >= j1:
        return
    ys = np.arange(i0, i1) * cell_size - event.center_y
    xs = np.arange(j0, j1) * cell_size - event.center_x
    r = np.hypot(ys[:, None], xs[None, :])
    affected = r <= reach
    if not affected.any():
        return
    patch = elev[i0:i1, j0:j1]
    relief = crater_profile(r, event.diameter, config.depth_ratio,
                            config.rim_height_ratio, config.rim_floor_ratio)
    bowl = r <= R
    new = patch + relief
    if bowl.any():
        # Replace the bowl interior: reference level is the mean pre-impact
        # surface, pre-existing relief fades in quadratically toward the crest.
        base = patch[bowl].mean()
        q2 = (r[bowl] / R) ** 2
        new[bowl] = base + relief[bowl] + (patch[bowl] - base) * q2
    patch[affected] = new[affected]


def stamp_crater(heightmap, event, config):
    """Return a copy of ``heightmap`` with one fresh crater imprinted.

    Craters smaller than two cells are expected to be filtered by the caller.
    Parts of the crater falling outside the grid are clipped.
    """
    elev = heightmap.elevations.copy()
    _stamp_inplace(elev, heightmap.cell_size, event, config)
    return heightmap.copy(elev)


def _diffuse_array(h, kappa, duration, cell_size, boundary):
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}")
    total = kappa * duration / (cell_size * cell_size)
    h = np.array(h, dtype=np.float64, copy=True)
    if total == 0:
        return h
    n_sub = max(1, math.ceil(total / CFL_LIMIT))
    r = total / n_sub
    pad_mode = "edge" if boundary == "neumann" else "wrap"
    for _ in range(n_sub):
        p = np.pad(h, 1, mode=pad_mode)
        lap = (p[:-2, 1:-1] + p[2:, 1:-1]) + (p[1:-1, :-2] + p[1:-1, 2:]) - 4.0 * h
        h += r * lap
    return h


def diffuse(heightmap, kappa, duration, boundary="neumann"):
    """Explicit heat-equation smoothing ``dh/dt = kappa * laplacian(h)``.

    ``duration`` is split into equal substeps with
    ``kappa * dt / cell_size**2 <= 0.25``. Neumann (zero-flux) and periodic
    boundaries both conserve the elevation sum.
    """
    if not math.isfinite(kappa) or kappa < 0:
        raise ValueError(f"diffusivity must be finite and >= 0, got {kappa}")
    check_positive(duration, "duration", strict=False)
    h = _diffuse_array(heightmap.elevations, kappa, duration, heightmap.cell_size, boundary)
    return heightmap.copy(h)


def generate_terrain(config, seed=0, initial=None):
    """Run ``n_epochs`` rounds of {sample craters, stamp them, diffuse}.

    Deterministic in ``(config, seed)``. Each epoch draws from its own child
    of ``SeedSequence(seed)``.
    """
    if initial is None:
        elev = np.zeros((config.size, config.size))
    else:
        elev = check_grid(initial, "initial").copy()
        if elev.shape != (config.size, config.size):
            raise ValueError("initial surface does not match config.size")
    children = np.random.SeedSequence(int(seed)).spawn(config.n_epochs)
    min_diameter = 2.0 * config.cell_size
    for epoch, child in enumerate(children):
        events = sample_crater_population(config, epoch, np.random.default_rng(child))
        for ev in events:
            if ev.diameter >= min_diameter:
                _stamp_inplace(elev, config.cell_size, ev, config)
        elev = _diffuse_array(elev, config.diffusivity, config.epoch_duration,
                              config.cell_size, config.boundary)
    return HeightMap(elev, config.cell_size, int(seed))


def high_pass(heightmap, sigma=8.0, mode="reflect"):
    """Elevations minus their Gaussian blur (``sigma`` in pixels).

    ``mode`` is the scipy border mode; ``"reflect"`` by default, ``"wrap"``
    for periodic handling.
    """
    elev = heightmap.elevations if isinstance(heightmap, HeightMap) else check_grid(heightmap)
    if not math.isfinite(sigma) or sigma <= 0:
        raise ValueError(f"sigma must be finite and > 0, got {sigma}")
    return elev - ndimage.gaussian_filter(elev, sigma, mode=mode)
