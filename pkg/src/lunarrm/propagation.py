"""Deterministic terrain-aware path-gain maps.

Per receiver pixel the path gain is

    gain = -FSPL(d) - deygout_loss + two_ray_adjustment

with Deygout multi-knife-edge diffraction (main edge plus one sub-edge on
each side) and a single ground reflection off the terrain chord. The
reflection term is only applied on line-of-sight paths whose first Fresnel
zone is clear of terrain (main-edge nu <= -0.78); closer to the ground the
knife-edge term already accounts for the terrain interaction.

All profile work is vectorized over pixel chunks sorted by distance.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive

SPEED_OF_LIGHT = 299_792_458.0
VACUUM_PERMITTIVITY = 8.8541878128e-12
PAPER_FREQUENCIES = (415e6, 5.8e9)
KNIFE_EDGE_NU_MIN = -0.78


@dataclass
class Transmitter:
    grid_i: int
    grid_j: int
    height_above_ground: float = 2.0
    power_dbm: float = 30.0
    frequency_hz: float = 415e6

    def __post_init__(self):
        self.grid_i, self.grid_j = int(self.grid_i), int(self.grid_j)
        check_positive(self.height_above_ground, "height_above_ground")
        check_positive(self.frequency_hz, "frequency_hz")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.frequency_hz

    def to_dict(self):
        return {"grid_i": self.grid_i, "grid_j": self.grid_j,
                "height_above_ground": self.height_above_ground,
                "power_dbm": self.power_dbm, "frequency_hz": self.frequency_hz}


@dataclass
class RegolithParams:
    """Electrical constants of the reflecting ground.

    Defaults are placeholders, not measured regolith values.
    """

    rel_permittivity: float = 3.0
    conductivity: float = 1e-4

    def __post_init__(self):
        if not (math.isfinite(self.rel_permittivity) and self.rel_permittivity >= 1):
            raise ValueError("rel_permittivity must be >= 1")
        check_positive(self.conductivity, "conductivity", strict=False)

    def complex_permittivity(self, frequency_hz):
        omega = 2 * math.pi * frequency_hz
        return complex(self.rel_permittivity, -self.conductivity / (omega * VACUUM_PERMITTIVITY))


@dataclass
class RenderOptions:
    rx_height: float = 1.0
    clip_range_db: tuple = (-150.0, -50.0)
    max_edges: int = 3
    two_ray: bool = True
    polarization: str = "horizontal"
    chunk_size: int = 2048
    workers: int = 1

    def __post_init__(self):
        check_positive(self.rx_height, "rx_height")
        lo, hi = (float(v) for v in self.clip_range_db)
        if not lo < hi:
            raise ValueError("clip_range_db must be (min, max) with min < max")
        self.clip_range_db = (lo, hi)
        if self.max_edges not in (1, 2, 3):
            raise ValueError("max_edges must be 1, 2 or 3")
        if self.polarization not in ("horizontal", "vertical"):
            raise ValueError("polarization must be 'horizontal' or 'vertical'")


@dataclass
class RadioMap:
    """Clipped path gain (dB) and its [0, 1] normalization."""

    gain_db: np.ndarray
    normalized: np.ndarray
    frequency_hz: float
    tx: Transmitter
    clip_range_db: tuple = (-150.0, -50.0)
    diffraction_db: np.ndarray = field(default=None, repr=False)
    los: np.ndarray = field(default=None, repr=False)

    def denormalize(self):
        lo, hi = self.clip_range_db
        return lo + self.normalized * (hi - lo)


@dataclass
class Profile:
    """Terrain sampled along a Tx-Rx segment.

    ``distances`` are horizontal distances from the transmitter end (m);
    ``clearances`` are ray height minus terrain height.
    """

    distances: np.ndarray
    elevations: np.ndarray
    ray_heights: np.ndarray
    clearances: np.ndarray
    tx_height: float
    rx_height: float

    @property
    def length(self):
        return float(self.distances[-1])

    @property
    def min_clearance(self):
        return float(self.clearances.min())


def normalize_gain(gain_db, clip_range_db):
    lo, hi = clip_range_db
    return np.clip((np.asarray(gain_db) - lo) / (hi - lo), 0.0, 1.0)


def free_space_path_loss(distance_m, frequency_hz):
    """Friis loss ``20 log10(4 pi d / lambda)`` in dB."""
    d = np.asarray(distance_m, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("distance must be finite and > 0")
    if not (math.isfinite(frequency_hz) and frequency_hz > 0):
        raise ValueError("frequency must be finite and > 0")
    lam = SPEED_OF_LIGHT / frequency_hz
    out = 20.0 * np.log10(4.0 * np.pi * d / lam)
    return float(out) if out.ndim == 0 else out


def knife_edge_loss(nu):
    """Single knife-edge diffraction loss J(nu) in dB (0 for nu <= -0.78)."""
    nu = np.asarray(nu, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        x = nu - 0.1
        j = 6.9 + 20.0 * np.log10(np.sqrt(x * x + 1.0) + x)
    out = np.where(nu > KNIFE_EDGE_NU_MIN, j, 0.0)
    return float(out) if out.ndim == 0 else out


def fresnel_reflection(grazing_angle, permittivity, polarization="horizontal"):
    """Fresnel reflection coefficient for a wave hitting ground at ``grazing_angle`` (rad)."""
    s = np.sin(grazing_angle)
    c2 = np.cos(grazing_angle) ** 2
    root = np.sqrt(permittivity - c2 + 0j)
    if polarization == "horizontal":
        return (s - root) / (s + root)
    if polarization == "vertical":
        return (permittivity * s - root) / (permittivity * s + root)
    raise ValueError(f"unknown polarization {polarization!r}")


def two_ray_factor_db(gamma, phase, amplitude_ratio):
    """``20 log10 |1 + gamma * exp(j phase) * amplitude_ratio|`` (may be -inf)."""
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(np.abs(1.0 + gamma * np.exp(1j * np.asarray(phase)) * amplitude_ratio))


def _bilinear(elev, fi, fj):
    n, m = elev.shape
    fi = np.clip(fi, 0.0, n - 1.0)
    fj = np.clip(fj, 0.0, m - 1.0)
    i0 = np.minimum(np.floor(fi).astype(np.intp), n - 2)
    j0 = np.minimum(np.floor(fj).astype(np.intp), m - 2)
    di, dj = fi - i0, fj - j0
    z00 = elev[i0, j0]
    z01 = elev[i0, j0 + 1]
    z10 = elev[i0 + 1, j0]
    z11 = elev[i0 + 1, j0 + 1]
    return (z00 * (1 - di) * (1 - dj) + z01 * (1 - di) * dj
            + z10 * di * (1 - dj) + z11 * di * dj)


def _n_samples(horizontal_distance, cell_size):
    return np.ceil(horizontal_distance / (0.5 * cell_size)).astype(np.intp) + 1


def terrain_profile(heightmap, tx, rx_i, rx_j, rx_height=1.0):
    """Sample terrain along the chart segment Tx -> Rx at <= cell_size/2 spacing."""
    elev = heightmap.elevations
    n = elev.shape[0]
    for idx in (tx.grid_i, tx.grid_j, rx_i, rx_j):
        if not 0 <= idx < n:
            raise ValueError("profile endpoints must lie inside the grid")
    cell = heightmap.cell_size
    length = cell * math.hypot(rx_i - tx.grid_i, rx_j - tx.grid_j)
    z_tx = elev[tx.grid_i, tx.grid_j] + tx.height_above_ground
    z_rx = elev[rx_i, rx_j] + rx_height
    if length == 0:
        t = np.zeros(1)
    else:
        t = np.linspace(0.0, 1.0, int(_n_samples(length, cell)))
    fi = tx.grid_i + t * (rx_i - tx.grid_i)
    fj = tx.grid_j + t * (rx_j - tx.grid_j)
    z = _bilinear(elev, fi, fj)
    ray = z_tx + t * (z_rx - z_tx)
    return Profile(t * length, z, ray, ray - z, float(tx.height_above_ground), float(rx_height))


def _deygout(z, s, D, z_t, z_r, valid, n_s, lam, max_edges):
    """Vectorized Deygout loss. Arrays are (P, M); returns (loss, main_nu)."""
    P, M = z.shape
    k = np.arange(M)[None, :]
    last = (n_s - 1)[:, None]
    interior = valid & (k > 0) & (k < last)
    Dc = D[:, None]
    ray = z_t[:, None] + (s / np.where(Dc > 0, Dc, 1.0)) * (z_r - z_t)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.sqrt(2.0 * Dc / (lam * s * (Dc - s)))
        nu = np.where(interior, (z - ray) * scale, -np.inf)
    m = np.argmax(nu, axis=1)
    rows = np.arange(P)
    nu_main = nu[rows, m]
    loss = knife_edge_loss(nu_main)
    if max_edges == 1:
        return loss, nu_main

    obstructed = nu_main > 0
    s_m = s[rows, m][:, None]
    z_m = z[rows, m][:, None]
    mcol = m[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        left = interior & (k < mcol)
        ray_l = z_t[:, None] + (s / s_m) * (z_m - z_t[:, None])
        nu_l = np.where(left, (z - ray_l) * np.sqrt(2.0 * s_m / (lam * s * (s_m - s))), -np.inf)
        right = interior & (k > mcol)
        span = Dc - s_m
        a = s - s_m
        ray_r = z_m + (a / span) * (z_r[:, None] - z_m)
        nu_r = np.where(right, (z - ray_r) * np.sqrt(2.0 * span / (lam * a * (Dc - s))), -np.inf)
    nu_l = nu_l.max(axis=1)
    nu_r = nu_r.max(axis=1)
    # sub-edges only count when they actually cut their sub-path
    sub_l = np.where(obstructed & (nu_l > 0), knife_edge_loss(np.maximum(nu_l, 0.0)), 0.0)
    sub_r = np.where(obstructed & (nu_r > 0), knife_edge_loss(np.maximum(nu_r, 0.0)), 0.0)
    if max_edges == 2:
        return loss + np.maximum(sub_l, sub_r), nu_main
    return loss + sub_l + sub_r, nu_main


def _reflection(D, g_t, g_r, h_t, h_r, lam, permittivity, polarization):
    """Ground reflection off the chord joining the two ground points.

    Returns (adjustment_db, specular horizontal distance, specular elevation).
    """
    dg = g_r - g_t
    chord = np.hypot(D, dg)
    safe = np.where(chord > 0, chord, 1.0)
    cos_a = D / safe
    sin_a = dg / safe
    h1 = h_t * cos_a
    h2 = h_r * cos_a
    foot_t = h_t * sin_a
    along = chord + (h_r - h_t) * sin_a
    r1 = np.hypot(along, h1 - h2)
    r2 = np.hypot(along, h1 + h2)
    psi = np.arctan2(h1 + h2, along)
    gamma = fresnel_reflection(psi, permittivity, polarization)
    phase = -2.0 * np.pi * (r2 - r1) / lam
    adj = two_ray_factor_db(gamma, phase, r1 / np.where(r2 > 0, r2, 1.0))
    c_sp = foot_t + along * h1 / (h1 + h2)
    return adj, c_sp * cos_a, g_t + c_sp * sin_a


def _reflection_clear(z, s, valid, z_t, z_r, s_sp, z_sp, D, tol=1e-6):
    # terrain must stay below both legs of the reflected path
    before = s <= s_sp[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        leg1 = z_t[:, None] + (s / s_sp[:, None]) * (z_sp - z_t)[:, None]
        leg2 = z_sp[:, None] + ((s - s_sp[:, None]) / (D - s_sp)[:, None]) * (z_r - z_sp)[:, None]
    path = np.where(before, leg1, leg2)
    blocked = valid & (z > path + tol)
    return ~blocked.any(axis=1)


def two_ray_gain(profile, regolith, frequency_hz, polarization="horizontal"):
    """Ground-reflection adjustment (dB) for one line-of-sight profile.

    Returns 0 when the reflected path is blocked by terrain (no usable
    specular point).
    """
    if profile.min_clearance <= 0:
        raise ValueError("two_ray_gain requires an unobstructed profile")
    D = np.array([profile.length])
    if D[0] == 0:
        return 0.0
    lam = SPEED_OF_LIGHT / frequency_hz
    g_t = np.array([profile.elevations[0]])
    g_r = np.array([profile.elevations[-1]])
    adj, s_sp, z_sp = _reflection(D, g_t, g_r, profile.tx_height, profile.rx_height, lam,
                                  regolith.complex_permittivity(frequency_hz), polarization)
    z = profile.elevations[None, :]
    s = profile.distances[None, :]
    valid = np.ones_like(z, dtype=bool)
    clear = _reflection_clear(z, s, valid, g_t + profile.tx_height, g_r + profile.rx_height,
                              s_sp, z_sp, D)
    return float(adj[0]) if clear[0] else 0.0


def deygout_loss(profile, frequency_hz, max_edges=3):
    """Deygout diffraction loss (dB) of a single profile."""
    lam = SPEED_OF_LIGHT / frequency_hz
    z = profile.elevations[None, :]
    s = profile.distances[None, :]
    n = np.array([z.shape[1]])
    loss, _ = _deygout(z, s, np.array([profile.length]),
                       np.array([profile.ray_heights[0]]), np.array([profile.ray_heights[-1]]),
                       np.ones_like(z, dtype=bool), n, lam, max_edges)
    return float(loss[0])


def _render_chunk(elev, cell, tx, ri, rj, lam, permittivity, options):
    ti, tj = tx.grid_i, tx.grid_j
    D = cell * np.hypot(ri - ti, rj - tj)
    n_s = np.where(D > 0, _n_samples(D, cell), 1)
    M = int(n_s.max())
    k = np.arange(M)[None, :]
    valid = k < n_s[:, None]
    t = np.minimum(k / np.maximum(n_s - 1, 1)[:, None], 1.0)
    fi = ti + t * (ri - ti)[:, None]
    fj = tj + t * (rj - tj)[:, None]
    z = _bilinear(elev, fi, fj)
    s = t * D[:, None]
    g_t = np.full(D.shape, elev[ti, tj])
    g_r = elev[ri, rj]
    z_t = g_t + tx.height_above_ground
    z_r = g_r + options.rx_height

    d3 = np.maximum(np.hypot(D, z_t - z_r), 0.5 * cell)
    fspl = free_space_path_loss(d3, tx.frequency_hz)
    diff, nu_main = _deygout(z, s, D, z_t, z_r, valid, n_s, lam, options.max_edges)
    los = nu_main < 0
    gain = -fspl - diff
    if options.two_ray:
        use = los & (nu_main <= KNIFE_EDGE_NU_MIN) & (D > 0)
        if use.any():
            adj, s_sp, z_sp = _reflection(D[use], g_t[use], g_r[use], tx.height_above_ground,
                                          options.rx_height, lam, permittivity,
                                          options.polarization)
            clear = _reflection_clear(z[use], s[use], valid[use], z_t[use], z_r[use],
                                      s_sp, z_sp, D[use])
            gain[use] += np.where(clear, adj, 0.0)
    return gain, diff, los


def render_radio_map(heightmap, tx, regolith=None, options=None):
    """Render the path-gain map seen by receivers on every pixel."""
    regolith = regolith or RegolithParams()
    options = options or RenderOptions()
    elev = heightmap.elevations
    n, m = elev.shape
    if not (0 <= tx.grid_i < n and 0 <= tx.grid_j < m):
        raise ValueError(f"transmitter ({tx.grid_i}, {tx.grid_j}) outside the grid")
    cell = heightmap.cell_size
    lam = tx.wavelength
    permittivity = regolith.complex_permittivity(tx.frequency_hz)

    ii, jj = np.divmod(np.arange(n * m), m)
    order = np.argsort((ii - tx.grid_i) ** 2 + (jj - tx.grid_j) ** 2, kind="stable")
    chunks = [order[a:a + options.chunk_size] for a in range(0, order.size, options.chunk_size)]

    gain = np.empty(n * m)
    diff = np.empty(n * m)
    los = np.empty(n * m, dtype=bool)

    def work(idx):
        g, d, l = _render_chunk(elev, cell, tx, ii[idx], jj[idx], lam, permittivity, options)
        gain[idx], diff[idx], los[idx] = g, d, l

    if options.workers > 1:
        with ThreadPoolExecutor(options.workers) as pool:
            list(pool.map(work, chunks))
    else:
        for idx in chunks:
            work(idx)

    lo, hi = options.clip_range_db
    gain = np.clip(np.nan_to_num(gain, nan=lo, neginf=lo), lo, hi).reshape(n, m)
    return RadioMap(
        gain_db=gain,
        normalized=normalize_gain(gain, options.clip_range_db),
        frequency_hz=tx.frequency_hz,
        tx=tx,
        clip_range_db=options.clip_range_db,
        diffraction_db=diff.reshape(n, m),
        los=los.reshape(n, m),
    )
