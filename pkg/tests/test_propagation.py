import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from lunarrm.propagation import (
    RegolithParams, RenderOptions, Transmitter, deygout_loss, free_space_path_loss,
    fresnel_reflection, knife_edge_loss, normalize_gain, render_radio_map, terrain_profile,
    two_ray_factor_db, two_ray_gain,
)
from lunarrm.terrain import CraterEvent, HeightMap, TerrainGenConfig, generate_terrain, stamp_crater


def friis_km_mhz(d_m, f_hz):
    # textbook engineering form, independent of the wavelength route
    return 32.44778 + 20 * math.log10(d_m / 1e3) + 20 * math.log10(f_hz / 1e6)


def crater_scene(n=128):
    hm = HeightMap(np.zeros((n, n)), 2.0)
    return stamp_crater(hm, CraterEvent(n * 1.0, n * 1.0, 60.0), TerrainGenConfig())


def radius_bins(shape, tx):
    ii, jj = np.indices(shape)
    return np.hypot(ii - tx.grid_i, jj - tx.grid_j)


# -- FSPL --------------------------------------------------------------------

def test_fspl_unit_argument():
    lam = 299_792_458.0 / 415e6
    assert free_space_path_loss(lam / (4 * math.pi), 415e6) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("d, f, expected", [(1000.0, 415e6, 84.81), (100.0, 5.8e9, 87.72)])
def test_fspl_reference_values(d, f, expected):
    got = free_space_path_loss(d, f)
    assert got == pytest.approx(friis_km_mhz(d, f), abs=1e-4)
    assert got == pytest.approx(expected, abs=0.01)


@pytest.mark.parametrize("d, f", [(0.0, 1e9), (-1.0, 1e9), (1.0, 0.0), (float("nan"), 1e9)])
def test_fspl_rejects(d, f):
    with pytest.raises(ValueError):
        free_space_path_loss(d, f)


# -- knife edge ----------------------------------------------------------------

def test_knife_edge_values():
    assert knife_edge_loss(-2.0) == 0.0
    expected = 6.9 + 20 * math.log10(math.sqrt(0.01 + 1) - 0.1)
    assert knife_edge_loss(0.0) == pytest.approx(expected, abs=1e-12)
    assert knife_edge_loss(0.0) == pytest.approx(6.03, abs=0.005)


def test_knife_edge_monotone():
    nu = np.linspace(-0.78, 10.0, 10_000)
    assert np.all(np.diff(knife_edge_loss(nu)) >= 0)


# -- profile -----------------------------------------------------------------

def test_flat_profile_clearance():
    hm = HeightMap(np.full((64, 64), 4.0), 2.0)
    tx = Transmitter(10, 10, height_above_ground=2.0)
    p = terrain_profile(hm, tx, 40, 50, rx_height=1.0)
    assert np.allclose(p.clearances, p.ray_heights - 4.0, atol=1e-12)
    assert p.min_clearance == pytest.approx(1.0)
    assert np.argmin(p.clearances) == p.clearances.size - 1
    assert np.max(np.diff(p.distances)) <= 1.0 + 1e-12  # cell_size / 2


def test_hill_obstructs():
    elev = np.zeros((64, 64))
    jj = np.arange(64)
    elev[:] = np.maximum(0.0, 10.0 - 2.0 * np.abs(jj - 32))[None, :]
    hm = HeightMap(elev, 2.0)
    p = terrain_profile(hm, Transmitter(30, 5), 30, 60)
    assert p.min_clearance < 0
    assert deygout_loss(p, 415e6) > 6.0


def test_profile_zero_length():
    hm = HeightMap(np.zeros((32, 32)), 1.0)
    p = terrain_profile(hm, Transmitter(5, 5), 5, 5)
    assert p.distances.size == 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), a=st.tuples(st.integers(0, 47), st.integers(0, 47)),
       b=st.tuples(st.integers(0, 47), st.integers(0, 47)))
def test_profile_reversal_symmetry(seed, a, b):
    assume(a != b)
    hm = HeightMap(np.random.default_rng(seed).normal(scale=5.0, size=(48, 48)), 2.0)
    fwd = terrain_profile(hm, Transmitter(*a, height_above_ground=2.0), *b, rx_height=1.0)
    rev = terrain_profile(hm, Transmitter(*b, height_above_ground=1.0), *a, rx_height=2.0)
    assert np.allclose(fwd.elevations, rev.elevations[::-1], atol=1e-9, rtol=0)
    assert np.allclose(fwd.clearances, rev.clearances[::-1], atol=1e-9, rtol=0)
    assert np.allclose(fwd.distances, fwd.length - rev.distances[::-1], atol=1e-9, rtol=0)


# -- two-ray -------------------------------------------------------------------

def test_vacuum_ground_has_no_reflection():
    assert abs(fresnel_reflection(0.1, complex(1.0, 0.0))) < 1e-12
    hm = HeightMap(np.zeros((64, 64)), 2.0)
    p = terrain_profile(hm, Transmitter(5, 5), 50, 60)
    assert two_ray_gain(p, RegolithParams(1.0, 0.0), 415e6) == pytest.approx(0.0, abs=1e-12)


def test_deep_null():
    assert two_ray_factor_db(-1.0, 0.0, 1.0) == -math.inf
    # a -inf adjustment lands on the clip floor after clipping
    assert normalize_gain(np.array([-math.inf]), (-150, -50))[0] == 0.0
    near = two_ray_factor_db(-0.999, 0.0, 0.999)
    assert near < -50


def test_perfect_conductor_limit():
    eps = RegolithParams(3.0, 1e6).complex_permittivity(415e6)
    gamma = fresnel_reflection(1e-3, eps, "horizontal")
    assert abs(gamma - (-1)) < 1e-3


def test_two_ray_requires_los():
    elev = np.zeros((64, 64))
    elev[:, 30:34] = 20.0
    p = terrain_profile(HeightMap(elev, 2.0), Transmitter(30, 5), 30, 60)
    with pytest.raises(ValueError):
        two_ray_gain(p, RegolithParams(), 415e6)


def test_two_ray_flat_closed_form():
    # flat ground: classic image-antenna geometry
    hm = HeightMap(np.zeros((256, 256)), 2.0)
    tx = Transmitter(0, 0, height_above_ground=2.0)
    p = terrain_profile(hm, tx, 0, 200, rx_height=1.0)
    d = p.length
    r1 = math.hypot(d, 1.0)
    r2 = math.hypot(d, 3.0)
    psi = math.atan2(3.0, d)
    eps = RegolithParams().complex_permittivity(415e6)
    s = math.sin(psi)
    root = np.sqrt(eps - math.cos(psi) ** 2)
    gamma = (s - root) / (s + root)
    lam = 299_792_458.0 / 415e6
    expected = 20 * math.log10(abs(1 + gamma * np.exp(-2j * math.pi * (r2 - r1) / lam) * r1 / r2))
    assert two_ray_gain(p, RegolithParams(), 415e6) == pytest.approx(expected, abs=1e-9)


# -- render ------------------------------------------------------------------

def test_flat_radial_symmetry():
    hm = HeightMap(np.zeros((96, 96)), 2.0)
    tx = Transmitter(48, 48)
    rm = render_radio_map(hm, tx)
    r2 = np.rint(radius_bins(hm.elevations.shape, tx) ** 2).astype(int)
    lo, hi = rm.clip_range_db
    inside = (rm.gain_db > lo) & (rm.gain_db < hi)
    worst = 0.0
    for v in np.unique(r2[inside]):
        g = rm.gain_db[(r2 == v) & inside]
        worst = max(worst, g.max() - g.min())
    assert worst < 0.1


def test_flat_monotone_decay_without_two_ray():
    hm = HeightMap(np.zeros((96, 96)), 2.0)
    tx = Transmitter(20, 30)
    rm = render_radio_map(hm, tx, options=RenderOptions(two_ray=False))
    r = radius_bins(hm.elevations.shape, tx)
    lo, hi = rm.clip_range_db
    keep = (r > 2) & (rm.gain_db > lo) & (rm.gain_db < hi)
    order = np.argsort(r[keep], kind="stable")
    rs, gs = r[keep][order], rm.gain_db[keep][order]
    distinct = np.diff(rs) > 1e-9
    assert np.all(np.diff(gs)[distinct] < 0)


def test_shadowed_pixels_lower_than_unobstructed():
    hm = crater_scene()
    tx = Transmitter(64, 10)
    rm = render_radio_map(hm, tx)
    r = np.rint(radius_bins(hm.elevations.shape, tx)).astype(int)
    shadow = ~rm.los
    assert shadow.sum() > 100
    compared = 0
    for v in np.unique(r[shadow]):
        sh = shadow & (r == v)
        un = rm.los & (r == v)
        if un.any():
            assert rm.gain_db[sh].mean() < rm.gain_db[un].mean()
            compared += 1
    assert compared > 20


def test_frequency_ordering_in_shadow():
    hm = crater_scene()
    lo_f = render_radio_map(hm, Transmitter(64, 10, frequency_hz=415e6))
    hi_f = render_radio_map(hm, Transmitter(64, 10, frequency_hz=5.8e9))
    obstructed = ~lo_f.los
    assert np.array_equal(obstructed, ~hi_f.los)
    assert np.all(hi_f.diffraction_db[obstructed] >= lo_f.diffraction_db[obstructed])
    assert hi_f.diffraction_db[obstructed].mean() - lo_f.diffraction_db[obstructed].mean() > 3.0
    assert hi_f.gain_db[obstructed].mean() < lo_f.gain_db[obstructed].mean() - 3.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_frequency_ordering_generated_terrain(seed):
    hm = generate_terrain(TerrainGenConfig(size=64), seed)
    a = render_radio_map(hm, Transmitter(10, 50, frequency_hz=415e6))
    b = render_radio_map(hm, Transmitter(10, 50, frequency_hz=5.8e9))
    obs = ~a.los
    assert np.all(b.diffraction_db[obs] >= a.diffraction_db[obs])


def test_normalization_and_tx_maximum():
    hm = generate_terrain(TerrainGenConfig(size=64), 4)
    tx = Transmitter(30, 33, frequency_hz=5.8e9)
    rm = render_radio_map(hm, tx)
    assert np.abs(rm.denormalize() - rm.gain_db).max() <= 1e-12
    assert rm.normalized.min() >= 0 and rm.normalized.max() <= 1
    assert rm.gain_db[30, 33] == rm.gain_db.max()
    assert np.all(rm.gain_db <= 0)


def test_render_deterministic_across_workers():
    hm = generate_terrain(TerrainGenConfig(size=64), 9)
    tx = Transmitter(5, 7)
    a = render_radio_map(hm, tx, options=RenderOptions(workers=1, chunk_size=256))
    b = render_radio_map(hm, tx, options=RenderOptions(workers=8, chunk_size=256))
    c = render_radio_map(hm, tx, options=RenderOptions(workers=1, chunk_size=4096))
    assert a.gain_db.tobytes() == b.gain_db.tobytes() == c.gain_db.tobytes()


def test_render_rejects_outside_tx():
    with pytest.raises(ValueError):
        render_radio_map(HeightMap(np.zeros((32, 32))), Transmitter(32, 0))


def test_regolith_and_options_validation():
    with pytest.raises(ValueError):
        RegolithParams(0.5, 0.0)
    with pytest.raises(ValueError):
        RegolithParams(3.0, -1.0)
    with pytest.raises(ValueError):
        RenderOptions(clip_range_db=(-50, -150))
    with pytest.raises(ValueError):
        Transmitter(0, 0, height_above_ground=0.0)
