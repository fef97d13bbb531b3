"""Laplace-Beltrami operator on heightmap graph surfaces and k^2 extraction.

The terrain ``z = h(x, y)`` induces the metric ``g = I + grad(h) grad(h)^T``.
The operator is discretized in flux form,

    lb(f) = 1/sqrt|g| * div( sqrt|g| * g^-1 * grad f ),

with fluxes evaluated on half-cell faces. On a flat map it collapses to the
classical 5-point Laplacian.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._validation import check_grid, check_positive, check_same_shape, interior_mask


@dataclass
class MetricField:
    """First fundamental form of a graph surface, per pixel."""

    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray
    sqrt_det: np.ndarray
    inv_g11: np.ndarray
    inv_g12: np.ndarray
    inv_g22: np.ndarray
    cell_size: float = 1.0

    @property
    def shape(self):
        return self.g11.shape

    @property
    def det(self):
        return self.g11 * self.g22 - self.g12 * self.g12


@dataclass
class SurfaceField:
    """Scalar samples living on the surface, indexed by the heightmap chart."""

    values: np.ndarray
    chart_cell_size: float = 1.0

    def __post_init__(self):
        self.values = check_grid(self.values, "values")
        self.chart_cell_size = check_positive(self.chart_cell_size, "chart_cell_size")


@dataclass
class WaveNumberMap:
    """Continuous k^2 (1/m^2) and its sign mask (1 where k^2 < 0)."""

    k2_continuous: np.ndarray
    k2_binary: np.ndarray
    valid: np.ndarray = None
    units: str = "1/m^2"


def metric_from_heightmap(heightmap, cell_size=None):
    """Metric tensor of ``z = h(x, y)`` from central-difference slopes.

    Accepts a ``HeightMap`` or a raw grid (then ``cell_size`` is required,
    defaulting to 1). Borders use one-sided differences.
    """
    if hasattr(heightmap, "elevations"):
        h = heightmap.elevations
        cell_size = heightmap.cell_size if cell_size is None else cell_size
    else:
        h = check_grid(heightmap, "heightmap")
        cell_size = 1.0 if cell_size is None else cell_size
    cell_size = check_positive(cell_size, "cell_size")
    hy, hx = np.gradient(h, cell_size, cell_size)
    g11 = 1.0 + hx * hx
    g22 = 1.0 + hy * hy
    g12 = hx * hy
    det = 1.0 + hx * hx + hy * hy
    return MetricField(
        g11=g11, g12=g12, g22=g22,
        sqrt_det=np.sqrt(det),
        inv_g11=g22 / det, inv_g12=-g12 / det, inv_g22=g11 / det,
        cell_size=cell_size,
    )


def flat_metric(shape, cell_size=1.0):
    one, zero = np.ones(shape), np.zeros(shape)
    return MetricField(one, zero, one.copy(), one.copy(), one.copy(), zero.copy(),
                       one.copy(), float(cell_size))


def _extrapolate_pad(f):
    # Quadratic ghost cells: the border second difference becomes the
    # one-sided stencil f0 - 2 f1 + f2.
    n, m = f.shape
    if n < 3 or m < 3:
        raise ValueError("field must be at least 3x3")
    p = np.empty((n + 2, m + 2))
    p[1:-1, 1:-1] = f
    p[0, 1:-1] = 3 * f[0] - 3 * f[1] + f[2]
    p[-1, 1:-1] = 3 * f[-1] - 3 * f[-2] + f[-3]
    p[:, 0] = 3 * p[:, 1] - 3 * p[:, 2] + p[:, 3]
    p[:, -1] = 3 * p[:, -2] - 3 * p[:, -3] + p[:, -4]
    return p


def laplace_beltrami(field, metric, return_mask=False):
    """Discrete Laplace-Beltrami of ``field`` on the surface described by ``metric``.

    Interior pixels use second-order conservative central differences;
    the one-pixel border uses one-sided (first-order) stencils and is marked
    False in the validity mask returned when ``return_mask`` is set.
    """
    if isinstance(field, SurfaceField):
        f = field.values
        dx = field.chart_cell_size
    else:
        f = check_grid(field, "field")
        dx = metric.cell_size
    check_same_shape(f, metric.g11, names=("field", "metric"))
    dy = dx

    p = _extrapolate_pad(f)
    a11 = np.pad(metric.sqrt_det * metric.inv_g11, 1, mode="edge")
    a12 = np.pad(metric.sqrt_det * metric.inv_g12, 1, mode="edge")
    a22 = np.pad(metric.sqrt_det * metric.inv_g22, 1, mode="edge")

    # central derivatives on every padded column (resp. row) of the real rows
    cy = (p[2:, :] - p[:-2, :]) / (2 * dy)
    cx = (p[:, 2:] - p[:, :-2]) / (2 * dx)

    # x-faces (i, j+1/2)
    fx = (p[1:-1, 1:] - p[1:-1, :-1]) / dx
    fy_x = 0.5 * (cy[:, 1:] + cy[:, :-1])
    flux_x = (0.5 * (a11[1:-1, 1:] + a11[1:-1, :-1]) * fx
              + 0.5 * (a12[1:-1, 1:] + a12[1:-1, :-1]) * fy_x)
    # y-faces (i+1/2, j)
    fy = (p[1:, 1:-1] - p[:-1, 1:-1]) / dy
    fx_y = 0.5 * (cx[1:, :] + cx[:-1, :])
    flux_y = (0.5 * (a22[1:, 1:-1] + a22[:-1, 1:-1]) * fy
              + 0.5 * (a12[1:, 1:-1] + a12[:-1, 1:-1]) * fx_y)

    div = (flux_x[:, 1:] - flux_x[:, :-1]) / dx + (flux_y[1:, :] - flux_y[:-1, :]) / dy
    out = div / metric.sqrt_det
    if return_mask:
        return out, interior_mask(out.shape)
    return out


def _rounding_bound(E, metric, cell):
    # worst-case float error of the stencil: |weights| * |samples| * a few ulps
    weight = metric.sqrt_det * (metric.inv_g11 + metric.inv_g22 + 2 * np.abs(metric.inv_g12))
    weight = ndimage.maximum_filter(weight, size=3, mode="nearest") / metric.sqrt_det
    local = ndimage.maximum_filter(np.abs(E), size=3, mode="nearest")
    return 16 * np.finfo(np.float64).eps * 2 * weight * local / cell ** 2


def binarize_k2(k2):
    """1 where k^2 < 0, else 0."""
    return (np.asarray(k2) < 0).astype(np.uint8)


def extract_k2(radio_map, metric, epsilon_floor=1e-12):
    """Square-wave-number map ``k^2 = -lb(E) / E``.

    ``radio_map`` is either a linear-power grid, an object with a ``gain_db``
    attribute (converted to linear power), or a ``SurfaceField`` of field
    magnitudes used as ``E`` directly. Power is floored at ``epsilon_floor``
    before taking the square root. No source term is subtracted.

    Values of the operator below its own rounding bound are set to exactly
    0, so exact zero crossings binarize as non-negative. The binary map is
    forced to 0 on the one-pixel border.
    """
    if isinstance(radio_map, SurfaceField):
        E = radio_map.values
        if np.any(E < 0):
            raise ValueError("field magnitudes must be >= 0")
        E = np.maximum(E, np.sqrt(epsilon_floor))
        cell = radio_map.chart_cell_size
    else:
        if hasattr(radio_map, "gain_db"):
            power = 10.0 ** (np.asarray(radio_map.gain_db, dtype=np.float64) / 10.0)
        else:
            power = check_grid(radio_map, "radio_map")
        if np.any(power < 0):
            raise ValueError("radio map power must be >= 0 (linear scale)")
        E = np.sqrt(np.maximum(power, epsilon_floor))
        cell = metric.cell_size
    lb, valid = laplace_beltrami(SurfaceField(E, cell), metric, return_mask=True)
    lb[np.abs(lb) <= _rounding_bound(E, metric, cell)] = 0.0
    k2 = -lb / E
    binary = binarize_k2(k2)
    binary[~valid] = 0
    return WaveNumberMap(k2_continuous=k2, k2_binary=binary, valid=valid)
