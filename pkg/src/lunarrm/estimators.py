"""scikit-learn style wrappers around the numerical kernels.

These let the pipeline pieces live inside sklearn ``Pipeline`` objects and
use ``get_params``/``set_params``/``clone``. Grid stacks are arrays of shape
``(n_maps, H, W)``; a single ``(H, W)`` grid is also accepted and returned
unstacked.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_grid
from .dataset import fill_gaps_bilinear, fill_gaps_static
from .propagation import RegolithParams, RenderOptions, Transmitter, render_radio_map
from .surface import extract_k2, metric_from_heightmap
from .terrain import HeightMap, TerrainGenConfig, generate_terrain, high_pass


def _as_stack(X, allow_nan=False):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        return check_grid(X, "X", allow_nan=allow_nan)[None], True
    return check_grid(X, "X", allow_nan=allow_nan, ndim=3), False


def _unstack(out, single):
    return out[0] if single else out


class HighPassFilter(TransformerMixin, BaseEstimator):
    """Identity minus Gaussian blur, applied map by map."""

    def __init__(self, sigma=8.0, mode="reflect"):
        self.sigma = sigma
        self.mode = mode

    def fit(self, X, y=None):
        stack, _ = _as_stack(X)
        self.grid_shape_ = stack.shape[1:]
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_shape_")
        stack, single = _as_stack(X)
        if stack.shape[1:] != self.grid_shape_:
            raise ValueError(f"expected grids of shape {self.grid_shape_}, got {stack.shape[1:]}")
        out = np.stack([high_pass(g, self.sigma, self.mode) for g in stack])
        return _unstack(out, single)


class GapFiller(TransformerMixin, BaseEstimator):
    """Repair NaN-marked null pixels by bilinear or static fill."""

    def __init__(self, method="bilinear", fill_value=-150.0):
        self.method = method
        self.fill_value = fill_value

    def fit(self, X, y=None):
        if self.method not in ("bilinear", "static"):
            raise ValueError(f"unknown method {self.method!r}")
        _as_stack(X, allow_nan=True)
        self.method_ = self.method
        return self

    def transform(self, X):
        check_is_fitted(self, "method_")
        stack, single = _as_stack(X, allow_nan=True)
        out = []
        for g in stack:
            mask = np.isnan(g)
            if self.method_ == "bilinear":
                out.append(fill_gaps_bilinear(g, mask))
            else:
                out.append(fill_gaps_static(g, mask, self.fill_value))
        return _unstack(np.stack(out), single)


class WaveNumberExtractor(TransformerMixin, BaseEstimator):
    """Fit on a heightmap (meters), transform linear-power maps into k^2 maps.

    ``output="binary"`` returns the sign mask, ``"continuous"`` the raw k^2.
    """

    def __init__(self, cell_size=2.0, epsilon_floor=1e-12, output="binary"):
        self.cell_size = cell_size
        self.epsilon_floor = epsilon_floor
        self.output = output

    def fit(self, X, y=None):
        if self.output not in ("binary", "continuous"):
            raise ValueError(f"unknown output {self.output!r}")
        grid = check_grid(X, "heightmap")
        self.metric_ = metric_from_heightmap(grid, self.cell_size)
        return self

    def transform(self, X):
        check_is_fitted(self, "metric_")
        stack, single = _as_stack(X)
        maps = [extract_k2(p, self.metric_, self.epsilon_floor) for p in stack]
        if self.output == "binary":
            out = np.stack([m.k2_binary for m in maps])
        else:
            out = np.stack([m.k2_continuous for m in maps])
        return _unstack(out, single)


class RadioMapRenderer(BaseEstimator):
    """Fit on a heightmap, predict normalized radio maps for transmitter positions.

    ``predict`` takes an ``(n, 2)`` array of ``(row, col)`` positions.
    """

    def __init__(self, frequency_hz=415e6, cell_size=2.0, tx_height=2.0, rx_height=1.0,
                 rel_permittivity=3.0, conductivity=1e-4, clip_range_db=(-150.0, -50.0),
                 two_ray=True, max_edges=3):
        self.frequency_hz = frequency_hz
        self.cell_size = cell_size
        self.tx_height = tx_height
        self.rx_height = rx_height
        self.rel_permittivity = rel_permittivity
        self.conductivity = conductivity
        self.clip_range_db = clip_range_db
        self.two_ray = two_ray
        self.max_edges = max_edges

    def fit(self, X, y=None):
        self.heightmap_ = HeightMap(check_grid(X, "heightmap"), self.cell_size)
        self.regolith_ = RegolithParams(self.rel_permittivity, self.conductivity)
        self.options_ = RenderOptions(rx_height=self.rx_height, clip_range_db=self.clip_range_db,
                                      two_ray=self.two_ray, max_edges=self.max_edges)
        return self

    def render(self, positions):
        check_is_fitted(self, "heightmap_")
        positions = np.atleast_2d(np.asarray(positions, dtype=np.intp))
        return [render_radio_map(self.heightmap_,
                                 Transmitter(i, j, self.tx_height, frequency_hz=self.frequency_hz),
                                 self.regolith_, self.options_)
                for i, j in positions]

    def predict(self, positions):
        return np.stack([m.normalized for m in self.render(positions)])


class LunarTerrainGenerator(BaseEstimator):
    """Parameter holder for the cratering generator; ``sample`` yields heightmaps."""

    def __init__(self, size=256, cell_size=2.0, target_age=1.0, n_epochs=8, sfd_exponent=2.0,
                 crater_rate=2e-3, d_min=6.0, d_max=150.0, diffusivity=40.0, depth_ratio=0.2,
                 rim_height_ratio=0.04, rim_floor_ratio=0.01, boundary="neumann"):
        self.size = size
        self.cell_size = cell_size
        self.target_age = target_age
        self.n_epochs = n_epochs
        self.sfd_exponent = sfd_exponent
        self.crater_rate = crater_rate
        self.d_min = d_min
        self.d_max = d_max
        self.diffusivity = diffusivity
        self.depth_ratio = depth_ratio
        self.rim_height_ratio = rim_height_ratio
        self.rim_floor_ratio = rim_floor_ratio
        self.boundary = boundary

    def fit(self, X=None, y=None):
        self.config_ = TerrainGenConfig(**self.get_params())
        return self

    def sample(self, seeds):
        if not hasattr(self, "config_"):
            self.fit()
        return np.stack([generate_terrain(self.config_, s).elevations for s in np.atleast_1d(seeds)])
