"""Lunar terrain, terrain-aware radio maps and k^2 wave-number labels."""

__version__ = "0.1.0"

from .terrain import (  # noqa: E402
    CraterEvent, HeightMap, TerrainGenConfig, diffuse, generate_terrain, high_pass,
    sample_crater_population, stamp_crater,
)
from .surface import (  # noqa: E402
    MetricField, SurfaceField, WaveNumberMap, binarize_k2, extract_k2, laplace_beltrami,
    metric_from_heightmap,
)
from .propagation import (  # noqa: E402
    RadioMap, RegolithParams, RenderOptions, Transmitter, free_space_path_loss,
    knife_edge_loss, render_radio_map, terrain_profile, two_ray_gain,
)
from .estimators import (  # noqa: E402
    GapFiller, HighPassFilter, LunarTerrainGenerator, RadioMapRenderer, WaveNumberExtractor,
)

__all__ = [
    "CraterEvent", "HeightMap", "TerrainGenConfig", "diffuse", "generate_terrain", "high_pass",
    "sample_crater_population", "stamp_crater",
    "MetricField", "SurfaceField", "WaveNumberMap", "binarize_k2", "extract_k2",
    "laplace_beltrami", "metric_from_heightmap",
    "RadioMap", "RegolithParams", "RenderOptions", "Transmitter", "free_space_path_loss",
    "knife_edge_loss", "render_radio_map", "terrain_profile", "two_ray_gain",
    "GapFiller", "HighPassFilter", "LunarTerrainGenerator", "RadioMapRenderer",
    "WaveNumberExtractor",
]
