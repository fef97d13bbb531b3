"""Training-sample assembly, null-pixel repair and ray-traced map ingestion."""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import __version__
from ._validation import check_grid, check_same_shape
from .container import Record
from .propagation import PAPER_FREQUENCIES
from .terrain import high_pass

CHANNELS = ("HM", "FM", "TX", "HZ", "RM", "KM")


class SampleValidationError(ValueError):
    pass


@dataclass
class SampleMeta:
    terrain_seed: int
    tx: dict
    frequency_hz: float
    clip_range_db: tuple
    cell_size: float
    elevation_min: float
    elevation_max: float
    fm_scale: float = 1.0
    highpass_sigma: float = 8.0
    generator_version: str = __version__
    provenance: str = "engine"
    k2_order: str = "after_repair"
    k2_units: str = "1/m^2"
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["clip_range_db"] = list(self.clip_range_db)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["clip_range_db"] = tuple(d["clip_range_db"])
        return cls(**d)


@dataclass
class DatasetSample:
    """Input channels HM, FM, TX, HZ and label channels RM, KM for one map."""

    I_HM: np.ndarray
    I_FM: np.ndarray
    I_Tx: np.ndarray
    I_Hz: np.ndarray
    I_RM: np.ndarray
    I_KM: np.ndarray
    meta: SampleMeta

    def channels(self):
        return dict(zip(CHANNELS, (self.I_HM, self.I_FM, self.I_Tx, self.I_Hz, self.I_RM, self.I_KM)))

    def to_record(self):
        return Record(self.meta.to_dict(), self.channels())

    @classmethod
    def from_record(cls, record):
        ch = record.channels
        missing = [c for c in CHANNELS if c not in ch]
        if missing:
            raise SampleValidationError(f"record lacks channels {missing}")
        return cls(ch["HM"], ch["FM"], ch["TX"], ch["HZ"], ch["RM"], ch["KM"],
                   SampleMeta.from_dict(record.meta))

    def heightmap_meters(self):
        m = self.meta
        return m.elevation_min + self.I_HM.astype(np.float64) * (m.elevation_max - m.elevation_min)

    def gain_db(self):
        lo, hi = self.meta.clip_range_db
        return lo + self.I_RM.astype(np.float64) * (hi - lo)


def frequency_flag(frequency_hz, shape, paper_mode=True):
    """Constant band flag: 0 for 415 MHz, 1 for 5.8 GHz."""
    low, high = PAPER_FREQUENCIES
    if math.isclose(frequency_hz, low, rel_tol=1e-9):
        value = 0
    elif math.isclose(frequency_hz, high, rel_tol=1e-9):
        value = 1
    elif paper_mode:
        raise ValueError(f"frequency {frequency_hz} Hz is not one of the two bands {PAPER_FREQUENCIES}")
    else:
        value = int(frequency_hz >= math.sqrt(low * high))
    return np.full(shape, value, dtype=np.uint8)


def assemble_sample(heightmap, tx, rendered, k2, highpass_sigma=8.0, paper_mode=True,
                    provenance="engine", extra=None):
    """Bundle inputs and labels into a ``DatasetSample``.

    The heightmap is min-max normalized per sample; the high-pass map is
    computed on raw meters and divided by the same elevation range.
    """
    elev = heightmap.elevations
    check_same_shape(elev, rendered.normalized, k2.k2_binary,
                     names=("heightmap", "radio map", "k2 map"))
    if not (0 <= tx.grid_i < elev.shape[0] and 0 <= tx.grid_j < elev.shape[1]):
        raise ValueError("transmitter outside the grid")
    hz = frequency_flag(tx.frequency_hz, elev.shape, paper_mode)

    lo, hi = float(elev.min()), float(elev.max())
    span = hi - lo
    scale = 1.0 / span if span > 0 else 0.0
    hm = (elev - lo) * scale
    fm = high_pass(heightmap, highpass_sigma) * scale
    one_hot = np.zeros(elev.shape, dtype=np.uint8)
    one_hot[tx.grid_i, tx.grid_j] = 1

    meta = SampleMeta(
        terrain_seed=int(heightmap.seed),
        tx=tx.to_dict(),
        frequency_hz=float(tx.frequency_hz),
        clip_range_db=tuple(rendered.clip_range_db),
        cell_size=float(heightmap.cell_size),
        elevation_min=lo,
        elevation_max=hi,
        fm_scale=scale,
        highpass_sigma=float(highpass_sigma),
        provenance=provenance,
        extra=dict(extra or {}),
    )
    return DatasetSample(
        I_HM=hm.astype(np.float32), I_FM=fm.astype(np.float32), I_Tx=one_hot, I_Hz=hz,
        I_RM=np.asarray(rendered.normalized, dtype=np.float32),
        I_KM=np.asarray(k2.k2_binary, dtype=np.uint8), meta=meta,
    )


def validate_sample(sample):
    """Return a list of invariant violations (empty when the sample is valid)."""
    problems = []
    ch = sample.channels()
    shapes = {name: np.shape(a) for name, a in ch.items()}
    if len(set(shapes.values())) != 1:
        problems.append(f"channel shapes differ: {shapes}")
        return problems
    tx = np.asarray(sample.I_Tx)
    if not np.isin(tx, (0, 1)).all() or tx.sum() != 1:
        problems.append("I_Tx is not one-hot")
    hz = np.asarray(sample.I_Hz)
    if hz.size and not (np.all(hz == 0) or np.all(hz == 1)):
        problems.append("I_Hz is not a constant 0/1 grid")
    if not np.isin(sample.I_KM, (0, 1)).all():
        problems.append("I_KM is not binary")
    for name in ("HM", "FM", "RM"):
        if not np.all(np.isfinite(ch[name])):
            problems.append(f"I_{name} has non-finite values")
    for name in ("HM", "RM"):
        a = ch[name]
        if a.size and (a.min() < 0 or a.max() > 1):
            problems.append(f"I_{name} outside [0, 1]")
    return problems


def check_sample(sample):
    problems = validate_sample(sample)
    if problems:
        raise SampleValidationError("; ".join(problems))
    return sample


def _check_nulls(values, null_mask):
    values = check_grid(values, "values", allow_nan=True)
    mask = np.asarray(null_mask, dtype=bool)
    check_same_shape(values, mask, names=("values", "null_mask"))
    return values, mask


def fill_gaps_bilinear(values, null_mask):
    """Fill nulls by interpolating between the nearest valid pixels along row and column.

    Row and column estimates are linear between the bracketing valid
    samples and combined with weights inversely proportional to their span,
    so affine fields are reproduced exactly. Nulls not bracketed on either
    axis take the value of the nearest valid pixel. Valid pixels are
    returned untouched.
    """
    values, mask = _check_nulls(values, null_mask)
    valid = ~mask
    if not valid.any():
        raise ValueError("cannot interpolate an all-null map")
    if valid.sum() < 4 or np.unique(np.nonzero(valid)[0]).size < 2 \
            or np.unique(np.nonzero(valid)[1]).size < 2:
        raise ValueError("need at least 4 valid pixels spanning two rows and two columns")
    out = values.copy()
    if not mask.any():
        return out
    n, m = values.shape

    def brackets(valid2d, axis):
        length = valid2d.shape[axis]
        idx = np.arange(length)
        idx = idx[None, :] if axis == 1 else idx[:, None]
        lower = np.where(valid2d, idx, -1)
        lower = np.maximum.accumulate(lower, axis=axis)
        upper = np.where(valid2d, idx, length)
        upper = np.flip(np.minimum.accumulate(np.flip(upper, axis), axis=axis), axis)
        return lower, upper

    rows, cols = np.nonzero(mask)
    left, right = brackets(valid, 1)
    up, down = brackets(valid, 0)
    jl, jr = left[rows, cols], right[rows, cols]
    iu, idn = up[rows, cols], down[rows, cols]
    has_row = (jl >= 0) & (jr < m)
    has_col = (iu >= 0) & (idn < n)

    est_row = np.zeros(rows.size)
    est_col = np.zeros(rows.size)
    w_row = np.zeros(rows.size)
    w_col = np.zeros(rows.size)
    r = has_row
    vl, vr = values[rows[r], jl[r]], values[rows[r], jr[r]]
    span = (jr[r] - jl[r]).astype(np.float64)
    est_row[r] = vl + (vr - vl) * (cols[r] - jl[r]) / span
    w_row[r] = 1.0 / span
    c = has_col
    vu, vd = values[iu[c], cols[c]], values[idn[c], cols[c]]
    span = (idn[c] - iu[c]).astype(np.float64)
    est_col[c] = vu + (vd - vu) * (rows[c] - iu[c]) / span
    w_col[c] = 1.0 / span

    wsum = w_row + w_col
    filled = np.empty(rows.size)
    ok = wsum > 0
    filled[ok] = (w_row[ok] * est_row[ok] + w_col[ok] * est_col[ok]) / wsum[ok]
    if (~ok).any():
        _, (ni, nj) = ndimage.distance_transform_edt(mask, return_indices=True)
        filled[~ok] = values[ni[rows[~ok], cols[~ok]], nj[rows[~ok], cols[~ok]]]
    out[rows, cols] = filled
    return out


def fill_gaps_static(values, null_mask, fill_value=-150.0):
    """Set every null pixel to ``fill_value``; valid pixels are untouched."""
    values, mask = _check_nulls(values, null_mask)
    out = values.copy()
    out[mask] = fill_value
    return out


def merge_reseeded(instances):
    """Per-pixel mean of the non-null values of several reseeded renders.

    ``instances`` is a sequence of ``(values, null_mask)`` pairs. Returns
    ``(values, null_mask)``; pixels null in every instance stay null (NaN).
    Values are sorted per pixel before summation so the result does not
    depend on instance order.
    """
    instances = list(instances)
    if not instances:
        raise ValueError("merge_reseeded needs at least one instance")
    pairs = [_check_nulls(v, m) for v, m in instances]
    check_same_shape(*[v for v, _ in pairs])
    stack = np.stack([np.where(m, np.nan, v) for v, m in pairs])
    count = np.sum(~np.isnan(stack), axis=0)
    stack = np.sort(stack, axis=0)
    total = np.nansum(stack, axis=0)
    null = count == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        merged = np.where(null, np.nan, total / np.maximum(count, 1))
    return merged, null


def default_fill_method(frequency_hz):
    """Bilinear for the 415 MHz band (scattered gaps), static for 5.8 GHz (large voids)."""
    return "bilinear" if frequency_hz < math.sqrt(PAPER_FREQUENCIES[0] * PAPER_FREQUENCIES[1]) else "static"


def repair_map(instances, frequency_hz, method="auto", clip_range_db=(-150.0, -50.0)):
    """Merge reseeded instances and fill remaining nulls.

    Returns ``(values, original_null_mask, method_used)``. ``method_used`` is
    ``"noop"`` when nothing was null.
    """
    merged, null = merge_reseeded(instances)
    if not null.any():
        return merged, null, "noop" if len(instances) == 1 else "merge"
    if method == "auto":
        method = default_fill_method(frequency_hz)
    if method == "bilinear":
        return fill_gaps_bilinear(merged, null), null, "bilinear"
    if method == "static":
        return fill_gaps_static(merged, null, clip_range_db[0]), null, "static"
    if method == "merge":
        raise ValueError(f"{int(null.sum())} pixels remain null after merging")
    raise ValueError(f"unknown fill method {method!r}")


def read_raw_map(path):
    """Load a float32 little-endian raw grid and its JSON sidecar.

    The sidecar (same stem, ``.json``) carries ``height``, ``width``,
    ``frequency_hz`` and optionally ``null_sentinel`` (number or ``"nan"``),
    ``map_id``, ``units`` (``"db"``) and ``clip_range_db``.
    Returns ``(values, null_mask, sidecar)``.
    """
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not path.exists():
        raise FileNotFoundError(f"raw map not found: {path}")
    if not sidecar_path.exists():
        raise FileNotFoundError(f"sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    for key in ("height", "width", "frequency_hz"):
        if key not in sidecar:
            raise ValueError(f"{sidecar_path}: missing key {key!r}")
    h, w = int(sidecar["height"]), int(sidecar["width"])
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != h * w:
        raise ValueError(f"{path}: {raw.size} values, sidecar says {h}x{w}")
    values = raw.reshape(h, w).astype(np.float64)
    sentinel = sidecar.get("null_sentinel", "nan")
    if sentinel in ("nan", None) or (isinstance(sentinel, float) and math.isnan(sentinel)):
        null = np.isnan(values)
    else:
        null = (values == np.float32(sentinel)) | np.isnan(values)
    sidecar.setdefault("map_id", path.stem)
    sidecar.setdefault("units", "db")
    return values, null, sidecar


def write_raw_map(path, values, frequency_hz, null_sentinel="nan", **extra):
    """Counterpart of :func:`read_raw_map`, mainly for fixtures and exports."""
    path = Path(path)
    values = np.asarray(values, dtype="<f4")
    values.tofile(path)
    sidecar = {"height": values.shape[0], "width": values.shape[1],
               "frequency_hz": frequency_hz, "null_sentinel": null_sentinel, **extra}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def split_manifest(seeds, fractions=(0.8, 0.1, 0.1), shuffle_seed=0):
    """Assign terrain seeds to train/val/test lists deterministically."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ValueError("split fractions must be three non-negative numbers summing to 1")
    seeds = sorted(set(int(s) for s in seeds))
    order = np.random.default_rng(shuffle_seed).permutation(len(seeds))
    shuffled = [seeds[k] for k in order]
    n_train = int(round(fractions[0] * len(seeds)))
    n_val = int(round(fractions[1] * len(seeds)))
    return {
        "fractions": list(fractions),
        "train": sorted(shuffled[:n_train]),
        "val": sorted(shuffled[n_train:n_train + n_val]),
        "test": sorted(shuffled[n_train + n_val:]),
    }
