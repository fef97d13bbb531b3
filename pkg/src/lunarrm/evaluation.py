"""Pixel-wise radio-map quality metrics: RMSE, NMSE, SSIM and PSNR.

All metrics operate on normalized ``[0, 1]`` maps.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from ._validation import check_same_shape
from .propagation import PAPER_FREQUENCIES

SSIM_DEFAULTS = {"win_size": 11, "sigma": 1.5, "k1": 0.01, "k2": 0.03, "data_range": 1.0}
BAND_NAMES = {PAPER_FREQUENCIES[0]: "415 MHz", PAPER_FREQUENCIES[1]: "5.8 GHz"}
BOTH = "Both"


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b, names=("a", "b"))
    return a, b


def rmse(a, b):
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def nmse(a, b):
    """Error energy over reference energy, ``sum((a-b)^2) / sum(a^2)``; ``a`` is the reference."""
    a, b = _pair(a, b)
    energy = float(np.sum(a * a))
    if energy == 0:
        raise ValueError("nmse undefined for an all-zero reference")
    return float(np.sum((a - b) ** 2)) / energy


def psnr(a, b, peak=1.0):
    """``10 log10(peak^2 / mse)``; ``inf`` for identical inputs."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(win_size=11, sigma=1.5):
    x = np.arange(win_size) - (win_size - 1) / 2.0
    w = np.exp(-(x * x) / (2 * sigma * sigma))
    return w / w.sum()


def ssim(a, b, win_size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Mean SSIM over every full Gaussian window position."""
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < win_size:
        raise ValueError(f"ssim needs 2-D grids of at least {win_size}x{win_size}, got {a.shape}")
    w = gaussian_window(win_size, sigma)
    pad = (win_size - 1) // 2

    def smooth(x):
        x = ndimage.correlate1d(x, w, axis=0, mode="reflect")
        x = ndimage.correlate1d(x, w, axis=1, mode="reflect")
        return x[pad:x.shape[0] - pad, pad:x.shape[1] - pad]

    mu_a, mu_b = smooth(a), smooth(b)
    var_a = smooth(a * a) - mu_a * mu_a
    var_b = smooth(b * b) - mu_b * mu_b
    cov = smooth(a * b) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.clip(np.mean(num / den), -1.0, 1.0))


@dataclass
class SampleMetrics:
    rmse: float
    mse: float
    nmse: float
    ssim: float
    psnr: float
    err_energy: float
    ref_energy: float
    n_pixels: int


def sample_metrics(reference, prediction, ssim_params=None):
    a, b = _pair(reference, prediction)
    err = float(np.sum((a - b) ** 2))
    ref = float(np.sum(a * a))
    mse = err / a.size
    return SampleMetrics(
        rmse=math.sqrt(mse), mse=mse,
        nmse=err / ref if ref > 0 else math.nan,
        ssim=ssim(a, b, **(ssim_params or {})),
        psnr=math.inf if mse == 0 else -10.0 * math.log10(mse),
        err_energy=err, ref_energy=ref, n_pixels=a.size,
    )


@dataclass
class BandMetrics:
    rmse: float
    nmse: float
    ssim: float
    psnr: float
    mse: float
    n_samples: int


@dataclass
class MetricReport:
    bands: dict
    n_samples: int
    pooled: bool = False
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        return {"n_samples": self.n_samples, "pooled": self.pooled, "notes": self.notes,
                "bands": {k: asdict(v) for k, v in self.bands.items()}}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self):
        """Plain-text table: metric rows grouped by band."""
        lines = ["Metrics on normalized [0, 1] radio maps", ""]
        fmt = {"nmse": "{:.6f}", "rmse": "{:.4f}", "ssim": "{:.4f}", "psnr": "{:.2f}"}
        for band, m in self.bands.items():
            lines.append(f"{band}  (n = {m.n_samples})")
            for key in ("nmse", "rmse", "ssim", "psnr"):
                val = getattr(m, key)
                text = "inf" if math.isinf(val) else fmt[key].format(val)
                lines.append(f"  {key.upper():<5} {text:>12}")
        return "\n".join(lines) + "\n"


def _aggregate(items, pooled):
    n = len(items)
    err = math.fsum(s.err_energy for s in items)
    ref = math.fsum(s.ref_energy for s in items)
    pix = sum(s.n_pixels for s in items)
    mse_mean = math.fsum(s.mse for s in items) / n
    nmse = err / ref if ref > 0 else math.nan
    ssim_mean = math.fsum(s.ssim for s in items) / n
    if pooled:
        mse_pool = err / pix
        return BandMetrics(rmse=math.sqrt(mse_pool), nmse=nmse, ssim=ssim_mean,
                           psnr=math.inf if mse_pool == 0 else -10 * math.log10(mse_pool),
                           mse=mse_mean, n_samples=n)
    psnrs = [s.psnr for s in items]
    psnr_mean = math.inf if any(math.isinf(p) for p in psnrs) else math.fsum(psnrs) / n
    return BandMetrics(rmse=math.fsum(s.rmse for s in items) / n, nmse=nmse, ssim=ssim_mean,
                       psnr=psnr_mean, mse=mse_mean, n_samples=n)


def band_name(frequency_hz):
    for f, name in BAND_NAMES.items():
        if math.isclose(frequency_hz, f, rel_tol=1e-9):
            return name
    return f"{frequency_hz / 1e6:g} MHz"


def _records(x):
    from .container import read_container
    if isinstance(x, (str, bytes)) or hasattr(x, "__fspath__"):
        return read_container(x)
    return [r.to_record() if hasattr(r, "to_record") else r for r in x]


def evaluate_dataset(predictions, references, pooled=False, bands=None, channel="RM"):
    """Compare matched prediction/reference samples band by band.

    Inputs are containers (paths) or sequences of records/samples, matched by
    position. RMSE, SSIM and PSNR are averaged over samples; NMSE pools the
    error and reference energies. ``pooled=True`` also pools RMSE and PSNR.
    ``bands`` optionally restricts the report to the given frequencies.
    """
    preds, refs = _records(predictions), _records(references)
    if len(preds) != len(refs):
        raise ValueError(f"sample count mismatch: {len(preds)} predictions vs {len(refs)} references")
    per_band = {}
    for k, (p, r) in enumerate(zip(preds, refs)):
        fp, fr = p.meta.get("frequency_hz"), r.meta.get("frequency_hz")
        if fr is None or fp is None or not math.isclose(fp, fr, rel_tol=1e-9):
            raise ValueError(f"sample {k}: frequency mismatch ({fp} vs {fr})")
        for key in ("terrain_seed", "tx"):
            if key in p.meta and key in r.meta and p.meta[key] != r.meta[key]:
                raise ValueError(f"sample {k}: metadata mismatch on {key!r}")
        if bands is not None and not any(math.isclose(fr, b, rel_tol=1e-9) for b in bands):
            continue
        sm = sample_metrics(r.channels[channel], p.channels[channel])
        per_band.setdefault(fr, []).append(sm)
    if not per_band:
        raise ValueError("no samples to evaluate")
    report = {}
    for f in sorted(per_band):
        report[band_name(f)] = _aggregate(per_band[f], pooled)
    everything = [s for f in sorted(per_band) for s in per_band[f]]
    report[BOTH] = _aggregate(everything, pooled)
    notes = {"scale": "normalized [0, 1] maps", "ssim": dict(SSIM_DEFAULTS),
             "aggregation": "pooled" if pooled else "per-sample mean (NMSE pooled)"}
    return MetricReport(bands=report, n_samples=len(everything), pooled=pooled, notes=notes)
