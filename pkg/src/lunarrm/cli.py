"""Command-line entry point: ``lunarrm {terrain,dataset,ingest,eval,vectors,validate}``.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 validation failure.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, echo_config, load_config, terrain_config, terrain_seeds
from .container import ContainerError, Record, atomic_write_bytes, encode_container, read_container
from .dataset import (
    DatasetSample, SampleValidationError, assemble_sample, check_sample, read_raw_map,
    repair_map, split_manifest, validate_sample,
)
from .evaluation import evaluate_dataset
from .imaging import save_binary_png, save_heightmap_png, save_normalized_png
from .model_math import build_vectors, check_vectors, dumps_vectors
from .propagation import RegolithParams, RenderOptions, Transmitter, normalize_gain, render_radio_map
from .surface import extract_k2, metric_from_heightmap
from .terrain import generate_terrain

log = logging.getLogger("lunarrm")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_VALIDATION = 0, 2, 3, 4


class ValidationFailure(Exception):
    pass


def _pool_map(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def _write_echo(out, resolved, user, command):
    doc = {"command": command, "generator_version": __version__,
           "config": echo_config(resolved, user)}
    atomic_write_bytes(str(out) + ".config.json", json.dumps(doc, indent=2).encode())


def place_transmitters(elev, n, policy, rng):
    """Pick ``n`` transmitter pixels: uniform over the grid or among the top-decile elevations."""
    if policy == "uniform":
        flat = rng.choice(elev.size, size=n, replace=False)
    elif policy == "ridge":
        candidates = np.flatnonzero(elev >= np.quantile(elev, 0.9))
        flat = rng.choice(candidates, size=n, replace=False)
    else:
        raise ValueError(f"unknown placement policy {policy!r}")
    return [tuple(int(v) for v in np.unravel_index(k, elev.shape)) for k in flat]


def cmd_terrain(resolved, out, user=None, seeds=None, png_dir=None, workers=None):
    cfg = terrain_config(resolved)
    seeds = terrain_seeds(resolved) if seeds is None else [int(s) for s in seeds]
    workers = workers or resolved["workers"]
    maps = _pool_map(lambda s: generate_terrain(cfg, s), seeds, workers)
    records = []
    for hm in maps:
        meta = {"terrain_seed": hm.seed, "cell_size": hm.cell_size,
                "elevation_min": float(hm.elevations.min()),
                "elevation_max": float(hm.elevations.max()),
                "generator_version": __version__, "terrain": cfg.to_dict()}
        records.append(Record(meta, {"HM": hm.elevations}))
    atomic_write_bytes(out, encode_container(records))
    _write_echo(out, resolved, user or {}, "terrain")
    if png_dir:
        Path(png_dir).mkdir(parents=True, exist_ok=True)
        for hm in maps:
            save_heightmap_png(Path(png_dir) / f"terrain_{hm.seed}.png", hm.elevations)
    return records


def _terrain_samples(seed, resolved):
    cfg = terrain_config(resolved)
    prop = resolved["propagation"]
    hm = generate_terrain(cfg, seed)
    metric = metric_from_heightmap(hm)
    regolith = RegolithParams(prop["rel_permittivity"], prop["conductivity"])
    options = RenderOptions(rx_height=prop["rx_height"], clip_range_db=tuple(prop["clip_range_db"]),
                            two_ray=prop["two_ray"], max_edges=prop["max_edges"])
    rng = np.random.default_rng([int(seed), 0x7478])
    positions = place_transmitters(hm.elevations, int(prop["tx_per_terrain"]), prop["tx_policy"], rng)
    samples = []
    for tx_index, (i, j) in enumerate(positions):
        for f in prop["frequencies"]:
            tx = Transmitter(i, j, prop["tx_height"], frequency_hz=float(f))
            rm = render_radio_map(hm, tx, regolith, options)
            k2 = extract_k2(rm, metric, resolved["k2"]["epsilon_floor"])
            extra = {"tx_index": tx_index, "tx_policy": prop["tx_policy"],
                     "rx_height": prop["rx_height"], "epsilon_floor": resolved["k2"]["epsilon_floor"],
                     "regolith": {"rel_permittivity": regolith.rel_permittivity,
                                  "conductivity": regolith.conductivity}}
            sample = assemble_sample(hm, tx, rm, k2, resolved["dataset"]["highpass_sigma"],
                                     resolved["dataset"]["paper_mode"], extra=extra)
            samples.append(check_sample(sample))
    return samples


def cmd_dataset(resolved, out, user=None, png_dir=None, workers=None):
    """Render every terrain x transmitter x frequency sample and write the container.

    Everything is built in memory and written with a single atomic rename,
    so a failure leaves no partial container behind.
    """
    seeds = terrain_seeds(resolved)
    workers = workers or resolved["workers"]
    groups = _pool_map(lambda s: _terrain_samples(s, resolved), seeds, workers)
    samples = [s for g in groups for s in g]
    manifest = split_manifest(seeds, resolved["dataset"]["split_fractions"],
                              resolved["dataset"]["base_seed"])
    manifest["container"] = Path(out).name
    manifest["n_samples"] = len(samples)
    atomic_write_bytes(out, encode_container(samples))
    atomic_write_bytes(str(out) + ".split.json", json.dumps(manifest, indent=2).encode())
    _write_echo(out, resolved, user or {}, "dataset")
    if png_dir:
        d = Path(png_dir)
        d.mkdir(parents=True, exist_ok=True)
        for k, s in enumerate(samples):
            stem = f"sample_{k:05d}"
            save_normalized_png(d / f"{stem}_rm.png", s.I_RM)
            save_binary_png(d / f"{stem}_km.png", s.I_KM)
            save_heightmap_png(d / f"{stem}_hm.png", s.heightmap_meters())
    return samples, manifest


def cmd_ingest(inputs, out, method="auto", clip_range_db=(-150.0, -50.0)):
    """Merge reseeded ray-traced maps, fill their null pixels and store them.

    Raw maps sharing a sidecar ``map_id`` are treated as reseeded instances
    of one map.
    """
    groups = {}
    for path in inputs:
        values, null, side = read_raw_map(path)
        groups.setdefault(side["map_id"], []).append((values, null, side))
    records = []
    for map_id, items in groups.items():
        shapes = {v.shape for v, _, _ in items}
        freqs = {float(s["frequency_hz"]) for _, _, s in items}
        if len(shapes) != 1 or len(freqs) != 1:
            raise ValueError(f"map {map_id!r}: instances disagree on dimensions or frequency")
        freq = freqs.pop()
        side = items[0][2]
        clip = tuple(side.get("clip_range_db", clip_range_db))
        normalized_input = side.get("units", "db") == "normalized"
        fill_clip = (0.0, 1.0) if normalized_input else clip
        values, null, used = repair_map([(v, m) for v, m, _ in items], freq, method, fill_clip)
        gain = values if not normalized_input else clip[0] + values * (clip[1] - clip[0])
        meta = {"map_id": map_id, "frequency_hz": freq, "clip_range_db": list(clip),
                "fill_method": used, "n_instances": len(items),
                "null_fraction": float(null.mean()), "provenance": "ingested",
                "generator_version": __version__}
        for key in ("terrain_seed", "tx"):
            if key in side:
                meta[key] = side[key]
        records.append(Record(meta, {"RM": normalize_gain(gain, clip), "GAIN_DB": gain,
                                     "NULLMASK": null.astype(np.uint8)}))
    atomic_write_bytes(out, encode_container(records))
    return records


def parse_band(text):
    t = str(text).strip().lower().replace(" ", "")
    for suffix, scale in (("ghz", 1e9), ("mhz", 1e6), ("hz", 1.0)):
        if t.endswith(suffix):
            return float(t[:-len(suffix)]) * scale
    return float(t)


def cmd_eval(predictions, references, out, bands=None, pooled=False):
    for p in (predictions, references):
        if not Path(p).exists():
            raise FileNotFoundError(f"no such file: {p}")
    report = evaluate_dataset(predictions, references, pooled=pooled, bands=bands)
    atomic_write_bytes(str(out) + ".json", report.to_json().encode())
    atomic_write_bytes(str(out) + ".txt", report.to_table().encode())
    return report


def cmd_vectors(out, seed=0):
    doc = build_vectors(seed)
    atomic_write_bytes(out, dumps_vectors(doc).encode())
    return doc


def cmd_validate(path, vectors=False):
    """Return a list of problems found in a dataset container or a vector file."""
    if vectors:
        doc = json.loads(Path(path).read_text())
        return check_vectors(doc)
    problems = []
    for k, rec in enumerate(read_container(path)):
        try:
            sample = DatasetSample.from_record(rec)
        except (SampleValidationError, TypeError, KeyError) as exc:
            problems.append(f"record {k}: {exc}")
            continue
        problems.extend(f"record {k}: {p}" for p in validate_sample(sample))
    return problems


def build_parser():
    p = argparse.ArgumentParser(prog="lunarrm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("terrain", help="generate heightmaps")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--seeds", type=int, nargs="*")
    t.add_argument("--png", metavar="DIR")
    t.add_argument("--workers", type=int)

    d = sub.add_parser("dataset", help="render a full training dataset")
    d.add_argument("--config")
    d.add_argument("--out")
    d.add_argument("--png", metavar="DIR")
    d.add_argument("--workers", type=int)

    i = sub.add_parser("ingest", help="repair externally ray-traced maps")
    i.add_argument("inputs", nargs="+", help="raw float32 grids with .json sidecars")
    i.add_argument("--out", required=True)
    i.add_argument("--method", choices=("auto", "bilinear", "static", "merge"), default="auto")
    i.add_argument("--clip-range", type=float, nargs=2, default=(-150.0, -50.0))

    e = sub.add_parser("eval", help="score predictions against references")
    e.add_argument("--pred", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--out", required=True, help="output prefix for .json and .txt")
    e.add_argument("--band", action="append", help="restrict to a band, e.g. 415MHz or 5.8GHz")
    e.add_argument("--pooled", action="store_true")

    v = sub.add_parser("vectors", help="write model-math conformance vectors")
    v.add_argument("--out", required=True)
    v.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("validate", help="check a dataset container or a vector file")
    c.add_argument("path")
    c.add_argument("--vectors", action="store_true")
    return p


def _run(args):
    if args.command == "terrain":
        resolved, user = load_config(args.config)
        recs = cmd_terrain(resolved, args.out, user, args.seeds, args.png, args.workers)
        print(f"wrote {len(recs)} heightmaps to {args.out}")
    elif args.command == "dataset":
        resolved, user = load_config(args.config)
        out = args.out or resolved["dataset"]["output"]
        samples, _ = cmd_dataset(resolved, out, user, args.png, args.workers)
        print(f"wrote {len(samples)} samples to {out}")
    elif args.command == "ingest":
        recs = cmd_ingest(args.inputs, args.out, args.method, tuple(args.clip_range))
        for r in recs:
            print(f"{r.meta['map_id']}: {r.meta['fill_method']}")
    elif args.command == "eval":
        bands = [parse_band(b) for b in args.band] if args.band else None
        report = cmd_eval(args.pred, args.ref, args.out, bands, args.pooled)
        print(report.to_table(), end="")
    elif args.command == "vectors":
        doc = cmd_vectors(args.out, args.seed)
        print(f"wrote {len(doc['cases'])} vectors to {args.out}")
    elif args.command == "validate":
        problems = cmd_validate(args.path, args.vectors)
        if problems:
            for msg in problems:
                print(msg, file=sys.stderr)
            raise ValidationFailure(f"{len(problems)} problem(s)")
        print("ok")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContainerError, SampleValidationError, ValidationFailure) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
