"""Synthetic bi-temporal change pairs with exact ground-truth masks.

Each sample is a textured background shared by both time points, a set of
flat-colored objects (rectangles / ellipses / polygons), and a subset of
objects that changes between t1 and t2 (inserted, removed, or replaced by a
new object elsewhere). Object footprints never overlap, so the ground-truth
mask is exactly the symmetric difference of the footprints and exactly the
set of pixels whose content changed. Photometric jitter (brightness/contrast
applied per image) perturbs pixel values without ever touching the mask,
which also yields hard negatives when no object changes.

On-disk layout: ``<root>/{train,val,test}/{t1,t2,mask}/<id>.png`` with 8-bit
RGB images, 8-bit grayscale masks (0 = unchanged, 255 = changed), and a JSON
``manifest.json`` recording ids, seed, and the generator config.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .config import GeneratorConfig
from .errors import GenerationError, LoadError
from .flow_core import mix_seed

SPLITS = ("train", "val", "test")
SUBDIRS = ("t1", "t2", "mask")
MANIFEST_NAME = "manifest.json"


@dataclass
class ChangeSample:
    sample_id: str
    image_t1: np.ndarray   # (H, W, 3) float32 in [0, 1]
    image_t2: np.ndarray
    mask: np.ndarray       # (H, W) uint8 in {0, 1}


def _bilinear_resize(grid: np.ndarray, size: int) -> np.ndarray:
    """Upsample a small 2-D grid to size x size (corner-aligned bilinear)."""
    n0, n1 = grid.shape
    ys = np.linspace(0.0, n0 - 1.0, size)
    xs = np.linspace(0.0, n1 - 1.0, size)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, n0 - 1)
    x1 = np.minimum(x0 + 1, n1 - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - wx) + grid[np.ix_(y0, x1)] * wx
    bot = grid[np.ix_(y1, x0)] * (1 - wx) + grid[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def _value_noise(rng: np.random.Generator, size: int, scale: float, octaves: int = 3) -> np.ndarray:
    acc = np.zeros((size, size))
    amp, total, s = 1.0, 0.0, max(scale, 2.0)
    for _ in range(octaves):
        n = max(2, int(math.ceil(size / s)) + 1)
        acc += amp * _bilinear_resize(rng.random((n, n)), size)
        total += amp
        amp *= 0.5
        s = max(2.0, s / 2.0)
    return acc / total


def _background(rng: np.random.Generator, size: int, texture_scale: float) -> np.ndarray:
    tex = _value_noise(rng, size, texture_scale)
    base = rng.uniform(0.25, 0.75, size=3)
    slope = rng.uniform(-1.0, 1.0, size=(3, 2))
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    img = np.empty((size, size, 3), dtype=np.float64)
    for c in range(3):
        img[..., c] = base[c] + 0.12 * (slope[c, 0] * (xx - 0.5) + slope[c, 1] * (yy - 0.5)) \
            + 0.22 * (tex - 0.5)
    return np.clip(img, 0.0, 1.0)


def _footprint(rng: np.random.Generator, size: int, shape_type: str, radius: float) -> np.ndarray:
    canvas = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(canvas)
    margin = radius + 1.0
    cx = rng.uniform(margin, size - margin)
    cy = rng.uniform(margin, size - margin)
    if shape_type == "rectangle":
        rx = radius * rng.uniform(0.6, 1.4)
        ry = radius * rng.uniform(0.6, 1.4)
        draw.rectangle([cx - rx, cy - ry, cx + rx, cy + ry], fill=255)
    elif shape_type == "ellipse":
        rx = radius * rng.uniform(0.6, 1.4)
        ry = radius * rng.uniform(0.6, 1.4)
        draw.ellipse([cx - rx, cy - ry, cx + rx, cy + ry], fill=255)
    elif shape_type == "polygon":
        k = int(rng.integers(5, 9))
        angles = np.sort(rng.uniform(0.0, 2 * math.pi, k))
        radii = radius * rng.uniform(0.6, 1.3, k)
        pts = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a, r in zip(angles, radii)]
        draw.polygon(pts, fill=255)
    else:
        raise GenerationError(f"unknown shape type {shape_type!r}")
    return np.asarray(canvas) > 0


def _object_color(rng: np.random.Generator, background_mean: np.ndarray) -> np.ndarray:
    for _ in range(20):
        color = rng.uniform(0.05, 0.95, size=3)
        if np.linalg.norm(color - background_mean) >= 0.35:
            return color
    return color


def _photometric_jitter(rng: np.random.Generator, img: np.ndarray, amplitude: float) -> np.ndarray:
    if amplitude <= 0 or rng.random() >= 0.7:
        return img
    brightness = rng.uniform(-amplitude, amplitude)
    contrast = rng.uniform(-amplitude, amplitude)
    return np.clip((img - 0.5) * (1.0 + contrast) + 0.5 + brightness, 0.0, 1.0)


def _radius_range(cfg: GeneratorConfig) -> tuple[float, float]:
    # objects must fit inside the canvas with a 1 px margin
    fit_cap = cfg.image_size / 2.0 - 2.0
    if cfg.radius_min is not None and cfg.radius_max is not None:
        hi = min(float(cfg.radius_max), fit_cap)
        return min(float(cfg.radius_min), hi), hi
    mean_objects = 0.5 * (cfg.objects_min + cfg.objects_max)
    expected_changed = max(1.0, mean_objects * max(cfg.change_probability, 1e-6))
    area = cfg.target_change_fraction * cfg.image_size ** 2 / expected_changed
    r = math.sqrt(area / math.pi)
    lo = max(3.0, 0.7 * r)
    hi = max(lo + 1.0, min(1.3 * r, cfg.image_size / 3.0))
    hi = min(hi, fit_cap)
    return min(lo, hi), hi


def _attempt_sample(rng: np.random.Generator, cfg: GeneratorConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    size = cfg.image_size
    background = _background(rng, size, cfg.texture_scale)
    bg_mean = background.mean(axis=(0, 1))
    r_lo, r_hi = _radius_range(cfg)

    occupied = np.zeros((size, size), dtype=bool)

    def place() -> np.ndarray | None:
        for _ in range(25):
            fp = _footprint(
                rng, size,
                cfg.shape_types[int(rng.integers(0, len(cfg.shape_types)))],
                rng.uniform(r_lo, r_hi),
            )
            if fp.any() and not (fp & occupied).any():
                # objects stay separated by >= 1 px so footprints never merge
                occupied[ndimage.binary_dilation(fp, np.ones((3, 3), dtype=bool))] = True
                return fp
        return None

    img1 = background.copy()
    img2 = background.copy()
    mask = np.zeros((size, size), dtype=bool)
    n_changed = 0
    n_objects = int(rng.integers(cfg.objects_min, cfg.objects_max + 1))
    for _ in range(n_objects):
        fp = place()
        if fp is None:
            continue
        color = _object_color(rng, bg_mean)
        if rng.random() < cfg.change_probability:
            n_changed += 1
            kind = ("insert", "remove", "replace")[int(rng.integers(0, 3))]
            if kind in ("remove", "replace"):
                img1[fp] = color
                mask |= fp
            if kind == "insert":
                img2[fp] = color
                mask |= fp
            if kind == "replace":
                fp2 = place()
                if fp2 is not None:
                    img2[fp2] = _object_color(rng, bg_mean)
                    mask |= fp2
        else:
            img1[fp] = color
            img2[fp] = color

    img1 = _photometric_jitter(rng, img1, cfg.photometric_amplitude)
    img2 = _photometric_jitter(rng, img2, cfg.photometric_amplitude)
    return img1.astype(np.float32), img2.astype(np.float32), mask.astype(np.uint8), n_changed


def generate_sample(cfg: GeneratorConfig, index: int) -> ChangeSample:
    """Generate sample ``index`` deterministically from the config seed."""
    rng = np.random.default_rng(mix_seed(cfg.seed, index))
    lo = max(1e-4, cfg.target_change_fraction - cfg.fraction_tolerance)
    hi = min(0.999, cfg.target_change_fraction + cfg.fraction_tolerance)
    for _ in range(cfg.max_retries):
        img1, img2, mask, n_changed = _attempt_sample(rng, cfg)
        fraction = float(mask.mean())
        if n_changed == 0 or lo <= fraction <= hi:
            return ChangeSample(f"{index:06d}", img1, img2, mask)
    raise GenerationError(
        f"sample {index}: changed-pixel fraction never landed in [{lo:.3f}, {hi:.3f}] after "
        f"{cfg.max_retries} retries; adjust target_change_fraction, object sizes, or object counts"
    )


def generate_dataset(cfg: GeneratorConfig, n: int) -> list[ChangeSample]:
    """Generate ``n`` samples; dataset-level changed fraction must land in the band."""
    if n < 1:
        raise GenerationError(f"dataset size must be >= 1, got {n}")
    cfg.validate()
    samples = [generate_sample(cfg, i) for i in range(n)]
    if cfg.change_probability > 0 and n >= 50:
        global_fraction = float(np.mean([s.mask.mean() for s in samples]))
        lo = cfg.target_change_fraction - cfg.fraction_tolerance
        hi = cfg.target_change_fraction + cfg.fraction_tolerance
        if not (lo <= global_fraction <= hi):
            raise GenerationError(
                f"dataset changed-pixel fraction {global_fraction:.4f} outside [{lo:.3f}, {hi:.3f}]; "
                "tune target_change_fraction / change_probability / object sizes"
            )
    return samples


def augment(sample: ChangeSample, rng: np.random.Generator) -> ChangeSample:
    """Random flips and 90-degree rotations, each with probability 0.3.

    The identical geometric transform is applied to both images and the mask.
    Draw order is fixed: hflip, vflip, rotate?, rotation count.
    """
    arrays = [sample.image_t1, sample.image_t2, sample.mask]
    if rng.random() < 0.3:
        arrays = [np.flip(a, axis=1) for a in arrays]
    if rng.random() < 0.3:
        arrays = [np.flip(a, axis=0) for a in arrays]
    if rng.random() < 0.3:
        k = int(rng.integers(1, 4))
        arrays = [np.rot90(a, k=k, axes=(0, 1)) for a in arrays]
    img1, img2, mask = (np.ascontiguousarray(a) for a in arrays)
    return ChangeSample(sample.sample_id, img1, img2, mask)


def split_of(sample_id: str) -> str:
    """Deterministic 70/15/15 split assignment by id hash."""
    bucket = int.from_bytes(hashlib.sha256(sample_id.encode("utf-8")).digest()[:4], "big") % 100
    if bucket < 70:
        return "train"
    if bucket < 85:
        return "val"
    return "test"


def save_mask_png(mask: np.ndarray, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((np.asarray(mask, dtype=np.uint8) * 255)).save(path)


def load_mask_png(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"mask file not found: {path}")
    arr = np.asarray(Image.open(path).convert("L"))
    bad = np.setdiff1d(np.unique(arr), [0, 255])
    if bad.size:
        raise LoadError(f"{path}: mask values must be 0 or 255, found {bad[:8].tolist()}")
    return (arr // 255).astype(np.uint8)


def _save_image_png(img: np.ndarray, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)).save(path)


def _load_image_png(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"image file not found: {path}")
    return np.asarray(Image.open(path).convert("RGB")).astype(np.float32) / 255.0


def save_sample(sample: ChangeSample, path_t1: str | Path, path_t2: str | Path, path_mask: str | Path) -> None:
    _save_image_png(sample.image_t1, path_t1)
    _save_image_png(sample.image_t2, path_t2)
    save_mask_png(sample.mask, path_mask)


def load_sample_from_disk(
    path_t1: str | Path, path_t2: str | Path, path_mask: str | Path, sample_id: str | None = None
) -> ChangeSample:
    img1 = _load_image_png(path_t1)
    img2 = _load_image_png(path_t2)
    mask = load_mask_png(path_mask)
    if img1.shape != img2.shape:
        raise LoadError(f"image shapes differ: {path_t1} is {img1.shape[:2]}, {path_t2} is {img2.shape[:2]}")
    if mask.shape != img1.shape[:2]:
        raise LoadError(f"{path_mask}: mask shape {mask.shape} does not match images {img1.shape[:2]}")
    return ChangeSample(sample_id or Path(path_t1).stem, img1, img2, mask)


def write_dataset(samples: list[ChangeSample], root: str | Path, cfg: GeneratorConfig) -> dict:
    """Write samples into split directories plus a provenance manifest."""
    root = Path(root)
    ids: dict[str, list[str]] = {s: [] for s in SPLITS}
    for sample in samples:
        split = split_of(sample.sample_id)
        ids[split].append(sample.sample_id)
        save_sample(
            sample,
            root / split / "t1" / f"{sample.sample_id}.png",
            root / split / "t2" / f"{sample.sample_id}.png",
            root / split / "mask" / f"{sample.sample_id}.png",
        )
    manifest = {
        "format_version": 1,
        "seed": cfg.seed,
        "generator": dataclasses.asdict(cfg),
        "splits": ids,
    }
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(root: str | Path) -> dict:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise LoadError(f"dataset manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def read_split(root: str | Path, split: str) -> list[ChangeSample]:
    if split not in SPLITS:
        raise LoadError(f"unknown split {split!r}; expected one of {SPLITS}")
    manifest = read_manifest(root)
    root = Path(root)
    samples = []
    for sample_id in manifest["splits"][split]:
        samples.append(
            load_sample_from_disk(
                root / split / "t1" / f"{sample_id}.png",
                root / split / "t2" / f"{sample_id}.png",
                root / split / "mask" / f"{sample_id}.png",
                sample_id=sample_id,
            )
        )
    return samples
