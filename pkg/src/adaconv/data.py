"""RGB-D images on disk, synthetic scenes, hole synthesis and point clouds."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage


class RgbdFormatError(ValueError):
    """An RGB or depth file has the wrong bit depth, channel count or size."""


@dataclass(frozen=True)
class Intrinsics:
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 319.5
    cy: float = 239.5

    @classmethod
    def centered(cls, width: int, height: int, focal: float | None = None) -> Intrinsics:
        f = focal if focal is not None else 0.82 * width
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> Intrinsics:
        values = json.loads(Path(path).read_text())
        unknown = set(values) - {"fx", "fy", "cx", "cy"}
        if unknown:
            raise ValueError(f"unknown intrinsics keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in values.items()})


@dataclass
class RgbdImage:
    """Aligned colour and depth; depth is uint16 millimetres, 0 marks invalid."""

    rgb: np.ndarray
    depth: np.ndarray
    intrinsics: Intrinsics = field(default_factory=Intrinsics)

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb)
        self.depth = np.asarray(self.depth)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3 or self.rgb.dtype != np.uint8:
            raise RgbdFormatError(f"rgb must be (H, W, 3) uint8, got {self.rgb.shape} {self.rgb.dtype}")
        if self.depth.ndim != 2 or self.depth.dtype != np.uint16:
            raise RgbdFormatError(f"depth must be (H, W) uint16, got {self.depth.shape} {self.depth.dtype}")
        if self.rgb.shape[:2] != self.depth.shape:
            raise RgbdFormatError(f"rgb {self.rgb.shape[:2]} and depth {self.depth.shape} differ in size")

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    def valid_map(self) -> np.ndarray:
        return (self.depth > 0).astype(np.uint8)


# --------------------------------------------------------------------------
# PNG I/O


def save_depth_png(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth)
    if depth.ndim != 2 or depth.dtype != np.uint16:
        raise RgbdFormatError(f"depth must be a 2-D uint16 array, got {depth.shape} {depth.dtype}")
    Image.fromarray(depth).save(path, format="PNG")


def load_depth_png(path) -> np.ndarray:
    """Read a 16-bit single-channel PNG; anything else is rejected."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            arr = np.array(img)
    except (OSError, SyntaxError) as exc:
        raise RgbdFormatError(f"{path}: unreadable depth image ({exc})") from exc
    if mode not in ("I;16", "I;16B", "I;16L", "I"):
        raise RgbdFormatError(f"{path}: depth must be 16-bit single-channel, got mode {mode}")
    if mode == "I" and (arr.min(initial=0) < 0 or arr.max(initial=0) > 65535):
        raise RgbdFormatError(f"{path}: depth values exceed the 16-bit range")
    return arr.astype(np.uint16)


def save_rgb_png(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise RgbdFormatError(f"rgb must be (H, W, 3) uint8, got {rgb.shape} {rgb.dtype}")
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def load_rgb_png(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            arr = np.array(img)
    except (OSError, SyntaxError) as exc:
        raise RgbdFormatError(f"{path}: unreadable colour image ({exc})") from exc
    if mode != "RGB":
        raise RgbdFormatError(f"{path}: colour image must be 8-bit RGB, got mode {mode}")
    return arr


def save_mask_png(path, m: np.ndarray) -> None:
    Image.fromarray((np.asarray(m) > 0).astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.array(img.convert("L"))
    except (OSError, SyntaxError) as exc:
        raise RgbdFormatError(f"{path}: unreadable mask ({exc})") from exc
    return (arr > 127).astype(np.uint8)


def save_rgbd(rgb_path, depth_path, image: RgbdImage) -> None:
    save_rgb_png(rgb_path, image.rgb)
    save_depth_png(depth_path, image.depth)


def load_rgbd(rgb_path, depth_path, intrinsics: Intrinsics | None = None) -> RgbdImage:
    rgb = load_rgb_png(rgb_path)
    depth = load_depth_png(depth_path)
    if rgb.shape[:2] != depth.shape:
        raise RgbdFormatError(f"{rgb_path} is {rgb.shape[:2]} but {depth_path} is {depth.shape}")
    if intrinsics is None:
        intrinsics = Intrinsics.centered(depth.shape[1], depth.shape[0])
    return RgbdImage(rgb, depth, intrinsics)


# --------------------------------------------------------------------------
# Normalization


def normalize_depth(depth: np.ndarray, m=None) -> tuple[np.ndarray, tuple[float, float]]:
    """Min-max scale valid depths to [0, 1]; invalid pixels become 0.

    Returns the scaled float32 array and the ``(min, max)`` pair needed to
    undo it.
    """
    depth = np.asarray(depth, dtype=np.float64)
    valid = depth > 0 if m is None else np.asarray(m).astype(bool)
    if not valid.any():
        return np.zeros(depth.shape, np.float32), (0.0, 0.0)
    lo, hi = float(depth[valid].min()), float(depth[valid].max())
    span = hi - lo if hi > lo else 1.0
    out = np.where(valid, (depth - lo) / span, 0.0)
    return out.astype(np.float32), (lo, hi)


def denormalize_depth(depth: np.ndarray, bounds: tuple[float, float]) -> np.ndarray:
    """Map [0, 1] back to millimetres as uint16."""
    lo, hi = bounds
    span = hi - lo if hi > lo else 1.0
    mm = np.clip(np.asarray(depth, dtype=np.float64), 0.0, 1.0) * span + lo
    return np.clip(np.rint(mm), 0, 65535).astype(np.uint16)


# --------------------------------------------------------------------------
# Resampling and holes


def downsample_nearest(img: np.ndarray, ratio: int) -> np.ndarray:
    """Keep every ``ratio``-th pixel of the two leading axes."""
    if ratio < 1:
        raise ValueError(f"ratio must be >= 1, got {ratio}")
    return np.ascontiguousarray(np.asarray(img)[::ratio, ::ratio])


def grow_holes(holes: np.ndarray, iterations: int, down_factor: int = 1) -> np.ndarray:
    """Enlarge a boolean hole mask by dilating a coarse copy of it.

    The mask is reduced by ``down_factor`` (a coarse pixel is a hole if any
    pixel in its block is), dilated ``iterations`` times with a 3x3 square,
    and expanded back to full size. With zero iterations the mask is
    returned unchanged.
    """
    holes = np.asarray(holes, dtype=bool)
    if iterations == 0:
        return holes.copy()
    if iterations < 0 or down_factor < 1:
        raise ValueError("iterations must be >= 0 and down_factor >= 1")
    h, w = holes.shape
    f = down_factor
    ch, cw = -(-h // f), -(-w // f)
    padded = np.zeros((ch * f, cw * f), dtype=bool)
    padded[:h, :w] = holes
    coarse = padded.reshape(ch, f, cw, f).any(axis=(1, 3))
    coarse = ndimage.binary_dilation(coarse, structure=np.ones((3, 3), bool), iterations=iterations)
    return coarse.repeat(f, axis=0).repeat(f, axis=1)[:h, :w]


def synthesize_holes(depth: np.ndarray, iterations: int = 4, down_factor: int = 4, seed=None, extra_holes: int = 3):
    """Corrupted copies of ``depth`` with progressively larger holes.

    Existing zero-depth pixels seed the holes; ``extra_holes`` random seed
    pixels (placed at the coarse resolution) are added so complete depth
    maps also receive holes. Returns a list of ``(corrupted, valid_map)``
    pairs, one per dilation count ``1..iterations``.
    """
    depth = np.asarray(depth)
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    rng = np.random.default_rng(seed)
    holes = depth == 0
    if extra_holes:
        h, w = depth.shape
        ch, cw = -(-h // down_factor), -(-w // down_factor)
        ys = rng.integers(0, ch, extra_holes)
        xs = rng.integers(0, cw, extra_holes)
        for y, x in zip(ys, xs):
            holes[y * down_factor : (y + 1) * down_factor, x * down_factor : (x + 1) * down_factor] = True
    pairs = []
    for k in range(1, iterations + 1):
        grown = grow_holes(holes, k, down_factor)
        corrupted = np.where(grown, 0, depth).astype(depth.dtype)
        pairs.append((corrupted, (~grown).astype(np.uint8)))
    return pairs


# --------------------------------------------------------------------------
# Synthetic scenes

DEPTH_RANGE_MM = (500, 5000)


def synth_scene(seed, width: int = 64, height: int = 64, object_count: int = 4) -> RgbdImage:
    """Render a complete RGB-D frame of flat shapes over a tilted background.

    Shapes are axis-aligned rectangles and ellipses, each at its own depth
    and colour, drawn far to near. Depth spans ``DEPTH_RANGE_MM``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = DEPTH_RANGE_MM
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    u, v = xx / max(width - 1, 1), yy / max(height - 1, 1)

    far = rng.uniform(0.55, 0.9)
    gx, gy = rng.uniform(-0.1, 0.1, size=2)
    depth01 = np.clip(far + gx * (u - 0.5) + gy * (v - 0.5), 0.45, 1.0)
    base = rng.uniform(40, 200, size=3)
    shade = rng.uniform(-40, 40, size=3)
    rgb = base[None, None, :] + shade[None, None, :] * (0.5 * (u + v))[..., None]

    objects = []
    for _ in range(object_count):
        d = rng.uniform(0.0, 0.45)
        ow = rng.uniform(0.15, 0.5) * width
        oh = rng.uniform(0.15, 0.5) * height
        cx = rng.uniform(0, width)
        cy = rng.uniform(0, height)
        ellipse = bool(rng.integers(0, 2))
        colour = rng.uniform(0, 255, size=3)
        objects.append((d, ow, oh, cx, cy, ellipse, colour))
    for d, ow, oh, cx, cy, ellipse, colour in sorted(objects, key=lambda o: -o[0]):
        if ellipse:
            inside = ((xx - cx) / (ow / 2)) ** 2 + ((yy - cy) / (oh / 2)) ** 2 <= 1.0
        else:
            inside = (np.abs(xx - cx) <= ow / 2) & (np.abs(yy - cy) <= oh / 2)
        depth01 = np.where(inside, d, depth01)
        rgb = np.where(inside[..., None], colour[None, None, :], rgb)

    depth_mm = np.rint(lo + depth01 * (hi - lo)).astype(np.uint16)
    return RgbdImage(
        np.clip(np.rint(rgb), 0, 255).astype(np.uint8),
        depth_mm,
        Intrinsics.centered(width, height),
    )


# --------------------------------------------------------------------------
# Manifests


@dataclass(frozen=True)
class ManifestEntry:
    input: str
    target: str
    mask: str
    rgb: str
    split: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    root: Path = Path(".")

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(asdict(entry)) + "\n")

    @classmethod
    def load(cls, path) -> DatasetManifest:
        path = Path(path)
        entries = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entries.append(ManifestEntry(**json.loads(line)))
                except (json.JSONDecodeError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed manifest record") from exc
        manifest = cls(entries, path.parent)
        for entry in entries:
            for name in (entry.input, entry.target, entry.mask, entry.rgb):
                if not (manifest.root / name).exists():
                    raise FileNotFoundError(f"{path}: referenced file {name} does not exist")
        return manifest

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]

    def load_entry(self, entry: ManifestEntry):
        """Return ``(rgb, corrupted_depth, target_depth, valid_map)``."""
        rgb = load_rgb_png(self.root / entry.rgb)
        corrupted = load_depth_png(self.root / entry.input)
        target = load_depth_png(self.root / entry.target)
        m = load_mask_png(self.root / entry.mask)
        if not (rgb.shape[:2] == corrupted.shape == target.shape == m.shape):
            raise RgbdFormatError(f"files of {entry.input} disagree in size")
        return rgb, corrupted, target, m


def write_synthetic_dataset(out_dir, count: int, size: int = 64, seed: int = 0, val_fraction: float = 0.1) -> DatasetManifest:
    """Write ``count`` (rgb, corrupted depth, target depth, mask) PNG sets.

    The hole size cycles through 1..4 dilations. The last ``val_fraction`` of
    the images form the ``val`` split.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = make_completion_samples(count, size, seed)
    n_val = int(round(count * val_fraction))
    entries = []
    for i, (img, corrupted, m) in enumerate(samples):
        stem = f"{i:05d}"
        save_rgb_png(out / f"{stem}_rgb.png", img.rgb)
        save_depth_png(out / f"{stem}_target.png", img.depth)
        save_depth_png(out / f"{stem}_input.png", corrupted)
        save_mask_png(out / f"{stem}_mask.png", m)
        split = "val" if i >= count - n_val else "train"
        entries.append(ManifestEntry(f"{stem}_input.png", f"{stem}_target.png", f"{stem}_mask.png", f"{stem}_rgb.png", split))
    manifest = DatasetManifest(entries, out)
    manifest.save(out / "manifest.jsonl")
    return manifest


def make_completion_samples(count: int, size: int = 64, seed: int = 0):
    """``count`` tuples ``(scene, corrupted_depth, valid_map)``, deterministic in ``seed``."""
    seeds = np.random.SeedSequence(seed).spawn(count)
    samples = []
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        scene = synth_scene(rng, size, size, object_count=int(rng.integers(1, 6)))
        k = 1 + i % 4
        corrupted, m = synthesize_holes(scene.depth, iterations=k, down_factor=4, seed=rng)[-1]
        samples.append((scene, corrupted, m))
    return samples


# --------------------------------------------------------------------------
# Point clouds


def backproject(image: RgbdImage) -> tuple[np.ndarray, np.ndarray]:
    """Points in metres and their colours for every valid depth pixel."""
    k = image.intrinsics
    v, u = np.nonzero(image.depth)
    d = image.depth[v, u].astype(np.float64) / 1000.0
    pts = np.stack([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d], axis=1)
    return pts, image.rgb[v, u]


def export_pointcloud(image: RgbdImage, path) -> int:
    """Write an ASCII PLY of the valid pixels; returns the point count."""
    pts, colours = backproject(image)
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(pts)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    with open(path, "w") as fh:
        fh.write(header)
        for (x, y, z), (r, g, b) in zip(pts, colours):
            fh.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")
    return len(pts)
