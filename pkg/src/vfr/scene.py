"""Datasets, images and analytic ground truth.

The oracle renderer here integrates the continuous emission-absorption
model with the midpoint rule in float64. It shares no code with the
renderer (its own box test, its own transmittance accumulation), so
agreement between the two is evidence rather than tautology.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image

from .errors import DataError
from .sampling import Camera, generate_rays

SYNTHETIC_AABB = ((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5))
TOY_AABB = ((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
WHITE = (1.0, 1.0, 1.0)


# -- PNG -------------------------------------------------------------------

def png_read(path):
    """8-bit RGB/RGBA PNG as float64 in [0, 1], shape (H, W, 3 or 4)."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise DataError(f"{path}: not a PNG file ({im.format})")
            if im.mode not in ("RGB", "RGBA"):
                raise DataError(f"{path}: unsupported PNG mode {im.mode!r}; need 8-bit RGB or RGBA")
            arr = np.asarray(im, dtype=np.uint8)
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return arr.astype(np.float64) / 255.0


def to_uint8(image):
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def png_write(path, image):
    arr = to_uint8(image)
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise DataError(f"{path}: image must be (H, W, 3|4), got {arr.shape}")
    try:
        Image.fromarray(arr, "RGB" if arr.shape[2] == 3 else "RGBA").save(path, format="PNG")
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc


# -- datasets ----------------------------------------------------------------

@dataclass
class Frame:
    pose: np.ndarray
    image: np.ndarray
    file_path: str = ""


@dataclass
class SceneDataset:
    camera_angle_x: float
    frames: list[Frame]
    aabb: np.ndarray = field(default_factory=lambda: np.array(SYNTHETIC_AABB))
    background: np.ndarray = field(default_factory=lambda: np.array(WHITE))

    def __post_init__(self):
        self.aabb = np.asarray(self.aabb, dtype=np.float64)
        self.background = np.asarray(self.background, dtype=np.float64)
        shapes = {f.image.shape for f in self.frames}
        if len(shapes) > 1:
            raise DataError(f"frames have differing image sizes: {sorted(shapes)}")

    @property
    def height(self) -> int:
        return self.frames[0].image.shape[0]

    @property
    def width(self) -> int:
        return self.frames[0].image.shape[1]

    @property
    def focal(self) -> float:
        return 0.5 * self.width / math.tan(0.5 * self.camera_angle_x)

    def camera(self, index: int) -> Camera:
        return Camera(self.frames[index].pose, self.focal, self.width, self.height)

    def all_rays(self):
        """Stacked (origins, dirs, colours) over every pixel of every frame."""
        origins, dirs, colors = [], [], []
        for i, frame in enumerate(self.frames):
            o, d = generate_rays(self.camera(i))
            origins.append(o)
            dirs.append(d)
            colors.append(frame.image[..., :3].reshape(-1, 3))
        return np.concatenate(origins), np.concatenate(dirs), np.concatenate(colors)


def _frame_image_path(root: Path, file_path: str) -> Path:
    p = root / file_path
    return p if p.suffix else p.with_suffix(".png")


def load_nerf_synthetic(path, split="train", background=WHITE) -> SceneDataset:
    """Read ``transforms_<split>.json`` and its images from ``path``.

    RGBA images are composited onto ``background``. A non-standard ``aabb``
    key (2x3) overrides the default scene box.
    """
    root = Path(path)
    meta_path = root / f"transforms_{split}.json"
    if not meta_path.is_file():
        raise DataError(f"{meta_path}: missing transforms file")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: malformed JSON: {exc}") from exc
    try:
        angle = float(meta["camera_angle_x"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{meta_path}: missing or invalid camera_angle_x") from exc
    raw_frames = meta.get("frames")
    if not isinstance(raw_frames, list) or not raw_frames:
        raise DataError(f"{meta_path}: 'frames' must be a non-empty list")
    bg = np.asarray(background, dtype=np.float64)
    frames = []
    size = None
    for i, fr in enumerate(raw_frames):
        label = f"{meta_path}: frame {i} ({fr.get('file_path', '?') if isinstance(fr, dict) else '?'})"
        if not isinstance(fr, dict) or "transform_matrix" not in fr:
            raise DataError(f"{label}: missing transform_matrix")
        if "file_path" not in fr:
            raise DataError(f"{label}: missing file_path")
        pose = np.asarray(fr["transform_matrix"], dtype=np.float64)
        if pose.shape != (4, 4) or not np.isfinite(pose).all():
            raise DataError(f"{label}: transform_matrix must be a finite 4x4 matrix")
        if abs(np.linalg.det(pose)) < 1e-8:
            raise DataError(f"{label}: transform_matrix is not invertible")
        img = png_read(_frame_image_path(root, fr["file_path"]))
        if img.shape[2] == 4:
            alpha = img[..., 3:4]
            img = img[..., :3] * alpha + bg * (1.0 - alpha)
        if size is None:
            size = img.shape
        elif img.shape != size:
            raise DataError(f"{label}: image size {img.shape[:2]} differs from {size[:2]}")
        frames.append(Frame(pose, img, fr["file_path"]))
    aabb = np.asarray(meta.get("aabb", SYNTHETIC_AABB), dtype=np.float64)
    if aabb.shape != (2, 3):
        raise DataError(f"{meta_path}: aabb must be 2x3")
    return SceneDataset(angle, frames, aabb, bg)


def save_nerf_synthetic(path, splits: dict[str, SceneDataset]):
    """Write datasets as ``transforms_<split>.json`` plus ``<split>/r_<i>.png``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for split, ds in splits.items():
        (root / split).mkdir(exist_ok=True)
        frames = []
        for i, frame in enumerate(ds.frames):
            rel = f"./{split}/r_{i}"
            png_write(_frame_image_path(root, rel), frame.image)
            frames.append({"file_path": rel, "transform_matrix": frame.pose.tolist()})
        meta = {"camera_angle_x": ds.camera_angle_x, "aabb": ds.aabb.tolist(), "frames": frames}
        (root / f"transforms_{split}.json").write_text(json.dumps(meta, indent=2))


# -- analytic scenes and the oracle -----------------------------------------

@dataclass
class AnalyticScene:
    density_fn: Callable[[np.ndarray], np.ndarray]
    color_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    aabb: np.ndarray = field(default_factory=lambda: np.array(TOY_AABB))
    background: np.ndarray = field(default_factory=lambda: np.array(WHITE))

    def __post_init__(self):
        self.aabb = np.asarray(self.aabb, dtype=np.float64)
        self.background = np.asarray(self.background, dtype=np.float64)


LIGHT_DIR = np.array([0.4, 0.7, 0.6]) / np.linalg.norm([0.4, 0.7, 0.6])
LOBE_DIR = np.array([-0.3, 0.5, 0.8]) / np.linalg.norm([-0.3, 0.5, 0.8])


def sphere_scene(sigma=40.0, radius=0.3, specular=0.0) -> AnalyticScene:
    """Constant-density ball with smoothly varying shaded albedo.

    ``specular`` scales a view-dependent term ``((1 + d.h) / 2) ** 2``, a
    degree-2 polynomial in the view direction.
    """

    def density(x):
        return np.where(np.sum(x * x, axis=-1) <= radius * radius, sigma, 0.0)

    def color(x, d):
        n = x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-9)
        albedo = np.stack([0.75 + 0.2 * n[..., 0], 0.45 + 0.25 * n[..., 1], 0.3 + 0.2 * n[..., 2]], axis=-1)
        shade = 0.35 + 0.65 * np.maximum(n @ LIGHT_DIR, 0.0)
        c = albedo * shade[..., None]
        if specular:
            c = c + specular * (0.5 * (1.0 + d @ LOBE_DIR))[..., None] ** 2
        return np.clip(c, 0.0, 1.0)

    return AnalyticScene(density, color)


def blob_scene(peak=20.0, width=0.15) -> AnalyticScene:
    """Smooth Gaussian density with smooth colours (no discontinuities)."""

    def density(x):
        return peak * np.exp(-np.sum(x * x, axis=-1) / (2 * width * width))

    def color(x, d):
        base = np.stack([0.5 + 0.4 * np.sin(3 * x[..., 0]), 0.5 + 0.4 * np.cos(2 * x[..., 1]),
                         0.5 + 0.3 * x[..., 2]], axis=-1)
        return np.clip(base + 0.1 * d[..., [2, 0, 1]], 0.0, 1.0)

    return AnalyticScene(density, color)


def _box_interval(origins, dirs, aabb):
    lo, hi = aabb
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        a = (lo - origins) * inv
        b = (hi - origins) * inv
    a = np.nan_to_num(a, nan=-np.inf)
    b = np.nan_to_num(b, nan=np.inf)
    near = np.maximum(np.max(np.minimum(a, b), axis=-1), 0.0)
    far = np.min(np.maximum(a, b), axis=-1)
    return near, np.maximum(far, near)


def oracle_render(scene: AnalyticScene, origins, dirs, n=4096, chunk=None):
    """Midpoint-rule quadrature of the emission-absorption integral (float64).

    Accepts one ray (shape (3,)) or many (shape (R, 3)).
    """
    if n < 2:
        raise ValueError("oracle needs at least 2 quadrature samples")
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    single = origins.ndim == 1
    origins = np.atleast_2d(origins)
    dirs = np.atleast_2d(dirs)
    chunk = chunk or max(1, (1 << 21) // n)
    out = np.empty((origins.shape[0], 3))
    mid = (np.arange(n) + 0.5) / n
    for s in range(0, origins.shape[0], chunk):
        o, d = origins[s:s + chunk], dirs[s:s + chunk]
        near, far = _box_interval(o, d, scene.aabb)
        dt = (far - near) / n
        t = near[:, None] + (far - near)[:, None] * mid[None, :]
        x = o[:, None, :] + t[..., None] * d[:, None, :]
        sigma = scene.density_fn(x)
        dens = sigma * dt[:, None]
        depth = np.cumsum(dens, axis=1) - 0.5 * dens
        emit = np.exp(-depth) * dens
        c = scene.color_fn(x, np.broadcast_to(d[:, None, :], x.shape))
        residual = np.exp(-dens.sum(axis=1))
        out[s:s + chunk] = np.einsum("rn,rnc->rc", emit, c) + residual[:, None] * scene.background
    return out[0] if single else out


# -- toy dataset -------------------------------------------------------------

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def look_at(position, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)):
    """Camera-to-world matrix for a camera at ``position`` looking at ``target``."""
    position = np.asarray(position, dtype=np.float64)
    back = position - np.asarray(target, dtype=np.float64)
    back /= np.linalg.norm(back)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(up, back)) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(up, back)
    right /= np.linalg.norm(right)
    true_up = np.cross(back, right)
    pose = np.eye(4)
    pose[:3, 0], pose[:3, 1], pose[:3, 2], pose[:3, 3] = right, true_up, back, position
    return pose


def fibonacci_poses(views: int, radius: float, seed=0):
    """Cameras on a Fibonacci spiral over the sphere, azimuth offset by ``seed``."""
    offset = np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi)
    poses = []
    for k in range(views):
        z = 1.0 - 2.0 * (k + 0.5) / views
        rho = math.sqrt(max(0.0, 1.0 - z * z))
        phi = k * GOLDEN_ANGLE + offset
        poses.append(look_at(radius * np.array([rho * math.cos(phi), rho * math.sin(phi), z])))
    return poses


def generate_toy_dataset(scene: AnalyticScene, views: int, resolution: int, seed=0, radius=1.3,
                         camera_angle_x=0.8, quadrature=4096) -> SceneDataset:
    """Oracle-rendered views, quantised to 8 bits so they survive PNG round trips."""
    if views < 1:
        raise ValueError("need at least one view")
    frames = []
    for i, pose in enumerate(fibonacci_poses(views, radius, seed)):
        cam = Camera.from_fov(pose, camera_angle_x, resolution, resolution)
        o, d = generate_rays(cam)
        img = oracle_render(scene, o, d, quadrature).reshape(resolution, resolution, 3)
        frames.append(Frame(pose, to_uint8(img).astype(np.float64) / 255.0, f"./r_{i}"))
    return SceneDataset(camera_angle_x, frames, scene.aabb, scene.background)
