"""Procedural captioned scenes, style textures, and edge maps.

Scenes are 1-3 anti-aliased shapes laid out by pairwise position relations;
their captions come from a closed grammar and round-trip to the exact spec
that rendered them. Style textures come in four families whose per-channel
pixel means are analytically known from the palette. Everything is a pure
function of its seed or spec.

Images are torch float32 tensors of shape (3, S, S) with values in [-1, 1];
files on disk are 8-bit RGB PNGs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

SHAPE_COLORS = {
    "red": (255, 0, 0),
    "green": (0, 200, 0),
    "blue": (0, 0, 255),
    "yellow": (255, 255, 0),
    "cyan": (0, 255, 255),
    "magenta": (255, 0, 255),
    "orange": (255, 140, 0),
    "purple": (150, 0, 200),
}

BG_COLORS = {
    "black": (0, 0, 0),
    "white": (255, 255, 255),
    "gray": (128, 128, 128),
}

STYLE_COLORS = {**SHAPE_COLORS, **BG_COLORS}

SHAPE_KINDS = ("circle", "square", "triangle")
RELATIONS = ("above", "below", "left of", "right of")
STYLE_FAMILIES = ("stripes", "checker", "colored-noise", "gradient-wash")

# offset applied to the *next* shape given "prev REL next", in (dx, dy) pixels
_REL_OFFSET = {
    "above": (0, 1),
    "below": (0, -1),
    "left of": (1, 0),
    "right of": (-1, 0),
}

_REL_SPACING = 19
_SHAPE_HALF = 9
_SUPERSAMPLE = 4


def caption_vocabulary():
    """Ordered closed vocabulary of the caption grammar, <pad> first."""
    words = ["<pad>", "a", "on", "background", "above", "below", "left", "right", "of"]
    words += sorted(SHAPE_COLORS)
    words += list(SHAPE_KINDS)
    words += sorted(BG_COLORS)
    return words

_VOCAB = caption_vocabulary()
_WORD_TO_ID = {w: i for i, w in enumerate(_VOCAB)}

PAD_ID = 0
# longest caption: 3 shapes, 2 two-word relations, background clause
MAX_CAPTION_TOKENS = 17


def tokenize_caption(caption: str) -> list[int]:
    ids = []
    for word in caption.split():
        if word not in _WORD_TO_ID:
            raise ValueError(f"word {word!r} outside the caption vocabulary")
        ids.append(_WORD_TO_ID[word])
    return ids


@dataclass(frozen=True)
class SceneSpec:
    shapes: tuple  # ((color, kind), ...) 1-3 entries
    relations: tuple  # rel between shape k and k+1, len = len(shapes) - 1
    background: str


@dataclass(frozen=True)
class StyleSpec:
    family: str
    palette: tuple  # 2-4 color names
    scale: int
    seed: int


def caption_for(spec: SceneSpec) -> str:
    parts = []
    for i, (color, kind) in enumerate(spec.shapes):
        if i > 0:
            parts.append(spec.relations[i - 1])
        parts.append(f"a {color} {kind}")
    parts.append(f"on a {spec.background} background")
    return " ".join(parts)


def parse_caption(caption: str) -> SceneSpec:
    """Inverse of caption_for. Raises ValueError on anything off-grammar."""
    toks = caption.split()
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(toks) or toks[pos] != word:
            raise ValueError(f"malformed caption at token {pos}: {caption!r}")
        pos += 1

    def take(options):
        nonlocal pos
        if pos >= len(toks) or toks[pos] not in options:
            raise ValueError(f"malformed caption at token {pos}: {caption!r}")
        pos += 1
        return toks[pos - 1]

    shapes = []
    relations = []
    expect("a")
    shapes.append((take(SHAPE_COLORS), take(SHAPE_KINDS)))
    while pos < len(toks) and toks[pos] != "on":
        rel = take(("above", "below", "left", "right"))
        if rel in ("left", "right"):
            expect("of")
            rel = f"{rel} of"
        relations.append(rel)
        expect("a")
        shapes.append((take(SHAPE_COLORS), take(SHAPE_KINDS)))
    expect("on")
    expect("a")
    bg = take(BG_COLORS)
    expect("background")
    if pos != len(toks):
        raise ValueError(f"trailing tokens in caption: {caption!r}")
    if not 1 <= len(shapes) <= 3:
        raise ValueError(f"caption must describe 1-3 shapes: {caption!r}")
    return SceneSpec(shapes=tuple(shapes), relations=tuple(relations), background=bg)


def _layout_positions(spec: SceneSpec, size: int) -> list:
    pos = [(0.0, 0.0)]
    for rel in spec.relations:
        dx, dy = _REL_OFFSET[rel]
        px, py = pos[-1]
        pos.append((px + dx * _REL_SPACING, py + dy * _REL_SPACING))
    cx = sum(p[0] for p in pos) / len(pos)
    cy = sum(p[1] for p in pos) / len(pos)
    half = size / 2.0
    return [(round(px - cx + half), round(py - cy + half)) for px, py in pos]


def _shape_mask(kind: str, cx: float, cy: float, half: float, size: int) -> np.ndarray:
    ss = _SUPERSAMPLE
    n = size * ss
    coords = (np.arange(n) + 0.5) / ss
    x = coords[None, :]
    y = coords[:, None]
    if kind == "circle":
        mask = (x - cx) ** 2 + (y - cy) ** 2 <= half**2
    elif kind == "square":
        mask = (np.abs(x - cx) <= half) & (np.abs(y - cy) <= half)
    elif kind == "triangle":
        rel_y = y - (cy - half)
        mask = (rel_y >= 0) & (rel_y <= 2 * half) & (np.abs(x - cx) <= rel_y / 2.0)
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    # box-average the supersampled mask down to per-pixel coverage
    cov = mask.astype(np.float64).reshape(size, ss, size, ss).mean(axis=(1, 3))
    return cov


def render_scene(spec: SceneSpec, size: int = 64) -> torch.Tensor:
    bg = np.array(BG_COLORS[spec.background], dtype=np.float64)
    img = np.ones((size, size, 3), dtype=np.float64) * bg
    for (color, kind), (cx, cy) in zip(spec.shapes, _layout_positions(spec, size)):
        cov = _shape_mask(kind, cx, cy, _SHAPE_HALF, size)[:, :, None]
        img = img * (1.0 - cov) + np.array(SHAPE_COLORS[color], dtype=np.float64) * cov
    return uint8_to_float(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def random_scene_spec(rng: random.Random) -> SceneSpec:
    while True:
        n = rng.randint(1, 3)
        combos = rng.sample([(c, k) for c in SHAPE_COLORS for k in SHAPE_KINDS], n)
        rels = tuple(rng.choice(RELATIONS) for _ in range(n - 1))
        spec = SceneSpec(shapes=tuple(combos), relations=rels, background=rng.choice(list(BG_COLORS)))
        if len(set(_layout_positions(spec, 64))) == n:
            return spec


def gen_scene(seed: int, size: int = 64):
    """Deterministic (image, caption, spec) for one seed."""
    spec = random_scene_spec(random.Random(seed))
    return render_scene(spec, size=size), caption_for(spec), spec


def _palette_array(names) -> np.ndarray:
    return np.array([STYLE_COLORS[n] for n in names], dtype=np.float64)


def gen_style(spec: StyleSpec, size: int = 64) -> torch.Tensor:
    if spec.family not in STYLE_FAMILIES:
        raise ValueError(f"unknown style family {spec.family!r}")
    if size % spec.scale != 0:
        raise ValueError(f"scale {spec.scale} must divide image size {size}")
    rng = random.Random(spec.seed)
    pal = _palette_array(spec.palette)
    k = len(spec.palette)
    if spec.family == "stripes":
        phase = rng.randrange(spec.scale * k)
        horizontal = rng.random() < 0.5
        coord = np.arange(size)
        idx = ((coord + phase) // spec.scale) % k
        img = pal[idx][None, :, :] if horizontal else pal[idx][:, None, :]
        img = np.broadcast_to(img, (size, size, 3)).copy()
    elif spec.family == "checker":
        px, py = rng.randrange(k), rng.randrange(k)
        ix = np.arange(size) // spec.scale
        iy = np.arange(size) // spec.scale
        idx = ((ix[None, :] + px) + (iy[:, None] + py)) % k
        img = pal[idx]
    elif spec.family == "colored-noise":
        cells = size // spec.scale
        counts = _noise_color_counts(cells * cells, k)
        assign = np.repeat(np.arange(k), counts)
        np.random.Generator(np.random.PCG64(spec.seed)).shuffle(assign)
        idx = assign.reshape(cells, cells)
        idx = np.repeat(np.repeat(idx, spec.scale, axis=0), spec.scale, axis=1)
        img = pal[idx]
    else:  # gradient-wash
        horizontal = rng.random() < 0.5
        flip = rng.random() < 0.5
        t = np.arange(size, dtype=np.float64) / (size - 1)
        if flip:
            t = t[::-1]
        line = pal[0][None, :] * (1.0 - t[:, None]) + pal[1][None, :] * t[:, None]
        img = np.broadcast_to(
            line[None, :, :] if horizontal else line[:, None, :], (size, size, 3)
        ).copy()
    return uint8_to_float(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def _noise_color_counts(n_cells: int, k: int) -> list:
    base = n_cells // k
    rem = n_cells - base * k
    return [base + (1 if i < rem else 0) for i in range(k)]


def analytic_channel_mean(spec: StyleSpec, size: int = 64) -> np.ndarray:
    """Coverage-weighted palette mean of the rendered texture, in [-1, 1]."""
    pal = _palette_array(spec.palette) / 127.5 - 1.0
    k = len(spec.palette)
    if spec.family == "stripes":
        phase = random.Random(spec.seed).randrange(spec.scale * k)
        idx = ((np.arange(size) + phase) // spec.scale) % k
        weights = np.bincount(idx, minlength=k) / size
    elif spec.family == "checker":
        rng = random.Random(spec.seed)
        px, py = rng.randrange(k), rng.randrange(k)
        cells = size // spec.scale
        ix = np.arange(cells)
        idx = ((ix[None, :] + px) + (ix[:, None] + py)) % k
        weights = np.bincount(idx.reshape(-1), minlength=k) / idx.size
    elif spec.family == "colored-noise":
        cells = size // spec.scale
        counts = np.array(_noise_color_counts(cells * cells, k), dtype=np.float64)
        weights = counts / counts.sum()
    elif spec.family == "gradient-wash":
        weights = np.zeros(k)
        weights[0] = weights[1] = 0.5
    else:
        raise ValueError(f"unknown style family {spec.family!r}")
    return weights @ pal


def style_presets():
    """Eight named texture families used by the reference training run."""
    return [
        StyleSpec("stripes", ("red", "yellow"), 8, 0),
        StyleSpec("stripes", ("blue", "white"), 4, 0),
        StyleSpec("checker", ("green", "purple"), 8, 0),
        StyleSpec("checker", ("orange", "black"), 8, 0),
        StyleSpec("colored-noise", ("red", "blue", "yellow"), 8, 0),
        StyleSpec("colored-noise", ("cyan", "magenta"), 4, 0),
        StyleSpec("gradient-wash", ("blue", "orange"), 8, 0),
        StyleSpec("gradient-wash", ("green", "magenta"), 8, 0),
    ]


def edge_map(img: torch.Tensor, threshold: float = 0.25) -> torch.Tensor:
    """Binary gradient-magnitude edges, (1, H, W) in {0, 1}.

    Forward differences keep a two-tone boundary a single line, and any
    constant brightness offset leaves the map unchanged.
    """
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got {tuple(img.shape)}")
    lum = img.mean(dim=0)
    gx = torch.zeros_like(lum)
    gy = torch.zeros_like(lum)
    gx[:, :-1] = lum[:, 1:] - lum[:, :-1]
    gy[:-1, :] = lum[1:, :] - lum[:-1, :]
    mag = torch.sqrt(gx**2 + gy**2)
    return (mag > threshold).to(img.dtype).unsqueeze(0)


def uint8_to_float(arr: np.ndarray) -> torch.Tensor:
    """HWC uint8 -> (3, H, W) float32 in [-1, 1]."""
    t = torch.from_numpy(arr.astype(np.float32) / 127.5 - 1.0)
    return t.permute(2, 0, 1).contiguous()


def float_to_uint8(img: torch.Tensor) -> np.ndarray:
    """(3, H, W) float in [-1, 1] -> HWC uint8."""
    arr = ((img.detach().clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    return arr.permute(1, 2, 0).numpy()


def save_png(img: torch.Tensor, path):
    Image.fromarray(float_to_uint8(img), mode="RGB").save(path)


def load_png(path) -> torch.Tensor:
    arr = np.asarray(Image.open(path).convert("RGB"))
    return uint8_to_float(arr)


def write_scene_dataset(out_dir, n: int, seed: int, size: int = 64) -> Path:
    """Render n captioned scenes and a JSONL manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "scenes"
    img_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "scenes.jsonl"
    with open(manifest, "w") as fh:
        for i in range(n):
            img, caption, _spec = gen_scene(seed + i, size=size)
            rel = f"scenes/scene_{i:05d}.png"
            save_png(img, out_dir / rel)
            fh.write(json.dumps({"id": i, "seed": seed + i, "caption": caption, "path": rel}) + "\n")
    return manifest


def write_style_dataset(out_dir, per_family: int, seed: int, size: int = 64) -> Path:
    """Render per_family seeds of each preset family; returns the manifest path."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "styles"
    img_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "styles.jsonl"
    presets = style_presets()
    with open(manifest, "w") as fh:
        i = 0
        for fam_idx, preset in enumerate(presets):
            for j in range(per_family):
                spec = StyleSpec(preset.family, preset.palette, preset.scale, seed + fam_idx * 1000 + j)
                img = gen_style(spec, size=size)
                rel = f"styles/style_{i:05d}.png"
                save_png(img, out_dir / rel)
                fh.write(
                    json.dumps(
                        {
                            "id": i,
                            "seed": spec.seed,
                            "family": spec.family,
                            "family_index": fam_idx,
                            "palette": list(spec.palette),
                            "scale": spec.scale,
                            "path": rel,
                        }
                    )
                    + "\n"
                )
                i += 1
    return manifest


def read_manifest(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_scene_dataset(data_dir):
    """Returns (images (N,3,H,W), captions list) in manifest id order."""
    data_dir = Path(data_dir)
    records = read_manifest(data_dir / "scenes.jsonl")
    if not records:
        raise ValueError(f"empty scene manifest under {data_dir}")
    records.sort(key=lambda r: r["id"])
    images = torch.stack([load_png(data_dir / r["path"]) for r in records])
    return images, [r["caption"] for r in records]


def load_style_dataset(data_dir):
    """Returns (images (N,3,H,W), manifest records) in manifest id order."""
    data_dir = Path(data_dir)
    records = read_manifest(data_dir / "styles.jsonl")
    if not records:
        raise ValueError(f"empty style manifest under {data_dir}")
    records.sort(key=lambda r: r["id"])
    images = torch.stack([load_png(data_dir / r["path"]) for r in records])
    return images, records
