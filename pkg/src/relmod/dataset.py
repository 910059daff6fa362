"""Seeded synthetic two-domain identity dataset, its on-disk format and the
gallery/probe split.

Each identity is a constellation of Gaussian bumps (its "geometry") placed
at a subset of shared template sites with small identity-specific offsets,
plus a grating texture. Captures add pose, scale, illumination and sensor
nuisances. VIS renders show geometry and texture as-is. NIR renders pass the
geometry through a gamma tone curve drawn near 0.5 and carry the texture
with contrast ``1 - 2 * domain_gap_strength``, so geometry is shared
across domains while texture statistics are not.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .sampler import NIR, VIS

SPLITS = ("train", "gallery", "probe")
MANIFEST = "manifest.json"
BLOB = "images.f32"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    pass


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    num_identities: int = 40
    samples_per_identity_per_domain: int = 20
    image_size: int = 32
    seed: int = 7
    domain_gap_strength: float = 0.5

    def __post_init__(self):
        if self.num_identities < 2:
            raise ValueError("num_identities must be >= 2")
        if self.samples_per_identity_per_domain < 2:
            raise ValueError("samples_per_identity_per_domain must be >= 2")
        if self.image_size < 4:
            raise ValueError("image_size must be >= 4")
        if not 0.0 <= self.domain_gap_strength <= 1.0:
            raise ValueError("domain_gap_strength must be in [0, 1]")


@dataclass
class Sample:
    image: np.ndarray  # [S, S, 1], values in [0, 1]
    identity: int
    domain: str
    split: Optional[str] = None

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (self.identity == other.identity and self.domain == other.domain
                and self.split == other.split and self.image.shape == other.image.shape
                and np.array_equal(self.image, other.image))


# --- generation --------------------------------------------------------------------

@dataclass(frozen=True)
class _Identity:
    centers: np.ndarray  # [n, 2] in units of image size, (row, col)
    sigmas: np.ndarray  # [n] in units of image size
    amps: np.ndarray  # [n]
    freqs: np.ndarray  # [g, 2] grating wave vectors, cycles per image
    phases: np.ndarray  # [g]


# capture nuisances: rotation (radians), zoom and shift (fractions of the
# image), illumination ramp peak slope; texture amplitude and its spatial
# frequency band in cycles per image
JITTER = {"rotate": 0.1, "zoom": 0.05, "shift": 0.05, "ramp": 0.3,
          "tex_amp": 0.3, "freq_lo": 5.0, "freq_hi": 9.0}

# canonical part sites shared by all identities, (row, col)
SITES = np.array([[0.3, 0.3], [0.3, 0.7], [0.5, 0.5], [0.72, 0.5],
                  [0.55, 0.22], [0.55, 0.78], [0.15, 0.5], [0.87, 0.5]])
SITE_OFFSET = 0.07
# per-identity bump width (fraction of the image) and peak amplitude ranges
PART = {"sigma": (0.05, 0.08), "amp": (0.7, 1.0)}


def _centers(rng: np.random.Generator, n: int) -> np.ndarray:
    site = np.sort(rng.choice(len(SITES), size=n, replace=False))
    return SITES[site] + rng.uniform(-SITE_OFFSET, SITE_OFFSET, size=(n, 2))


def _draw_identity(rng: np.random.Generator) -> _Identity:
    n = int(rng.integers(4, 9))
    g = 3
    angle = rng.uniform(0, np.pi, g)
    radius = rng.uniform(JITTER["freq_lo"], JITTER["freq_hi"], g)
    return _Identity(
        centers=_centers(rng, n),
        sigmas=rng.uniform(*PART["sigma"], size=n),
        amps=rng.uniform(*PART["amp"], size=n),
        freqs=np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1),
        phases=rng.uniform(0, 2 * np.pi, g),
    )


def _render_pair(ident: _Identity, rng: np.random.Generator, size: int):
    """Jittered geometry, texture and illumination fields for one capture."""
    theta = rng.uniform(-JITTER["rotate"], JITTER["rotate"])
    zoom = 1.0 + rng.uniform(-JITTER["zoom"], JITTER["zoom"])
    shift = rng.uniform(-JITTER["shift"], JITTER["shift"], size=2)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    centers = (ident.centers - 0.5) @ rot.T * zoom + 0.5 + shift
    amps = ident.amps * rng.uniform(0.9, 1.1, size=ident.amps.shape)

    grid = (np.arange(size) + 0.5) / size
    rr, cc = np.meshgrid(grid, grid, indexing="ij")
    geom = np.zeros((size, size))
    for (cy, cx), s, a in zip(centers, ident.sigmas * zoom, amps):
        geom += a * np.exp(-((rr - cy) ** 2 + (cc - cx) ** 2) / (2 * s * s))
    geom = np.clip(geom, 0.0, 1.0)

    # texture moves with the face but keeps its own phase jitter
    local = np.stack([rr - 0.5 - shift[0], cc - 0.5 - shift[1]], axis=-1) @ rot / zoom
    tex = np.zeros((size, size))
    for (fy, fx), ph in zip(ident.freqs, ident.phases + rng.uniform(-0.3, 0.3, len(ident.phases))):
        tex += np.cos(2 * np.pi * (fy * local[..., 0] + fx * local[..., 1]) + ph)
    tex *= JITTER["tex_amp"] / len(ident.freqs)

    phi = rng.uniform(0, 2 * np.pi)
    ramp = rng.uniform(0, JITTER["ramp"]) * ((rr - 0.5) * np.cos(phi) + (cc - 0.5) * np.sin(phi))
    return geom, tex, ramp


def render(fields, domain: str, gap: float, gamma: float = 0.5) -> np.ndarray:
    """Noise-free image for one capture. NIR tone-maps the geometry with
    ``gamma`` and scales the texture by ``1 - 2 * gap`` (inverted past 0.5)."""
    geom, tex, ramp = fields
    if domain == VIS:
        return 0.1 + 0.6 * geom + tex + ramp
    return 0.1 + 0.6 * geom ** gamma + (1.0 - 2.0 * gap) * tex + ramp


def _finish(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    gain = rng.uniform(0.9, 1.1)
    bias = rng.uniform(-0.05, 0.05)
    img = img * gain + bias + rng.normal(0.0, 0.03, img.shape)
    img = np.clip(img, 0.0, 1.0)
    # float32-representable so the on-disk format round-trips exactly
    return img.astype(np.float32).astype(np.float64)[..., None]


def generate(cfg: GenConfig) -> list[Sample]:
    """Samples ordered by identity, then domain (NIR, VIS), then index.

    Each identity draws from its own stream seeded by ``(seed, identity)``.
    """
    out = []
    size, gap = cfg.image_size, cfg.domain_gap_strength
    for ident_idx in range(cfg.num_identities):
        rng = np.random.default_rng([cfg.seed, ident_idx])
        ident = _draw_identity(rng)
        for domain in (NIR, VIS):
            for _ in range(cfg.samples_per_identity_per_domain):
                fields = _render_pair(ident, rng, size)
                gamma = rng.uniform(0.4, 0.6) if domain == NIR else 1.0
                img = render(fields, domain, gap, gamma)
                out.append(Sample(_finish(img, rng), ident_idx, domain))
    return out


# --- protocol -------------------------------------------------------------------------

def split_protocol(samples: list[Sample], seed) -> dict[str, list[Sample]]:
    """Disjoint train/test identities; each test identity gets one VIS gallery
    image and all its NIR images as probes. Other test VIS images are dropped."""
    ids = sorted({s.identity for s in samples})
    if len(ids) < 4:
        raise ProtocolError(f"need at least 4 identities, got {len(ids)}")
    rng = np.random.default_rng(seed)
    perm = [ids[i] for i in rng.permutation(len(ids))]
    n_train = (len(ids) + 1) // 2
    train_ids = set(perm[:n_train])
    test_ids = sorted(perm[n_train:])

    by_id: dict[int, list[Sample]] = {}
    for s in samples:
        by_id.setdefault(s.identity, []).append(s)

    train = [replace(s, split="train") for s in samples if s.identity in train_ids]
    gallery, probe = [], []
    for ident in test_ids:
        vis = [s for s in by_id[ident] if s.domain == VIS]
        nir = [s for s in by_id[ident] if s.domain == NIR]
        if not vis or not nir:
            raise ProtocolError(f"test identity {ident} lacks a VIS or NIR sample")
        pick = vis[int(rng.permutation(len(vis))[0])]
        gallery.append(replace(pick, split="gallery"))
        probe.extend(replace(s, split="probe") for s in nir)
    return {"train": train, "gallery": gallery, "probe": probe}


def flatten_splits(splits: dict[str, list[Sample]]) -> list[Sample]:
    return [s for name in SPLITS for s in splits.get(name, [])]


def group_splits(samples: list[Sample]) -> dict[str, list[Sample]]:
    groups = {name: [] for name in SPLITS}
    for s in samples:
        groups[s.split].append(s)
    return groups


# --- storage ---------------------------------------------------------------------------

def save_dataset(samples: list[Sample], path) -> None:
    """Write ``manifest.json`` and ``images.f32`` (float32 little-endian) into ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    size = int(samples[0].image.shape[0]) if samples else 0
    entries, chunks, offset = [], [], 0
    for s in samples:
        if s.image.shape != (size, size, 1):
            raise DatasetFormatError(f"image shape {s.image.shape} differs from ({size}, {size}, 1)")
        if s.split not in SPLITS:
            raise DatasetFormatError(f"sample split {s.split!r} is not one of {SPLITS}")
        if s.domain not in (NIR, VIS):
            raise DatasetFormatError(f"sample domain {s.domain!r} is not NIR or VIS")
        buf = np.ascontiguousarray(s.image, dtype="<f4").tobytes()
        entries.append({"identity": int(s.identity), "domain": s.domain,
                        "split": s.split, "offset": offset})
        chunks.append(buf)
        offset += len(buf)
    manifest = {"version": FORMAT_VERSION, "image_size": size, "entries": entries}
    (root / BLOB).write_bytes(b"".join(chunks))
    (root / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")


def load_dataset(path) -> list[Sample]:
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST).read_text())
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"corrupt manifest: {exc}") from None
    if not isinstance(manifest, dict) or set(manifest) != {"version", "image_size", "entries"}:
        raise DatasetFormatError("manifest must have exactly the keys version, image_size, entries")
    if manifest["version"] != FORMAT_VERSION:
        raise DatasetFormatError(f"manifest version {manifest['version']!r} != {FORMAT_VERSION}")
    size = manifest["image_size"]
    blob = (root / BLOB).read_bytes()
    rec = 4 * size * size
    expected = rec * len(manifest["entries"])
    if len(blob) != expected:
        raise DatasetFormatError(f"truncated or oversized blob: expected {expected} bytes, "
                                 f"got {len(blob)}")
    out = []
    for k, e in enumerate(manifest["entries"]):
        if set(e) != {"identity", "domain", "split", "offset"}:
            raise DatasetFormatError(f"entry {k} has keys {sorted(e)}")
        if e["domain"] not in (NIR, VIS) or e["split"] not in SPLITS:
            raise DatasetFormatError(f"entry {k}: bad domain/split {e['domain']!r}/{e['split']!r}")
        off = e["offset"]
        if not isinstance(off, int) or off < 0 or off + rec > len(blob):
            raise DatasetFormatError(f"entry {k}: offset {off!r} outside blob of {len(blob)} bytes")
        img = np.frombuffer(blob, dtype="<f4", count=size * size, offset=off)
        out.append(Sample(img.astype(np.float64).reshape(size, size, 1),
                          int(e["identity"]), e["domain"], e["split"]))
    return out


def images_of(samples: list[Sample]) -> np.ndarray:
    return np.stack([s.image for s in samples]) if samples else np.zeros((0, 0, 0, 1))
