"""Patch stores: dataset ingestion, pair building, preprocessing, synthesis.

A scene directory holds 1024x1024 8-bit mosaic images named
``patches0000.bmp`` (or ``.pgm``), each a 16x16 row-major grid of 64x64
patches, plus an ``info.txt`` whose line i starts with the integer id of
the 3D point patch i observes.  Global patch index i lives in mosaic
``i // 256`` at cell ``i % 256`` (row ``cell // 16``, column ``cell % 16``).
Optional match files list precomputed pairs, seven integers per line.

Synthetic scenes substitute for the real multi-hundred-thousand-patch
datasets at desk scale: each point gets a random band-limited texture and
its patches are jittered crops with additive pixel noise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from . import config
from .errors import (
    ConsistencyError,
    DatasetStructureError,
    MatchFileParseError,
    MosaicFormatError,
    SamplingInfeasibleError,
)
from .tensor import Tensor

PATCH_SIZE = 64
MOSAIC_SIZE = 1024
GRID = MOSAIC_SIZE // PATCH_SIZE  # 16 patches per mosaic row
PATCHES_PER_MOSAIC = GRID * GRID

_MOSAIC_NAME = re.compile(r"patches(\d{4})\.(bmp|pgm)$")


@dataclass
class PatchStore:
    """Immutable collection of 64x64 8-bit patches with per-patch point ids."""

    patches: np.ndarray  # (N, 64, 64) uint8
    point_ids: np.ndarray  # (N,) int64
    scene_tag: str

    def __post_init__(self):
        self.patches = np.ascontiguousarray(self.patches, dtype=np.uint8)
        self.point_ids = np.ascontiguousarray(self.point_ids, dtype=np.int64)
        if self.patches.ndim != 3 or self.patches.shape[1:] != (PATCH_SIZE, PATCH_SIZE):
            raise ConsistencyError(f"patches must be (N, 64, 64), got {self.patches.shape}")
        if len(self.point_ids) != len(self.patches):
            raise ConsistencyError(
                f"{len(self.patches)} patches but {len(self.point_ids)} point ids"
            )
        self.patches.flags.writeable = False
        self.point_ids.flags.writeable = False

    def __len__(self) -> int:
        return len(self.patches)

    @property
    def n_points(self) -> int:
        return len(np.unique(self.point_ids))


@dataclass(frozen=True)
class PatchPair:
    """Two patch indices and a similarity label (1 iff same 3D point).

    store1/store2 index into a store list for combined-scene training and
    are both 0 in the single-store case.
    """

    idx1: int
    idx2: int
    y: int
    store1: int = 0
    store2: int = 0


@dataclass(frozen=True)
class SynthConfig:
    """Sizing and noise knobs of the synthetic scene generator."""

    n_points: int
    patches_per_point: int
    noise_std: float
    jitter_px: int
    seed: int

    def __post_init__(self):
        if self.n_points < 1 or self.patches_per_point < 1:
            raise ValueError("n_points and patches_per_point must be >= 1")
        if self.noise_std < 0 or self.jitter_px < 0:
            raise ValueError("noise_std and jitter_px must be nonnegative")


def as_store_list(stores) -> list[PatchStore]:
    """Accept a single store (anything with .patches) or a sequence of stores."""
    if hasattr(stores, "patches"):
        return [stores]
    return list(stores)


def get_patch(stores, pair_store: int, idx: int) -> np.ndarray:
    store = as_store_list(stores)[pair_store]
    return store.patches[idx]


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def _decode_mosaic(path: Path) -> np.ndarray:
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise MosaicFormatError(f"{path.name}: cannot decode image ({exc})") from exc
    if img.mode == "P":
        img = img.convert("L")
    if img.mode != "L":
        raise MosaicFormatError(f"{path.name}: expected 8-bit grayscale, got mode {img.mode}")
    if img.size != (MOSAIC_SIZE, MOSAIC_SIZE):
        raise MosaicFormatError(
            f"{path.name}: mosaic must be {MOSAIC_SIZE}x{MOSAIC_SIZE}, got {img.size[0]}x{img.size[1]}"
        )
    return np.asarray(img, dtype=np.uint8)


def _mosaic_cells(mosaic: np.ndarray) -> np.ndarray:
    """(256, 64, 64) view of a mosaic's patches in row-major grid order."""
    return (
        mosaic.reshape(GRID, PATCH_SIZE, GRID, PATCH_SIZE)
        .transpose(0, 2, 1, 3)
        .reshape(PATCHES_PER_MOSAIC, PATCH_SIZE, PATCH_SIZE)
    )


def ingest_scene(root) -> PatchStore:
    """Load a scene directory into a PatchStore.

    Trailing unused mosaic cells (beyond the info.txt line count) are
    discarded; info lines beyond the available cells are an error.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetStructureError(f"{root} is not a dataset directory")
    info_path = root / "info.txt"
    if not info_path.is_file():
        raise DatasetStructureError(f"{root} has no info.txt")

    point_ids = []
    for lineno, line in enumerate(info_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        token = line.split()[0]
        try:
            point_ids.append(int(token))
        except ValueError:
            raise MatchFileParseError(
                f"info.txt line {lineno}: first token {token!r} is not an integer"
            ) from None
    n = len(point_ids)

    mosaics: dict[int, Path] = {}
    for path in root.iterdir():
        m = _MOSAIC_NAME.match(path.name)
        if m:
            mosaics.setdefault(int(m.group(1)), path)
    n_files = -(-n // PATCHES_PER_MOSAIC)  # ceil
    patches = np.empty((n, PATCH_SIZE, PATCH_SIZE), dtype=np.uint8)
    for f in range(n_files):
        if f not in mosaics:
            raise ConsistencyError(
                f"info.txt lists {n} patches but mosaic patches{f:04d} is missing"
            )
        cells = _mosaic_cells(_decode_mosaic(mosaics[f]))
        lo = f * PATCHES_PER_MOSAIC
        take = min(PATCHES_PER_MOSAIC, n - lo)
        patches[lo : lo + take] = cells[:take]
    return PatchStore(patches, np.asarray(point_ids, dtype=np.int64), scene_tag=root.name)


def export_store(store: PatchStore, root) -> None:
    """Write a store back out as PGM mosaics + info.txt (same grid layout)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    n = len(store)
    n_files = -(-n // PATCHES_PER_MOSAIC)
    for f in range(n_files):
        cells = np.zeros((PATCHES_PER_MOSAIC, PATCH_SIZE, PATCH_SIZE), dtype=np.uint8)
        lo = f * PATCHES_PER_MOSAIC
        take = min(PATCHES_PER_MOSAIC, n - lo)
        cells[:take] = store.patches[lo : lo + take]
        mosaic = (
            cells.reshape(GRID, GRID, PATCH_SIZE, PATCH_SIZE)
            .transpose(0, 2, 1, 3)
            .reshape(MOSAIC_SIZE, MOSAIC_SIZE)
        )
        Image.fromarray(mosaic, mode="L").save(root / f"patches{f:04d}.pgm")
    lines = [f"{pid} 0" for pid in store.point_ids]
    (root / "info.txt").write_text("\n".join(lines) + "\n")


def save_packed_store(store: PatchStore, path) -> None:
    """Single-file cache of a store (used by the CLI ingest --out)."""
    np.savez_compressed(
        path, patches=store.patches, point_ids=store.point_ids, scene_tag=store.scene_tag
    )


def load_packed_store(path) -> PatchStore:
    with np.load(path) as z:
        return PatchStore(z["patches"], z["point_ids"], scene_tag=str(z["scene_tag"]))


# ---------------------------------------------------------------------------
# Pairs
# ---------------------------------------------------------------------------


def load_match_file(path, store: PatchStore) -> list[PatchPair]:
    """Parse a precomputed pair file against a store.

    Each nonempty line: patchID1 pointID1 _ patchID2 pointID2 _ [ignored...]
    The label is 1 iff the two point ids are equal; declared ids must agree
    with the store.
    """
    path = Path(path)
    pairs = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) < 6:
            raise MatchFileParseError(
                f"{path.name} line {lineno}: expected >= 6 fields, got {len(tokens)}"
            )
        try:
            values = [int(t) for t in tokens[:6]]
        except ValueError:
            raise MatchFileParseError(f"{path.name} line {lineno}: non-integer field") from None
        p1, pid1, _, p2, pid2, _ = values
        for p, pid in ((p1, pid1), (p2, pid2)):
            if not 0 <= p < len(store):
                raise ConsistencyError(
                    f"{path.name} line {lineno}: patch id {p} out of range (store has {len(store)})"
                )
            if store.point_ids[p] != pid:
                raise ConsistencyError(
                    f"{path.name} line {lineno}: patch {p} declared point {pid} "
                    f"but store says {store.point_ids[p]}"
                )
        pairs.append(PatchPair(p1, p2, y=int(pid1 == pid2)))
    return pairs


def _split_counts(total: int, n_stores: int) -> list[int]:
    base, extra = divmod(total, n_stores)
    return [base + (1 if i < extra else 0) for i in range(n_stores)]


def _similar_available(store: PatchStore) -> tuple[int, list[np.ndarray]]:
    groups = [np.flatnonzero(store.point_ids == pid) for pid in np.unique(store.point_ids)]
    avail = sum(len(g) * (len(g) - 1) // 2 for g in groups)
    return avail, groups


def sample_pairs(stores, n_similar: int, n_dissimilar: int, seed: int) -> list[PatchPair]:
    """Uniform duplicate-free pair sampling, deterministic per seed.

    With several stores the requested counts are split as evenly as
    possible across stores and sampled within each store, so no pair ever
    crosses scenes (in particular no cross-scene positives).
    """
    store_list = as_store_list(stores)
    rng = np.random.default_rng(seed)
    sim_quota = _split_counts(n_similar, len(store_list))
    dis_quota = _split_counts(n_dissimilar, len(store_list))
    pairs: list[PatchPair] = []
    for s, store in enumerate(store_list):
        pairs += _sample_store_pairs(store, s, sim_quota[s], dis_quota[s], rng)
    return pairs


def _sample_store_pairs(
    store: PatchStore, s: int, n_similar: int, n_dissimilar: int, rng: np.random.Generator
) -> list[PatchPair]:
    n = len(store)
    sim_avail, groups = _similar_available(store)
    dis_avail = n * (n - 1) // 2 - sim_avail
    if n_similar > sim_avail:
        raise SamplingInfeasibleError(
            f"store {store.scene_tag!r}: {n_similar} similar pairs requested, only {sim_avail} exist"
        )
    if n_dissimilar > dis_avail:
        raise SamplingInfeasibleError(
            f"store {store.scene_tag!r}: {n_dissimilar} dissimilar pairs requested, "
            f"only {dis_avail} exist"
        )

    used: set[tuple[int, int]] = set()
    pairs: list[PatchPair] = []

    weights = np.array([len(g) * (len(g) - 1) // 2 for g in groups], dtype=np.float64)
    probs = weights / weights.sum() if n_similar > 0 else None
    while len(pairs) < n_similar:
        g = groups[rng.choice(len(groups), p=probs)]
        i, j = rng.choice(len(g), size=2, replace=False)
        a, b = int(g[i]), int(g[j])
        key = (min(a, b), max(a, b))
        if key in used:
            continue
        used.add(key)
        pairs.append(PatchPair(key[0], key[1], y=1, store1=s, store2=s))

    n_sim_done = len(pairs)
    while len(pairs) - n_sim_done < n_dissimilar:
        a, b = int(rng.integers(n)), int(rng.integers(n))
        if a == b or store.point_ids[a] == store.point_ids[b]:
            continue
        key = (min(a, b), max(a, b))
        if key in used:
            continue
        used.add(key)
        pairs.append(PatchPair(key[0], key[1], y=0, store1=s, store2=s))
    return pairs


# ---------------------------------------------------------------------------
# Preprocessing and synthesis
# ---------------------------------------------------------------------------


def preprocess(patch: np.ndarray) -> Tensor:
    """8-bit patch -> standardized (1, H, W) tensor (zero mean, unit std).

    Statistics are computed in float64 for reproducibility across
    precision modes; a constant patch maps to all zeros.
    """
    values = np.asarray(patch, dtype=np.float64)
    if values.ndim != 2:
        raise ConsistencyError(f"patch must be 2-D, got shape {values.shape}")
    std = values.std()
    normalized = (values - values.mean()) / (std + 1e-8)
    return Tensor._wrap(normalized[None, :, :].astype(config.dtype()))


def _base_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random band-limited texture: a sum of oriented cosine waves.

    Wavelengths span 3-10 px so that the few-pixel crop jitter used in
    tests decorrelates raw pixels substantially; contrast is normalized to
    a fixed mean/std and the result stays within 8-bit range.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    canvas = np.zeros((size, size))
    for _ in range(8):
        angle = rng.uniform(0, 2 * np.pi)
        wavelength = rng.uniform(3.0, 10.0)
        phase = rng.uniform(0, 2 * np.pi)
        amplitude = rng.uniform(0.5, 1.0)
        k = 2 * np.pi / wavelength
        canvas += amplitude * np.cos(k * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
    canvas = (canvas - canvas.mean()) / canvas.std()
    return np.clip(128.0 + 40.0 * canvas, 0.0, 255.0)


def synth_scene(cfg: SynthConfig) -> PatchStore:
    """Generate a synthetic scene: one texture per point, jittered noisy crops."""
    rng = np.random.default_rng(cfg.seed)
    canvas_size = PATCH_SIZE + 2 * cfg.jitter_px
    patches = np.empty((cfg.n_points * cfg.patches_per_point, PATCH_SIZE, PATCH_SIZE), np.uint8)
    point_ids = np.repeat(np.arange(cfg.n_points, dtype=np.int64), cfg.patches_per_point)
    i = 0
    for _ in range(cfg.n_points):
        canvas = _base_texture(rng, canvas_size)
        for _ in range(cfg.patches_per_point):
            dy, dx = rng.integers(0, 2 * cfg.jitter_px + 1, size=2)
            crop = canvas[dy : dy + PATCH_SIZE, dx : dx + PATCH_SIZE]
            if cfg.noise_std > 0:
                crop = crop + rng.normal(0.0, cfg.noise_std, crop.shape)
            patches[i] = np.clip(np.rint(crop), 0, 255).astype(np.uint8)
            i += 1
    return PatchStore(patches, point_ids, scene_tag=f"synth{cfg.seed}")
