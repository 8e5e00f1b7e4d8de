"""Descriptor extraction over pair sets, ROC sweeps, and the headline
metric: false-positive rate (in percent) at a fixed true-match recall.

A pair is predicted "match" iff its descriptor distance is <= the
threshold.  For a target recall the threshold is the smallest positive
distance whose recall reaches the target, i.e. the k-th smallest positive
distance with k the smallest count satisfying k / n_pos >= target;
negatives tied exactly at the threshold count as false positives.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import PatchPair, PatchStore, as_store_list, get_patch, preprocess
from .errors import CheckpointFormatError, DegenerateLabelsError
from .model import NetworkParams, forward

DESCRIPTOR_MAGIC = b"PDSC"
DESCRIPTOR_VERSION = 1


@dataclass
class RocReport:
    """Threshold sweep (ascending) with the fixed-recall operating point."""

    points: list[tuple[float, float, float]]  # (threshold, TPR, FPR)
    n_pos: int
    n_neg: int
    fpr_at_95: float


def _unique_descriptors(params: NetworkParams, stores, pairs) -> dict[tuple[int, int], np.ndarray]:
    """Forward each distinct (store, patch) referenced by the pairs once."""
    store_list = as_store_list(stores)
    table: dict[tuple[int, int], np.ndarray] = {}
    for pair in pairs:
        for key in ((pair.store1, pair.idx1), (pair.store2, pair.idx2)):
            if key not in table:
                desc, _ = forward(params, preprocess(get_patch(store_list, key[0], key[1])))
                table[key] = desc.values.array
    return table


def pair_distances(params: NetworkParams, stores, pairs: list[PatchPair]) -> tuple[np.ndarray, np.ndarray]:
    """Descriptor distances and labels for every pair, in input order."""
    table = _unique_descriptors(params, stores, pairs)
    distances = np.empty(len(pairs), dtype=np.float64)
    labels = np.empty(len(pairs), dtype=np.int64)
    for i, pair in enumerate(pairs):
        f1 = table[(pair.store1, pair.idx1)]
        f2 = table[(pair.store2, pair.idx2)]
        distances[i] = np.linalg.norm(f1 - f2)
        labels[i] = pair.y
    return distances, labels


def _check_labels(labels: np.ndarray) -> tuple[int, int]:
    labels = np.asarray(labels)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = int(np.count_nonzero(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            f"need both labels, got {n_pos} positives and {n_neg} negatives"
        )
    return n_pos, n_neg


def fpr_at_tpr(distances, labels, target_tpr: float = 0.95) -> float:
    """Percent of negatives accepted when the threshold admits the target
    fraction of positives (ties at the threshold count as accepted)."""
    if not 0 < target_tpr <= 1:
        raise ValueError(f"target_tpr must be in (0, 1], got {target_tpr}")
    distances = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos, n_neg = _check_labels(labels)
    positives = np.sort(distances[labels == 1])
    k = next(c for c in range(1, n_pos + 1) if c / n_pos >= target_tpr)
    threshold = positives[k - 1]
    false_positives = int(np.count_nonzero(distances[labels == 0] <= threshold))
    return 100.0 * false_positives / n_neg


def roc(distances, labels) -> RocReport:
    """Sweep every distinct distance as a threshold, ascending."""
    distances = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos, n_neg = _check_labels(labels)
    thresholds = np.unique(distances)
    pos_sorted = np.sort(distances[labels == 1])
    neg_sorted = np.sort(distances[labels == 0])
    points = []
    for t in thresholds:
        tpr = np.searchsorted(pos_sorted, t, side="right") / n_pos
        fpr = np.searchsorted(neg_sorted, t, side="right") / n_neg
        points.append((float(t), float(tpr), float(fpr)))
    return RocReport(points, n_pos, n_neg, fpr_at_tpr(distances, labels, 0.95))


def evaluate(params: NetworkParams, stores, test_pairs: list[PatchPair]) -> tuple[RocReport, str]:
    """ROC report plus a one-line summary (error rate to one decimal)."""
    distances, labels = pair_distances(params, stores, test_pairs)
    report = roc(distances, labels)
    summary = (
        f"pairs: {report.n_pos} matching / {report.n_neg} non-matching; "
        f"error rate at 95% recall: {report.fpr_at_95:.1f}%"
    )
    return report, summary


def write_roc_csv(report: RocReport, path) -> None:
    """CSV with header threshold,tpr,fpr; 6 significant digits; LF endings."""
    lines = ["threshold,tpr,fpr"]
    lines += [f"{t:.6g},{tpr:.6g},{fpr:.6g}" for t, tpr, fpr in report.points]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii"))


def extract_descriptors(params: NetworkParams, store: PatchStore) -> np.ndarray:
    """Embed every patch of a store; rows are descriptors."""
    rows = [forward(params, preprocess(p))[0].values.array for p in store.patches]
    return np.stack(rows).astype(np.float32)


def write_descriptors(descriptors: np.ndarray, path) -> None:
    """Binary layout: magic "PDSC", u32 version, u32 count, u32 dimension,
    then f32 LE rows (so the file is 16 + 4*dim*count bytes)."""
    descriptors = np.ascontiguousarray(descriptors, dtype="<f4")
    n, dim = descriptors.shape
    blob = (
        DESCRIPTOR_MAGIC
        + struct.pack("<III", DESCRIPTOR_VERSION, n, dim)
        + descriptors.tobytes()
    )
    Path(path).write_bytes(blob)


def read_descriptors(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != DESCRIPTOR_MAGIC:
        raise CheckpointFormatError(f"bad descriptor magic {blob[:4]!r} at offset 0")
    if len(blob) < 16:
        raise CheckpointFormatError("truncated descriptor header")
    version, n, dim = struct.unpack("<III", blob[4:16])
    if version != DESCRIPTOR_VERSION:
        raise CheckpointFormatError(f"unsupported descriptor version {version} at offset 4")
    expected = 16 + 4 * n * dim
    if len(blob) != expected:
        raise CheckpointFormatError(
            f"descriptor payload is {len(blob)} bytes, expected {expected}"
        )
    return np.frombuffer(blob, dtype="<f4", offset=16).reshape(n, dim).copy()
