"""Train-on-one-scene, evaluate-on-the-others protocol.

One shared training configuration (including the loss margins) is used
unchanged for every scene, and each trained model is scored on the other
scenes' held-out pairs.  The result is the familiar cross-scene grid:
rows are training scenes, columns test scenes, diagonal untested.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import PatchStore, sample_pairs
from .evaluate import fpr_at_tpr, pair_distances
from .train import TrainConfig, train


@dataclass
class ProtocolResult:
    scene_tags: list[str]
    # error_rates[(train_tag, test_tag)] -> percent, off-diagonal only
    error_rates: dict[tuple[str, str], float]
    cfg: TrainConfig

    def format_table(self) -> str:
        """Text grid shaped like the usual cross-scene error-rate tables."""
        tags = self.scene_tags
        width = max(10, max(len(t) for t in tags) + 2)
        header = "train\\test".ljust(width) + "".join(t.rjust(width) for t in tags)
        lines = [header]
        for tr in tags:
            cells = []
            for te in tags:
                if tr == te:
                    cells.append("--".rjust(width))
                else:
                    cells.append(f"{self.error_rates[(tr, te)]:.1f}".rjust(width))
            lines.append(tr.ljust(width) + "".join(cells))
        return "\n".join(lines)


def run_protocol(
    scenes: list[PatchStore],
    cfg: TrainConfig,
    n_train_pairs: tuple[int, int],
    n_test_pairs: tuple[int, int],
    pair_seed: int = 0,
    log=None,
) -> ProtocolResult:
    """Run the full grid: train one model per scene, test on every other.

    Pair sampling is deterministic per scene index; the per-run variation
    knob is the training seed in `cfg` (pair sets stay fixed).
    """
    if len(scenes) < 2:
        raise ValueError("protocol needs at least two scenes")
    tags = [s.scene_tag for s in scenes]
    if len(set(tags)) != len(tags):
        raise ValueError(f"scene tags must be distinct, got {tags}")
    test_sets = [
        sample_pairs(scene, *n_test_pairs, seed=pair_seed + 1000 + i)
        for i, scene in enumerate(scenes)
    ]
    error_rates: dict[tuple[str, str], float] = {}
    for i, scene in enumerate(scenes):
        train_pairs = sample_pairs(scene, *n_train_pairs, seed=pair_seed + i)
        if log:
            log(f"training on {tags[i]} ({len(train_pairs)} pairs)")
        params, _ = train(scene, train_pairs, cfg)
        for j, other in enumerate(scenes):
            if i == j:
                continue
            distances, labels = pair_distances(params, other, test_sets[j])
            error_rates[(tags[i], tags[j])] = fpr_at_tpr(distances, labels, 0.95)
            if log:
                log(f"  {tags[i]} -> {tags[j]}: {error_rates[(tags[i], tags[j])]:.1f}%")
    return ProtocolResult(tags, error_rates, cfg)
