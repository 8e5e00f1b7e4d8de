"""patchdesc: compact local image descriptors from a small convnet.

A six-stage convolutional network embeds 64x64 grayscale patches into a
32-dimensional space where corresponding patches land close together,
trained with a pull/push pairwise loss over labeled patch pairs and
evaluated by the error rate at 95% true-match recall.
"""

from .config import active_precision, precision, set_precision
from .kernels import BACKEND
from .layers import ConvParams, FcParams
from .loss import LabeledPair, LossConfig
from .model import Architecture, Descriptor, NetworkParams, STANDARD, init_params, shape_plan
from .train import TrainConfig, TrainHistory, load_checkpoint, save_checkpoint, train
from .data import PatchPair, PatchStore, SynthConfig, ingest_scene, sample_pairs, synth_scene
from .evaluate import RocReport, evaluate, fpr_at_tpr, pair_distances, roc
from .harness import ProtocolResult, run_protocol

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "BACKEND",
    "ConvParams",
    "Descriptor",
    "FcParams",
    "LabeledPair",
    "LossConfig",
    "NetworkParams",
    "PatchPair",
    "PatchStore",
    "ProtocolResult",
    "RocReport",
    "STANDARD",
    "SynthConfig",
    "TrainConfig",
    "TrainHistory",
    "active_precision",
    "evaluate",
    "fpr_at_tpr",
    "ingest_scene",
    "init_params",
    "load_checkpoint",
    "pair_distances",
    "precision",
    "roc",
    "run_protocol",
    "sample_pairs",
    "save_checkpoint",
    "set_precision",
    "shape_plan",
    "synth_scene",
    "train",
]
