"""How ReLU networks create linear separability by folding: training, observables and toy constructions."""

from .data import EggSpec, LabeledDataset, generate_egg, generate_poker, label_hand
from .dip import dip, dip_statistic
from .network import Layer, Network, SilenceMask, TrainSchedule, forward, init_network, load_network, save_network, train
from .pca import dimensionality, pca, streaming_pca

__version__ = "0.1.0"

__all__ = [
    "EggSpec", "LabeledDataset", "generate_egg", "generate_poker", "label_hand",
    "dip", "dip_statistic",
    "Layer", "Network", "SilenceMask", "TrainSchedule", "forward", "init_network", "load_network", "save_network", "train",
    "dimensionality", "pca", "streaming_pca",
]
