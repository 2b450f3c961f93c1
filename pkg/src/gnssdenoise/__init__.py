"""Graph-recurrent attentive denoising of multi-station GNSS series.

The package covers the full workflow: elastic-dislocation surface
displacement (:mod:`~gnssdenoise.okada`), noise-model fitting and
surrogate synthesis (:mod:`~gnssdenoise.noise`), window dataset
generation (:mod:`~gnssdenoise.synthetic`), the denoising network and
its tape-based autodiff substrate (:mod:`~gnssdenoise.network`,
:mod:`~gnssdenoise.autodiff`), training (:mod:`~gnssdenoise.training`),
evaluation against classical filters (:mod:`~gnssdenoise.metrics`), the
continuous-series inference pipeline (:mod:`~gnssdenoise.pipeline`),
and a scikit-learn estimator facade (:mod:`~gnssdenoise.estimator`).
"""

from .estimator import GraphDenoiser, MovingFilter
from .network import ModelConfig, load_checkpoint, save_checkpoint
from .noise import SpatialNoiseModel
from .okada import DislocationSource, Station, StationNetwork
from .synthetic import (Dataset, generate_dataset, make_demo_network,
                        read_dataset, write_dataset)
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DislocationSource", "GraphDenoiser", "ModelConfig",
    "MovingFilter", "SpatialNoiseModel", "Station", "StationNetwork",
    "TrainConfig", "generate_dataset", "load_checkpoint",
    "make_demo_network", "read_dataset", "save_checkpoint", "train",
    "write_dataset", "__version__",
]
