"""fetaug: deterministic volumetric augmentation and keypoint toolkit.

Core pieces:

* :mod:`fetaug.grid` -- volumes, masks, rigid transforms, resampling
* :mod:`fetaug.heatmap` -- Gaussian heatmap synthesis and extraction
* :mod:`fetaug.augment` -- stochastic MRI augmentation pipeline
* :mod:`fetaug.inpaint` -- fetal inpainting bank and compositing
* :mod:`fetaug.phantom` -- synthetic test phantoms with exact ground truth
* :mod:`fetaug.evaluate` -- PCK evaluation and aggregation
* :mod:`fetaug.nifti` / :mod:`fetaug.fileio` -- serialization
* :mod:`fetaug.service` -- FastAPI wrapper for training-loop clients
* :mod:`fetaug.cli` -- command-line surface
"""

from .augment import AugmentConfig, LabeledSample, apply_pipeline
from .evaluate import AcquisitionSeries, EvalReport, pck
from .grid import Mask, RigidTransform, Volume
from .heatmap import KEYPOINT_NAMES, HeatmapStack, KeypointSet, extract, mse, synthesize
from .inpaint import BodyEntry, InpaintParams, UterusEntry, build_bank_entry, sample_composite
from .phantom import PhantomSpec, make_phantom, oracle_predict
from .seeding import substream

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "LabeledSample",
    "apply_pipeline",
    "AcquisitionSeries",
    "EvalReport",
    "pck",
    "Mask",
    "RigidTransform",
    "Volume",
    "KEYPOINT_NAMES",
    "HeatmapStack",
    "KeypointSet",
    "extract",
    "mse",
    "synthesize",
    "BodyEntry",
    "InpaintParams",
    "UterusEntry",
    "build_bank_entry",
    "sample_composite",
    "PhantomSpec",
    "make_phantom",
    "oracle_predict",
    "substream",
    "__version__",
]
