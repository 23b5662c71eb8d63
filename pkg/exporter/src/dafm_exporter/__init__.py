"""Export per-pixel class probabilities from segmentation models as DAFM maps."""

from .classmap import MergeTable, load_merge_table, parse_merge_table
from .dafm import write_dafm
from .errors import (
    ExporterError,
    InferenceFailure,
    IoFailure,
    MergeTableError,
    ModelLoadFailure,
)
from .export import ExportJob, compute_attribute_map, export
from .models import LoadedModel, load_model

__version__ = "0.1.0"
