"""Harmonize multi-source chest X-ray datasets into one tri-state label model."""

__version__ = "0.1.0"

from .calibration import RocCurve, ScoredSet, align_outputs, apply_opt, auc, op_point, roc
from .composition import (
    MergeDataset, SubsetDataset, filter_views, merge, relabel, subset, unique_patients,
)
from .covariate import CovariateDataset, CovariateSpec, build_covariate, class_mean_difference, partition_pools
from .dataset import ArrayDataset, Dataset, RawImage, Sample, render_summary, scale_pixels, totals
from .ingestion import AdapterProfile, decode_image, load_dataset
from .masks import Bitmap, Box, attach_masks, merge_or, rasterize
from .taxonomy import Pathology, Taxonomy, TriState, default_taxonomy, is_unknown, normalize_name
from .transforms import AugmentationSpec, TransformChain, augment, center_crop, resize_bilinear

__all__ = [
    "AdapterProfile", "ArrayDataset", "AugmentationSpec", "Bitmap", "Box", "CovariateDataset",
    "CovariateSpec", "Dataset", "MergeDataset", "Pathology", "RawImage", "RocCurve", "Sample",
    "ScoredSet", "SubsetDataset", "Taxonomy", "TransformChain", "TriState", "align_outputs",
    "apply_opt", "attach_masks", "auc", "augment", "build_covariate", "center_crop",
    "class_mean_difference", "decode_image", "default_taxonomy", "filter_views", "is_unknown",
    "load_dataset", "merge", "merge_or", "normalize_name", "op_point", "partition_pools",
    "rasterize", "relabel", "render_summary", "resize_bilinear", "roc", "scale_pixels",
    "subset", "totals", "unique_patients",
]
