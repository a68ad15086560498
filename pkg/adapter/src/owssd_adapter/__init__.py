"""Dataset adapter: real images and annotations in, training files out."""

from .backbone import BACKBONES, FEATURE_DIM, load_backbone
from .convert import (
    VOC15_CLASSES,
    VOC_CLASSES,
    SourceBox,
    SourceImage,
    convert_annotations,
    parse_coco,
    parse_voc,
)
from .errors import AdapterError, FormatError, InputError
from .extract import SOURCE_FORMATS, ExtractionJob, extract_features

__all__ = [
    "AdapterError",
    "BACKBONES",
    "ExtractionJob",
    "FEATURE_DIM",
    "FormatError",
    "InputError",
    "SOURCE_FORMATS",
    "SourceBox",
    "SourceImage",
    "VOC15_CLASSES",
    "VOC_CLASSES",
    "convert_annotations",
    "extract_features",
    "load_backbone",
    "parse_coco",
    "parse_voc",
]
