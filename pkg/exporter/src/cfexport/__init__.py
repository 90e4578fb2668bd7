"""Pre-softmax activation exporter for torchvision classifiers."""

from .dump import write_dump, write_label_dictionary
from .export import ExportJob, ExportResult, export

__version__ = "0.1.0"
