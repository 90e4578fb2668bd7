"""Semi-supervised hierarchical clustering into hypercuboid trees.

Builds a tree of axis-aligned box clusters over labelled vectors (sparse
zeros and missing values supported), then uses it for conservative label
guessing with out-of-world rejection, relational reasoning over small
batches, and familiarity/surprise experiment metrics.
"""

from .errors import (
    ArityError,
    ClusterFlowError,
    DegenerateSeedError,
    DimensionError,
    EmptyDatasetError,
    EmptyInputError,
    LabelError,
    MissingDataError,
    NoSharedSubspaceError,
    ParseError,
    UndefinedPreferenceError,
    VersionError,
)
from .geometry import (
    BoundingBox,
    BoxMode,
    DimStats,
    Metric,
    distance,
    lp_norm,
    point_to_box_distance,
    softmax,
    unit_sum_softmax,
    vec,
)
from .seeding import FlatClustering, SeedConfig, detk, kmeans, kmeanspp_init
from .tree import (
    Activation,
    BuildConfig,
    Cluster,
    ClusterStatus,
    ClusterTree,
    build,
)
from .inference import Guess, confidence_histogram, guess, guess_many
from .reasoning import (
    GroupVerdict,
    TripleVerdict,
    VerdictKind,
    classify_triple,
    generalize_n,
    shared_labels,
)
from .experiments import (
    AsymmetryReport,
    ClassSplit,
    ProtocolReport,
    SurpriseReport,
    asymmetry,
    preference,
    run_familiarity_protocol,
    surprise,
)
from . import dataio

__version__ = "0.1.0"
