"""biprop: video object segmentation by propagating MRF energies frame to
frame through an edge-aware recursive filter and recycling residual graphs."""

from .core import (
    FrameSequence,
    UnaryField,
    BinaryField,
    color_distance,
    energy_of,
    SCRIBBLE_NONE,
    SCRIBBLE_BG,
    SCRIBBLE_FG,
)
from .permeability import (
    PermeabilityParams,
    permeability,
    scan_1d,
    cross_filter,
    oracle_cross_filter,
)
from .overseg import (
    RegionMap,
    RegionAdjacency,
    RegionFeatures,
    identity_map,
    slic_segment,
    region_adjacency,
    region_features,
)
from .propagate import (
    UnaryPlanes,
    EdgePlanes,
    rasterize_unary,
    aggregate_unary,
    propagate_unary,
    binary_to_edge_planes,
    aggregate_binary,
    propagate_binary,
    smoothed_potts_binary,
)
from .graphcut import (
    FlowGraph,
    ResidualGraph,
    build_graph,
    max_flow,
    min_cut_labeling,
    oracle_min_energy,
)
from .dynamic import (
    ResidualFields,
    DynState,
    extract_residual,
    conservation_repair,
    propagate_residual,
    propagate_fields,
    dynamic_step,
    verify_step,
)
from .seeding import SeedConfig, ColorModels, fit_color_models, scribble_unary, potts_binary
from .pipeline import RunConfig, RunReport, SegmentationRun, segment_video, labeling_to_mask
from .evaluation import EvalCounts, SynthSpec, precision_recall, synth_sequence, seed_scribbles_from_mask

__version__ = "0.1.0"
