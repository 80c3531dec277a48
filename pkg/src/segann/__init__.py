"""Attribute-filtered approximate nearest-neighbor search over
segment-packed scalar quantization codes, with a simulated serverless
runtime and a cost model for pricing deployments."""

from .builder import (
    BuildParams,
    IndexBundle,
    LocalEngine,
    PartitionSearcher,
    SearchParams,
    build_index,
)
from .costmodel import CostReport, PriceSheet, UsageReport, price_run
from .dataset import (
    AttributeTable,
    HybridQuery,
    QueryPredicate,
    ResultSet,
    VectorDataset,
    brute_force_search,
    generate_attributes,
    load_queries,
    read_bvecs,
    read_fvecs,
    read_ivecs,
    recall_at_k,
    save_queries,
    write_fvecs,
    write_ivecs,
)
from .errors import (
    AllocationError,
    CapacityError,
    ConfigError,
    ContractViolation,
    FormatError,
    InsufficientDataError,
    PredicateError,
    SegannError,
    TruncatedFileError,
)
from .hybridfilter import SatisfactionLookup, build_lookup, filter_mask, filter_masks
from .osq import (
    SegmentMatrix,
    bit_wastage,
    extract_dim,
    hamming_distance,
    pack_codes,
    pack_signs,
)
from .partitioner import (
    PartitionSet,
    ThresholdModel,
    balanced_partition,
    compute_threshold,
)
from .quantizer import (
    AttributeQIndex,
    BitAllocation,
    allocate_bits,
    lloyd_1d,
    quantize_attributes,
)
from .runtime import (
    ContainerPool,
    RunOptions,
    RunReport,
    SimulatedRuntime,
    TreeConfig,
    children_of,
    dre_fetch,
    subtree_size,
    total_allocators,
)
from .search import (
    AdcTable,
    build_adc_table,
    hamming_prune,
    lower_bounds,
    merge_results,
    select_partitions,
)
from .transform import apply_klt, apply_standardize, fit_klt, fit_standardize

__version__ = "0.1.0"
