"""Topology-aware architecture search by progressive edge shrinking."""

__version__ = "0.1.0"

from .topology import (  # noqa: E402
    CellKind,
    CellTopology,
    MappedBlock,
    NodeOp,
    complete_dag,
    map_to_block,
    remove_edge,
    search_space_size,
)
from .shrink import SearchConfig, run_shrink  # noqa: E402

__all__ = [
    "CellKind",
    "CellTopology",
    "MappedBlock",
    "NodeOp",
    "SearchConfig",
    "complete_dag",
    "map_to_block",
    "remove_edge",
    "run_shrink",
    "search_space_size",
]
