"""Queue-based semi-dynamic traffic assignment with moving-bottleneck capacity drops."""
from importlib import resources

from .capacity import (
    ATMARoute,
    CapacityProfile,
    CapacityReductionEvent,
    base_profile,
    build_atma_schedule,
    compile_profile,
    discharge_rate,
)
from .network import (
    Link,
    Network,
    NetworkError,
    Node,
    ODPair,
    TimeGrid,
    k_shortest_paths,
    load_demand,
    load_network,
    path_free_flow_time,
    shortest_path,
)
from .queue import QueueState, delay, qbtd_travel_time, queue_update, travel_time_derivative
from .solver import AssignmentResult, ConvergenceParams, run_assignment, tstt

__version__ = "0.1.0"


def data_dir(name: str):
    """Directory of a bundled network ("two_path" or "sioux_falls")."""
    return resources.files(__name__) / "data" / name
