from .receivers import Layout, ReceiverArray
from .solver import (
    BoundaryMap,
    SolverConfig,
    TraceSet,
    WaveOperator,
    default_probe_window,
    forward_all,
    propagate,
    set_workers,
)
from .sources import (
    PlaneWaveSource,
    SourceSet,
    entry_reference,
    fibonacci_directions,
    ricker,
    ricker_lambda,
)

__all__ = [
    "BoundaryMap",
    "Layout",
    "PlaneWaveSource",
    "ReceiverArray",
    "SolverConfig",
    "SourceSet",
    "TraceSet",
    "WaveOperator",
    "default_probe_window",
    "entry_reference",
    "fibonacci_directions",
    "forward_all",
    "propagate",
    "ricker",
    "ricker_lambda",
    "set_workers",
]
