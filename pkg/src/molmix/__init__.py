"""Digital data storage in simulated small-molecule mixtures."""

from .capacity import (
    CapacityValue,
    address_payload_equivalence,
    binary_entropy,
    capacity_c1,
    capacity_c2,
    capacity_c3,
    capacity_c4,
    confusion_limited_capacity,
    optimal_partition,
)
from .codec import CompoundLibrary, PlateLayout, decode, encode
from .ecc import LinearCode, grand_decode
from .specsim import ChannelConfig, simulate_readout

__version__ = "0.1.0"
