"""Multimodal asthma monitoring: ingestion, episode detection, trigger
attribution, alerting, simulation, and reporting."""

from .model import (
    Observation,
    PatientProfile,
    Season,
    Stream,
    validate_observation,
)
from .store import ObservationStore
from .gateway import SyncGateway

__all__ = [
    "Observation",
    "ObservationStore",
    "PatientProfile",
    "Season",
    "Stream",
    "SyncGateway",
    "validate_observation",
]

__version__ = "0.1.0"
