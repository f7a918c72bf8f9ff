"""Device-facing ingestion: token auth and idempotent at-least-once batches.

Devices buffer while offline and re-send whole batches after reconnecting,
so the gateway must absorb arbitrary replays: re-sends land as duplicates
and never change stored state. Handlers are stateless; the store is the
serialization point.
"""

from __future__ import annotations

from datetime import datetime
from typing import Any, Mapping

from pydantic import BaseModel, model_validator

from .model import (
    Observation,
    ObservationRejected,
    Stream,
    utc_now,
    validate_observation,
)
from .store import ObservationStore, UpsertOutcome

#: Oversized batches are rejected whole; clients must chunk.
MAX_BATCH_SIZE = 10_000


class Unauthorized(Exception):
    pass


class BatchTooLarge(Exception):
    def __init__(self, size: int):
        super().__init__(f"batch of {size} exceeds cap of {MAX_BATCH_SIZE}")
        self.size = size


class IngestReceipt(BaseModel):
    accepted: int
    duplicates: int
    rejected: list[tuple[int, str]] = []

    @model_validator(mode="after")
    def _non_negative(self) -> "IngestReceipt":
        if self.accepted < 0 or self.duplicates < 0:
            raise ValueError("counts must be non-negative")
        return self

    @property
    def batch_size(self) -> int:
        return self.accepted + self.duplicates + len(self.rejected)


class SyncGateway:
    def __init__(self, store: ObservationStore, max_batch: int = MAX_BATCH_SIZE):
        self.store = store
        self.max_batch = max_batch

    def register_device(self, token: str, patient_id: str, expiry: datetime) -> None:
        self.store.put_token(token, patient_id, expiry)

    def authenticate(self, token: str, now: datetime | None = None) -> str:
        """Resolve a device token to its bound patient; expiry is strict."""
        now = now or utc_now()
        binding = self.store.get_token(token)
        if binding is None:
            raise Unauthorized("unknown token")
        patient_id, expiry = binding
        if now >= expiry:
            raise Unauthorized("token expired")
        return patient_id

    def ingest_batch(
        self, patient_id: str, batch: list[Observation | Mapping[str, Any]]
    ) -> IngestReceipt:
        """Validate, screen, and upsert a device batch.

        Partial acceptance: invalid entries are rejected per index and the
        rest commit atomically. Replaying any batch leaves the store as a
        single delivery would.
        """
        if len(batch) > self.max_batch:
            raise BatchTooLarge(len(batch))

        valid: list[tuple[int, Observation]] = []
        rejected: list[tuple[int, str]] = []
        for i, raw in enumerate(batch):
            try:
                obs = validate_observation(raw)
            except ObservationRejected as exc:
                rejected.append((i, f"{type(exc).__name__}: {exc.reason}"))
                continue
            if obs.stream is Stream.OUTDOOR_ENV:
                # Region-scoped data comes from the environment poller, not
                # from device tokens bound to a single patient.
                rejected.append((i, "Unauthorized: region-scoped stream not accepted from devices"))
                continue
            if obs.payload.patient_id != patient_id:
                rejected.append((i, "Unauthorized: observation keyed to another patient"))
                continue
            valid.append((i, obs))

        outcomes = self.store.upsert_batch([obs for _, obs in valid])
        accepted = sum(1 for o in outcomes if o.changed_state)
        duplicates = sum(1 for o in outcomes if not o.changed_state)
        return IngestReceipt(accepted=accepted, duplicates=duplicates, rejected=rejected)
