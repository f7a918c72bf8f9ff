from __future__ import annotations

from datetime import datetime, timezone

import pytest

from asthmawatch.gateway import SyncGateway
from asthmawatch.store import ObservationStore

FAR_FUTURE = datetime(2100, 1, 1, tzinfo=timezone.utc)


@pytest.fixture
def store() -> ObservationStore:
    return ObservationStore(":memory:")


@pytest.fixture
def gateway(store) -> SyncGateway:
    gw = SyncGateway(store)
    gw.register_device("token-1", "p1", FAR_FUTURE)
    return gw
