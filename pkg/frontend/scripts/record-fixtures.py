#!/usr/bin/env python3
"""Record /v1 responses for the dashboard conformance tests.

Builds the patient-a fixture in an in-memory store, runs the real API, and
freezes the JSON bodies the dashboard tests replay. Regenerate with:

    python3 frontend/scripts/record-fixtures.py
"""

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent.parent
sys.path.insert(0, str(REPO / "tests"))

from fastapi.testclient import TestClient

from asthmawatch.api import create_app
from asthmawatch.store import ObservationStore
from fixture_patients import build_patient_a

OUT = Path(__file__).resolve().parent.parent / "test" / "fixtures"


def main() -> None:
    store = ObservationStore(":memory:")
    bundle = build_patient_a()
    bundle.load(store)
    client = TestClient(create_app(store))

    recordings = {
        "config.json": "/v1/config",
        "patients.json": "/v1/patients",
        # the two learning-end markers the adjust_split test moves between
        "triggers_w4.json": "/v1/patients/patient-a/triggers?learning_end=2018-02-28",
        "triggers_w6.json": "/v1/patients/patient-a/triggers?learning_end=2018-03-14",
        "timeline.json": "/v1/patients/patient-a/timeline?from=2018-02-01&to=2018-03-14",
        "summary.json": "/v1/patients/patient-a/summary",
    }
    OUT.mkdir(parents=True, exist_ok=True)
    for name, url in recordings.items():
        response = client.get(url)
        response.raise_for_status()
        (OUT / name).write_text(json.dumps(response.json(), indent=2, sort_keys=True) + "\n")
        print(f"{name}: {url}")

    # out-of-range marker: keep the error body too
    error = client.get("/v1/patients/patient-a/triggers?learning_end=2019-06-01")
    assert error.status_code == 422
    (OUT / "triggers_out_of_range.json").write_text(
        json.dumps({"status": 422, "body": error.json()}, indent=2, sort_keys=True) + "\n"
    )
    print("triggers_out_of_range.json: 422 body")


if __name__ == "__main__":
    main()
