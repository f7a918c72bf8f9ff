"""Command-line surface: serve, ingest, analyze, simulate, report, export.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import json
import sys
from datetime import date
from pathlib import Path

import click
from pydantic import ValidationError

from .attribution import (
    EmptyCohort,
    EmptyPeriod,
    InsufficientData,
    InsufficientEpisodes,
    default_split,
    learn_and_predict,
    period_report,
)
from .config import ApiConfig, ConfigError, load_config
from .model import (
    Observation,
    ObservationRejected,
    PatientProfile,
    Season,
    Stream,
    observation_to_line,
    validate_observation,
)
from .reports import cohort_report, patient_report
from .simulate import gen_cohort
from .store import ObservationStore, StorageUnavailable, UnknownPatient

CONFIG_ENV_VAR = "ASTHMAWATCH_CONFIG"

_DATA_ERRORS = (
    UnknownPatient,
    InsufficientData,
    InsufficientEpisodes,
    EmptyPeriod,
    EmptyCohort,
    StorageUnavailable,
    ObservationRejected,
    ValidationError,
    json.JSONDecodeError,
)


def _load_config(path: str | None) -> ApiConfig:
    return load_config(path)


def _open_store(config: ApiConfig) -> ObservationStore:
    return ObservationStore(config.store_path, tz=config.timezone)


@click.group()
@click.option("--config", "config_path", envvar=CONFIG_ENV_VAR, default=None, help="JSON config file")
@click.pass_context
def main(ctx: click.Context, config_path: str | None):
    """Asthma monitoring platform: ingest, analyze, simulate, report."""
    try:
        ctx.obj = _load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)


def _run(ctx_config: ApiConfig, fn):
    try:
        return fn()
    except _DATA_ERRORS as exc:
        click.echo(f"data error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(3)


@main.command()
@click.pass_obj
def serve(config: ApiConfig):
    """Run the HTTP API."""
    import uvicorn

    from .api import create_app

    store = _run(config, lambda: _open_store(config))  # corrupt store: data error
    app = create_app(store, config)
    uvicorn.run(app, host=config.host, port=config.port)


@main.command()
@click.argument("files", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--patients", "patients_file", type=click.Path(exists=True), help="profiles NDJSON")
@click.pass_obj
def ingest(config: ApiConfig, files: tuple[str, ...], patients_file: str | None):
    """Ingest observation NDJSON files (idempotent upsert)."""
    store = _run(config, lambda: _open_store(config))

    def run():
        if patients_file:
            n = 0
            for line in Path(patients_file).read_text(encoding="utf-8").splitlines():
                if line.strip():
                    store.put_patient(PatientProfile.model_validate_json(line))
                    n += 1
            click.echo(f"{patients_file}: {n} patient profiles")
        for f in files:
            batch: list[Observation] = []
            rejected = 0
            for line in Path(f).read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    batch.append(validate_observation(json.loads(line)))
                except (json.JSONDecodeError, ObservationRejected):
                    rejected += 1
            outcomes = store.upsert_batch(batch)
            accepted = sum(1 for o in outcomes if o.changed_state)
            dup = len(outcomes) - accepted
            click.echo(f"{f}: accepted={accepted} duplicates={dup} rejected={rejected}")

    _run(config, run)


@main.command()
@click.option("--patient", "patient_id", required=True)
@click.option("--learning-end", type=click.DateTime(formats=["%Y-%m-%d"]), default=None)
@click.pass_obj
def analyze(config: ApiConfig, patient_id: str, learning_end):
    """Print the learning/prediction trigger analysis as JSON."""
    store = _run(config, lambda: _open_store(config))

    def run():
        boundary = learning_end.date() if learning_end else None
        learning, prediction = default_split(store, patient_id, config.params, boundary)
        out = {
            "learning": period_report(
                store, patient_id, learning, config.params, config.healthy_ranges
            ).model_dump(mode="json"),
            "prediction": period_report(
                store, patient_id, prediction, config.params, config.healthy_ranges
            ).model_dump(mode="json"),
        }
        try:
            out["evaluation"] = learn_and_predict(
                store, patient_id, learning, prediction, config.params, config.healthy_ranges
            ).model_dump(mode="json")
        except InsufficientEpisodes as exc:
            out["evaluation"] = None
            out["insufficient_reason"] = str(exc)
        click.echo(json.dumps(out, indent=2, sort_keys=True))

    _run(config, run)


@main.command()
@click.option("--season", type=click.Choice([s.value for s in Season]), required=True)
@click.option("--patients", "n_patients", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--days", type=int, default=42, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="write NDJSON fixtures here instead of ingesting")
@click.pass_obj
def simulate(config: ApiConfig, season: str, n_patients: int, seed: int, days: int, out_dir: str | None):
    """Generate a deterministic synthetic cohort."""

    def run():
        fixture = gen_cohort(Season(season), n_patients, seed, days)
        if out_dir:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "profiles.ndjson", "w", encoding="utf-8") as fp:
                for gt in fixture.patients:
                    fp.write(gt.profile.model_dump_json() + "\n")
            with open(out / "observations.ndjson", "w", encoding="utf-8") as fp:
                for obs in fixture.observations:
                    fp.write(observation_to_line(obs) + "\n")
            with open(out / "groundtruth.json", "w", encoding="utf-8") as fp:
                json.dump(
                    {
                        gt.profile.patient_id: {
                            "sensitivity": gt.sensitivity,
                            "planted_trigger": gt.planted_trigger,
                            "episode_days": [d.isoformat() for d in fixture.episode_days[gt.profile.patient_id]],
                        }
                        for gt in fixture.patients
                    },
                    fp,
                    indent=2,
                    sort_keys=True,
                )
            click.echo(f"wrote {len(fixture.observations)} observations for {n_patients} patients to {out}")
        else:
            store = _run(config, lambda: _open_store(config))
            for gt in fixture.patients:
                store.put_patient(gt.profile)
            store.upsert_batch(fixture.observations)
            click.echo(f"ingested {len(fixture.observations)} observations for {n_patients} patients")

    _run(config, run)


@main.command()
@click.option("--patient", "patient_id", default=None)
@click.option("--season", type=click.Choice([s.value for s in Season]), default=None)
@click.option("--format", "fmt", type=click.Choice(["markdown", "csv"]), default="markdown")
@click.option("--learning-end", type=click.DateTime(formats=["%Y-%m-%d"]), default=None)
@click.option("--segment-learning-days", default=None,
              help="comma-separated learning days per pollen segment")
@click.pass_obj
def report(config: ApiConfig, patient_id, season, fmt, learning_end, segment_learning_days):
    """Emit a trigger table for a patient, or the cohort table for a season."""
    if bool(patient_id) == bool(season):
        click.echo("exactly one of --patient / --season is required", err=True)
        sys.exit(2)
    store = _run(config, lambda: _open_store(config))

    def run():
        if patient_id:
            split = (
                [int(x) for x in segment_learning_days.split(",")]
                if segment_learning_days
                else None
            )
            doc = patient_report(
                store,
                patient_id,
                config.params,
                config.healthy_ranges,
                fmt=fmt,
                learning_end=learning_end.date() if learning_end else None,
                segment_learning_days=split,
            )
        else:
            doc = cohort_report(
                store, Season(season), config.params, config.healthy_ranges, config.seasons, fmt=fmt
            )
        click.echo(doc, nl=False)

    _run(config, run)


@main.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--stream", "stream_name", type=click.Choice([s.value for s in Stream]), default=None)
@click.pass_obj
def export(config: ApiConfig, out_dir: str, stream_name: str | None):
    """Dump stored observations to NDJSON, one file per stream."""
    store = _run(config, lambda: _open_store(config))

    def run():
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        streams = [Stream(stream_name)] if stream_name else list(Stream)
        for stream in streams:
            path = out / f"{stream.value}.ndjson"
            with open(path, "w", encoding="utf-8") as fp:
                n = store.export_ndjson(fp, stream)
            click.echo(f"{path}: {n} observations")

    _run(config, run)


if __name__ == "__main__":
    main()
