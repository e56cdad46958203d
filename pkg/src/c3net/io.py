"""Config files, CSV exports and run metadata.

Every output file starts with a comment line embedding the hash of the
resolved configuration, so re-running an unchanged config reproduces
byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from pathlib import Path

from .engine import Metrics, SimConfig
from .service import Request

__version__ = "0.1.0"

DEFAULT_SWEEP = {
    "lambda_grid": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
    "policies": ["centralized", "mec"],
    "gamma_grid": [0.2, 1.0],
    "beta3": 0.3,
    "beta12_step": 0.05,
    "beta3_grid": [0.2, 0.5, 0.8],
    "region_lambda_fps": 60.0,
    "delay_req_ms": 20.0,
    "repetitions": 3,
}


class ConfigError(Exception):
    pass


def load_config(path) -> dict:
    """Parse a scenario document; raises ConfigError with a line-precise
    message on malformed JSON or unknown/invalid fields."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top-level value must be an object")
    known = {"sim", "sweep"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{path}: unknown top-level keys {sorted(unknown)}")
    return doc


def sim_config_from(doc: dict, seed=None) -> SimConfig:
    """Build a SimConfig from the `sim` section, applying defaults."""
    sim = dict(doc.get("sim", {}))
    fields = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = set(sim) - fields
    if unknown:
        raise ConfigError(f"unknown sim keys {sorted(unknown)}")
    if seed is not None:
        sim["seed"] = seed
    try:
        return SimConfig(**sim)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid sim config: {e}") from e


def sweep_spec_from(doc: dict) -> dict:
    spec = dict(DEFAULT_SWEEP)
    extra = doc.get("sweep", {})
    unknown = set(extra) - set(DEFAULT_SWEEP)
    if unknown:
        raise ConfigError(f"unknown sweep keys {sorted(unknown)}")
    spec.update(extra)
    if not spec["lambda_grid"] or not spec["beta3_grid"]:
        raise ConfigError("sweep grids must be non-empty")
    if spec["repetitions"] < 1:
        raise ConfigError("repetitions must be >= 1")
    return spec


def config_hash(cfg) -> str:
    if isinstance(cfg, SimConfig):
        cfg = dataclasses.asdict(cfg)
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _open_out(path, cfg):
    fh = open(path, "w", newline="")
    fh.write(f"# config_hash={config_hash(cfg)}\n")
    return fh


def write_deliveries_csv(path, m: Metrics):
    with _open_out(path, m.config) as fh:
        w = csv.writer(fh)
        w.writerow(["request_id", "user", "object", "arrival_slot",
                    "completion_slot", "delay_ms"])
        for d in sorted(m.deliveries, key=lambda d: d.request_id):
            w.writerow([d.request_id, d.user, d.object, d.arrival_slot,
                        d.completion_slot, f"{d.delay_s * 1e3:.6f}"])


def write_metadata_json(path, m: Metrics, extra=None):
    meta = {
        "config": dataclasses.asdict(m.config),
        "config_hash": config_hash(m.config),
        "seed": m.config.seed,
        "version": __version__,
        "issued": m.issued,
        "issued_total": m.issued_total,
        "delivered": len(m.deliveries),
        "completed_post_warmup": m.completed_post_warmup,
        "in_flight_end": m.in_flight_end,
        "utilization": m.utilization,
        "violations": m.violations,
    }
    if extra:
        meta.update(extra)
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_queue_trajectory_csv(path, m: Metrics):
    with _open_out(path, m.config) as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "node", "service", "stage", "bits"])
        for row in m.queue_rows:
            w.writerow(row)


def write_request_trace_csv(path, requests, cfg=None):
    with open(path, "w", newline="") as fh:
        if cfg is not None:
            fh.write(f"# config_hash={config_hash(cfg)}\n")
        w = csv.writer(fh)
        w.writerow(["id", "user", "object", "arrival_slot"])
        for r in requests:
            w.writerow([r.id, r.user, r.object, r.arrival_slot])


def read_request_trace_csv(path) -> list:
    requests = []
    with open(path, newline="") as fh:
        rows = (line for line in fh if not line.startswith("#"))
        rd = csv.DictReader(rows)
        for row in rd:
            requests.append(Request(int(row["id"]), int(row["user"]),
                                    int(row["object"]), int(row["arrival_slot"])))
    return requests


def write_rows_csv(path, header, rows, cfg):
    """Generic sorted sweep output."""
    with _open_out(path, cfg) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def read_rows_csv(path):
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    rd = csv.DictReader(rows)
    return list(rd)
