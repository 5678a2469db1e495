"""Binary model archives.

Layout::

    ANCHORLSTM-ARCHIVE\\n
    <header length in bytes, decimal>\\n
    <UTF-8 JSON header>
    <payload: raw little-endian IEEE-754 float64 arrays>

The header holds the run config, normalization ranges, network/training
settings and a manifest giving every array's kind, member, name, block, shape
and byte offset into the payload. Raw-bit floats make round trips exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import NormStats
from .estimator import AnchoredLSTMRegressor
from .exceptions import ArchiveError, VersionError
from .lstm import GateBlock, NetworkConfig, block_of
from .objectives import PriorSpec
from .training import EnsembleModel, TrainConfig

MAGIC = b"ANCHORLSTM-ARCHIVE\n"
FORMAT_VERSION = 1
FLOAT_ENCODING = "ieee754-float64-le-raw"


@dataclass
class ModelArchive:
    estimator: AnchoredLSTMRegressor
    stats: NormStats
    run_config: RunConfig
    training_summary: list


def _summary(model: EnsembleModel) -> list:
    out = []
    for m, log in enumerate(model.logs):
        out.append({
            "member": m,
            "epochs": len(log.total) - 1,
            "initial_total": log.total[0],
            "final_data": log.data[-1],
            "final_penalty": log.penalty[-1],
            "final_total": log.total[-1],
        })
    return out


def save_model(path, estimator: AnchoredLSTMRegressor, stats: NormStats, run_config: RunConfig) -> None:
    model = estimator.ensemble_
    manifest, chunks = [], []
    offset = 0

    def add(kind, member, name, arr):
        nonlocal offset
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({
            "kind": kind, "member": member, "name": name, "block": block_of(name).value,
            "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(raw),
        })
        chunks.append(raw)
        offset += len(raw)

    for m, params in enumerate(model.members):
        for name, arr in params.items():
            add("param", m, name, arr)
    for m, anchors in enumerate(model.anchors or []):
        for name, arr in anchors.items():
            add("anchor", m, name, arr)

    header = {
        "format_version": FORMAT_VERSION,
        "float_encoding": FLOAT_ENCODING,
        "run_config": run_config.to_dict(),
        "norm_stats": stats.to_dict(),
        "network": asdict(model.net),
        "train": asdict(model.train),
        "prior": {b.value: v for b, v in model.prior.variances.items()},
        "nu": model.nu,
        "n_members": len(model.members),
        "arrays": manifest,
        "payload_bytes": offset,
        "training_summary": _summary(model),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(b"%d\n" % len(blob))
        fh.write(blob)
        for chunk in chunks:
            fh.write(chunk)


def load_model(path) -> ModelArchive:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ArchiveError(f"{path}: not a model archive (bad magic at offset 0)")
    pos = len(MAGIC)
    nl = raw.find(b"\n", pos)
    if nl < 0:
        raise ArchiveError(f"{path}: truncated header length at offset {pos}")
    try:
        hlen = int(raw[pos:nl])
    except ValueError:
        raise ArchiveError(f"{path}: corrupt header length at offset {pos}") from None
    start = nl + 1
    if len(raw) < start + hlen:
        raise ArchiveError(f"{path}: truncated header: need {hlen} bytes at offset {start}, file has {len(raw)}")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: corrupt header at offset {start}: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported archive version {version!r} (expected {FORMAT_VERSION})")
    if header.get("float_encoding") != FLOAT_ENCODING:
        raise ArchiveError(f"{path}: unknown float encoding {header.get('float_encoding')!r}")

    base = start + hlen
    expected = header["payload_bytes"]
    if len(raw) - base != expected:
        raise ArchiveError(
            f"{path}: payload at offset {base} should hold {expected} bytes, found {len(raw) - base}"
        )
    n = header["n_members"]
    members = [dict() for _ in range(n)]
    anchors: list[dict] = []
    for entry in header["arrays"]:
        lo = base + entry["offset"]
        arr = np.frombuffer(raw, dtype="<f8", count=entry["nbytes"] // 8, offset=lo)
        arr = arr.astype(np.float64).reshape(entry["shape"])
        if entry["kind"] == "param":
            members[entry["member"]][entry["name"]] = arr
        else:
            while len(anchors) <= entry["member"]:
                anchors.append({})
            anchors[entry["member"]][entry["name"]] = arr

    net = NetworkConfig(**header["network"])
    train = TrainConfig(**header["train"])
    prior = PriorSpec({GateBlock(k): v for k, v in header["prior"].items()})
    model = EnsembleModel(net, train, prior, header["nu"], members, anchors or None, [])
    run = RunConfig.from_dict(header["run_config"])
    estimator = AnchoredLSTMRegressor.from_ensemble(model, **run.estimator().get_params())
    return ModelArchive(estimator, NormStats.from_dict(header["norm_stats"]), run, header["training_summary"])
