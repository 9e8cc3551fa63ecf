"""Binary stores for waveforms, response histories and network checkpoints."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CompatibilityError, FormatError, IntegrityError
from .masked_net.network import NetworkConfig, SourceNetwork, TargetNetwork, config_dict
from .masked_net.optim import Adam
from .signals import NormalizationStats, ResponseHistory, Waveform

WF_MAGIC = b"QSWF"
WF_VERSION = 1
# magic, version, count, n_steps, dt
_WF_HEADER = struct.Struct("<4sIQQd")

CK_MAGIC = b"QSCK"
CK_VERSION = 1
_CK_PREFIX = struct.Struct("<4sIQ")


def _index_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".index.csv")


def _atomic_write(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


# -- waveform store ------------------------------------------------------------

def save_records(path, records: Sequence[np.ndarray], dt_s: float, index_rows: Sequence[Sequence],
                 index_header: Sequence[str] = ("record", "motion_id")):
    """Write equal-length float32 records plus a CSV index (one row per record)."""
    n_steps = len(records[0]) if len(records) else 0
    if any(len(r) != n_steps for r in records):
        raise FormatError("all records in a store must have the same length")
    if len(index_rows) != len(records):
        raise FormatError("need one index row per record")
    body = np.asarray(records, dtype="<f4").reshape(len(records), n_steps).tobytes()
    _atomic_write(path, _WF_HEADER.pack(WF_MAGIC, WF_VERSION, len(records), n_steps, dt_s) + body)
    with open(_index_path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(index_header)
        for i, row in enumerate(index_rows):
            w.writerow([i, *row])


def load_records(path) -> Tuple[np.ndarray, float, List[List[str]]]:
    """Return ``(records[count, n_steps] float32, dt_s, index_rows)``."""
    data = Path(path).read_bytes()
    if len(data) < _WF_HEADER.size:
        raise IntegrityError(f"{path}: truncated header")
    magic, version, count, n_steps, dt = _WF_HEADER.unpack_from(data)
    if magic != WF_MAGIC:
        raise FormatError(f"{path}: not a waveform store")
    if version != WF_VERSION:
        raise FormatError(f"{path}: unsupported store version {version}")
    expected = _WF_HEADER.size + count * n_steps * 4
    if len(data) != expected:
        raise IntegrityError(f"{path}: size {len(data)} bytes, expected {expected}")
    arr = np.frombuffer(data, dtype="<f4", offset=_WF_HEADER.size).reshape(count, n_steps)
    try:
        with open(_index_path(path), newline="") as fh:
            rows = list(csv.reader(fh))[1:]
    except FileNotFoundError:
        raise IntegrityError(f"{path}: index file is missing") from None
    if len(rows) != count or any(r[0] != str(i) for i, r in enumerate(rows)):
        raise IntegrityError(f"{path}: index does not match the store")
    return arr.copy(), dt, [r[1:] for r in rows]


def save_waveforms(path, waveforms: Sequence[Waveform]):
    dts = {w.dt_s for w in waveforms}
    if len(dts) > 1:
        raise FormatError("all waveforms in a store must share dt")
    dt = dts.pop() if dts else 0.0
    save_records(path, [w.samples for w in waveforms], dt, [[w.id] for w in waveforms])


def load_waveforms(path) -> List[Waveform]:
    arr, dt, rows = load_records(path)
    return [Waveform(arr[i].astype(np.float64), dt, rows[i][0]) for i in range(len(rows))]


_FAMILIES = ("rel_accel", "rel_vel", "rel_disp", "restoring_force", "idr")


def save_histories(path, histories: Sequence[ResponseHistory]):
    """One record per (history, family, degree of freedom)."""
    dts = {h.dt_s for h in histories}
    if len(dts) > 1:
        raise FormatError("all histories in a store must share dt")
    records, rows = [], []
    for h in histories:
        for fam in _FAMILIES:
            arr = getattr(h, fam)
            if arr is None:
                continue
            for k, rec in enumerate(arr):
                records.append(rec)
                rows.append([h.id, fam, k])
    save_records(path, records, dts.pop() if dts else 0.0, rows,
                 ("record", "motion_id", "family", "dof"))


def load_histories(path) -> List[ResponseHistory]:
    arr, dt, rows = load_records(path)
    grouped: Dict[str, Dict[str, list]] = {}
    for rec, (mid, fam, _k) in zip(arr, rows):
        grouped.setdefault(mid, {}).setdefault(fam, []).append(rec.astype(np.float64))
    out = []
    for mid, fams in grouped.items():
        kw = {f: np.array(fams[f]) if f in fams else None for f in _FAMILIES}
        out.append(ResponseHistory(dt_s=dt, id=mid, **kw))
    return out


# -- checkpoints ----------------------------------------------------------------

def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _layer_meta(layer) -> dict:
    if hasattr(layer, "t_past"):
        return {"band": [layer.t_past, layer.t_future], "channelwise": layer.channelwise,
                "trainable": layer.trainable}
    return {"band": None, "channelwise": False, "trainable": layer.trainable}


def save_checkpoint(path, net, optimizer: Optional[Adam] = None,
                    norm: Optional[NormalizationStats] = None, run_config_hash: str = "",
                    history: Optional[dict] = None):
    """Write parameters (float64), band metadata, optimizer moments and extras."""
    kind = "target" if isinstance(net, TargetNetwork) else "source"
    tensors, blobs, offset = [], [], 0

    def add(name, arr, meta):
        nonlocal offset
        a = np.ascontiguousarray(arr, dtype="<f8")
        tensors.append({"name": name, "shape": list(a.shape), "offset": offset, **meta})
        blobs.append(a.tobytes())
        offset += a.nbytes

    for lname, layer in net.named_layers():
        meta = _layer_meta(layer)
        for pname, arr in layer.params.items():
            add(f"{lname}.{pname}", arr, meta)
    opt_meta = None
    if optimizer is not None:
        st = optimizer.state_dict()
        opt_meta = {k: st[k] for k in ("lr", "beta1", "beta2", "eps", "step_count")}
        names = sorted(optimizer.params)
        opt_meta["names"] = names
        for n in names:
            add(f"optimizer.m.{n}", st["m"][n], {})
            add(f"optimizer.v.{n}", st["v"][n], {})
    header = {"kind": kind, "network": config_dict(net.cfg), "tensors": tensors,
              "optimizer": opt_meta, "normalization": norm.to_dict() if norm else None,
              "config_hash": run_config_hash, "history": history or {}}
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = _CK_PREFIX.pack(CK_MAGIC, CK_VERSION, len(hbytes)) + hbytes + b"".join(blobs)
    _atomic_write(path, payload + hashlib.sha256(payload).digest())


class Checkpoint:
    """Loaded checkpoint: the rebuilt network plus its side data."""

    def __init__(self, net, header: dict, optimizer_state: Optional[dict]):
        self.net = net
        self.header = header
        self.optimizer_state = optimizer_state

    @property
    def normalization(self) -> Optional[NormalizationStats]:
        d = self.header.get("normalization")
        return NormalizationStats.from_dict(d) if d else None

    @property
    def config_hash(self) -> str:
        return self.header.get("config_hash", "")

    @property
    def history(self) -> dict:
        return self.header.get("history", {})

    def make_optimizer(self, params: Dict[str, np.ndarray], masks=None) -> Adam:
        opt = Adam(params, masks=masks)
        if self.optimizer_state is not None:
            opt.load_state_dict(self.optimizer_state)
        return opt


def _read_checkpoint(path):
    data = Path(path).read_bytes()
    if len(data) < _CK_PREFIX.size + 32:
        raise IntegrityError(f"{path}: truncated checkpoint")
    magic, version, hlen = _CK_PREFIX.unpack_from(data)
    if magic != CK_MAGIC:
        raise FormatError(f"{path}: not a checkpoint")
    if version != CK_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    payload, digest = data[:-32], data[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise IntegrityError(f"{path}: checksum mismatch")
    start = _CK_PREFIX.size
    try:
        header = json.loads(payload[start:start + hlen])
    except ValueError as exc:
        raise FormatError(f"{path}: unreadable header ({exc})") from None
    blob = payload[start + hlen:]
    arrays = {}
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64)) * 8
        if t["offset"] + n > len(blob):
            raise IntegrityError(f"{path}: tensor {t['name']} runs past the end of the file")
        arrays[t["name"]] = np.frombuffer(blob, dtype="<f8", count=n // 8,
                                          offset=t["offset"]).reshape(t["shape"]).copy()
    return header, arrays


_STRUCTURAL = ("T_step", "n_layers", "n_single_channel", "channels", "t_past", "t_future",
               "full_past_last", "n_floors", "conv_kernel", "conv_pad_right", "head_t_past",
               "head_t_future")


def load_checkpoint(path, expected: Optional[NetworkConfig] = None,
                    kind: Optional[str] = None) -> Checkpoint:
    """Rebuild the network stored in ``path``.

    ``expected`` guards against loading a checkpoint whose layer shapes or
    bands differ from the current configuration.
    """
    header, arrays = _read_checkpoint(path)
    cfg = NetworkConfig(**header["network"])
    if expected is not None:
        diff = [k for k in _STRUCTURAL if getattr(cfg, k) != getattr(expected, k)]
        if diff:
            raise CompatibilityError(f"{path}: network differs from configuration in {diff}")
    if kind is not None and header["kind"] != kind:
        raise CompatibilityError(f"{path}: expected a {kind} checkpoint, found {header['kind']}")
    if header["kind"] == "target":
        net = TargetNetwork(SourceNetwork(cfg), cfg)
    else:
        net = SourceNetwork(cfg)
    layers = dict(net.named_layers())
    for t in header["tensors"]:
        name = t["name"]
        if name.startswith("optimizer."):
            continue
        lname, pname = name.rsplit(".", 1)
        layer = layers.get(lname)
        if layer is None or pname not in layer.params:
            raise CompatibilityError(f"{path}: unexpected tensor {name}")
        if tuple(t["shape"]) != layer.params[pname].shape:
            raise CompatibilityError(f"{path}: tensor {name} has shape {tuple(t['shape'])}, "
                                     f"expected {layer.params[pname].shape}")
        if t.get("band") is not None and list(_layer_meta(layer)["band"]) != t["band"]:
            raise CompatibilityError(f"{path}: band of {lname} does not match")
        layer.params[pname][...] = arrays[name]
        layer.trainable = bool(t["trainable"])
    missing = [f"{ln}.{pn}" for ln, layer in layers.items() for pn in layer.params
               if f"{ln}.{pn}" not in arrays]
    if missing:
        raise CompatibilityError(f"{path}: missing tensors {missing}")
    opt_state = None
    om = header.get("optimizer")
    if om:
        opt_state = {k: om[k] for k in ("lr", "beta1", "beta2", "eps", "step_count")}
        opt_state["m"] = {n: arrays[f"optimizer.m.{n}"] for n in om["names"]}
        opt_state["v"] = {n: arrays[f"optimizer.v.{n}"] for n in om["names"]}
    return Checkpoint(net, header, opt_state)
