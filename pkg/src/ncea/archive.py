"""Plain-text, versioned model archives.

Layout::

    NCEA-MODEL v1
    config kind=nc-ea n_sub=4 n_msg=4 es=... ebn0_db=... ...
    SECTION encoder
    LAYER <rows> <cols> <activation>
    <rows lines of cols weights>
    <one line of rows biases>
    SECTION decoder
    LAYER ...
    TRACE <count> <values...>
    END

Floats are written with 17 significant digits so a round trip is exact.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .nc_ea import TrainedModel
from .nc_eama import DownlinkSystem, UplinkSystem
from .nn import ACTIVATIONS, DenseLayer, DenseNetwork

MAGIC = "NCEA-MODEL"
VERSION = "v1"


class ArchiveError(ValueError):
    """Malformed, truncated or incompatible model archive."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _layer_lines(layer: DenseLayer) -> list[str]:
    rows, cols = layer.weights.shape
    lines = [f"LAYER {rows} {cols} {layer.activation}"]
    lines += [" ".join(_fmt(v) for v in row) for row in layer.weights]
    lines.append(" ".join(_fmt(v) for v in layer.bias))
    return lines


def _sections(model) -> tuple[dict, list[tuple[str, list[DenseLayer]]]]:
    meta = {
        "es": model.es,
        "ebn0_db": model.ebn0_db,
        "n_ant_train": model.n_ant_train,
        "energy_mode": model.energy_mode,
        "val_loss": model.val_loss,
    }
    if isinstance(model, TrainedModel):
        meta = {"kind": "nc-ea", "n_sub": model.n_sub, "n_msg": model.n_msg, **meta}
        return meta, [("encoder", [model.encoder]), ("decoder", model.decoder.layers)]
    meta = {"n_users": model.n_users, "n_sub": model.n_sub, "n_msg": model.n_msg, **meta, "lam": model.lam}
    meta["val_bler"] = ",".join(_fmt(b) for b in model.val_bler) or "none"
    secs = [(f"encoder {j}", [e]) for j, e in enumerate(model.encoders)]
    if isinstance(model, UplinkSystem):
        meta = {"kind": "eama-ul", **meta}
        secs += [("trunk", model.trunk.layers)] + [(f"head {j}", h.layers) for j, h in enumerate(model.heads)]
    elif isinstance(model, DownlinkSystem):
        meta = {"kind": "eama-dl", **meta}
        secs += [(f"decoder {j}", d.layers) for j, d in enumerate(model.decoders)]
    else:
        raise TypeError(f"cannot archive {type(model).__name__}")
    return meta, secs


def dumps(model) -> str:
    meta, secs = _sections(model)
    lines = [f"{MAGIC} {VERSION}", "config " + " ".join(f"{k}={_fmt(v) if isinstance(v, float) else v}" for k, v in meta.items())]
    for name, layers in secs:
        lines.append(f"SECTION {name}")
        for layer in layers:
            lines += _layer_lines(layer)
    trace = model.loss_trace
    lines.append(" ".join(["TRACE", str(len(trace)), *(_fmt(v) for v in trace)]))
    lines.append("END")
    return "\n".join(lines) + "\n"


def save_model(model, path) -> Path:
    """Write ``model`` atomically (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(model))
    os.replace(tmp, path)
    return path


def _floats(line: str, count: int, where: str) -> np.ndarray:
    try:
        values = np.array([float(v) for v in line.split()])
    except ValueError as exc:
        raise ArchiveError(f"{where}: non-numeric value ({exc})") from None
    if values.size != count:
        raise ArchiveError(f"{where}: expected {count} values, found {values.size}")
    return values


def loads(text: str):
    lines = text.splitlines()
    if not lines or lines[0].split() != [MAGIC, VERSION]:
        head = lines[0] if lines else "<empty>"
        raise ArchiveError(f"not a {MAGIC} {VERSION} archive (header {head!r})")
    if len(lines) < 2 or not lines[1].startswith("config "):
        raise ArchiveError("line 2 must be the config echo")
    try:
        meta = dict(item.split("=", 1) for item in lines[1].split()[1:])
    except ValueError:
        raise ArchiveError("malformed config echo") from None
    if lines[-1].strip() != "END":
        raise ArchiveError("archive is truncated (no END marker)")

    sections: dict[str, list[DenseLayer]] = {}
    trace: list[float] = []
    current = None
    i = 2
    while i < len(lines) - 1:
        words = lines[i].split()
        if not words:
            i += 1
            continue
        tag = words[0]
        if tag == "SECTION":
            current = " ".join(words[1:])
            sections[current] = []
            i += 1
        elif tag == "LAYER":
            if current is None or len(words) != 4:
                raise ArchiveError(f"line {i + 1}: LAYER outside a section or malformed")
            try:
                rows, cols = int(words[1]), int(words[2])
            except ValueError:
                raise ArchiveError(f"line {i + 1}: bad layer shape") from None
            if rows < 1 or cols < 1 or words[3] not in ACTIVATIONS:
                raise ArchiveError(f"line {i + 1}: bad layer header {lines[i]!r}")
            if i + rows + 1 >= len(lines) - 1:
                raise ArchiveError(f"line {i + 1}: layer body is truncated")
            w = np.stack([_floats(lines[i + 1 + r], cols, f"line {i + 2 + r}") for r in range(rows)])
            b = _floats(lines[i + 1 + rows], rows, f"line {i + 2 + rows}")
            sections[current].append(DenseLayer(w, b, words[3]))
            i += rows + 2
        elif tag == "TRACE":
            try:
                count = int(words[1])
            except (IndexError, ValueError):
                raise ArchiveError(f"line {i + 1}: malformed TRACE") from None
            trace = list(_floats(" ".join(words[2:]), count, f"line {i + 1}"))
            i += 1
        else:
            raise ArchiveError(f"line {i + 1}: unexpected tag {tag!r}")
    try:
        return _build(meta, sections, trace)
    except (KeyError, ValueError, IndexError) as exc:
        if isinstance(exc, ArchiveError):
            raise
        raise ArchiveError(f"inconsistent archive: {exc}") from None


def _build(meta, sections, trace):
    kind = meta["kind"]
    common = dict(
        es=float(meta["es"]),
        ebn0_db=float(meta["ebn0_db"]),
        n_ant_train=int(meta["n_ant_train"]),
        energy_mode=meta["energy_mode"],
        loss_trace=trace,
        val_loss=float(meta["val_loss"]),
    )
    if kind == "nc-ea":
        (encoder,) = sections["encoder"]
        model = TrainedModel(encoder, DenseNetwork(sections["decoder"]), **common)
        if (model.n_sub, model.n_msg) != (int(meta["n_sub"]), int(meta["n_msg"])):
            raise ArchiveError("layer shapes disagree with the config echo")
        return model
    n_users = int(meta["n_users"])
    encoders = [sections[f"encoder {j}"][0] for j in range(n_users)]
    extra = dict(lam=float(meta["lam"]))
    extra["val_bler"] = [] if meta["val_bler"] == "none" else [float(v) for v in meta["val_bler"].split(",")]
    if kind == "eama-ul":
        heads = [DenseNetwork(sections[f"head {j}"]) for j in range(n_users)]
        model = UplinkSystem(encoders, DenseNetwork(sections["trunk"]), heads, **common, **extra)
    elif kind == "eama-dl":
        decoders = [DenseNetwork(sections[f"decoder {j}"]) for j in range(n_users)]
        model = DownlinkSystem(encoders, decoders, **common, **extra)
    else:
        raise ArchiveError(f"unknown model kind {kind!r}")
    if (model.n_sub, model.n_msg) != (int(meta["n_sub"]), int(meta["n_msg"])):
        raise ArchiveError("layer shapes disagree with the config echo")
    return model


def load_model(path):
    """Read an archive written by :func:`save_model`."""
    return loads(Path(path).read_text())
