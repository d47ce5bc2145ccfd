"""Checkpoint file format: versioned magic line, JSON header, raw tensors.

Layout: the magic line, one JSON line describing config/vocabulary/epoch
and the tensor manifest, then the tensors' bytes concatenated in manifest
order (C-order, little-endian float64). Writes go through a temp file and
an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from sentigen.model.config import ModelConfig
from sentigen.model.network import PointerSeq2Seq
from sentigen.model.vocab import Vocabulary

MAGIC = b"SENTIGEN-CKPT-1\n"


def save_checkpoint(
    path: str | Path,
    model: PointerSeq2Seq,
    vocab: Vocabulary,
    epoch: int = 0,
) -> None:
    path = Path(path)
    manifest = []
    blobs = []
    for p in model.params:
        arr = np.ascontiguousarray(p.value, dtype="<f8")
        manifest.append({"name": p.name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "config": model.config.to_dict(),
        "vocab": vocab.to_list(),
        "seed": model.config.seed,
        "epoch": epoch,
        "tensors": manifest,
    }
    header_bytes = (json.dumps(header, ensure_ascii=False) + "\n").encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(header_bytes)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_checkpoint(path: str | Path) -> tuple[PointerSeq2Seq, Vocabulary, int]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a sentigen checkpoint (bad magic)")
        header = json.loads(fh.readline().decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        vocab = Vocabulary.from_list(header["vocab"])
        state = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path} is truncated at tensor {entry['name']!r}")
            state[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    model = PointerSeq2Seq(config)
    model.params.load_state_dict(state)
    return model, vocab, int(header["epoch"])
