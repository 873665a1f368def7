"""Run manifests and plain-text file formats."""
from __future__ import annotations

import hashlib
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Provenance record written next to every output file."""

    command: str
    inputs: dict = field(default_factory=dict)     # path -> sha256
    parameters: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    python: str = field(default_factory=platform.python_version)
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)    # path -> sha256

    def add_input(self, path):
        if path is not None and Path(path).is_file():
            self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path):
        self.outputs[str(path)] = sha256_file(path)

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def manifest_path(out):
    return Path(str(out) + ".manifest.json")


def fmt(x):
    """17 significant digits, the round-trip precision of a double."""
    return f"{float(x):.17g}"


def write_face_csv(path, g, values, stderr=None):
    """Per-face table: face id, centroid, value (and standard error)."""
    cent = g.face_centroids
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("face,x,y,value" + (",stderr" if stderr is not None else "") + "\n")
        for f in range(g.n_faces):
            row = [str(f), fmt(cent[f, 0]), fmt(cent[f, 1]), fmt(values[f])]
            if stderr is not None:
                row.append(fmt(stderr[f]))
            fh.write(",".join(row) + "\n")


def read_face_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data
