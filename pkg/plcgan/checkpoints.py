# Copyright 2022 The plcgan Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Binary checkpoints.

Layout (all integers little-endian unsigned 32-bit)::

    magic  b"B2B1"
    header length, then a UTF-8 JSON header
    record count, then per record:
        name length, UTF-8 name, rank, one size per dimension, float32 data

The header holds the generator (and optional discriminator) plans plus
free-form metadata. Records hold parameters, batch-norm running statistics
and, optionally, Adam moments.
"""

import json
import logging
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from . import exceptions, names
from .autodiff import AdamState
from .models import Discriminator, DiscriminatorPlan, Generator, GeneratorPlan, build_discriminator, build_generator

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    header: dict
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def generator(self, dtype=np.float32) -> Generator:
        plan = GeneratorPlan.from_dict(self.header["generator"])
        generator = build_generator(0, plan, dtype=dtype)
        generator.load_state_arrays(_strip(self.arrays, "G."))
        return generator

    def discriminator(self, dtype=np.float32) -> Optional[Discriminator]:
        if self.header.get("discriminator") is None:
            return None
        plan = DiscriminatorPlan.from_dict(self.header["discriminator"])
        discriminator = build_discriminator(0, plan, dtype=dtype)
        discriminator.load_state_arrays(_strip(self.arrays, "D."))
        return discriminator

    def adam_state(self, prefix: str, network) -> Optional[AdamState]:
        """Rebuild the optimizer state saved for ``network`` under ``prefix`` (``"G"`` or ``"D"``)."""
        saved = self.header.get("adam", {}).get(prefix)
        if saved is None:
            return None
        state = AdamState(lr=saved["lr"], beta1=saved["beta1"], beta2=saved["beta2"], eps=saved["eps"])
        state.step_count = saved["step_count"]
        try:
            state.m = [self.arrays[f"adam.{prefix}.m.{name}"].copy() for name in network.params]
            state.v = [self.arrays[f"adam.{prefix}.v.{name}"].copy() for name in network.params]
        except KeyError as e:
            raise exceptions.CheckpointError(f"Missing optimizer moment {e}") from e
        return state

    @property
    def meta(self) -> dict:
        return self.header.get("meta", {})


def _strip(arrays: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    return {name[len(prefix) :]: a for name, a in arrays.items() if name.startswith(prefix)}


def _adam_records(prefix: str, network, state: AdamState) -> Dict[str, np.ndarray]:
    records = {}
    for name, m, v in zip(network.params, state.m, state.v):
        records[f"adam.{prefix}.m.{name}"] = m
        records[f"adam.{prefix}.v.{name}"] = v
    return records


def _adam_header(state: AdamState) -> dict:
    return dict(
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps, step_count=state.step_count
    )


def save_checkpoint(
    path: Union[str, Path],
    generator: Generator,
    discriminator: Optional[Discriminator] = None,
    g_state: Optional[AdamState] = None,
    d_state: Optional[AdamState] = None,
    meta: Optional[dict] = None,
) -> Path:
    path = Path(path)
    header = {
        "version": FORMAT_VERSION,
        "generator": generator.plan.to_dict(),
        "discriminator": discriminator.plan.to_dict() if discriminator is not None else None,
        "adam": {},
        "meta": meta or {},
    }

    arrays = {f"G.{name}": a for name, a in generator.state_arrays().items()}
    if discriminator is not None:
        arrays.update({f"D.{name}": a for name, a in discriminator.state_arrays().items()})
    for prefix, network, state in (("G", generator, g_state), ("D", discriminator, d_state)):
        if state is not None and network is not None and state.m:
            header["adam"][prefix] = _adam_header(state)
            arrays.update(_adam_records(prefix, network, state))

    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks: List[bytes] = [names.CHECKPOINT_MAGIC, U32.pack(len(header_bytes)), header_bytes]
    chunks.append(U32.pack(len(arrays)))
    for name, array in arrays.items():
        encoded = name.encode("utf-8")
        chunks.append(U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(U32.pack(array.ndim))
        chunks.extend(U32.pack(d) for d in array.shape)
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"".join(chunks))
    except OSError as e:
        raise exceptions.UnwritablePath(f"Could not write checkpoint {path}: {e}") from e

    logger.debug(f"Saved checkpoint with {len(arrays)} arrays to {path}")
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise exceptions.CheckpointError(f"Checkpoint {self.path} is truncated")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self) -> int:
        return U32.unpack(self.take(U32.size))[0]


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise exceptions.CheckpointError(f"No checkpoint at {path}")

    reader = _Reader(path.read_bytes(), path)
    if reader.take(len(names.CHECKPOINT_MAGIC)) != names.CHECKPOINT_MAGIC:
        raise exceptions.CheckpointError(f"{path} is not a checkpoint (bad magic)")

    try:
        header = json.loads(reader.take(reader.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise exceptions.CheckpointError(f"Checkpoint {path} has a corrupt header") from e
    if header.get("version") != FORMAT_VERSION:
        raise exceptions.CheckpointError(
            f"Checkpoint {path} has format version {header.get('version')}, expected {FORMAT_VERSION}"
        )

    arrays = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape).copy()

    if reader.offset != len(reader.data):
        raise exceptions.CheckpointError(f"Checkpoint {path} has trailing bytes")

    logger.debug(f"Loaded checkpoint with {len(arrays)} arrays from {path}")
    return Checkpoint(header=header, arrays=arrays)


def best_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + names.BEST_SUFFIX)


def copy_best(path: Union[str, Path]) -> Path:
    """Copy a checkpoint to its ``.best`` name."""
    target = best_path(path)
    try:
        shutil.copyfile(path, target)
    except OSError as e:
        raise exceptions.UnwritablePath(f"Could not copy checkpoint to {target}: {e}") from e
    return target
