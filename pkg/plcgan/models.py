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

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import exceptions, utils
from .autodiff import (
    BatchNormStats,
    Tensor,
    as_tensor,
    batch_norm2d,
    concat_channels,
    conv2d,
    conv_transpose2d,
    dropout,
    leaky_relu,
    no_grad,
    parameter,
    relu,
    tanh,
)

logger = logging.getLogger(__name__)

Pair = Union[int, Tuple[int, int]]

INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorPlan:
    """
    The shape of the U-Net generator.

    ``channels[k]`` is the width of encoder stage ``k + 1``; every stage
    halves the spatial size, so the input side must be ``2 ** len(channels)``.
    """

    input_size: int = 256
    channels: Tuple[int, ...] = (64, 128, 256, 512, 512, 512, 512, 512)
    kernel: int = 4
    stride: int = 2
    padding: int = 1
    dropout: float = 0.5
    dropout_blocks: int = 3
    slope: float = 0.2

    def __post_init__(self):
        if self.input_size != 2 ** len(self.channels):
            raise exceptions.InvalidParameter(
                f"A {len(self.channels)}-stage generator needs {2 ** len(self.channels)}-pixel inputs, "
                f"not {self.input_size}"
            )

    @classmethod
    def full(cls) -> "GeneratorPlan":
        return cls()

    @classmethod
    def reduced(cls) -> "GeneratorPlan":
        """A narrower, shallower generator for 64 x 64 inputs."""
        return cls(input_size=64, channels=(32, 64, 128, 256, 256, 256))

    @property
    def n_stages(self) -> int:
        return len(self.channels)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorPlan":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


@dataclass(frozen=True)
class DiscriminatorPlan:
    """
    The shape of the conditional patch discriminator.

    The default has five layers of 8 x 2 kernels, which cover 162 frequency
    bins by 24 frames of the input per output unit.
    """

    channels: Tuple[int, ...] = (64, 128, 256, 512, 1)
    kernels: Tuple[Tuple[int, int], ...] = ((8, 2),) * 5
    strides: Tuple[int, ...] = (2, 2, 2, 1, 1)
    paddings: Tuple[Tuple[int, int], ...] = ((3, 0),) * 5
    norm_layers: Tuple[int, ...] = (1, 2, 3)
    in_channels: int = 2
    slope: float = 0.2

    def __post_init__(self):
        n = len(self.channels)
        if not (len(self.kernels) == len(self.strides) == len(self.paddings) == n):
            raise exceptions.InvalidParameter(
                "Discriminator channels, kernels, strides and paddings must have the same length"
            )

    @property
    def n_layers(self) -> int:
        return len(self.channels)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorPlan":
        return cls(
            channels=tuple(d["channels"]),
            kernels=tuple(tuple(k) for k in d["kernels"]),
            strides=tuple(d["strides"]),
            paddings=tuple(tuple(p) for p in d["paddings"]),
            norm_layers=tuple(d["norm_layers"]),
            in_channels=d["in_channels"],
            slope=d["slope"],
        )


def _check_input(x: Tensor, size: int, what: str):
    if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (size, size):
        raise exceptions.ShapeMismatch(
            f"{what} expects (batch, 1, {size}, {size}) inputs, not {x.shape}"
        )


class Network:
    """Named parameters plus batch-norm running statistics."""

    def __init__(self, params: Dict[str, Tensor], stats: Dict[str, BatchNormStats]):
        self.params = params
        self.stats = stats

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Every parameter and running statistic, by name."""
        arrays = {name: p.data for name, p in self.params.items()}
        for name, s in self.stats.items():
            arrays[f"{name}.running_mean"] = s.mean
            arrays[f"{name}.running_var"] = s.var
        return arrays

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        """Copy values into this network's parameters and statistics; names and shapes must match."""
        own = self.state_arrays()
        missing = sorted(set(own) - set(arrays))
        if missing:
            raise exceptions.CheckpointError(f"Missing arrays: {', '.join(missing)}")
        for name, target in own.items():
            value = np.asarray(arrays[name])
            if value.shape != target.shape:
                raise exceptions.CheckpointError(
                    f"Array {name} has shape {value.shape}, expected {target.shape}"
                )
            target[...] = value

    def _bn(self, name: str, x: Tensor, train: bool) -> Tensor:
        return batch_norm2d(
            x, self.params[f"{name}.gamma"], self.params[f"{name}.beta"], self.stats[name], train=train
        )


def _init_conv(g: np.random.Generator, shape, dtype) -> np.ndarray:
    return (g.standard_normal(shape) * INIT_STD).astype(dtype)


def _add_bn(params, stats, g, name: str, channels: int, dtype):
    params[f"{name}.gamma"] = parameter(
        (1.0 + INIT_STD * g.standard_normal(channels)).astype(dtype), name=f"{name}.gamma"
    )
    params[f"{name}.beta"] = parameter(np.zeros(channels, dtype=dtype), name=f"{name}.beta")
    stats[name] = BatchNormStats.fresh(channels, dtype=dtype)


class Generator(Network):
    """
    A U-Net that maps a lossy log-magnitude tile to an estimate of the clean tile.

    Encoder stage ``k`` feeds decoder stage ``n - k`` through a skip
    connection. The first three decoder blocks apply dropout, which also
    stays active at inference unless ``stochastic=False``.
    """

    def __init__(self, plan: GeneratorPlan, params, stats):
        super().__init__(params, stats)
        self.plan = plan

    @property
    def input_size(self) -> int:
        return self.plan.input_size

    def forward(
        self, x: Union[Tensor, np.ndarray], train: bool = True, seed: int = 0, stochastic: bool = True
    ) -> Tensor:
        x = as_tensor(x)
        _check_input(x, self.plan.input_size, "Generator")
        n = self.plan.n_stages
        s, p = self.plan.stride, self.plan.padding

        h = conv2d(x, self.params["enc1.weight"], self.params["enc1.bias"], s, p)
        skips = [h]
        for stage in range(2, n + 1):
            name = f"enc{stage}"
            h = conv2d(
                leaky_relu(h, self.plan.slope), self.params[f"{name}.weight"], self.params[f"{name}.bias"], s, p
            )
            if stage < n:
                h = self._bn(f"{name}.bn", h, train)
                skips.append(h)

        for stage in range(1, n + 1):
            name = f"dec{stage}"
            inp = h if stage == 1 else concat_channels(h, skips[n - stage])
            h = conv_transpose2d(relu(inp), self.params[f"{name}.weight"], self.params[f"{name}.bias"], s, p)
            if stage < n:
                h = self._bn(f"{name}.bn", h, train)
                if stage <= self.plan.dropout_blocks:
                    h = dropout(h, self.plan.dropout, seed=(seed, stage), train=stochastic)
            else:
                h = tanh(h)
        return h

    __call__ = forward

    def predict(self, x: np.ndarray, seed: int = 0, stochastic: bool = False) -> np.ndarray:
        """Run in inference mode (running batch statistics, no graph) and return an array."""
        with no_grad():
            return self.forward(
                np.asarray(x, dtype=self.dtype), train=False, seed=seed, stochastic=stochastic
            ).data


def build_generator(seed: int, plan: Optional[GeneratorPlan] = None, dtype=np.float32) -> Generator:
    """Initialize weights from N(0, 0.02), batch-norm scales from N(1, 0.02), and biases at 0."""
    plan = plan or GeneratorPlan()
    ch = plan.channels
    n = plan.n_stages
    k = plan.kernel
    params: Dict[str, Tensor] = {}
    stats: Dict[str, BatchNormStats] = {}

    for stage in range(1, n + 1):
        g = utils.rng(seed, 0, stage)
        name = f"enc{stage}"
        c_in = 1 if stage == 1 else ch[stage - 2]
        params[f"{name}.weight"] = parameter(_init_conv(g, (ch[stage - 1], c_in, k, k), dtype), name=f"{name}.weight")
        params[f"{name}.bias"] = parameter(np.zeros(ch[stage - 1], dtype=dtype), name=f"{name}.bias")
        if 1 < stage < n:
            _add_bn(params, stats, g, f"{name}.bn", ch[stage - 1], dtype)

    for stage in range(1, n + 1):
        g = utils.rng(seed, 1, stage)
        name = f"dec{stage}"
        c_in = ch[n - 1] if stage == 1 else 2 * ch[n - stage]
        c_out = 1 if stage == n else ch[n - stage - 1]
        params[f"{name}.weight"] = parameter(_init_conv(g, (c_in, c_out, k, k), dtype), name=f"{name}.weight")
        params[f"{name}.bias"] = parameter(np.zeros(c_out, dtype=dtype), name=f"{name}.bias")
        if stage < n:
            _add_bn(params, stats, g, f"{name}.bn", c_out, dtype)

    generator = Generator(plan, params, stats)
    logger.debug(f"Built generator with {generator.parameter_count()} parameters")
    return generator


class Discriminator(Network):
    """
    A patch discriminator over a (condition, candidate) pair of tiles.

    Each output logit judges one local patch of the pair as real or fake.
    """

    def __init__(self, plan: DiscriminatorPlan, params, stats):
        super().__init__(params, stats)
        self.plan = plan

    def forward(
        self, condition: Union[Tensor, np.ndarray], candidate: Union[Tensor, np.ndarray], train: bool = True
    ) -> Tensor:
        condition, candidate = as_tensor(condition), as_tensor(candidate)
        if condition.shape != candidate.shape:
            raise exceptions.ShapeMismatch(
                f"Discriminator inputs differ in shape: {condition.shape} vs {candidate.shape}"
            )
        _check_input(condition, condition.shape[-1], "Discriminator")

        h = concat_channels(condition, candidate)
        last = self.plan.n_layers - 1
        for layer in range(self.plan.n_layers):
            name = f"layer{layer + 1}"
            h = conv2d(
                h,
                self.params[f"{name}.weight"],
                self.params[f"{name}.bias"],
                self.plan.strides[layer],
                self.plan.paddings[layer],
            )
            if layer in self.plan.norm_layers:
                h = self._bn(f"{name}.bn", h, train)
            if layer < last:
                h = leaky_relu(h, self.plan.slope)
        return h

    __call__ = forward


def build_discriminator(
    seed: int, plan: Optional[DiscriminatorPlan] = None, dtype=np.float32, zero_final: bool = False
) -> Discriminator:
    plan = plan or DiscriminatorPlan()
    params: Dict[str, Tensor] = {}
    stats: Dict[str, BatchNormStats] = {}

    c_in = plan.in_channels
    for layer, (c_out, (kh, kw)) in enumerate(zip(plan.channels, plan.kernels)):
        g = utils.rng(seed, 2, layer)
        name = f"layer{layer + 1}"
        weight = _init_conv(g, (c_out, c_in, kh, kw), dtype)
        if zero_final and layer == plan.n_layers - 1:
            weight[...] = 0
        params[f"{name}.weight"] = parameter(weight, name=f"{name}.weight")
        params[f"{name}.bias"] = parameter(np.zeros(c_out, dtype=dtype), name=f"{name}.bias")
        if layer in plan.norm_layers:
            _add_bn(params, stats, g, f"{name}.bn", c_out, dtype)
        c_in = c_out

    discriminator = Discriminator(plan, params, stats)
    logger.debug(f"Built discriminator with {discriminator.parameter_count()} parameters")
    return discriminator


def generator_forward(
    generator: Generator, x: Union[Tensor, np.ndarray], train: bool = True, seed: int = 0, stochastic: bool = True
) -> Tensor:
    return generator.forward(x, train=train, seed=seed, stochastic=stochastic)


def discriminator_forward(
    discriminator: Discriminator,
    condition: Union[Tensor, np.ndarray],
    candidate: Union[Tensor, np.ndarray],
    train: bool = True,
) -> Tensor:
    return discriminator.forward(condition, candidate, train=train)


def _axis_pairs(values: Sequence[Pair]) -> List[Tuple[int, int]]:
    return [(v, v) if isinstance(v, int) else (int(v[0]), int(v[1])) for v in values]


def receptive_field(kernels: Sequence[Pair], strides: Sequence[Pair]) -> Tuple[int, int]:
    """
    The input extent seen by one output unit of a stack of convolutions, per axis.

    ``r = 1 + sum_l (k_l - 1) * prod_{m < l} s_m``.
    """
    if len(kernels) == 0:
        raise exceptions.InvalidParameter("Need at least one layer")
    if len(kernels) != len(strides):
        raise exceptions.InvalidParameter(
            f"Got {len(kernels)} kernels but {len(strides)} strides"
        )

    extent = []
    for axis in range(2):
        r, jump = 1, 1
        for (k, s) in zip(_axis_pairs(kernels), _axis_pairs(strides)):
            r += (k[axis] - 1) * jump
            jump *= s[axis]
        extent.append(r)
    return extent[0], extent[1]


def receptive_window(
    kernels: Sequence[Pair], strides: Sequence[Pair], paddings: Sequence[Pair], i: int, j: int
) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """The half-open input ranges ``((row_start, row_stop), (col_start, col_stop))`` seen by output unit ``(i, j)``."""
    rf = receptive_field(kernels, strides)
    windows = []
    for axis, index in enumerate((i, j)):
        start, jump = 0, 1
        for (s, p) in zip(_axis_pairs(strides), _axis_pairs(paddings)):
            start -= p[axis] * jump
            jump *= s[axis]
        start += index * jump
        windows.append((start, start + rf[axis]))
    return windows[0], windows[1]


def output_size(size: int, kernels: Sequence[Pair], strides: Sequence[Pair], paddings: Sequence[Pair], axis: int = 0) -> int:
    for k, s, p in zip(_axis_pairs(kernels), _axis_pairs(strides), _axis_pairs(paddings)):
        size = (size + 2 * p[axis] - k[axis]) // s[axis] + 1
    return size
