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
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from . import exceptions
from .autodiff import Tensor, as_tensor, bce_with_logits, exp, l1_mean, log, mul, sqrt, sub, sum_
from .tf_transform import EPS, SPAN_DB

logger = logging.getLogger(__name__)

Magnitude = Union[Tensor, np.ndarray]

# d(magnitude)/d(value) scale: magnitude = peak * exp(LOG_SCALE * (value - 1))
LOG_SCALE = SPAN_DB / 20 * math.log(10)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the magnitude and spectral-convergence terms in the generator loss."""

    magnitude: float = 250.0
    convergence: float = 250.0

    def __post_init__(self):
        if self.magnitude < 0 or self.convergence < 0:
            raise exceptions.InvalidParameter(
                f"Loss weights must be non-negative, not ({self.magnitude}, {self.convergence})"
            )


def _check_shapes(a: Tensor, b: Tensor, what: str):
    if a.shape != b.shape:
        raise exceptions.ShapeMismatch(f"{what}: shapes {a.shape} and {b.shape} differ")


def l_mag(clean: Magnitude, estimate: Magnitude) -> Tensor:
    """Mean absolute difference of log magnitudes."""
    clean, estimate = as_tensor(clean), as_tensor(estimate)
    _check_shapes(clean, estimate, "l_mag")
    return l1_mean(log(clean + EPS), log(estimate + EPS))


def l_sc(clean: Magnitude, estimate: Magnitude) -> Tensor:
    """Spectral convergence, ``||clean - estimate|| / ||clean||``."""
    clean, estimate = as_tensor(clean), as_tensor(estimate)
    _check_shapes(clean, estimate, "l_sc")
    if not np.any(clean.data):
        raise exceptions.InvalidParameter("Spectral convergence is undefined for an all-zero reference")
    diff = sub(clean, estimate)
    return sqrt(sum_(mul(diff, diff))) / sqrt(sum_(mul(clean, clean)))


def adv_loss_d(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    """Discriminator loss: real patches should score 1 and generated patches 0."""
    return bce_with_logits(real_logits, 1.0) + bce_with_logits(fake_logits, 0.0)


def adv_loss_g(fake_logits: Tensor) -> Tensor:
    """Generator adversarial loss: generated patches should score 1."""
    return bce_with_logits(fake_logits, 1.0)


def total_g_loss(adv, magnitude, convergence, weights: LossWeights = LossWeights()):
    return adv + weights.magnitude * magnitude + weights.convergence * convergence


def to_magnitude(values: Union[Tensor, np.ndarray], peak: float = 1.0) -> Tensor:
    """Differentiable map from normalized log-magnitude values to linear magnitudes."""
    return exp((as_tensor(values) - 1.0) * LOG_SCALE) * peak


def spectral_losses(output: Union[Tensor, np.ndarray], target: Union[Tensor, np.ndarray]) -> Tuple[Tensor, Tensor]:
    """
    ``(l_mag, l_sc)`` between normalized generator output and target tiles.

    Both losses are invariant to a common gain, so a unit peak is used for both tiles.
    """
    clean = to_magnitude(target)
    estimate = to_magnitude(output)
    return l_mag(clean, estimate), l_sc(clean, estimate)
