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

import math

import numpy as np
import pytest

from plcgan import exceptions
from plcgan.autodiff import Tensor, exp, grad_check
from plcgan.objectives import (
    LossWeights,
    adv_loss_d,
    adv_loss_g,
    l_mag,
    l_sc,
    spectral_losses,
    to_magnitude,
    total_g_loss,
)


@pytest.fixture
def clean():
    return np.random.default_rng(0).uniform(0.1, 2.0, size=(4, 16, 16))


def test_scaling_by_e_costs_one(clean):
    assert l_mag(clean, math.e * clean).item() == pytest.approx(1.0, abs=1e-8)


def test_identical_magnitudes_cost_nothing(clean):
    assert l_mag(clean, clean).item() == 0.0
    assert l_sc(clean, clean).item() == 0.0


def test_silence_has_unit_spectral_convergence(clean):
    assert l_sc(clean, np.zeros_like(clean)).item() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("alpha", np.random.default_rng(7).uniform(0.0, 3.0, size=20))
def test_scaled_estimate_convergence(clean, alpha):
    assert abs(l_sc(clean, alpha * clean).item() - abs(1.0 - alpha)) < 1e-9


def test_spectral_convergence_needs_a_reference():
    with pytest.raises(exceptions.InvalidParameter):
        l_sc(np.zeros((2, 2)), np.ones((2, 2)))


def test_losses_need_matching_shapes():
    with pytest.raises(exceptions.ShapeMismatch):
        l_mag(np.ones((2, 2)), np.ones((2, 3)))


def test_generator_loss_assembles_exactly():
    adv, mag, sc = Tensor(0.7), Tensor(0.02), Tensor(0.3)

    total = total_g_loss(adv, mag, sc, LossWeights(250.0, 250.0))

    assert total.item() == 0.7 + 250.0 * 0.02 + 250.0 * 0.3


def test_default_weights():
    assert LossWeights() == LossWeights(250.0, 250.0)


def test_negative_weights_are_rejected():
    with pytest.raises(exceptions.InvalidParameter):
        LossWeights(-1.0, 1.0)


def test_undecided_discriminator_losses():
    zeros = Tensor(np.zeros((2, 1, 6, 6)))

    assert adv_loss_d(zeros, zeros).item() == pytest.approx(2 * math.log(2))
    assert adv_loss_g(zeros).item() == pytest.approx(math.log(2))


def test_confident_discriminator_has_small_loss():
    real = Tensor(np.full((1, 1, 6, 6), 20.0))
    fake = Tensor(np.full((1, 1, 6, 6), -20.0))

    assert adv_loss_d(real, fake).item() < 1e-8


def test_normalized_values_map_to_the_decibel_range():
    assert to_magnitude(np.array(1.0)).item() == pytest.approx(1.0)
    assert to_magnitude(np.array(-1.0)).item() == pytest.approx(1e-5)
    assert to_magnitude(np.array(0.0), peak=2.0).item() == pytest.approx(2 * 10 ** -2.5)


def test_spectral_losses_of_a_perfect_output():
    target = np.random.default_rng(1).uniform(-1, 1, size=(2, 1, 8, 8))

    magnitude, convergence = spectral_losses(target, target)

    assert magnitude.item() == pytest.approx(0.0)
    assert convergence.item() == pytest.approx(0.0)


def test_spectral_convergence_gradient():
    report = grad_check(lambda a, b: l_sc(exp(a), exp(b)), [(3, 4), (3, 4)])

    assert report.passed, str(report)


def test_spectral_losses_gradient():
    report = grad_check(lambda out, target: sum(spectral_losses(out, target)), [(1, 1, 4, 4), (1, 1, 4, 4)])

    assert report.passed, str(report)


def test_spectral_convergence_gradient_is_finite_at_a_perfect_estimate(clean):
    estimate = Tensor(clean.copy(), requires_grad=True)

    l_sc(clean, estimate).backward()

    assert np.all(np.isfinite(estimate.grad))
    assert np.all(estimate.grad == 0.0)


def test_generator_loss_gradient_is_finite_at_a_perfect_output():
    target = np.random.default_rng(2).uniform(-1, 1, size=(2, 1, 8, 8))
    out = Tensor(target.copy(), requires_grad=True)

    magnitude, convergence = spectral_losses(out, target)
    total_g_loss(0.0, magnitude, convergence).backward()

    assert np.all(np.isfinite(out.grad))
