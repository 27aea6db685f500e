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

import numpy as np
import pytest

from plcgan import exceptions
from plcgan.autodiff import Tensor, backward, sum_
from plcgan.models import (
    DiscriminatorPlan,
    GeneratorPlan,
    build_discriminator,
    build_generator,
    output_size,
    receptive_field,
    receptive_window,
)


@pytest.fixture(scope="module")
def small_generator():
    return build_generator(0, GeneratorPlan.reduced(), dtype=np.float64)


@pytest.fixture(scope="module")
def discriminator():
    return build_discriminator(0, DiscriminatorPlan(), dtype=np.float64)


def _tiles(batch, size, seed=0):
    return np.random.default_rng(seed).uniform(-1, 1, size=(batch, 1, size, size))


def test_receptive_field_of_the_patch_discriminator():
    plan = DiscriminatorPlan()

    assert receptive_field(plan.kernels, plan.strides) == (162, 24)


def test_receptive_field_of_square_kernels():
    assert receptive_field([4] * 5, [2, 2, 2, 1, 1]) == (70, 70)


def test_receptive_field_needs_matching_lengths():
    with pytest.raises(exceptions.InvalidParameter):
        receptive_field([4, 4], [2])


@pytest.mark.parametrize("i, j", [(0, 0), (3, 2), (29, 29)])
def test_receptive_window_of_a_unit(i, j):
    plan = DiscriminatorPlan()

    rows, cols = receptive_window(plan.kernels, plan.strides, plan.paddings, i, j)

    assert rows == (8 * i - 69, 8 * i + 93)
    assert cols == (8 * j, 8 * j + 24)


def test_output_grid_sizes():
    plan = DiscriminatorPlan()

    for axis in (0, 1):
        assert output_size(256, plan.kernels, plan.strides, plan.paddings, axis) == 30
        assert output_size(64, plan.kernels, plan.strides, plan.paddings, axis) == 6


def test_discriminator_on_reduced_tiles(discriminator):
    logits = discriminator(_tiles(2, 64), _tiles(2, 64, seed=1), train=False)

    assert logits.shape == (2, 1, 6, 6)


def test_discriminator_unit_sees_only_its_window(discriminator):
    plan = DiscriminatorPlan()
    candidate = Tensor(_tiles(1, 64), requires_grad=True)

    logits = discriminator(_tiles(1, 64, seed=2), candidate, train=False)
    mask = np.zeros(logits.shape)
    mask[0, 0, 3, 2] = 1.0
    backward(sum_(logits * mask))

    touched = np.flatnonzero(np.abs(candidate.grad[0, 0]).sum(axis=0))
    _, (first, stop) = receptive_window(plan.kernels, plan.strides, plan.paddings, 3, 2)
    assert touched.min() == first
    assert touched.max() == stop - 1


def test_discriminator_rejects_mismatched_pairs(discriminator):
    with pytest.raises(exceptions.ShapeMismatch):
        discriminator(_tiles(1, 64), _tiles(2, 64), train=False)


@pytest.mark.slow
def test_discriminator_on_full_tiles(discriminator):
    logits = discriminator(_tiles(1, 256), _tiles(1, 256, seed=1), train=False)

    assert logits.shape == (1, 1, 30, 30)


def test_generator_output_shape_and_range(small_generator):
    out = small_generator.predict(_tiles(3, 64))

    assert out.shape == (3, 1, 64, 64)
    assert np.all(np.abs(out) < 1.0)


def test_generator_rejects_the_wrong_size(small_generator):
    with pytest.raises(exceptions.ShapeMismatch):
        small_generator.predict(_tiles(1, 32))


def test_generator_plan_must_match_its_depth():
    with pytest.raises(exceptions.InvalidParameter):
        GeneratorPlan(input_size=128)


def test_generator_plan_survives_a_dict():
    plan = GeneratorPlan.reduced()

    assert GeneratorPlan.from_dict(plan.to_dict()) == plan


def test_discriminator_plan_survives_a_dict():
    plan = DiscriminatorPlan()

    assert DiscriminatorPlan.from_dict(plan.to_dict()) == plan


def test_generator_parameter_names(small_generator):
    names = set(small_generator.params)

    assert {"enc1.weight", "enc1.bias", "enc6.weight", "dec6.weight", "dec6.bias"} <= names
    assert "enc1.bn.gamma" not in names
    assert "enc6.bn.gamma" not in names
    assert "dec5.bn.gamma" in names
    assert "dec6.bn.gamma" not in names


def test_skip_connections_double_decoder_inputs(small_generator):
    channels = GeneratorPlan.reduced().channels

    assert small_generator.params["dec1.weight"].shape[0] == channels[-1]
    assert small_generator.params["dec2.weight"].shape[0] == 2 * channels[-2]
    assert small_generator.params["dec6.weight"].shape[:2] == (2 * channels[0], 1)


def test_building_is_deterministic():
    a = build_generator(5, GeneratorPlan.reduced())
    b = build_generator(5, GeneratorPlan.reduced())

    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)


def test_deterministic_prediction_ignores_the_seed(small_generator):
    x = _tiles(1, 64)

    a = small_generator.predict(x, seed=1, stochastic=False)
    b = small_generator.predict(x, seed=2, stochastic=False)

    assert np.array_equal(a, b)


def test_stochastic_prediction_depends_on_the_seed(small_generator):
    x = _tiles(1, 64)

    a = small_generator.predict(x, seed=1, stochastic=True)
    b = small_generator.predict(x, seed=1, stochastic=True)
    c = small_generator.predict(x, seed=2, stochastic=True)

    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_prediction_leaves_running_statistics_alone(small_generator):
    before = {k: v.copy() for k, v in small_generator.state_arrays().items()}

    small_generator.predict(_tiles(2, 64))

    after = small_generator.state_arrays()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_state_arrays_load_into_a_fresh_network(small_generator):
    other = build_generator(99, GeneratorPlan.reduced(), dtype=np.float64)
    other.load_state_arrays(small_generator.state_arrays())

    x = _tiles(1, 64)
    assert np.array_equal(other.predict(x), small_generator.predict(x))


def test_loading_incomplete_state_fails(small_generator):
    arrays = dict(small_generator.state_arrays())
    arrays.pop("enc1.weight")

    with pytest.raises(exceptions.CheckpointError):
        build_generator(0, GeneratorPlan.reduced()).load_state_arrays(arrays)


def test_zero_final_discriminator_is_undecided():
    d = build_discriminator(0, zero_final=True, dtype=np.float64)

    logits = d(_tiles(1, 64), _tiles(1, 64, seed=3), train=False)

    assert np.all(logits.data == 0.0)


@pytest.mark.slow
def test_full_generator_shape():
    generator = build_generator(0, GeneratorPlan.full())

    out = generator.predict(_tiles(1, 256).astype(np.float32))

    assert out.shape == (1, 1, 256, 256)
    assert out.dtype == np.float32
