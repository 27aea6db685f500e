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

import pytest

import plcgan
from plcgan.settings import BASE_SETTINGS, Settings, _from_environment, nested_merge


def test_empty_settings_have_one_map():
    s = Settings()

    assert s.maps == [{}]


def test_dotted_keys_reach_nested_tables():
    s = Settings({"TRAIN": {"EPOCHS": 3}})

    assert s["TRAIN.EPOCHS"] == 3
    assert s.get("TRAIN.EPOCHS") == 3


def test_missing_key_raises_missing_setting():
    with pytest.raises(plcgan.exceptions.MissingSetting):
        Settings()["TRAIN.EPOCHS"]


def test_get_with_missing_key_returns_default():
    assert Settings().get("TRAIN.EPOCHS", default=7) == 7


def test_missing_setting_is_a_usage_error():
    assert plcgan.exceptions.MissingSetting.exit_status == plcgan.exceptions.USAGE


def test_setitem_writes_to_first_map_only():
    s = Settings({}, {"TRAIN": {"EPOCHS": 50, "N_G": 10}})

    s["TRAIN.EPOCHS"] = 2

    assert s.maps[0] == {"TRAIN": {"EPOCHS": 2}}
    assert s["TRAIN.N_G"] == 10
    assert s.maps[1]["TRAIN"]["EPOCHS"] == 50


def test_earlier_maps_win():
    user = Settings({"SEED": 3})
    base = Settings({"SEED": 0, "TRAIN": {"LR": 0.0002}})

    s = Settings.from_settings(user, base)

    assert s["SEED"] == 3
    assert s["TRAIN.LR"] == 0.0002


def test_to_dict_merges_nested_tables():
    s = Settings({"CONCEAL": {"GLA_ITERS": 4}}, {"CONCEAL": {"GLA_ITERS": 10, "STOCHASTIC": True}})

    assert s.to_dict() == {"CONCEAL": {"GLA_ITERS": 4, "STOCHASTIC": True}}


def test_nested_merge_does_not_mutate_inputs():
    a = {"EVAL": {"JOBS": 1}}
    b = {"EVAL": {"RATES": [0.1]}}

    merged = nested_merge(a, b)

    assert merged == {"EVAL": {"JOBS": 1, "RATES": [0.1]}}
    assert a == {"EVAL": {"JOBS": 1}}


def test_replace_swaps_the_whole_stack():
    s = Settings({"SEED": 1})
    s.replace(Settings({"SEED": 2}))

    assert s["SEED"] == 2


def test_prepend_overrides_and_append_does_not():
    s = Settings({"SEED": 1})
    s.prepend({"SEED": 2})
    s.append({"SEED": 3})

    assert s["SEED"] == 2
    assert len(s.maps) == 3


def test_save_and_load_through_toml(tmp_path):
    path = tmp_path / "rc.toml"
    Settings({"TRAIN": {"EPOCHS": 4, "RATES": [0.1, 0.3]}}).save(path)

    loaded = Settings.load(path)

    assert loaded["TRAIN.EPOCHS"] == 4
    assert loaded["TRAIN.RATES"] == [0.1, 0.3]


def test_base_settings_carry_training_defaults():
    assert BASE_SETTINGS["TRAIN.N_G"] == 10
    assert BASE_SETTINGS["TRAIN.LAMBDA_MAG"] == 250.0
    assert BASE_SETTINGS["TRAIN.LAMBDA_SC"] == 250.0
    assert BASE_SETTINGS["CONCEAL.GLA_ITERS"] == 10
    assert BASE_SETTINGS["TRAIN.SPLIT"] == [0.8, 0.1, 0.1]


def test_environment_seed_is_read(monkeypatch):
    monkeypatch.setenv("B2B_SEED", "17")

    assert _from_environment() == {"SEED": 17}


def test_non_integer_environment_seed_is_ignored(monkeypatch):
    monkeypatch.setenv("B2B_SEED", "abc")

    assert _from_environment() == {}


def test_global_settings_start_from_base():
    assert plcgan.settings["TRAIN.EPOCHS"] == BASE_SETTINGS["TRAIN.EPOCHS"]
