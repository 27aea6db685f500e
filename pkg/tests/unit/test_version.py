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
from plcgan.utils import parse_version


@pytest.mark.parametrize(
    "version, expected",
    [
        ("0.1.0", (0, 1, 0, None, None)),
        ("0.1.0a2", (0, 1, 0, "a", 2)),
        ("1.3.0b1", (1, 3, 0, "b", 1)),
        ("10.20.30", (10, 20, 30, None, None)),
    ],
)
def test_parse_version(version, expected):
    assert parse_version(version) == expected


def test_version_string_names_the_package():
    assert plcgan.version() == f"plcgan version {plcgan.__version__}"


def test_version_info_matches_version():
    major, minor, micro, *_ = plcgan.version_info()

    assert plcgan.__version__.startswith(f"{major}.{minor}")
