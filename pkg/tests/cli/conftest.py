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

import functools

import pytest
from click.testing import CliRunner

from plcgan.cli import cli as plcgan_cli


@pytest.fixture(scope="function")
def cli():
    try:
        runner = CliRunner(mix_stderr=False)
    except TypeError:  # click 8.2 always keeps stderr separate
        runner = CliRunner()

    return functools.partial(runner.invoke, plcgan_cli)
