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
import os
from logging import handlers
from pathlib import Path

from . import names, settings

logger = logging.getLogger("plcgan")


def log_file_path() -> Path:
    return Path(settings["PLCGAN_DIR"]) / names.LOGS_DIR / names.LOG_FILE


def setup_internal_file_logger():
    path = log_file_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    _logfile_handler = handlers.RotatingFileHandler(
        filename=path, mode="a", maxBytes=10 * 1024 * 1024, backupCount=4,  # 10 MB
    )
    _fmt = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    _logfile_handler.setFormatter(_fmt)
    _logfile_handler.setLevel(logging.DEBUG)
    logger.addHandler(_logfile_handler)


def ensure_plcgan_dir_exists():
    _plcgan_dir = Path(settings["PLCGAN_DIR"])
    try:
        did_not_exist = not _plcgan_dir.exists()

        for dir in (_plcgan_dir, _plcgan_dir / names.LOGS_DIR):
            dir.mkdir(parents=True, exist_ok=True)

        if did_not_exist:
            logger.debug(f"Created plcgan dir at {_plcgan_dir}")
    except PermissionError as e:
        raise PermissionError(f"The plcgan directory ({_plcgan_dir}) needs to be writable") from e


if os.getenv("PLCGAN_NO_LOG_FILE") != "1":
    try:
        ensure_plcgan_dir_exists()
        setup_internal_file_logger()
    except PermissionError:
        logger.warning("Could not create the plcgan directory; file logging is disabled")
