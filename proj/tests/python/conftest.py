# SPDX-License-Identifier: Apache-2.0
"""Make the smoke tests runnable both after `pip install -e .` and straight
from a CMake build tree (ctest sets CRICBENCH_CORE_DIR to the directory
holding the compiled _core module)."""

import os
import sys

try:
    import cricbench  # noqa: F401
except ImportError:
    core_dir = os.environ.get("CRICBENCH_CORE_DIR")
    if core_dir:
        sys.path.insert(0, core_dir)
    import _core

    # the package re-exports the _core surface one-to-one
    sys.modules["cricbench"] = _core
