# Copyright 2026 PhaseForge Authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
