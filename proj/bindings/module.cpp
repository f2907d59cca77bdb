// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <pybind11/pybind11.h>

PYBIND11_MODULE(_core, m) { m.attr("__version__") = "0.1.0"; }
