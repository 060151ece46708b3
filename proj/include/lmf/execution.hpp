#pragma once

namespace lmf {

// Selects the implementation of a data-parallel kernel. Serial is the
// reference path; Parallel uses OpenMP when available and must produce
// bit-identical results.
enum class Execution { Serial, Parallel };

// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace lmf
