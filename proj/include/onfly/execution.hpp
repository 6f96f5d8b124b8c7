#pragma once

namespace onfly {

/// Selects between the OpenMP kernel and its serial reference. Both produce
/// bit-identical results; the serial path is kept for testing and benchmarking.
enum class Execution { Serial, Parallel };

/// True when the library was built with OpenMP.
bool parallelKernelsAvailable();

}  // namespace onfly
