#include "onfly/execution.hpp"

namespace onfly {

bool parallelKernelsAvailable() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace onfly
