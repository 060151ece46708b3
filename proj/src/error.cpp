#include "lmf/error.hpp"
#include "lmf/execution.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lmf {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidSpec: return "invalid spec";
    case ErrorKind::Index: return "index error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace lmf
