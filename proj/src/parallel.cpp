#include "mkv/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>

namespace mkv {

int worker_count() {
  if (const char* env = std::getenv("MKV_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
      // malformed values fall through to the default
    }
  }
  return std::max(omp_get_max_threads(), 1);
}

}  // namespace mkv
