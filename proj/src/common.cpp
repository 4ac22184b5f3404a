#include "agcd/common.hpp"

#include <cstdlib>
#include <string>
#include <thread>

namespace agcd {

unsigned worker_threads() {
  if (const char* env = std::getenv("AGCD_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace agcd
