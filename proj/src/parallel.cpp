#include "pact/parallel.hpp"

#include <cstdlib>
#include <string>

namespace pact {

std::size_t default_workers() {
  if (const char* env = std::getenv("PACT_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace pact
