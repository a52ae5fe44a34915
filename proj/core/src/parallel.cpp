#include "capsroute/parallel.hpp"

#include <cstdlib>
#include <string>

namespace capsroute {

std::size_t worker_threads() {
  if (const char* env = std::getenv("CAPSROUTE_THREADS")) {
    try {
      const long long value = std::stoll(env);
      if (value > 0) return static_cast<std::size_t>(value);
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace capsroute
