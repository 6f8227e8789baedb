#include "connstream/parallel.hpp"

#include <cstdlib>
#include <string>
#include <thread>

namespace connstream {

int worker_count() {
  if (const char* env = std::getenv("CONNSTREAM_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
      // fall through to the hardware default
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

tbb::task_arena& worker_arena() {
  static tbb::task_arena arena(worker_count());
  return arena;
}

}  // namespace connstream
