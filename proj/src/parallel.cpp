#include "dictcert/parallel.hpp"

#include <cstdlib>
#include <string>

namespace dictcert {

int resolve_jobs(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DICTCERT_JOBS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return 1;
}

}  // namespace dictcert
