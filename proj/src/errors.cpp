#include "dictcert/errors.hpp"

namespace dictcert {

Error::Error(std::string_view module, const std::string& what)
    : std::runtime_error("[" + std::string(module) + "] " + what), module_(module) {}

}  // namespace dictcert
