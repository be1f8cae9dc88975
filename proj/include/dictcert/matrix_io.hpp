#pragma once

#include <filesystem>
#include <iosfwd>

#include "dictcert/linalg.hpp"

namespace dictcert {

// DLMAT1: ASCII header "DLMAT1 <rows> <cols>\n" followed by rows*cols
// little-endian float64 values in row-major order.
void write_dlmat(std::ostream& out, const Matrix& m);
Matrix read_dlmat(std::istream& in);

void save_dlmat(const std::filesystem::path& path, const Matrix& m);
Matrix load_dlmat(const std::filesystem::path& path);

}  // namespace dictcert
