#include "dictcert/matrix_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "dictcert/errors.hpp"

namespace dictcert {

namespace {

constexpr std::string_view kModule = "core_linalg";

uint64_t to_little_endian(uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0x00000000ffffffffULL) << 32) | ((v & 0xffffffff00000000ULL) >> 32);
    v = ((v & 0x0000ffff0000ffffULL) << 16) | ((v & 0xffff0000ffff0000ULL) >> 16);
    v = ((v & 0x00ff00ff00ff00ffULL) << 8) | ((v & 0xff00ff00ff00ff00ULL) >> 8);
  }
  return v;
}

}  // namespace

void write_dlmat(std::ostream& out, const Matrix& m) {
  out << "DLMAT1 " << m.rows() << ' ' << m.cols() << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      uint64_t bits = to_little_endian(std::bit_cast<uint64_t>(m(r, c)));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      out.write(buf, 8);
    }
  }
  if (!out) throw ValidationError(kModule, "DLMAT1 write failed");
}

Matrix read_dlmat(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ValidationError(kModule, "DLMAT1: missing header");
  std::istringstream hs(header);
  std::string magic;
  long long rows = -1, cols = -1;
  hs >> magic >> rows >> cols;
  std::string rest;
  if (magic != "DLMAT1" || hs.fail() || rows < 0 || cols < 0 || (hs >> rest)) {
    throw ValidationError(kModule, "DLMAT1: malformed header '" + header + "'");
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      char buf[8];
      if (!in.read(buf, 8)) throw ValidationError(kModule, "DLMAT1: truncated payload");
      uint64_t bits;
      std::memcpy(&bits, buf, 8);
      m(r, c) = std::bit_cast<double>(to_little_endian(bits));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ValidationError(kModule, "DLMAT1: trailing bytes after payload");
  }
  return m;
}

void save_dlmat(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(kModule, "cannot open " + path.string() + " for writing");
  write_dlmat(out, m);
}

Matrix load_dlmat(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(kModule, "cannot open " + path.string());
  return read_dlmat(in);
}

}  // namespace dictcert
