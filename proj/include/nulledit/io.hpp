#pragma once

// Matrix files and atomic writes.
//
// NPY: format version 1.0, dtype '<f8', C order. 1-D arrays load as a single
// column. Fortran-ordered files are accepted on input.
// CSV: first line "rows,cols", then one line per row.

#include "nulledit/linalg.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace nulledit::io {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
inline void write_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline double load_le_double(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, sizeof bits);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

inline void store_le_double(char* p, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  std::memcpy(p, &bits, sizeof bits);
}

}  // namespace detail

inline std::string encode_npy(const Matrix& a) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" +
                       std::to_string(a.rows()) + ", " + std::to_string(a.cols()) + "), }";
  // magic(6) + version(2) + length(2) + header + '\n' is padded to 64 bytes.
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::string out("\x93NUMPY\x01\x00", 8);
  out.push_back(static_cast<char>(header.size() & 0xff));
  out.push_back(static_cast<char>((header.size() >> 8) & 0xff));
  out += header;
  const std::size_t base = out.size();
  out.resize(base + 8 * static_cast<std::size_t>(a.size()));
  std::size_t off = base;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j, off += 8) detail::store_le_double(&out[off], a(i, j));
  return out;
}

inline Matrix decode_npy(const std::string& bytes, const std::string& name = "npy") {
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0)
    throw IoError(name + ": not an NPY file");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, data_start = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) |
                 (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    data_start = 10 + header_len;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw IoError(name + ": truncated header");
    for (int b = 3; b >= 0; --b)
      header_len = (header_len << 8) | static_cast<unsigned char>(bytes[8 + b]);
    data_start = 12 + header_len;
  } else {
    throw IoError(name + ": unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < data_start) throw IoError(name + ": truncated header");
  const std::string header = bytes.substr(data_start - header_len, header_len);

  std::smatch mt;
  if (!std::regex_search(header, mt, std::regex(R"('descr'\s*:\s*'([^']*)')")) ||
      (mt[1] != "<f8" && mt[1] != "f8"))
    throw IoError(name + ": only little-endian float64 ('<f8') arrays are supported");
  const bool fortran =
      std::regex_search(header, std::regex(R"('fortran_order'\s*:\s*True)"));
  if (!std::regex_search(header, mt, std::regex(R"('shape'\s*:\s*\(([^)]*)\))")))
    throw IoError(name + ": missing shape");
  std::vector<Index> dims;
  {
    std::stringstream ss(mt[1].str());
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok.erase(0, tok.find_first_not_of(" \t"));
      tok.erase(tok.find_last_not_of(" \t") + 1);
      if (!tok.empty()) dims.push_back(std::stoll(tok));
    }
  }
  Index rows = 1, cols = 1;
  if (dims.size() == 1) {
    rows = dims[0];
  } else if (dims.size() == 2) {
    rows = dims[0];
    cols = dims[1];
  } else {
    throw IoError(name + ": expected a 1-D or 2-D array");
  }
  const std::size_t need = 8 * static_cast<std::size_t>(rows * cols);
  if (bytes.size() - data_start < need) throw IoError(name + ": truncated data");

  Matrix a(rows, cols);
  const char* p = bytes.data() + data_start;
  for (Index k = 0; k < rows * cols; ++k, p += 8) {
    const Index i = fortran ? k % rows : k / cols;
    const Index j = fortran ? k / rows : k % cols;
    a(i, j) = detail::load_le_double(p);
  }
  return a;
}

inline std::string encode_csv(const Matrix& a) {
  std::string out = std::to_string(a.rows()) + "," + std::to_string(a.cols()) + "\n";
  char buf[32];
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", a(i, j));
      if (j) out.push_back(',');
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

inline Matrix decode_csv(const std::string& text, const std::string& name = "csv") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(name + ": empty file");
  long long rows = 0, cols = 0;
  if (std::sscanf(line.c_str(), "%lld,%lld", &rows, &cols) != 2 || rows < 0 || cols < 0)
    throw IoError(name + ": header must be 'rows,cols'");
  Matrix a(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw IoError(name + ": expected " + std::to_string(rows) + " rows");
    std::stringstream ss(line);
    std::string cell;
    Index j = 0;
    while (std::getline(ss, cell, ',')) {
      if (j >= cols) throw IoError(name + ": row " + std::to_string(i) + " has too many values");
      char* end = nullptr;
      a(i, j++) = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw IoError(name + ": bad number '" + cell + "'");
    }
    if (j != cols) throw IoError(name + ": row " + std::to_string(i) + " has too few values");
  }
  return a;
}

inline Matrix load_matrix(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing matrix file " + path.string());
  const std::string bytes = read_file(path);
  Matrix a = path.extension() == ".csv" ? decode_csv(bytes, path.string())
                                        : decode_npy(bytes, path.string());
  if (!a.allFinite()) throw IoError(path.string() + ": non-finite entries");
  return a;
}

inline void save_matrix(const fs::path& path, const Matrix& a) {
  write_atomic(path, path.extension() == ".csv" ? encode_csv(a) : encode_npy(a));
}

}  // namespace nulledit::io
