#include "svlab/matrix_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace svlab {

namespace {

constexpr char kMagic[8] = {'S', 'V', 'L', 'A', 'B', 'M', 'A', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error(std::string("matrix file: truncated ") + what);
  return value;
}

}  // namespace

void save_matrix(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_matrix: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, kVersion);
  write_pod<uint64_t>(out, static_cast<uint64_t>(m.rows()));
  write_pod<uint64_t>(out, static_cast<uint64_t>(m.cols()));
  write_pod<uint32_t>(out, sizeof(double));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      write_pod<double>(out, m(i, j));
    }
  }
  if (!out) throw std::runtime_error("save_matrix: write failed for " + path);
}

Eigen::MatrixXd load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_matrix: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_matrix: bad magic in " + path);
  }
  const auto version = read_pod<uint32_t>(in, "version");
  if (version != kVersion) {
    throw std::runtime_error("load_matrix: unsupported version " + std::to_string(version));
  }
  const auto rows = read_pod<uint64_t>(in, "row count");
  const auto cols = read_pod<uint64_t>(in, "column count");
  const auto width = read_pod<uint32_t>(in, "element width");
  if (width != sizeof(double)) {
    throw std::runtime_error("load_matrix: unsupported element width " + std::to_string(width));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (uint64_t i = 0; i < rows; ++i) {
    for (uint64_t j = 0; j < cols; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          read_pod<double>(in, "payload");
    }
  }
  return m;
}

}  // namespace svlab
