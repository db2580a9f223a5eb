#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "embfuse/embedding.hpp"

namespace embfuse::detail {

// Little-endian host assumed (checked where the embedding format is defined).
class BlobWriter {
 public:
  BlobWriter(const std::filesystem::path& path, std::string what)
      : out_(path, std::ios::binary), what_(std::move(what)) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  template <typename T>
  void scalar(T v) { out_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void string(const std::string& s) {
    scalar<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename M>
  void matrix(const M& m) {
    scalar<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    scalar<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    bytes(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  void vector(const Vector& v) { matrix(Matrix(v)); }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error(what_ + " write failed");
  }

 private:
  std::ofstream out_;
  std::string what_;
};

class BlobReader {
 public:
  BlobReader(const std::filesystem::path& path, std::string what)
      : in_(path, std::ios::binary), what_(std::move(what)) {
    if (!in_) throw FormatError("cannot open " + what_ + " " + path.string());
  }
  template <typename T>
  T scalar() {
    T v{};
    if (!in_.read(reinterpret_cast<char*>(&v), sizeof(T))) truncated();
    return v;
  }
  void bytes(char* p, std::size_t n) {
    if (!in_.read(p, static_cast<std::streamsize>(n))) truncated();
  }
  std::string string() {
    const auto n = scalar<std::uint32_t>();
    if (n > (1u << 20)) throw FormatError("implausible string length in " + what_ + " blob");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  template <typename M = Matrix>
  M matrix() {
    const auto r = scalar<std::uint64_t>();
    const auto c = scalar<std::uint64_t>();
    if (r > (1u << 24) || c > (1u << 24)) {
      throw FormatError("implausible matrix shape in " + what_ + " blob");
    }
    M m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    bytes(reinterpret_cast<char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
    return m;
  }
  Vector vector() {
    Matrix m = matrix();
    if (m.cols() != 1 && m.size() != 0) throw FormatError("expected a column vector in " + what_ + " blob");
    return Eigen::Map<Vector>(m.data(), m.size());
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw FormatError("trailing bytes in " + what_ + " blob");
    }
  }

 private:
  [[noreturn]] void truncated() const { throw FormatError("truncated " + what_ + " blob"); }

  std::ifstream in_;
  std::string what_;
};

}  // namespace embfuse::detail
