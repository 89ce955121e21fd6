#pragma once

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <iterator>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>

#include "mfdg/bench/problems.hpp"

namespace mfdg::bench {

class Spe10FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FieldSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

inline FieldSummary summarize(const std::vector<double>& v) {
  FieldSummary s;
  if (v.empty()) return s;
  s.min = s.max = v[0];
  double sum = 0.0;
  for (double x : v) {
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
    sum += x;
  }
  s.mean = sum / v.size();
  return s;
}

/// Whitespace-separated ASCII reals: the Kx block (x fastest, then y, then
/// z), then Ky, then Kz. Line breaks are arbitrary.
inline Spe10Field load_spe10(const std::string& path, std::array<int, 3> dims = {60, 220, 85}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Spe10Field f;
  f.dims = dims;
  const std::size_t n = f.size();
  std::vector<double>* blocks[3] = {&f.kx, &f.ky, &f.kz};
  for (auto* b : blocks) b->reserve(n);
  const char* p = text.c_str();
  const char* end = p + text.size();
  std::size_t count = 0;
  while (true) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p >= end) break;
    const std::size_t offset = static_cast<std::size_t>(p - text.c_str());
    char* next = nullptr;
    errno = 0;
    const double v = std::strtod(p, &next);
    if (next == p || (next < end && !std::isspace(static_cast<unsigned char>(*next))) || errno == ERANGE) {
      throw Spe10FormatError("parse error at byte offset " + std::to_string(offset) + " (value #" +
                             std::to_string(count) + ")");
    }
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Spe10FormatError("non-positive permeability at value #" + std::to_string(count) + " (byte offset " +
                             std::to_string(offset) + ")");
    }
    if (count >= 3 * n) {
      throw Spe10FormatError("too many values: expected " + std::to_string(3 * n) + ", extra value at byte offset " +
                             std::to_string(offset));
    }
    blocks[count / n]->push_back(v);
    ++count;
    p = next;
  }
  if (count != 3 * n) {
    throw Spe10FormatError("wrong value count: expected " + std::to_string(3 * n) + ", found " +
                           std::to_string(count));
  }
  if (f.kx != f.ky) std::fprintf(stderr, "warning: Kx and Ky blocks differ\n");
  return f;
}

}  // namespace mfdg::bench
