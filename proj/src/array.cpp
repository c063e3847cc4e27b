#include "longtail/array.hpp"

#include <cmath>

#include "longtail/errors.hpp"

namespace longtail {

DenseArray::DenseArray(std::vector<std::size_t> s) : shape(std::move(s)) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ArgumentError("DenseArray: zero dimension");
    n *= d;
  }
  values.assign(shape.empty() ? 0 : n, 0.0);
}

bool DenseArray::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void DenseArray::fill(double v) {
  for (double& x : values) x = v;
}

void DenseArray::add_scaled(const DenseArray& o, double scale) {
  if (!same_shape(o)) throw ArgumentError("DenseArray::add_scaled: shape mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += scale * o.values[i];
}

double DenseArray::l2_norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

const char* section_name(Section s) {
  switch (s) {
    case Section::embedding: return "embedding";
    case Section::extractor: return "extractor";
    case Section::classifier: return "classifier";
  }
  return "?";
}

Section section_from_name(const std::string& s) {
  if (s == "embedding") return Section::embedding;
  if (s == "extractor") return Section::extractor;
  if (s == "classifier") return Section::classifier;
  throw ArgumentError("unknown section: " + s);
}

void add_scaled(GradMap& acc, const GradMap& g, double scale) {
  for (const auto& [name, arr] : g) {
    auto it = acc.find(name);
    if (it == acc.end()) {
      DenseArray z = DenseArray::zeros(arr.shape);
      z.add_scaled(arr, scale);
      acc.emplace(name, std::move(z));
    } else {
      it->second.add_scaled(arr, scale);
    }
  }
}

double grad_norm(const GradMap& g) {
  double s = 0.0;
  for (const auto& [name, arr] : g) {
    (void)name;
    for (double v : arr.values) s += v * v;
  }
  return std::sqrt(s);
}

}  // namespace longtail
