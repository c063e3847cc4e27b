#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace longtail {

// Dense double-precision tensor, row-major. The only numeric container in
// the project; everything trains in double so finite-difference oracles and
// bit-exact aggregation checks hold.
struct DenseArray {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  DenseArray() = default;
  explicit DenseArray(std::vector<std::size_t> s);

  static DenseArray zeros(std::vector<std::size_t> s) { return DenseArray(std::move(s)); }

  std::size_t numel() const { return values.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

  bool same_shape(const DenseArray& o) const { return shape == o.shape; }
  bool all_finite() const;

  void fill(double v);
  void add_scaled(const DenseArray& o, double scale);  // *this += scale * o
  double l2_norm() const;
};

enum class Section { embedding, extractor, classifier };

const char* section_name(Section s);
Section section_from_name(const std::string& s);

// One named model parameter. The section partition mirrors the usual
// embedding / feature-extractor / classifier split of CTR models.
struct ParamTensor {
  std::string name;
  DenseArray data;
  Section section = Section::extractor;
};

// Parameter name -> gradient. std::map keeps iteration (and therefore every
// reduction over entries) in a fixed order, which makes aggregation and
// optimizer updates run-to-run deterministic.
using GradMap = std::map<std::string, DenseArray>;

// acc += scale * g, creating zero entries as needed.
void add_scaled(GradMap& acc, const GradMap& g, double scale);

// Euclidean norm over all entries.
double grad_norm(const GradMap& g);

}  // namespace longtail
