#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfn {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IOError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric over an empty set of pixels.
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Batch x channel x height x width.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense rank-4 array of doubles, row-major (n, c, h, w).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  std::size_t offset(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) *
               shape_.w +
           x;
  }
  double& at(int b, int ch, int y, int x) { return data_[offset(b, ch, y, x)]; }
  double at(int b, int ch, int y, int x) const {
    return data_[offset(b, ch, y, x)];
  }
  // Pointer to the (b, ch) spatial plane.
  double* plane(int b, int ch) { return data_.data() + offset(b, ch, 0, 0); }
  const double* plane(int b, int ch) const {
    return data_.data() + offset(b, ch, 0, 0);
  }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

double sum(const Tensor& t);
double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& t);
bool all_finite(const Tensor& t);

// Throws DimensionError naming `what` unless a and b have identical shapes.
void require_same_shape(const Shape& a, const Shape& b, const char* what);
// Throws DimensionError unless batch and spatial extents agree.
void require_same_spatial(const Shape& a, const Shape& b, const char* what);

// Uniform [lo, hi) values from a seeded generator.
Tensor random_uniform(Shape shape, unsigned seed, double lo = -1.0,
                      double hi = 1.0);

}  // namespace lfn
