#include "tim/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tim/errors.h"

namespace tim {

Shape::Shape(std::initializer_list<std::size_t> extents) {
  if (extents.size() > kMaxRank) {
    throw InvalidInput("tensor rank above 3");
  }
  std::copy(extents.begin(), extents.end(), extents_.begin());
  rank_ = extents.size();
}

Shape Shape::FromVector(const std::vector<std::size_t>& extents) {
  if (extents.size() > kMaxRank) {
    throw InvalidInput("tensor rank above 3");
  }
  Shape s;
  std::copy(extents.begin(), extents.end(), s.extents_.begin());
  s.rank_ = extents.size();
  return s;
}

std::size_t Shape::element_count() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= extents_[i];
  return n;
}

std::vector<std::size_t> Shape::to_vector() const {
  return {extents_.begin(), extents_.begin() + static_cast<long>(rank_)};
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << 'x';
    os << extents_[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.element_count()) {
    throw InvalidInput("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.to_string());
  }
}

Tensor Tensor::Zeros(Shape shape) {
  return Tensor(shape, std::vector<double>(shape.element_count(), 0.0));
}

Tensor Tensor::Full(Shape shape, double value) {
  return Tensor(shape, std::vector<double>(shape.element_count(), value));
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw InvalidInput("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::RowVector(std::span<const double> values) {
  return Tensor(Shape{1, values.size()},
                std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::FromExternal(Shape shape, std::vector<double> data) {
  Tensor t(shape, std::move(data));
  if (!t.all_finite()) throw InvalidInput("non-finite value in tensor input");
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw InvalidInput("item() on tensor of shape " + shape_.to_string());
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.element_count() != data_.size()) {
    throw InvalidInput("cannot reshape " + shape_.to_string() + " to " +
                       shape.to_string());
  }
  return Tensor(shape, data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw InvalidInput(std::string(what) + " expects a matrix, got " +
                       t.shape().to_string());
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw InvalidInput("matmul shape mismatch " + a.shape().to_string() +
                       " x " + b.shape().to_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::Zeros(Shape{m, n});
  auto o = out.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bd.data() + p * n;
      double* orow = o.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor batched_matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] ||
      a.shape()[2] != b.shape()[1]) {
    throw InvalidInput("batched_matmul shape mismatch " +
                       a.shape().to_string() + " x " + b.shape().to_string());
  }
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2],
                    n = b.shape()[2];
  Tensor out = Tensor::Zeros(Shape{batch, m, n});
  auto o = out.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t s = 0; s < batch; ++s) {
    const double* as = ad.data() + s * m * k;
    const double* bs = bd.data() + s * k * n;
    double* os = o.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = as[i * k + p];
        for (std::size_t j = 0; j < n; ++j) os[i * n + j] += av * bs[p * n + j];
      }
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out = Tensor::Zeros(Shape{a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

Tensor softmax_rows(const Tensor& a, double scale) {
  require_matrix(a, "softmax_rows");
  if (!(scale > 0.0)) throw InvalidInput("softmax scale must be positive");
  if (a.cols() == 0) throw InvalidInput("softmax over empty row");
  if (!a.all_finite()) throw InvalidInput("non-finite softmax input");
  Tensor out = a;
  const std::size_t n = a.cols();
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double* row = o.data() + r * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(scale * (row[j] - mx));
      total += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= total;
  }
  return out;
}

Tensor softmax_scaled(const Tensor& row, double scale) {
  if (row.rank() != 2 || row.rows() != 1) {
    throw InvalidInput("softmax_scaled expects a 1xm row, got " +
                       row.shape().to_string());
  }
  return softmax_rows(row, scale);
}

Tensor rope_rotate(const Tensor& m, double base) {
  require_matrix(m, "rope_rotate");
  const std::size_t d = m.cols();
  if (d % 2 != 0) {
    throw InvalidInput("rope_rotate needs an even row width, got " +
                       std::to_string(d));
  }
  if (!(base > 0.0)) throw InvalidInput("rope base must be positive");
  Tensor out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < d / 2; ++j) {
      const double freq =
          std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(d));
      const double angle = static_cast<double>(i) * freq;
      const double c = std::cos(angle), s = std::sin(angle);
      const double x0 = m.at(i, 2 * j), x1 = m.at(i, 2 * j + 1);
      out.at(i, 2 * j) = x0 * c - x1 * s;
      out.at(i, 2 * j + 1) = x0 * s + x1 * c;
    }
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& m, double eps) {
  require_matrix(m, "l2_normalize_rows");
  Tensor out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) sq += m.at(i, j) * m.at(i, j);
    const double denom = std::max(std::sqrt(sq), eps);
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) = m.at(i, j) / denom;
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace tim
