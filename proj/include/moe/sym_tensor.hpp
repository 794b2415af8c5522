#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"

namespace moe {

namespace detail {
inline std::size_t tri(std::size_t m) { return m * (m + 1) / 2; }
inline std::size_t tet(std::size_t m) { return m * (m + 1) * (m + 2) / 6; }
}  // namespace detail

/// Symmetric d x d tensor, packed upper triangle (i <= j) in row order.
class Sym2 {
 public:
  Sym2() = default;
  explicit Sym2(std::size_t d) : d_(d), data_(detail::tri(d), 0.0) {}

  static std::size_t packed_size(std::size_t d) { return detail::tri(d); }

  std::size_t dim() const noexcept { return d_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::size_t index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return detail::tri(d_) - detail::tri(d_ - i) + (j - i);
  }
  double operator()(std::size_t i, std::size_t j) const { return data_[index(i, j)]; }
  double& at(std::size_t i, std::size_t j) { return data_[index(i, j)]; }

  Sym2& operator+=(const Sym2& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Sym2& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  void axpy(double s, const Sym2& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  }

  Matrix to_dense() const {
    Matrix m(d_, d_);
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j) m(i, j) = m(j, i) = (*this)(i, j);
    return m;
  }

  /// Symmetric part of a dense matrix.
  static Sym2 from_dense(const Matrix& m) {
    if (m.rows() != m.cols()) throw DataError("Sym2::from_dense: matrix not square");
    Sym2 t(static_cast<std::size_t>(m.rows()));
    for (std::size_t i = 0; i < t.d_; ++i)
      for (std::size_t j = i; j < t.d_; ++j) t.at(i, j) = 0.5 * (m(i, j) + m(j, i));
    return t;
  }

  /// Frobenius norm of the full (unpacked) tensor.
  double frobenius_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j) {
        const double v = (*this)(i, j);
        s += (i == j ? 1.0 : 2.0) * v * v;
      }
    return std::sqrt(s);
  }

 private:
  void check_same(const Sym2& o) const {
    if (o.d_ != d_) throw DataError("Sym2 dimension mismatch");
  }

  std::size_t d_ = 0;
  std::vector<double> data_;
};

/// Fully symmetric d x d x d tensor, packed over sorted indices i <= j <= l in
/// lexicographic order; d(d+1)(d+2)/6 entries.
class Sym3 {
 public:
  Sym3() = default;
  explicit Sym3(std::size_t d) : d_(d), data_(detail::tet(d), 0.0) {}

  static std::size_t packed_size(std::size_t d) { return detail::tet(d); }

  std::size_t dim() const noexcept { return d_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t l) const {
    if (i > j) std::swap(i, j);
    if (j > l) std::swap(j, l);
    if (i > j) std::swap(i, j);
    return detail::tet(d_) - detail::tet(d_ - i) + detail::tri(d_ - i) - detail::tri(d_ - j) + (l - j);
  }
  double operator()(std::size_t i, std::size_t j, std::size_t l) const { return data_[index(i, j, l)]; }
  double& at(std::size_t i, std::size_t j, std::size_t l) { return data_[index(i, j, l)]; }

  Sym3& operator+=(const Sym3& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Sym3& operator-=(const Sym3& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Sym3& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  void axpy(double s, const Sym3& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  }

  /// Adds s * v (x) v (x) v.
  void add_rank_one(double s, const Eigen::Ref<const Vector>& v) {
    check_vec(v);
    std::size_t p = 0;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j) {
        const double vij = s * v[i] * v[j];
        for (std::size_t l = j; l < d_; ++l) data_[p++] += vij * v[l];
      }
  }

  static Sym3 rank_one(double s, const Eigen::Ref<const Vector>& v) {
    Sym3 t(static_cast<std::size_t>(v.size()));
    t.add_rank_one(s, v);
    return t;
  }

  /// Multilinear form T(u, v, w).
  double contract(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v,
                  const Eigen::Ref<const Vector>& w) const {
    check_vec(u);
    check_vec(v);
    check_vec(w);
    double s = 0.0;
    std::size_t p = 0;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j)
        for (std::size_t l = j; l < d_; ++l, ++p) {
          const double t = data_[p];
          if (t == 0.0) continue;
          s += t * permuted_product(i, j, l, u, v, w);
        }
    return s;
  }

  /// T(v, v, v).
  double contract(const Eigen::Ref<const Vector>& v) const {
    check_vec(v);
    double s = 0.0;
    std::size_t p = 0;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j)
        for (std::size_t l = j; l < d_; ++l, ++p) s += multiplicity(i, j, l) * data_[p] * v[i] * v[j] * v[l];
    return s;
  }

  /// Partial contraction T(I, v, v), a d-vector.
  Vector collapse(const Eigen::Ref<const Vector>& v) const {
    check_vec(v);
    Vector out = Vector::Zero(static_cast<Eigen::Index>(d_));
    std::size_t p = 0;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j)
        for (std::size_t l = j; l < d_; ++l, ++p) {
          const double t = data_[p];
          if (t == 0.0) continue;
          if (i == j && j == l) {
            out[i] += t * v[i] * v[i];
          } else if (i == j) {  // (i,i,l)
            out[i] += 2.0 * t * v[i] * v[l];
            out[l] += t * v[i] * v[i];
          } else if (j == l) {  // (i,j,j)
            out[i] += t * v[j] * v[j];
            out[j] += 2.0 * t * v[i] * v[j];
          } else {
            out[i] += 2.0 * t * v[j] * v[l];
            out[j] += 2.0 * t * v[i] * v[l];
            out[l] += 2.0 * t * v[i] * v[j];
          }
        }
    return out;
  }

  /// Slice T(v, ., .) as a symmetric matrix.
  Sym2 slice(const Eigen::Ref<const Vector>& v) const {
    check_vec(v);
    Sym2 out(d_);
    std::size_t p = 0;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j)
        for (std::size_t l = j; l < d_; ++l, ++p) {
          const double t = data_[p];
          if (t == 0.0) continue;
          // each distinct ordered triple (a,b,c) contributes t*v[a] to entry (b,c)
          for (const auto& [a, b, c] : distinct_permutations(i, j, l)) {
            if (b <= c) out.at(b, c) += t * v[a] * (b == c ? 1.0 : 0.5);
            else out.at(c, b) += t * v[a] * 0.5;
          }
        }
    return out;
  }

  /// Frobenius norm of the full (unpacked) tensor.
  double frobenius_norm() const {
    double s = 0.0;
    std::size_t p = 0;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j)
        for (std::size_t l = j; l < d_; ++l, ++p) s += multiplicity(i, j, l) * data_[p] * data_[p];
    return std::sqrt(s);
  }

  /// Dense d^3 array in row-major (i, j, l) order.
  std::vector<double> to_dense() const {
    std::vector<double> out(d_ * d_ * d_);
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j)
        for (std::size_t l = 0; l < d_; ++l) out[(i * d_ + j) * d_ + l] = (*this)(i, j, l);
    return out;
  }

  /// Symmetrizes a dense row-major d^3 array.
  static Sym3 from_dense(std::span<const double> dense, std::size_t d) {
    if (dense.size() != d * d * d) throw DataError("Sym3::from_dense: size is not d^3");
    Sym3 t(d);
    std::size_t p = 0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j)
        for (std::size_t l = j; l < d; ++l, ++p) {
          double s = 0.0;
          const auto perms = distinct_permutations(i, j, l);
          for (const auto& [a, b, c] : perms) s += dense[(a * d + b) * d + c];
          t.data_[p] = s / static_cast<double>(perms.size());
        }
    return t;
  }

  /// Multilinear change of basis: result_{abc} = sum T_{ijl} M_{ia} M_{jb} M_{lc}
  /// for a d x m matrix M.
  Sym3 transform(const Matrix& m) const {
    if (static_cast<std::size_t>(m.rows()) != d_) throw DataError("Sym3::transform: dimension mismatch");
    const std::size_t k = static_cast<std::size_t>(m.cols());
    const std::vector<double> dense = to_dense();
    // contract one mode at a time: (d,d,d) -> (d,d,k) -> (d,k,k) -> (k,k,k)
    std::vector<double> s1(d_ * d_ * k, 0.0);
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j)
        for (std::size_t l = 0; l < d_; ++l) {
          const double t = dense[(i * d_ + j) * d_ + l];
          if (t == 0.0) continue;
          for (std::size_t c = 0; c < k; ++c) s1[(i * d_ + j) * k + c] += t * m(l, c);
        }
    std::vector<double> s2(d_ * k * k, 0.0);
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j)
        for (std::size_t b = 0; b < k; ++b) {
          const double mjb = m(j, b);
          for (std::size_t c = 0; c < k; ++c) s2[(i * k + b) * k + c] += s1[(i * d_ + j) * k + c] * mjb;
        }
    std::vector<double> s3(k * k * k, 0.0);
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t a = 0; a < k; ++a) {
        const double mia = m(i, a);
        for (std::size_t bc = 0; bc < k * k; ++bc) s3[a * k * k + bc] += s2[i * k * k + bc] * mia;
      }
    return from_dense(s3, k);
  }

  static double multiplicity(std::size_t i, std::size_t j, std::size_t l) {
    if (i == j && j == l) return 1.0;
    if (i == j || j == l || i == l) return 3.0;
    return 6.0;
  }

 private:
  using Triple = std::array<std::size_t, 3>;

  static std::vector<Triple> distinct_permutations(std::size_t i, std::size_t j, std::size_t l) {
    std::array<std::size_t, 3> idx{i, j, l};
    std::sort(idx.begin(), idx.end());
    std::vector<Triple> out;
    do {
      out.push_back({idx[0], idx[1], idx[2]});
    } while (std::next_permutation(idx.begin(), idx.end()));
    return out;
  }

  static double permuted_product(std::size_t i, std::size_t j, std::size_t l, const Eigen::Ref<const Vector>& u,
                                 const Eigen::Ref<const Vector>& v, const Eigen::Ref<const Vector>& w) {
    if (i == j && j == l) return u[i] * v[i] * w[i];
    double s = 0.0;
    for (const auto& [a, b, c] : distinct_permutations(i, j, l)) s += u[a] * v[b] * w[c];
    return s;
  }

  void check_same(const Sym3& o) const {
    if (o.d_ != d_) throw DataError("Sym3 dimension mismatch");
  }
  void check_vec(const Eigen::Ref<const Vector>& v) const {
    if (static_cast<std::size_t>(v.size()) != d_) throw DataError("Sym3 contraction: dimension mismatch");
  }

  std::size_t d_ = 0;
  std::vector<double> data_;
};

/// Contraction helpers with free-function spelling.
inline double sym3_contract(const Sym3& t, const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v,
                            const Eigen::Ref<const Vector>& w) {
  return t.contract(u, v, w);
}
inline Vector sym3_collapse(const Sym3& t, const Eigen::Ref<const Vector>& v) { return t.collapse(v); }

}  // namespace moe
