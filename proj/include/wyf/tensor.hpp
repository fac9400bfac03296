#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace wyf {

// Fully symmetric order-p tensor on R^k, stored densely (k^p entries).
template <typename Scalar>
class SymmetricTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  SymmetricTensor() = default;
  SymmetricTensor(int dim, int order) : dim_(dim), order_(order) {
    if (dim < 1 || order < 1) throw std::invalid_argument("tensor needs dim >= 1 and order >= 1");
    Eigen::Index size = 1;
    for (int i = 0; i < order; ++i) size *= dim;
    data_ = Vector::Zero(size);
  }

  int dim() const { return dim_; }
  int order() const { return order_; }
  const Vector& data() const { return data_; }

  Scalar get(const std::vector<int>& idx) const { return data_[flat(idx)]; }

  // Assigns value to every permutation of idx.
  void set(std::vector<int> idx, Scalar value) {
    std::sort(idx.begin(), idx.end());
    do {
      data_[flat(idx)] = value;
    } while (std::next_permutation(idx.begin(), idx.end()));
  }

  // T[v, ..., v].
  Scalar operator()(const Vector& v) const { return contract_all(v, order_)[0]; }
  // Gradient of T[v, ..., v]: p T[v, ..., v, .].
  Vector gradient(const Vector& v) const { return Scalar(order_) * contract_all(v, order_ - 1); }
  // Hessian of T[v, ..., v]: p (p-1) T[v, ..., v, ., .].
  Matrix hessian(const Vector& v) const {
    if (order_ < 2) return Matrix::Zero(dim_, dim_);
    Vector flat2 = contract_all(v, order_ - 2);
    Matrix h = Eigen::Map<const Matrix>(flat2.data(), dim_, dim_);
    return Scalar(order_) * Scalar(order_ - 1) * h;
  }

  Scalar scale() const { return data_.cwiseAbs().maxCoeff(); }

  // Largest deviation between an entry and its permuted copies.
  Scalar asymmetry() const {
    Scalar worst(0);
    std::vector<int> idx(order_, 0);
    for (Eigen::Index f = 0; f < data_.size(); ++f) {
      unflat(f, idx);
      std::vector<int> s = idx;
      std::sort(s.begin(), s.end());
      worst = std::max(worst, std::abs(data_[f] - data_[flat(s)]));
    }
    return worst;
  }

  // Sorted index tuples i1 <= ... <= ip.
  std::vector<std::vector<int>> multisets() const {
    std::vector<std::vector<int>> out;
    std::vector<int> idx(order_, 0);
    for (;;) {
      out.push_back(idx);
      int j = order_ - 1;
      while (j >= 0 && idx[j] == dim_ - 1) --j;
      if (j < 0) break;
      ++idx[j];
      for (int l = j + 1; l < order_; ++l) idx[l] = idx[j];
    }
    return out;
  }

 private:
  Eigen::Index flat(const std::vector<int>& idx) const {
    Eigen::Index f = 0;
    for (int i : idx) f = f * dim_ + i;
    return f;
  }
  void unflat(Eigen::Index f, std::vector<int>& idx) const {
    for (int j = order_ - 1; j >= 0; --j) {
      idx[j] = static_cast<int>(f % dim_);
      f /= dim_;
    }
  }
  // Contract the trailing `count` slots with v.
  Vector contract_all(const Vector& v, int count) const {
    Vector cur = data_;
    for (int c = 0; c < count; ++c) {
      const Eigen::Index rows = cur.size() / dim_;
      Eigen::Map<const Matrix> m(cur.data(), dim_, rows);
      Vector next = m.transpose() * v;
      cur = next;
    }
    return cur;
  }

  int dim_ = 0;
  int order_ = 0;
  Vector data_;
};

}  // namespace wyf
