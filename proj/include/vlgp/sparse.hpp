#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"

namespace vlgp {

namespace detail {

// Compressed sparse column storage. Row indices are sorted ascending within
// each column.
class CscStorage {
 public:
  Index dim() const { return n_; }
  Index nnz() const { return static_cast<Index>(rowind_.size()); }

  std::span<const Index> rows(Index j) const {
    return {rowind_.data() + colptr_[j], static_cast<std::size_t>(colptr_[j + 1] - colptr_[j])};
  }
  std::span<const double> values(Index j) const {
    return {values_.data() + colptr_[j], static_cast<std::size_t>(colptr_[j + 1] - colptr_[j])};
  }
  Index column_nnz(Index j) const { return colptr_[j + 1] - colptr_[j]; }

  Index max_column_nnz() const {
    Index best = 0;
    for (Index j = 0; j < n_; ++j) best = std::max(best, column_nnz(j));
    return best;
  }

  /// (row, col, value) lines, 0-based.
  void write_triplets(std::ostream& os) const {
    for (Index j = 0; j < n_; ++j) {
      auto r = rows(j);
      auto v = values(j);
      for (std::size_t p = 0; p < r.size(); ++p) os << r[p] << ' ' << j << ' ' << v[p] << '\n';
    }
  }

 protected:
  CscStorage() = default;
  CscStorage(Index n, std::vector<Index> colptr, std::vector<Index> rowind,
             std::vector<double> values)
      : n_(n), colptr_(std::move(colptr)), rowind_(std::move(rowind)), values_(std::move(values)) {
    require(n_ >= 0 && static_cast<Index>(colptr_.size()) == n_ + 1 && colptr_.front() == 0,
            "sparse: malformed column pointers");
    require(colptr_.back() == static_cast<Index>(rowind_.size()) &&
                rowind_.size() == values_.size(),
            "sparse: row/value arrays do not match column pointers");
    for (Index j = 0; j < n_; ++j) {
      require(colptr_[j] <= colptr_[j + 1], "sparse: column pointers must be non-decreasing");
      for (Index p = colptr_[j]; p < colptr_[j + 1]; ++p) {
        require(rowind_[p] >= 0 && rowind_[p] <= j, "sparse: entry below the diagonal");
        require(p == colptr_[j] || rowind_[p - 1] < rowind_[p],
                "sparse: row indices must be strictly increasing within a column");
        require(std::isfinite(values_[p]), "sparse: non-finite entry");
      }
    }
  }

  Eigen::MatrixXd upper_to_dense() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_, n_);
    for (Index j = 0; j < n_; ++j)
      for (Index p = colptr_[j]; p < colptr_[j + 1]; ++p) out(rowind_[p], j) = values_[p];
    return out;
  }

  Index n_ = 0;
  std::vector<Index> colptr_{0};
  std::vector<Index> rowind_;
  std::vector<double> values_;

};

using Bucket = std::vector<std::pair<Index, double>>;

// Sorts each column bucket by row and sums duplicates.
inline void compress_buckets(std::vector<Bucket>& buckets, std::vector<Index>& colptr,
                             std::vector<Index>& rowind, std::vector<double>& values) {
  const Index n = static_cast<Index>(buckets.size());
  colptr.assign(n + 1, 0);
  rowind.clear();
  values.clear();
  for (Index j = 0; j < n; ++j) {
    auto& b = buckets[j];
    std::sort(b.begin(), b.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    for (std::size_t p = 0; p < b.size(); ++p) {
      if (!rowind.empty() && static_cast<Index>(rowind.size()) > colptr[j] &&
          rowind.back() == b[p].first) {
        values.back() += b[p].second;
      } else {
        rowind.push_back(b[p].first);
        values.push_back(b[p].second);
      }
    }
    colptr[j + 1] = static_cast<Index>(rowind.size());
  }
}

}  // namespace detail

/// Upper-triangular sparse matrix with a strictly positive diagonal; the
/// diagonal entry is the last one stored in each column.
class SparseUpperTri : public detail::CscStorage {
 public:
  SparseUpperTri() = default;
  SparseUpperTri(Index n, std::vector<Index> colptr, std::vector<Index> rowind,
                 std::vector<double> values)
      : CscStorage(n, std::move(colptr), std::move(rowind), std::move(values)) {
    for (Index j = 0; j < n_; ++j) {
      detail::require(colptr_[j + 1] > colptr_[j] && rowind_[colptr_[j + 1] - 1] == j &&
                          values_[colptr_[j + 1] - 1] > 0.0,
                      "SparseUpperTri: missing or non-positive diagonal in column " +
                          std::to_string(j));
    }
  }

  static SparseUpperTri identity(Index n) {
    std::vector<Index> cp(n + 1), ri(n);
    for (Index j = 0; j <= n; ++j) cp[j] = j;
    for (Index j = 0; j < n; ++j) ri[j] = j;
    return {n, std::move(cp), std::move(ri), std::vector<double>(n, 1.0)};
  }

  /// Nonzeros of the upper triangle of a dense matrix.
  static SparseUpperTri from_dense(const Eigen::MatrixXd& a) {
    detail::require(a.rows() == a.cols(), "SparseUpperTri::from_dense: matrix must be square");
    std::vector<Index> cp{0}, ri;
    std::vector<double> v;
    for (Index j = 0; j < a.cols(); ++j) {
      for (Index i = 0; i <= j; ++i) {
        if (a(i, j) != 0.0 || i == j) {
          ri.push_back(i);
          v.push_back(a(i, j));
        }
      }
      cp.push_back(static_cast<Index>(ri.size()));
    }
    return {a.rows(), std::move(cp), std::move(ri), std::move(v)};
  }

  double diag(Index j) const { return values_[colptr_[j + 1] - 1]; }

  Eigen::MatrixXd to_dense() const { return upper_to_dense(); }

  /// A x
  Eigen::VectorXd times(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n_);
    for (Index j = 0; j < n_; ++j)
      for (Index p = colptr_[j]; p < colptr_[j + 1]; ++p) y[rowind_[p]] += values_[p] * x[j];
    return y;
  }

  /// A' x
  Eigen::VectorXd transpose_times(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(n_);
    for (Index j = 0; j < n_; ++j) {
      double s = 0.0;
      for (Index p = colptr_[j]; p < colptr_[j + 1]; ++p) s += values_[p] * x[rowind_[p]];
      y[j] = s;
    }
    return y;
  }
};

/// Symmetric sparse matrix, upper triangle stored.
class SparseSym : public detail::CscStorage {
 public:
  SparseSym() = default;
  SparseSym(Index n, std::vector<Index> colptr, std::vector<Index> rowind,
            std::vector<double> values)
      : CscStorage(n, std::move(colptr), std::move(rowind), std::move(values)) {}

  static SparseSym from_dense(const Eigen::MatrixXd& a) {
    detail::require(a.rows() == a.cols(), "SparseSym::from_dense: matrix must be square");
    std::vector<Index> cp{0}, ri;
    std::vector<double> v;
    for (Index j = 0; j < a.cols(); ++j) {
      for (Index i = 0; i <= j; ++i) {
        if (a(i, j) != 0.0) {
          ri.push_back(i);
          v.push_back(a(i, j));
        }
      }
      cp.push_back(static_cast<Index>(ri.size()));
    }
    return {a.rows(), std::move(cp), std::move(ri), std::move(v)};
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd u = upper_to_dense();
    Eigen::MatrixXd out = u + u.transpose();
    out.diagonal() = u.diagonal();
    return out;
  }
};

/// A A' where A is the subset of rows of `u` selected by `row_map`:
/// row_map[r] is the output index of row r, or -1 to drop it. Output
/// indices must be distinct and lie in [0, out_dim).
inline SparseSym aat(const SparseUpperTri& u, const IndexList& row_map, Index out_dim) {
  detail::require(static_cast<Index>(row_map.size()) == u.dim(), "aat: row map length mismatch");
  std::vector<detail::Bucket> buckets(out_dim);
  std::vector<std::pair<Index, double>> sel;
  for (Index k = 0; k < u.dim(); ++k) {
    sel.clear();
    auto r = u.rows(k);
    auto v = u.values(k);
    for (std::size_t p = 0; p < r.size(); ++p) {
      const Index o = row_map[r[p]];
      if (o >= 0) sel.emplace_back(o, v[p]);
    }
    for (const auto& a : sel)
      for (const auto& b : sel)
        if (a.first <= b.first) buckets[b.first].emplace_back(a.first, a.second * b.second);
  }
  std::vector<Index> cp, ri;
  std::vector<double> vals;
  detail::compress_buckets(buckets, cp, ri, vals);
  return {out_dim, std::move(cp), std::move(ri), std::move(vals)};
}

/// A A' over all rows.
inline SparseSym aat(const SparseUpperTri& u) {
  IndexList map(u.dim());
  for (Index i = 0; i < u.dim(); ++i) map[i] = i;
  return aat(u, map, u.dim());
}

namespace detail {

// Elimination tree of a symmetric matrix given by its upper triangle.
inline IndexList etree(const SparseSym& a) {
  const Index n = a.dim();
  IndexList parent(n, -1), ancestor(n, -1);
  for (Index k = 0; k < n; ++k) {
    for (Index i : a.rows(k)) {
      while (i != -1 && i < k) {
        const Index next = ancestor[i];
        ancestor[i] = k;
        if (next == -1) parent[i] = k;
        i = next;
      }
    }
  }
  return parent;
}

// Nonzero pattern of row k of the Cholesky factor, written to
// stack[top..n) in topological order. Returns top.
inline Index ereach(const SparseSym& a, Index k, const IndexList& parent, IndexList& stack,
                    std::vector<char>& mark) {
  const Index n = a.dim();
  Index top = n;
  mark[k] = 1;
  for (Index i : a.rows(k)) {
    if (i > k) continue;
    Index len = 0;
    for (; !mark[i]; i = parent[i]) {
      stack[len++] = i;
      mark[i] = 1;
    }
    while (len > 0) stack[--top] = stack[--len];
  }
  for (Index p = top; p < n; ++p) mark[stack[p]] = 0;
  mark[k] = 0;
  return top;
}

}  // namespace detail

/// Reverse Cholesky: upper-triangular V with V V' = W, computed as
/// rev(chol(rev(W))) where rev reverses row and column order.
///
/// Symbolic pass (elimination tree, row patterns) then an up-looking numeric
/// pass on the reversed matrix. Throws NotPositiveDefinite naming the failing
/// column of V; no jitter is added.
inline SparseUpperTri rchol(const SparseSym& w) {
  const Index n = w.dim();

  // C = rev(W), upper triangle: W(i,j), i <= j, lands at C(n-1-j, n-1-i).
  std::vector<detail::Bucket> buckets(n);
  for (Index j = 0; j < n; ++j) {
    auto r = w.rows(j);
    auto v = w.values(j);
    for (std::size_t p = 0; p < r.size(); ++p) buckets[n - 1 - r[p]].emplace_back(n - 1 - j, v[p]);
  }
  std::vector<Index> ccp, cri;
  std::vector<double> cval;
  detail::compress_buckets(buckets, ccp, cri, cval);
  const SparseSym c(n, std::move(ccp), std::move(cri), std::move(cval));

  const IndexList parent = detail::etree(c);
  IndexList stack(n);
  std::vector<char> mark(n, 0);

  IndexList count(n, 1);
  for (Index k = 0; k < n; ++k) {
    const Index top = detail::ereach(c, k, parent, stack, mark);
    for (Index p = top; p < n; ++p) ++count[stack[p]];
  }
  IndexList lp(n + 1, 0);
  for (Index j = 0; j < n; ++j) lp[j + 1] = lp[j] + count[j];
  IndexList li(lp[n]);
  std::vector<double> lx(lp[n]);
  IndexList next(lp.begin(), lp.end() - 1);
  std::vector<double> x(n, 0.0);

  for (Index k = 0; k < n; ++k) {
    const Index top = detail::ereach(c, k, parent, stack, mark);
    x[k] = 0.0;
    auto r = c.rows(k);
    auto v = c.values(k);
    for (std::size_t p = 0; p < r.size(); ++p) x[r[p]] = v[p];
    double d = x[k];
    x[k] = 0.0;
    for (Index t = top; t < n; ++t) {
      const Index i = stack[t];
      const double lki = x[i] / lx[lp[i]];
      x[i] = 0.0;
      for (Index p = lp[i] + 1; p < next[i]; ++p) x[li[p]] -= lx[p] * lki;
      d -= lki * lki;
      const Index p = next[i]++;
      li[p] = k;
      lx[p] = lki;
    }
    if (!(d > 0.0) || !std::isfinite(d))
      throw NotPositiveDefinite("rchol: non-positive pivot", n - 1 - k);
    const Index p = next[k]++;
    li[p] = k;
    lx[p] = std::sqrt(d);
  }

  // V(:, j) is L(:, n-1-j) with rows reflected, i.e. read backwards.
  std::vector<Index> vcp(n + 1, 0), vri;
  std::vector<double> vval;
  vri.reserve(lp[n]);
  vval.reserve(lp[n]);
  for (Index j = 0; j < n; ++j) {
    const Index col = n - 1 - j;
    for (Index p = lp[col + 1] - 1; p >= lp[col]; --p) {
      vri.push_back(n - 1 - li[p]);
      vval.push_back(lx[p]);
    }
    vcp[j + 1] = static_cast<Index>(vri.size());
  }
  return {n, std::move(vcp), std::move(vri), std::move(vval)};
}

/// Solves V x = b, or V' x = b when `transpose` is set.
inline Eigen::VectorXd solve_upper(const SparseUpperTri& v, const Eigen::VectorXd& b,
                                   bool transpose = false) {
  const Index n = v.dim();
  detail::require(b.size() == n, "solve_upper: dimension mismatch");
  Eigen::VectorXd x = b;
  if (!transpose) {
    for (Index j = n - 1; j >= 0; --j) {
      auto r = v.rows(j);
      auto val = v.values(j);
      const std::size_t last = r.size() - 1;
      x[j] /= val[last];
      for (std::size_t p = 0; p < last; ++p) x[r[p]] -= val[p] * x[j];
    }
  } else {
    for (Index j = 0; j < n; ++j) {
      auto r = v.rows(j);
      auto val = v.values(j);
      const std::size_t last = r.size() - 1;
      double s = x[j];
      for (std::size_t p = 0; p < last; ++p) s -= val[p] * x[r[p]];
      x[j] = s / val[last];
    }
  }
  return x;
}

/// log det(V V') = 2 sum log V_ii
inline double logdet_from_factor(const SparseUpperTri& v) {
  double s = 0.0;
  for (Index j = 0; j < v.dim(); ++j) s += std::log(v.diag(j));
  return 2.0 * s;
}

/// Diagonal entries of (V V')^{-1} at the requested indices, each as
/// ||V^{-1} e_i||^2 via a sparse back substitution over the reach of i.
inline Eigen::VectorXd inverse_diagonal(const SparseUpperTri& v, const IndexList& indices) {
  const Index n = v.dim();
  Eigen::VectorXd out(static_cast<Index>(indices.size()));
  std::vector<double> x(n, 0.0);
  std::vector<char> mark(n, 0);
  IndexList reach, stack;
  for (std::size_t q = 0; q < indices.size(); ++q) {
    const Index i = indices[q];
    detail::require(i >= 0 && i < n, "inverse_diagonal: index out of range");
    reach.clear();
    stack.assign(1, i);
    mark[i] = 1;
    while (!stack.empty()) {
      const Index j = stack.back();
      stack.pop_back();
      reach.push_back(j);
      for (Index r : v.rows(j))
        if (!mark[r]) {
          mark[r] = 1;
          stack.push_back(r);
        }
    }
    std::sort(reach.begin(), reach.end(), std::greater<>());
    x[i] = 1.0;
    double s = 0.0;
    for (Index j : reach) {
      auto r = v.rows(j);
      auto val = v.values(j);
      const std::size_t last = r.size() - 1;
      x[j] /= val[last];
      s += x[j] * x[j];
      for (std::size_t p = 0; p < last; ++p) x[r[p]] -= val[p] * x[j];
    }
    for (Index j : reach) {
      x[j] = 0.0;
      mark[j] = 0;
    }
    out[static_cast<Index>(q)] = s;
  }
  return out;
}

}  // namespace vlgp
