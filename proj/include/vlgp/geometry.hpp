#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"

namespace vlgp {

/// n points in R^d, stored row-wise. Immutable after construction.
///
/// Construction rejects empty sets, non-finite coordinates and duplicate
/// points: two coincident locations make the conditional variances of the
/// sparse factor vanish.
class LocationSet {
 public:
  LocationSet() = default;

  explicit LocationSet(Eigen::MatrixXd coords) : coords_(std::move(coords)) {
    detail::require(coords_.rows() >= 1, "LocationSet: need at least one location");
    detail::require(coords_.cols() >= 1, "LocationSet: dimension must be >= 1");
    detail::require(coords_.allFinite(), "LocationSet: coordinates must be finite");
    check_duplicates();
  }

  Index size() const { return coords_.rows(); }
  int dim() const { return static_cast<int>(coords_.cols()); }
  const Eigen::MatrixXd& coords() const { return coords_; }
  auto point(Index i) const { return coords_.row(i); }

  double squared_distance(Index i, Index j) const {
    return (coords_.row(i) - coords_.row(j)).squaredNorm();
  }
  double distance(Index i, Index j) const { return std::sqrt(squared_distance(i, j)); }

  /// Row k of the result is row perm[k] of this set.
  LocationSet permuted(const IndexList& perm) const {
    Eigen::MatrixXd out(static_cast<Index>(perm.size()), coords_.cols());
    for (Index k = 0; k < out.rows(); ++k) out.row(k) = coords_.row(perm[k]);
    LocationSet result;
    result.coords_ = std::move(out);
    return result;
  }

 private:
  void check_duplicates() const {
    IndexList idx(coords_.rows());
    std::iota(idx.begin(), idx.end(), Index{0});
    auto less = [&](Index a, Index b) {
      for (Index c = 0; c < coords_.cols(); ++c) {
        if (coords_(a, c) != coords_(b, c)) return coords_(a, c) < coords_(b, c);
      }
      return false;
    };
    std::sort(idx.begin(), idx.end(), less);
    for (std::size_t k = 1; k < idx.size(); ++k) {
      if (!less(idx[k - 1], idx[k])) {
        throw InvalidArgument("LocationSet: duplicate locations at indices " +
                              std::to_string(std::min(idx[k - 1], idx[k])) + " and " +
                              std::to_string(std::max(idx[k - 1], idx[k])));
      }
    }
  }

  Eigen::MatrixXd coords_;
};

enum class OrderingKind { coordinate, maxmin };

/// perm[k] is the original index of the k-th ordered point.
struct Ordering {
  IndexList perm;
  OrderingKind kind = OrderingKind::coordinate;

  Index size() const { return static_cast<Index>(perm.size()); }

  /// inverse()[original index] = ordered position.
  IndexList inverse() const {
    IndexList inv(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = static_cast<Index>(k);
    return inv;
  }

  /// out[k] = v[perm[k]]
  Eigen::VectorXd to_ordered(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(size());
    for (Index k = 0; k < size(); ++k) out[k] = v[perm[k]];
    return out;
  }

  /// out[perm[k]] = v[k]
  Eigen::VectorXd to_original(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(size());
    for (Index k = 0; k < size(); ++k) out[perm[k]] = v[k];
    return out;
  }
};

/// Ascending by the single coordinate; ties keep original index order.
inline Ordering coordinate_order(const LocationSet& locs) {
  detail::require(locs.dim() == 1, "coordinate_order: requires d = 1");
  Ordering ord{IndexList(locs.size()), OrderingKind::coordinate};
  std::iota(ord.perm.begin(), ord.perm.end(), Index{0});
  const auto& c = locs.coords();
  std::stable_sort(ord.perm.begin(), ord.perm.end(),
                   [&](Index a, Index b) { return c(a, 0) < c(b, 0); });
  return ord;
}

/// Exact greedy maxmin ordering, O(n^2).
///
/// The first point is the one nearest the coordinate centroid. Every later
/// point maximizes the minimum distance to the points already chosen. All
/// ties go to the lowest original index.
inline Ordering maxmin_order(const LocationSet& locs) {
  const Index n = locs.size();
  const auto& c = locs.coords();
  Ordering ord{{}, OrderingKind::maxmin};
  ord.perm.reserve(n);

  const Eigen::RowVectorXd centroid = c.colwise().mean();
  Index first = 0;
  double best = (c.row(0) - centroid).squaredNorm();
  for (Index i = 1; i < n; ++i) {
    const double dd = (c.row(i) - centroid).squaredNorm();
    if (dd < best) {
      best = dd;
      first = i;
    }
  }

  std::vector<double> mind(n);
  std::vector<char> taken(n, 0);
  for (Index i = 0; i < n; ++i) mind[i] = locs.squared_distance(i, first);
  taken[first] = 1;
  ord.perm.push_back(first);

  for (Index k = 1; k < n; ++k) {
    Index pick = -1;
    double far = -1.0;
    for (Index i = 0; i < n; ++i) {
      if (!taken[i] && mind[i] > far) {
        far = mind[i];
        pick = i;
      }
    }
    taken[pick] = 1;
    ord.perm.push_back(pick);
    for (Index i = 0; i < n; ++i) {
      if (!taken[i]) mind[i] = std::min(mind[i], locs.squared_distance(i, pick));
    }
  }
  return ord;
}

namespace detail {

// The `count` candidates in [0, end) closest to point i, by (distance, index).
inline IndexList nearest_in_prefix(const LocationSet& locs, Index i, Index end, Index count) {
  count = std::min(count, end);
  if (count <= 0) return {};
  std::vector<std::pair<double, Index>> cand;
  cand.reserve(end);
  for (Index j = 0; j < end; ++j) cand.emplace_back(locs.squared_distance(i, j), j);
  std::partial_sort(cand.begin(), cand.begin() + count, cand.end());
  IndexList out(count);
  for (Index k = 0; k < count; ++k) out[k] = cand[k].second;
  return out;
}

}  // namespace detail

/// The min(m, i) points before i (in the ordering of `ordered`) closest to
/// point i, nearest first. `ordered` must already be permuted into order.
inline IndexList nearest_m_previous(const LocationSet& ordered, Index i, Index m) {
  detail::require(i >= 0 && i < ordered.size(), "nearest_m_previous: index out of range");
  return detail::nearest_in_prefix(ordered, i, i, m);
}

/// The m points closest to point i, i itself included, nearest first.
inline IndexList nearest_m_any(const LocationSet& ordered, Index i, Index m) {
  detail::require(m >= 1, "nearest_m_any: m must be >= 1");
  detail::require(m <= ordered.size(), "nearest_m_any: m exceeds the number of locations");
  detail::require(i >= 0 && i < ordered.size(), "nearest_m_any: index out of range");
  return detail::nearest_in_prefix(ordered, i, ordered.size(), m);
}

}  // namespace vlgp
