#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "geometry.hpp"
#include "kernels.hpp"
#include "sparse.hpp"

namespace vlgp {

/// iw: interweaved (y_1, t_1, ..., y_n, t_n), latents condition on nearby
///     earlier latents and responses.
/// rf: responses first (t_1..t_n, y_1..y_n), latents condition on the m
///     nearest locations, as latents when earlier and responses otherwise.
/// lowrank: interweaved layout, every latent conditions on the first m
///     latents in the ordering.
/// prediction: response-first joint over observed and unobserved locations.
enum class Scheme { iw, rf, lowrank, prediction };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::iw: return "iw";
    case Scheme::rf: return "rf";
    case Scheme::lowrank: return "lowrank";
    case Scheme::prediction: return "prediction";
  }
  return "?";
}

enum class VarKind { latent, response };

/// One entry of the joint vector x. `cond` holds positions in x, ascending,
/// all smaller than the variable's own position.
struct JointVariable {
  VarKind kind = VarKind::latent;
  Index location = 0;
  IndexList cond;
};

/// Ordering and conditioning structure of a general Vecchia approximation of
/// the joint distribution of latents y and pseudo-responses t.
///
/// Every location has a latent; a location has a response only when it is
/// observed. Location indices refer to `locations`, which is already in
/// ordered form (`ordering.perm[k]` is the caller's index of location k).
struct VecchiaSpec {
  Scheme scheme = Scheme::iw;
  Index m = 0;
  Ordering ordering;
  LocationSet locations;
  std::vector<JointVariable> variables;
  IndexList latent_position;
  IndexList response_position;  // -1 where unobserved
  std::vector<IndexList> q_y, q_t;

  Index num_locations() const { return locations.size(); }
  Index num_variables() const { return static_cast<Index>(variables.size()); }
  Index num_responses() const {
    return static_cast<Index>(std::count_if(response_position.begin(), response_position.end(),
                                            [](Index p) { return p >= 0; }));
  }
  bool interweaved() const { return scheme == Scheme::iw || scheme == Scheme::lowrank; }
};

namespace detail {

inline VecchiaSpec interweaved_layout(Scheme scheme, Index m, const Ordering& ord,
                                      LocationSet ordered, std::vector<IndexList> q_y,
                                      std::vector<IndexList> q_t) {
  const Index n = ordered.size();
  VecchiaSpec spec{scheme, m, ord, std::move(ordered), {}, IndexList(n), IndexList(n), {}, {}};
  spec.variables.resize(2 * n);
  for (Index i = 0; i < n; ++i) {
    auto& y = spec.variables[2 * i];
    y.kind = VarKind::latent;
    y.location = i;
    for (Index j : q_y[i]) y.cond.push_back(2 * j);
    for (Index j : q_t[i]) y.cond.push_back(2 * j + 1);
    std::sort(y.cond.begin(), y.cond.end());
    auto& t = spec.variables[2 * i + 1];
    t.kind = VarKind::response;
    t.location = i;
    t.cond = {2 * i};
    spec.latent_position[i] = 2 * i;
    spec.response_position[i] = 2 * i + 1;
  }
  spec.q_y = std::move(q_y);
  spec.q_t = std::move(q_t);
  return spec;
}

// Responses of observed locations first, then all latents in location
// order. Latent i conditions on its m nearest locations: on the latent
// when it comes earlier, else on the response if observed, else nothing.
inline VecchiaSpec response_first_layout(Scheme scheme, Index m, const Ordering& ord,
                                         LocationSet ordered, const std::vector<char>& observed) {
  const Index n = ordered.size();
  VecchiaSpec spec{scheme, m, ord, std::move(ordered), {}, IndexList(n), IndexList(n, -1), {}, {}};
  Index nobs = 0;
  for (Index i = 0; i < n; ++i)
    if (observed[i]) spec.response_position[i] = nobs++;
  spec.variables.resize(nobs + n);
  for (Index i = 0; i < n; ++i) {
    if (observed[i]) {
      auto& t = spec.variables[spec.response_position[i]];
      t.kind = VarKind::response;
      t.location = i;
    }
    spec.latent_position[i] = nobs + i;
  }
  const Index mm = std::min(m, n);
  spec.q_y.resize(n);
  spec.q_t.resize(n);
  for (Index i = 0; i < n; ++i) {
    auto& y = spec.variables[nobs + i];
    y.kind = VarKind::latent;
    y.location = i;
    for (Index j : nearest_m_any(spec.locations, i, mm)) {
      if (j < i) {
        spec.q_y[i].push_back(j);
        y.cond.push_back(nobs + j);
      } else if (observed[j]) {
        spec.q_t[i].push_back(j);
        y.cond.push_back(spec.response_position[j]);
      }
    }
    std::sort(spec.q_y[i].begin(), spec.q_y[i].end());
    std::sort(spec.q_t[i].begin(), spec.q_t[i].end());
    std::sort(y.cond.begin(), y.cond.end());
  }
  return spec;
}

}  // namespace detail

/// Interweaved specification. q(i) is the m nearest previous locations;
/// the latent part grows from the neighbour k_i whose own latent set
/// overlaps q(i) the most (ties: closest to s_i, then lowest index):
/// q_y(i) = {k_i} u (q_y(k_i) n q(i)), q_t(i) = q(i) \ q_y(i).
inline VecchiaSpec build_spec_iw(const LocationSet& locs, const Ordering& ord, Index m) {
  detail::require(m >= 1, "build_spec_iw: m must be >= 1");
  detail::require(ord.size() == locs.size(), "build_spec_iw: ordering size mismatch");
  LocationSet ordered = locs.permuted(ord.perm);
  const Index n = ordered.size();
  std::vector<IndexList> q_y(n), q_t(n);
  std::vector<char> in_q(n, 0);
  for (Index i = 0; i < n; ++i) {
    const IndexList q = nearest_m_previous(ordered, i, m);  // nearest first
    if (q.empty()) continue;
    for (Index j : q) in_q[j] = 1;
    Index best = -1;
    Index best_overlap = -1;
    for (Index j : q) {
      const Index overlap =
          std::count_if(q_y[j].begin(), q_y[j].end(), [&](Index l) { return in_q[l] != 0; });
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = j;
      }
    }
    IndexList qy{best};
    for (Index l : q_y[best])
      if (in_q[l]) qy.push_back(l);
    std::sort(qy.begin(), qy.end());
    for (Index j : q)
      if (!std::binary_search(qy.begin(), qy.end(), j)) q_t[i].push_back(j);
    std::sort(q_t[i].begin(), q_t[i].end());
    q_y[i] = std::move(qy);
    for (Index j : q) in_q[j] = 0;
  }
  return detail::interweaved_layout(Scheme::iw, m, ord, std::move(ordered), std::move(q_y),
                                    std::move(q_t));
}

/// Response-first specification; m counts locations including s_i itself
/// and is capped at n (full conditioning).
inline VecchiaSpec build_spec_rf(const LocationSet& locs, const Ordering& ord, Index m) {
  detail::require(m >= 1, "build_spec_rf: m must be >= 1");
  detail::require(ord.size() == locs.size(), "build_spec_rf: ordering size mismatch");
  return detail::response_first_layout(Scheme::rf, m, ord, locs.permuted(ord.perm),
                                       std::vector<char>(locs.size(), 1));
}

/// Low-rank baseline: latent i conditions on the first min(m, i) latents.
inline VecchiaSpec build_spec_lowrank(const LocationSet& locs, const Ordering& ord, Index m) {
  detail::require(m >= 1, "build_spec_lowrank: m must be >= 1");
  detail::require(ord.size() == locs.size(), "build_spec_lowrank: ordering size mismatch");
  const Index n = locs.size();
  std::vector<IndexList> q_y(n), q_t(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < std::min(m, i); ++j) q_y[i].push_back(j);
  return detail::interweaved_layout(Scheme::lowrank, m, ord, locs.permuted(ord.perm),
                                    std::move(q_y), std::move(q_t));
}

/// Joint response-first specification over observed locations (rows of
/// `observed`, all with responses) and prediction locations (rows of
/// `unobserved`, latents only). All locations are maxmin-ordered together;
/// the ordering indexes the stacked matrix [observed; unobserved].
/// Throws if a prediction location coincides with any other location.
inline VecchiaSpec build_spec_prediction(const Eigen::MatrixXd& observed,
                                         const Eigen::MatrixXd& unobserved, Index m) {
  detail::require(m >= 1, "build_spec_prediction: m must be >= 1");
  detail::require(unobserved.rows() == 0 || unobserved.cols() == observed.cols(),
                  "build_spec_prediction: dimension mismatch");
  Eigen::MatrixXd all(observed.rows() + unobserved.rows(), observed.cols());
  all.topRows(observed.rows()) = observed;
  if (unobserved.rows() > 0) all.bottomRows(unobserved.rows()) = unobserved;
  const LocationSet locs(std::move(all));
  const Ordering ord = maxmin_order(locs);
  std::vector<char> obs(locs.size());
  for (Index k = 0; k < locs.size(); ++k) obs[k] = ord.perm[k] < observed.rows();
  return detail::response_first_layout(Scheme::prediction, m, ord, locs.permuted(ord.perm), obs);
}

/// Sparse upper-triangular U with Q = U U' the precision of the Vecchia
/// joint of x, plus the row partition into latent and response rows.
struct UFactor {
  SparseUpperTri U;
  IndexList latent_of_row;    // location of a latent row, else -1
  IndexList response_of_row;  // location of a response row, else -1
  Index num_locations = 0;
  Index num_responses = 0;
};

/// Assembles U for a fixed specification and kernel. Kernel blocks are
/// computed once; each call to compute() only adds the pseudo-variances.
class UAssembler {
 public:
  /// Blocks are cached only while their total size stays under this many
  /// doubles; beyond it they are rebuilt on every call.
  static constexpr Index kCacheLimit = Index{1} << 24;

  UAssembler(const VecchiaSpec& spec, const MaternParams& kernel) : spec_(&spec), kernel_(kernel) {
    kernel.validate();
    Index total = 0;
    for (const auto& var : spec.variables) {
      const auto c = static_cast<Index>(var.cond.size());
      total += c * c + c;
    }
    if (total <= kCacheLimit) {
      blocks_.resize(spec.num_variables());
      for (Index pos = 0; pos < spec.num_variables(); ++pos) fill_block(pos, blocks_[pos]);
    }
  }

  /// `d` holds pseudo-variances by location; entries of unobserved
  /// locations are ignored.
  UFactor compute(const Eigen::VectorXd& d) const {
    const VecchiaSpec& spec = *spec_;
    detail::require(d.size() == spec.num_locations(), "compute_U: pseudo-variance length mismatch");
    const Index nv = spec.num_variables();
    UFactor out;
    out.num_locations = spec.num_locations();
    out.num_responses = spec.num_responses();
    out.latent_of_row.assign(nv, -1);
    out.response_of_row.assign(nv, -1);
    for (Index pos = 0; pos < nv; ++pos) {
      const auto& var = spec.variables[pos];
      (var.kind == VarKind::latent ? out.latent_of_row : out.response_of_row)[pos] = var.location;
    }

    auto extra = [&](Index pos) {
      const auto& var = spec.variables[pos];
      if (var.kind != VarKind::response) return 0.0;
      const double di = d[var.location];
      detail::require(di > 0.0 && std::isfinite(di), "compute_U: pseudo-variances must be positive");
      return di;
    };

    std::vector<Index> cp(nv + 1, 0), ri;
    std::vector<double> vals;
    Block scratch;
    Eigen::MatrixXd cc;
    for (Index pos = 0; pos < nv; ++pos) {
      const auto& var = spec.variables[pos];
      const Block* blk = &scratch;
      if (blocks_.empty()) fill_block(pos, scratch);
      else blk = &blocks_[pos];
      const double ckk = kernel_.variance + extra(pos);
      double r = ckk;
      Eigen::VectorXd b;
      if (!var.cond.empty()) {
        cc = blk->cc;
        for (std::size_t a = 0; a < var.cond.size(); ++a) cc(a, a) += extra(var.cond[a]);
        Eigen::LLT<Eigen::MatrixXd> llt(cc);
        if (llt.info() != Eigen::Success)
          throw NotPositiveDefinite("compute_U: conditioning covariance not positive definite", pos);
        b = llt.solve(blk->ck);
        r = ckk - b.dot(blk->ck);
      }
      if (!(r > 0.0) || !std::isfinite(r))
        throw NotPositiveDefinite("compute_U: non-positive conditional variance", pos);
      const double s = 1.0 / std::sqrt(r);
      for (std::size_t a = 0; a < var.cond.size(); ++a) {
        ri.push_back(var.cond[a]);
        vals.push_back(-b[static_cast<Index>(a)] * s);
      }
      ri.push_back(pos);
      vals.push_back(s);
      cp[pos + 1] = static_cast<Index>(ri.size());
    }
    out.U = SparseUpperTri(nv, std::move(cp), std::move(ri), std::move(vals));
    return out;
  }

 private:
  struct Block {
    Eigen::MatrixXd cc;  // K among conditioning variables
    Eigen::VectorXd ck;  // K between conditioning variables and the variable
  };

  void fill_block(Index pos, Block& blk) const {
    const auto& spec = *spec_;
    const auto& locs = spec.locations;
    const auto& var = spec.variables[pos];
    auto k = [&](Index a, Index b) { return matern(locs.distance(a, b), kernel_); };
    const Index c = static_cast<Index>(var.cond.size());
    blk.cc.resize(c, c);
    blk.ck.resize(c);
    for (Index a = 0; a < c; ++a) {
      const Index la = spec.variables[var.cond[a]].location;
      blk.ck[a] = k(la, var.location);
      blk.cc(a, a) = kernel_.variance;
      for (Index b = 0; b < a; ++b) {
        blk.cc(a, b) = k(la, spec.variables[var.cond[b]].location);
        blk.cc(b, a) = blk.cc(a, b);
      }
    }
  }

  const VecchiaSpec* spec_;
  MaternParams kernel_;
  std::vector<Block> blocks_;
};

/// U from the covariance function: column i has r_i^{-1/2} on the diagonal
/// and -b_i r_i^{-1/2} on the rows of its conditioning set, where
/// b_i' = C(x_i, x_c) C(x_c, x_c)^{-1} and r_i = C(x_i, x_i) - b_i' C(x_c, x_i).
inline UFactor compute_U(const VecchiaSpec& spec, const MaternParams& kernel,
                         const Eigen::VectorXd& d) {
  return UAssembler(spec, kernel).compute(d);
}

/// Posterior precision W = U_y U_y' of the latents and V = rchol(W).
struct VecchiaPosterior {
  SparseSym W;
  SparseUpperTri V;
};

namespace detail {

// True when every response column of U holds only its diagonal and latent
// rows appear in location order (the response-first layouts). Then
// W = U_yy U_yy' with U_yy upper triangular, and by uniqueness of the
// factor rchol(W) = U_yy.
inline bool latent_block_is_factor(const UFactor& u) {
  Index last = -1;
  for (Index k = 0; k < u.U.dim(); ++k) {
    if (u.response_of_row[k] >= 0 && u.U.column_nnz(k) != 1) return false;
    const Index loc = u.latent_of_row[k];
    if (loc >= 0) {
      if (loc != last + 1) return false;
      last = loc;
    }
  }
  return true;
}

inline SparseUpperTri latent_block(const UFactor& u) {
  std::vector<Index> cp{0}, ri;
  std::vector<double> vals;
  for (Index k = 0; k < u.U.dim(); ++k) {
    if (u.latent_of_row[k] < 0) continue;
    auto r = u.U.rows(k);
    auto v = u.U.values(k);
    for (std::size_t p = 0; p < r.size(); ++p) {
      const Index loc = u.latent_of_row[r[p]];
      if (loc >= 0) {
        ri.push_back(loc);
        vals.push_back(v[p]);
      }
    }
    cp.push_back(static_cast<Index>(ri.size()));
  }
  return {u.num_locations, std::move(cp), std::move(ri), std::move(vals)};
}

}  // namespace detail

/// Response-first layouts take V straight from U; a symbolic factorization
/// of W cannot see that its fill cancels and would store O(n^2) zeros.
inline VecchiaPosterior posterior(const UFactor& u) {
  VecchiaPosterior p;
  p.W = aat(u.U, u.latent_of_row, u.num_locations);
  p.V = detail::latent_block_is_factor(u) ? detail::latent_block(u) : rchol(p.W);
  return p;
}

namespace detail {

struct PseudoSolve {
  Eigen::VectorXd ttilde;  // U_t' (t - mu), one entry per variable
  Eigen::VectorXd tbreve;  // V^{-1} U_y ttilde
  Eigen::VectorXd mean;    // E(y | t)
};

inline PseudoSolve pseudo_solve(const UFactor& u, const SparseUpperTri& v, const Eigen::VectorXd& t,
                                const Eigen::VectorXd& mu) {
  const Index nloc = u.num_locations;
  require(t.size() == nloc && mu.size() == nloc && v.dim() == nloc,
          "posterior_mean: dimension mismatch");
  const Index nv = u.U.dim();
  PseudoSolve out;
  out.ttilde = Eigen::VectorXd::Zero(nv);
  Eigen::VectorXd uy = Eigen::VectorXd::Zero(nloc);
  for (Index k = 0; k < nv; ++k) {
    auto r = u.U.rows(k);
    auto val = u.U.values(k);
    double s = 0.0;
    for (std::size_t p = 0; p < r.size(); ++p) {
      const Index loc = u.response_of_row[r[p]];
      if (loc >= 0) s += val[p] * (t[loc] - mu[loc]);
    }
    out.ttilde[k] = s;
    if (s == 0.0) continue;
    for (std::size_t p = 0; p < r.size(); ++p) {
      const Index loc = u.latent_of_row[r[p]];
      if (loc >= 0) uy[loc] += val[p] * s;
    }
  }
  out.tbreve = solve_upper(v, uy);
  out.mean = mu - solve_upper(v, out.tbreve, true);
  return out;
}

}  // namespace detail

/// E(y | t) = mu - (V')^{-1} V^{-1} U_y U_t' (t - mu); vectors by location
/// in spec order (t entries of unobserved locations are ignored).
inline Eigen::VectorXd posterior_mean(const UFactor& u, const SparseUpperTri& v,
                                      const Eigen::VectorXd& t, const Eigen::VectorXd& mu) {
  return detail::pseudo_solve(u, v, t, mu).mean;
}

/// log of the Vecchia-implied density of the pseudo-data,
///   -2 log p(t) = -2 sum log U_ii + 2 sum log V_ii + ttilde'ttilde - tbreve'tbreve + n log 2 pi.
inline double pseudo_data_loglik(const UFactor& u, const SparseUpperTri& v,
                                 const Eigen::VectorXd& t, const Eigen::VectorXd& mu) {
  const auto s = detail::pseudo_solve(u, v, t, mu);
  double logdiag_u = 0.0;
  for (Index k = 0; k < u.U.dim(); ++k) logdiag_u += std::log(u.U.diag(k));
  const double m2 = -2.0 * logdiag_u + logdet_from_factor(v) + s.ttilde.squaredNorm() -
                    s.tbreve.squaredNorm() +
                    static_cast<double>(u.num_responses) * std::log(2.0 * std::numbers::pi);
  return -0.5 * m2;
}

}  // namespace vlgp
