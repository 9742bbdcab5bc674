// vlgp: command-line driver for simulation, fitting, prediction,
// likelihood surfaces and benchmarks.
//
// Exit codes: 0 success, 1 non-convergence or numerical failure,
// 2 usage or I/O error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <vlgp/vlgp.hpp>

namespace {

using namespace vlgp;
using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 1;
constexpr int kExitUsage = 2;

constexpr std::uint64_t kDataSeedOffset = 0x9E3779B97F4A7C15ULL;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Config {
  std::string data, pred, out = "-", mode_out, truth_out;
  std::string likelihood = "gaussian";
  double lik_param = 1.0;
  double sigma2 = 1.0, range = 0.1, smoothness = 0.5;
  std::string beta = "0";
  std::string scheme = "auto", ordering = "auto", method = "vl";
  long m = 10;
  double epsilon = 1e-6;
  int max_iter = 50;
  std::uint64_t seed = 0;
  int replicates = 1;
  bool estimate = false;
  std::string free = "sigma2,range";
  std::string grid;
  // simulate / benchmark
  std::string n = "400";
  int dim = 2;
  std::string design = "grid";
  long sim_m = 30;
  long dense_sim_max = 4000;
  // benchmark
  std::string methods = "laplace,vl-iw,vl-rf,lowrank";
  std::string m_list;
  int threads = 0;
  int crps_samples = 2000;
  long laplace_max = 4000;
  // predict
  int data_samples = 2000;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("cannot parse " + what + " value '" + s + "'");
}

long parse_long(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("cannot parse " + what + " value '" + s + "'");
}

// ---------------------------------------------------------------------------
// Model setup

Theta make_theta(const Config& c, int dim) {
  Theta th;
  th.kernel = {c.sigma2, c.range, c.smoothness};
  th.likelihood = {family_from_string(c.likelihood), c.lik_param};
  th.mean = MeanModel::constant(0.0, dim);
  if (c.beta != "estimate") {
    const auto parts = split(c.beta, ',');
    if (parts.size() == 1) {
      th.mean.coefficients[0] = parse_double(parts[0], "--beta");
    } else if (parts.size() == static_cast<std::size_t>(dim) + 1) {
      for (std::size_t k = 0; k < parts.size(); ++k)
        th.mean.coefficients[static_cast<Index>(k)] = parse_double(parts[k], "--beta");
    } else {
      throw UsageError("--beta needs 1 or " + std::to_string(dim + 1) + " values, or 'estimate'");
    }
  }
  th.validate();
  return th;
}

Ordering make_ordering(const Config& c, const LocationSet& locs) {
  std::string o = c.ordering;
  if (o == "auto") o = locs.dim() == 1 ? "coordinate" : "maxmin";
  if (o == "coordinate") {
    if (locs.dim() != 1) throw UsageError("--ordering coordinate requires one-dimensional locations");
    return coordinate_order(locs);
  }
  if (o == "maxmin") return maxmin_order(locs);
  throw UsageError("unknown ordering '" + c.ordering + "'");
}

std::string resolve_scheme(const Config& c, int dim) {
  if (c.scheme == "auto") return dim == 1 ? "iw" : "rf";
  if (c.scheme == "iw" || c.scheme == "rf" || c.scheme == "lowrank") return c.scheme;
  throw UsageError("unknown scheme '" + c.scheme + "'");
}

VecchiaSpec build_spec(const std::string& scheme, const LocationSet& locs, const Ordering& ord,
                       Index m) {
  if (m < 1) throw UsageError("--m must be >= 1");
  if (scheme == "iw") return build_spec_iw(locs, ord, m);
  if (scheme == "rf") return build_spec_rf(locs, ord, m);
  if (scheme == "lowrank") return build_spec_lowrank(locs, ord, m);
  throw UsageError("unknown scheme '" + scheme + "'");
}

InferenceOptions inference_options(const Config& c) {
  if (!(c.epsilon > 0.0)) throw UsageError("--epsilon must be positive");
  if (c.max_iter < 1) throw UsageError("--max-iter must be >= 1");
  InferenceOptions o;
  o.epsilon = c.epsilon;
  o.max_iter = c.max_iter;
  return o;
}

// ---------------------------------------------------------------------------
// Data

// Observations with rows put into a canonical (lexicographic) order, so the
// result of a fit does not depend on how the input file was sorted.
struct Dataset {
  Eigen::MatrixXd coords;  // canonical order
  Eigen::VectorXd z;
  IndexList rows;  // rows[k] = input row of canonical row k
};

IndexList lexicographic_order(const Eigen::MatrixXd& x) {
  IndexList p(x.rows());
  for (Index i = 0; i < x.rows(); ++i) p[i] = i;
  std::stable_sort(p.begin(), p.end(), [&](Index a, Index b) {
    for (Index k = 0; k < x.cols(); ++k)
      if (x(a, k) != x(b, k)) return x(a, k) < x(b, k);
    return false;
  });
  return p;
}

Dataset load_data(const Config& c) {
  if (c.data.empty()) throw UsageError("--data is required");
  const io::Table t = io::read_csv(c.data);
  if (t.values.rows() == 0) throw io::IoError("'" + c.data + "' has no data rows");
  const Eigen::MatrixXd x = t.coordinates();
  const Eigen::VectorXd z = t.column("z");
  Dataset d;
  d.rows = lexicographic_order(x);
  d.coords.resize(x.rows(), x.cols());
  d.z.resize(x.rows());
  for (Index k = 0; k < x.rows(); ++k) {
    d.coords.row(k) = x.row(d.rows[k]);
    d.z[k] = z[d.rows[k]];
  }
  return d;
}

Eigen::VectorXd to_input_order(const Dataset& d, const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  for (Index k = 0; k < v.size(); ++k) out[d.rows[k]] = v[k];
  return out;
}

Eigen::MatrixXd input_coords(const Dataset& d) {
  Eigen::MatrixXd out(d.coords.rows(), d.coords.cols());
  for (Index k = 0; k < d.coords.rows(); ++k) out.row(d.rows[k]) = d.coords.row(k);
  return out;
}

// Writes to a file, or to stdout for "-".
class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {
    if (path != "-") {
      file_.open(path);
      if (!file_) throw io::IoError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return path_ == "-" ? std::cout : file_; }
  void finish() {
    stream().flush();
    if (!stream()) throw io::IoError("write failed for '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream file_;
};

void write_columns(std::ostream& os, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) os << (i ? "," : "") << names[i];
  os << '\n';
}

void write_value(std::ostream& os, double v) {
  if (std::isnan(v))
    os << "NA";
  else
    os << v;
}

// ---------------------------------------------------------------------------
// Fitting

struct Fit {
  Theta theta;
  Eigen::VectorXd alpha;  // canonical order
  PseudoData pseudo;      // canonical order, at alpha
  std::optional<LatentPosterior> vl;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  double seconds = 0.0;
  std::string scheme;
  std::string ordering;
  Json estimate;  // empty unless parameters were estimated
};

EstimateOptions estimate_options(const Config& c) {
  EstimateOptions o;
  o.variance.free = o.range.free = o.smoothness.free = o.lik_param.free = false;
  for (const auto& p : split(c.free, ',')) {
    if (p == "sigma2")
      o.variance.free = true;
    else if (p == "range")
      o.range.free = true;
    else if (p == "smoothness")
      o.smoothness.free = true;
    else if (p == "lik-param")
      o.lik_param.free = true;
    else
      throw UsageError("unknown parameter '" + p + "' in --free");
  }
  o.estimate_beta = c.beta == "estimate";
  o.inner = inference_options(c);
  return o;
}

Fit fit_model(const Config& c, const Dataset& d) {
  const int dim = static_cast<int>(d.coords.cols());
  Fit f;
  f.theta = make_theta(c, dim);
  f.theta.likelihood.check_support(d.z);
  const LocationSet locs(d.coords);
  const auto t0 = Clock::now();

  if (c.method == "laplace") {
    if (c.estimate) throw UsageError("--estimate is only available with --method vl");
    const auto r = oracle::dense_laplace(d.z, d.coords, f.theta, {c.epsilon, c.max_iter});
    f.alpha = r.alpha;
    f.pseudo = r.pseudo;
    f.loglik = r.loglik;
    f.iterations = r.iterations;
    f.converged = r.converged;
    f.scheme = "dense";
    f.ordering = "none";
  } else if (c.method == "vl") {
    const Ordering ord = make_ordering(c, locs);
    f.scheme = resolve_scheme(c, dim);
    f.ordering = ord.kind == OrderingKind::coordinate ? "coordinate" : "maxmin";
    const VecchiaSpec spec = build_spec(f.scheme, locs, ord, c.m);
    const VecchiaSpec lspec = f.scheme == "rf" ? build_spec_iw(locs, ord, c.m) : spec;
    const InferenceOptions iopt = inference_options(c);
    if (c.estimate || c.beta == "estimate") {
      const EstimateResult e = ml_estimate(d.z, spec, lspec, f.theta, estimate_options(c));
      f.theta = e.theta;
      f.estimate = {{"theta", io::to_json(e.theta)},   {"loglik", e.loglik},
                    {"evaluations", e.evaluations},     {"inner_iterations", e.inner_iterations},
                    {"converged", e.converged},         {"message", e.message}};
      if (!e.converged) std::cerr << "warning: parameter search: " << e.message << '\n';
    }
    LoglikResult r = integrated_loglik(d.z, spec, lspec, f.theta, iopt);
    f.alpha = r.posterior.alpha;
    f.pseudo = r.posterior.pseudo;
    f.loglik = r.loglik;
    f.iterations = r.posterior.iterations;
    f.converged = r.posterior.converged;
    f.vl = std::move(r.posterior);
  } else {
    throw UsageError("unknown method '" + c.method + "' (expected laplace or vl)");
  }
  f.seconds = seconds_since(t0);
  if (!f.converged)
    std::cerr << "error: Newton iteration did not converge in " << f.iterations << " iterations"
              << (f.vl ? " (last RMS step " + std::to_string(f.vl->last_step) + ")" : "") << '\n';
  return f;
}

int cmd_fit(const Config& c) {
  const Dataset d = load_data(c);
  const Fit f = fit_model(c, d);
  Json j;
  j["method"] = c.method;
  j["n"] = d.coords.rows();
  j["dim"] = d.coords.cols();
  j["scheme"] = f.scheme;
  j["ordering"] = f.ordering;
  j["m"] = c.m;
  j["theta"] = io::to_json(f.theta);
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["loglik"] = f.loglik;
  j["seconds"] = f.seconds;
  j["alpha"] = io::to_json(to_input_order(d, f.alpha));
  if (!f.estimate.is_null()) j["estimate"] = f.estimate;
  Output out(c.out);
  out.stream() << std::setw(2) << j << '\n';
  out.finish();

  if (!c.mode_out.empty()) {
    const Eigen::MatrixXd x = input_coords(d);
    Eigen::MatrixXd table(x.rows(), x.cols() + 1);
    table << x, to_input_order(d, f.alpha);
    auto names = io::coordinate_names(x.cols());
    names.push_back("alpha");
    io::write_csv(c.mode_out, names, table);
  }
  return f.converged ? kExitOk : kExitNotConverged;
}

int cmd_predict(const Config& c) {
  if (c.pred.empty()) throw UsageError("--pred is required");
  const Dataset d = load_data(c);
  const io::Table pt = io::read_csv(c.pred);
  const Index dim = d.coords.cols();
  auto names = io::coordinate_names(dim);
  for (const char* s : {"mean", "variance", "data_mean"}) names.emplace_back(s);

  if (pt.values.rows() == 0) {
    Output out(c.out);
    write_columns(out.stream(), names);
    out.finish();
    return kExitOk;
  }
  const Eigen::MatrixXd xp = pt.coordinates();
  if (xp.cols() != dim) throw UsageError("prediction locations have a different dimension");
  {
    Eigen::MatrixXd all(d.coords.rows() + xp.rows(), dim);
    all << d.coords, xp;
    try {
      const LocationSet check(std::move(all));
    } catch (const InvalidArgument& e) {
      throw UsageError(std::string("prediction locations must be distinct from each other and from "
                                   "the observed locations (") + e.what() + ")");
    }
  }

  const Fit f = fit_model(c, d);
  if (!f.converged) return kExitNotConverged;

  Eigen::VectorXd mean, var, data_mean(xp.rows());
  if (f.vl) {
    PredictionOptions po;
    po.m = c.m;
    po.data_samples = c.data_samples;
    po.seed = c.seed;
    const PredictionResult r = predict(*f.vl, LocationSet(d.coords), xp, f.theta, po);
    mean = r.mean;
    var = r.variance;
    data_mean = r.data_mean;
  } else {
    const auto r = oracle::dense_kriging(d.coords, f.pseudo.t, f.pseudo.d, xp, f.theta);
    mean = r.mean;
    var = r.variance;
    Rng rng(c.seed);
    for (Index i = 0; i < xp.rows(); ++i)
      data_mean[i] = data_scale_mean(f.theta.likelihood, mean[i], var[i], rng, c.data_samples);
  }

  Output out(c.out);
  auto& os = out.stream();
  os << std::setprecision(17);
  write_columns(os, names);
  for (Index i = 0; i < xp.rows(); ++i) {
    for (Index k = 0; k < dim; ++k) os << xp(i, k) << ',';
    os << mean[i] << ',' << var[i] << ',' << data_mean[i] << '\n';
  }
  out.finish();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Likelihood grid

struct Axis {
  std::string name;
  std::vector<double> values;
};

std::vector<Axis> parse_grid(const std::string& g) {
  std::vector<Axis> axes;
  for (const auto& part : split(g, ',')) {
    const auto f = split(part, ':');
    if (f.size() != 4) throw UsageError("grid entry '" + part + "' is not param:lo:hi:steps");
    Axis a{f[0], {}};
    if (a.name != "sigma2" && a.name != "range" && a.name != "smoothness" && a.name != "lik-param" &&
        a.name != "beta0")
      throw UsageError("unknown grid parameter '" + a.name + "'");
    const double lo = parse_double(f[1], "grid"), hi = parse_double(f[2], "grid");
    const long steps = parse_long(f[3], "grid");
    if (steps < 1) throw UsageError("grid steps must be >= 1");
    for (long s = 0; s < steps; ++s)
      a.values.push_back(steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(s) / (steps - 1));
    axes.push_back(std::move(a));
  }
  if (axes.empty()) throw UsageError("--grid is required");
  return axes;
}

void set_param(Theta& th, const std::string& name, double v) {
  if (name == "sigma2") th.kernel.variance = v;
  if (name == "range") th.kernel.range = v;
  if (name == "smoothness") th.kernel.smoothness = v;
  if (name == "lik-param") th.likelihood.param = v;
  if (name == "beta0") th.mean.coefficients[0] = v;
}

int cmd_loglik_grid(const Config& c) {
  const Dataset d = load_data(c);
  const int dim = static_cast<int>(d.coords.cols());
  const auto axes = parse_grid(c.grid);
  const Theta base = make_theta(c, dim);

  // Cartesian product, first axis slowest.
  std::vector<Theta> thetas{base};
  std::vector<std::vector<double>> values{{}};
  for (const auto& a : axes) {
    std::vector<Theta> nt;
    std::vector<std::vector<double>> nv;
    for (std::size_t i = 0; i < thetas.size(); ++i)
      for (double v : a.values) {
        Theta th = thetas[i];
        set_param(th, a.name, v);
        nt.push_back(th);
        nv.push_back(values[i]);
        nv.back().push_back(v);
      }
    thetas = std::move(nt);
    values = std::move(nv);
  }

  std::vector<GridPoint> points;
  if (c.method == "laplace") {
    for (const auto& th : thetas) {
      GridPoint gp{th, std::numeric_limits<double>::quiet_NaN(), 0, false, {}};
      try {
        const auto r = oracle::dense_laplace(d.z, d.coords, th, {c.epsilon, c.max_iter});
        gp.loglik = r.loglik;
        gp.iterations = r.iterations;
        gp.ok = r.converged && std::isfinite(r.loglik);
      } catch (const Error& e) {
        gp.error = e.what();
      }
      points.push_back(std::move(gp));
    }
  } else if (c.method == "vl") {
    const LocationSet locs(d.coords);
    const Ordering ord = make_ordering(c, locs);
    const std::string scheme = resolve_scheme(c, dim);
    const VecchiaSpec spec = build_spec(scheme, locs, ord, c.m);
    const VecchiaSpec lspec = scheme == "rf" ? build_spec_iw(locs, ord, c.m) : spec;
    points = loglik_grid(d.z, spec, lspec, thetas, inference_options(c));
  } else {
    throw UsageError("unknown method '" + c.method + "' (expected laplace or vl)");
  }

  Output out(c.out);
  auto& os = out.stream();
  os << std::setprecision(17);
  std::vector<std::string> names;
  for (const auto& a : axes) names.push_back(a.name);
  for (const char* s : {"loglik", "iterations", "ok"}) names.emplace_back(s);
  write_columns(os, names);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (double v : values[i]) os << v << ',';
    write_value(os, points[i].ok ? points[i].loglik : std::numeric_limits<double>::quiet_NaN());
    os << ',' << points[i].iterations << ',' << (points[i].ok ? 1 : 0) << '\n';
    if (!points[i].error.empty()) std::cerr << "grid point " << i << ": " << points[i].error << '\n';
  }
  out.finish();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Simulation

Eigen::MatrixXd design_points(const Config& c, Index n, std::uint64_t seed) {
  if (n < 1) throw UsageError("--n must be >= 1");
  if (c.dim < 1) throw UsageError("--dim must be >= 1");
  Eigen::MatrixXd x(n, c.dim);
  if (c.design == "random") {
    Rng rng(seed);
    for (Index i = 0; i < n; ++i)
      for (int k = 0; k < c.dim; ++k) x(i, k) = rng.uniform();
    return x;
  }
  if (c.design != "grid") throw UsageError("unknown design '" + c.design + "'");
  const auto g = static_cast<Index>(std::llround(std::pow(static_cast<double>(n), 1.0 / c.dim)));
  Index total = 1;
  for (int k = 0; k < c.dim; ++k) total *= g;
  if (total != n)
    throw UsageError("grid design needs n to be a perfect power of the dimension (n = g^d)");
  for (Index i = 0; i < n; ++i) {
    Index rest = i;
    for (int k = 0; k < c.dim; ++k) {
      x(i, k) = (static_cast<double>(rest % g) + 0.5) / static_cast<double>(g);
      rest /= g;
    }
  }
  return x;
}

Eigen::VectorXd simulate_latent(const Config& c, const Eigen::MatrixXd& x, const Theta& th,
                                std::uint64_t seed) {
  if (x.rows() <= c.dense_sim_max) return oracle::simulate_gp(x, th.kernel, th.mean, seed);
  return oracle::simulate_gp_vecchia(LocationSet(x), th.kernel, th.mean, c.sim_m, seed);
}

int cmd_simulate(const Config& c) {
  const auto ns = split(c.n, ',');
  if (ns.size() != 1) throw UsageError("simulate takes a single --n");
  if (c.out == "-") throw UsageError("simulate needs --out");
  const Index n = parse_long(ns[0], "--n");
  const Eigen::MatrixXd x = design_points(c, n, c.seed);
  const Theta th = make_theta(c, c.dim);
  const Eigen::VectorXd y = simulate_latent(c, x, th, c.seed);
  const Eigen::VectorXd z = oracle::simulate_data(y, th.likelihood, c.seed + kDataSeedOffset);

  std::string truth = c.truth_out;
  if (truth.empty()) {
    const auto dot = c.out.rfind(".csv");
    truth = (dot == std::string::npos ? c.out : c.out.substr(0, dot)) + "_truth.csv";
  }
  auto names = io::coordinate_names(c.dim);
  Eigen::MatrixXd table(n, c.dim + 1);
  table << x, z;
  names.push_back("z");
  io::write_csv(c.out, names, table);
  table.col(c.dim) = y;
  names.back() = "y";
  io::write_csv(truth, names, table);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Benchmark

struct CellResult {
  bool ok = false;
  double rrmse = std::numeric_limits<double>::quiet_NaN();
  double dls = std::numeric_limits<double>::quiet_NaN();
  double mse = std::numeric_limits<double>::quiet_NaN();
  double crps = std::numeric_limits<double>::quiet_NaN();
  double seconds = std::numeric_limits<double>::quiet_NaN();
};

// Mean CRPS of the truth under joint posterior draws, one column per draw.
double mean_crps(const Eigen::MatrixXd& draws, const Eigen::VectorXd& truth) {
  double s = 0.0;
  for (Index i = 0; i < truth.size(); ++i) s += crps_sample(Eigen::VectorXd(draws.row(i).transpose()), truth[i]);
  return s / static_cast<double>(truth.size());
}

struct Method {
  std::string name;  // laplace, vl-iw, vl-rf, lowrank
  Index m = 0;
};

std::vector<CellResult> run_replicate(const Config& c, Index n, int rep,
                                      const std::vector<Method>& methods) {
  const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(rep);
  const Eigen::MatrixXd x = design_points(c, n, seed);
  const Theta th = make_theta(c, c.dim);
  const Eigen::VectorXd y = simulate_latent(c, x, th, seed);
  const Eigen::VectorXd z = oracle::simulate_data(y, th.likelihood, seed + kDataSeedOffset);
  const LocationSet locs(x);
  const InferenceOptions iopt = inference_options(c);

  // Laplace reference, when the dense oracle is affordable.
  std::optional<oracle::DenseLaplaceResult> ref;
  double ref_seconds = 0.0, ref_score = 0.0;
  if (n <= c.laplace_max) {
    try {
      const auto t0 = Clock::now();
      auto r = oracle::dense_laplace(z, x, th, {c.epsilon, c.max_iter});
      ref_seconds = seconds_since(t0);
      if (r.converged) {
        ref_score = log_score_dense(r.alpha, r.W, y);
        ref = std::move(r);
      }
    } catch (const Error& e) {
      std::cerr << "replicate " << rep << " laplace: " << e.what() << '\n';
    }
  }

  std::vector<CellResult> out(methods.size());
  std::optional<Ordering> ord;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    const Method& me = methods[k];
    CellResult& cell = out[k];
    try {
      if (me.name == "laplace") {
        if (!ref) continue;
        cell.seconds = ref_seconds;
        cell.mse = mse(ref->alpha, y);
        cell.rrmse = 1.0;
        cell.dls = 0.0;
        Eigen::LLT<Eigen::MatrixXd> llt(ref->W);
        if (llt.info() != Eigen::Success) throw NumericalError("Laplace precision not positive definite");
        Rng rng(seed + 7);
        Eigen::MatrixXd e(n, c.crps_samples);
        for (Index j = 0; j < e.cols(); ++j)
          for (Index i = 0; i < n; ++i) e(i, j) = rng.normal();
        const Eigen::MatrixXd draws =
            (llt.matrixU().solve(e)).colwise() + ref->alpha;
        cell.crps = mean_crps(draws, y);
        cell.ok = true;
        continue;
      }
      if (!ord) ord = c.dim == 1 ? coordinate_order(locs) : maxmin_order(locs);
      const std::string scheme = me.name == "vl-iw" ? "iw" : me.name == "vl-rf" ? "rf" : "lowrank";
      const VecchiaSpec spec = build_spec(scheme, locs, *ord, me.m);
      const auto t0 = Clock::now();
      const LatentPosterior p = vl_inference(z, spec, th, iopt);
      cell.seconds = seconds_since(t0);
      if (!p.converged) throw NumericalError("Newton iteration did not converge");
      cell.mse = mse(p.alpha, y);
      const Eigen::VectorXd yo = p.ordering.to_ordered(y);
      const Eigen::VectorXd ao = p.ordering.to_ordered(p.alpha);
      if (ref) {
        cell.rrmse = rrmse(p.alpha, ref->alpha, y);
        cell.dls = dls(log_score(ao, p.V, yo), ref_score);
      }
      cell.crps = mean_crps(sample_posterior(p.V, ao, c.crps_samples, seed + 11 + k), yo);
      cell.ok = true;
    } catch (const Error& e) {
      std::cerr << "replicate " << rep << " " << me.name << " m=" << me.m << ": " << e.what() << '\n';
      cell = CellResult{};
    }
  }
  return out;
}

double nan_mean(const std::vector<double>& v) {
  double s = 0.0;
  int k = 0;
  for (double x : v)
    if (!std::isnan(x)) s += x, ++k;
  return k ? s / k : std::numeric_limits<double>::quiet_NaN();
}

int cmd_benchmark(const Config& c) {
  if (c.replicates < 1) throw UsageError("--replicates must be >= 1");
  if (c.crps_samples < 2) throw UsageError("--crps-samples must be >= 2");
  std::vector<Index> ns;
  for (const auto& s : split(c.n, ',')) ns.push_back(parse_long(s, "--n"));
  std::vector<Index> ms;
  for (const auto& s : split(c.m_list.empty() ? std::to_string(c.m) : c.m_list, ','))
    ms.push_back(parse_long(s, "--m-list"));
  std::vector<Method> methods;
  for (const auto& name : split(c.methods, ',')) {
    if (name == "laplace") {
      methods.push_back({name, 0});
    } else if (name == "vl-iw" || name == "vl-rf" || name == "lowrank") {
      for (Index m : ms) methods.push_back({name, m});
    } else {
      throw UsageError("unknown method '" + name + "' in --methods");
    }
  }
  make_theta(c, c.dim);  // validate before spawning workers

  std::vector<ScoreReport> rows;
  for (Index n : ns) {
    design_points(c, n, c.seed);  // validate the design for this n
    std::vector<std::vector<CellResult>> results(c.replicates);
    std::atomic<int> next{0};
    std::mutex err_mutex;
    auto worker = [&] {
      for (int r = next++; r < c.replicates; r = next++) {
        try {
          results[r] = run_replicate(c, n, r, methods);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(err_mutex);
          std::cerr << "replicate " << r << ": " << e.what() << '\n';
          results[r] = std::vector<CellResult>(methods.size());
        }
      }
    };
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const int nthreads = std::min(c.replicates, c.threads > 0 ? c.threads : hw);
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (std::size_t k = 0; k < methods.size(); ++k) {
      std::vector<double> rr, dl, ms2, cr, sec;
      for (const auto& rep : results) {
        rr.push_back(rep[k].rrmse);
        dl.push_back(rep[k].dls);
        ms2.push_back(rep[k].mse);
        cr.push_back(rep[k].crps);
        sec.push_back(rep[k].seconds);
      }
      rows.push_back({methods[k].name, methods[k].m, n, nan_mean(rr), nan_mean(dl), nan_mean(ms2),
                      nan_mean(cr), nan_mean(sec)});
    }
  }
  Output out(c.out);
  write_score_csv(out.stream(), rows);
  out.finish();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vecchia-Laplace inference for generalized Gaussian processes"};
  app.set_config("--config", "", "key=value file; command-line flags take precedence");
  app.require_subcommand(1);
  Config c;

  app.add_option("--data", c.data, "CSV with columns x1..xd, z");
  app.add_option("--pred", c.pred, "CSV of prediction locations x1..xd");
  app.add_option("--out", c.out, "output path ('-' for stdout)");
  app.add_option("--mode-out", c.mode_out, "fit: also write the posterior mode as CSV");
  app.add_option("--truth-out", c.truth_out, "simulate: truth CSV (default <out>_truth.csv)");
  app.add_option("--likelihood", c.likelihood, "gaussian, bernoulli, poisson or gamma");
  app.add_option("--lik-param", c.lik_param, "Gaussian noise variance or Gamma shape");
  app.add_option("--sigma2", c.sigma2, "Matern variance");
  app.add_option("--range", c.range, "Matern range");
  app.add_option("--smoothness", c.smoothness, "Matern smoothness");
  app.add_option("--beta", c.beta, "mean coefficients b0[,b1..bd], or 'estimate'");
  app.add_option("--scheme", c.scheme, "auto, iw, rf or lowrank");
  app.add_option("--m", c.m, "conditioning-set size");
  app.add_option("--ordering", c.ordering, "auto, coordinate or maxmin");
  app.add_option("--method", c.method, "vl or laplace (dense reference)");
  app.add_option("--epsilon", c.epsilon, "Newton tolerance on the RMS step");
  app.add_option("--max-iter", c.max_iter, "Newton iteration limit");
  app.add_option("--seed", c.seed, "random seed");
  app.add_option("--replicates", c.replicates, "benchmark replicates");
  app.add_flag("--estimate", c.estimate, "fit: maximize the integrated likelihood first");
  app.add_option("--free", c.free, "parameters to estimate: sigma2,range,smoothness,lik-param");
  app.add_option("--grid", c.grid, "loglik-grid: param:lo:hi:steps,...");
  app.add_option("--n", c.n, "number of locations (benchmark: comma list)");
  app.add_option("--dim", c.dim, "spatial dimension for simulated designs");
  app.add_option("--design", c.design, "grid or random");
  app.add_option("--sim-m", c.sim_m, "neighbors for the sequential simulator beyond --dense-sim-max");
  app.add_option("--dense-sim-max", c.dense_sim_max, "largest n simulated by dense Cholesky");
  app.add_option("--methods", c.methods, "benchmark: laplace,vl-iw,vl-rf,lowrank");
  app.add_option("--m-list", c.m_list, "benchmark: comma list of m (default --m)");
  app.add_option("--threads", c.threads, "benchmark workers (0 = all cores)");
  app.add_option("--crps-samples", c.crps_samples, "posterior draws for CRPS");
  app.add_option("--laplace-max", c.laplace_max, "largest n given a dense Laplace reference");
  app.add_option("--data-samples", c.data_samples, "draws for Bernoulli data-scale means");

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const Config&);
  };
  const Sub subs[] = {{"simulate", "simulate a latent field and data", cmd_simulate},
                      {"fit", "posterior mode and integrated likelihood", cmd_fit},
                      {"predict", "predict at new locations", cmd_predict},
                      {"loglik-grid", "integrated likelihood over a parameter grid", cmd_loglik_grid},
                      {"benchmark", "score methods on simulated replicates", cmd_benchmark}};
  std::vector<CLI::App*> handles;
  for (const auto& s : subs) handles.push_back(app.add_subcommand(s.name, s.help)->fallthrough());

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (std::size_t i = 0; i < handles.size(); ++i)
      if (handles[i]->parsed()) return subs[i].run(c);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNotConverged;
  }
  return kExitUsage;
}
