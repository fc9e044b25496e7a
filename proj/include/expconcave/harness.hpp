#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "expconcave/data.hpp"
#include "expconcave/erm.hpp"
#include "expconcave/linalg.hpp"
#include "expconcave/losses.hpp"
#include "expconcave/ons.hpp"
#include "expconcave/verifier.hpp"

namespace expconcave {

enum class LearnerTag { ONS, ERM, OGD };

inline std::string_view to_string(LearnerTag tag) {
  switch (tag) {
    case LearnerTag::ONS:
      return "ons";
    case LearnerTag::ERM:
      return "erm";
    case LearnerTag::OGD:
      return "ogd";
  }
  return "unknown";
}

inline LearnerTag parse_learner_tag(std::string_view name) {
  if (name == "ons") return LearnerTag::ONS;
  if (name == "erm") return LearnerTag::ERM;
  if (name == "ogd") return LearnerTag::OGD;
  throw std::invalid_argument("unknown learner '" + std::string(name) + "' (expected ons, erm or ogd)");
}

/// Stream tags mixed into the master seed; each purpose gets its own draws.
namespace stream {
inline constexpr std::uint64_t kEvaluation = 0x6576616cULL;
inline constexpr std::uint64_t kReference = 0x72656673ULL;
inline constexpr std::uint64_t kPilot = 0x70696c74ULL;
inline constexpr std::uint64_t kTraining = 0x7472616eULL;
inline constexpr std::uint64_t kProbes = 0x70726f62ULL;
inline constexpr std::uint64_t kBootstrap = 0x626f6f74ULL;
inline constexpr std::uint64_t kVerifier = 0x76657269ULL;
}  // namespace stream

struct MeanEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanEstimate mean_and_stderr(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_and_stderr: no values");
  const double n = static_cast<double>(values.size());
  // Shifted by the first value so constant inputs come out exact.
  const double shift = values.front();
  std::vector<double> centered(values.begin(), values.end());
  for (double& v : centered) v -= shift;
  const double mean = shift + detail::pairwise_sum(centered.data(), static_cast<Index>(centered.size())) / n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

// ---------------------------------------------------------------------------
// Population quantities by Monte Carlo.

/// Fresh evaluation draws, disjoint from every training stream of the source seed.
inline Dataset evaluation_sample(const LemmaOneSource& source, Index n_eval) {
  return sample(source, n_eval, derive_seed(source.seed, stream::kEvaluation));
}

inline MeanEstimate risk_on(const Dataset& eval, const LossSpec& loss, const VectorXd& w) {
  const VectorXd margins = (eval.features * w).cwiseProduct(eval.labels);
  std::vector<double> values(static_cast<std::size_t>(eval.size()));
  for (Index i = 0; i < eval.size(); ++i) values[static_cast<std::size_t>(i)] = loss_value(loss, margins(i));
  return mean_and_stderr(values);
}

/// Monte Carlo estimate of E[ell(y <w, x>)] over n_eval fresh draws.
inline MeanEstimate estimate_population_risk(const VectorXd& w, const LossSpec& loss,
                                             const LemmaOneSource& source, Index n_eval) {
  if (n_eval < 1000) throw std::invalid_argument("estimate_population_risk: n_eval must be >= 1000");
  if (w.norm() > loss.radius * (1.0 + 1e-9)) {
    throw std::invalid_argument("estimate_population_risk: w outside the ball");
  }
  return risk_on(evaluation_sample(source, n_eval), loss, w);
}

/// Paired difference mean(ell(y <w, x>) - ell(y <reference, x>)) over shared draws.
inline MeanEstimate paired_excess(const Dataset& eval, const LossSpec& loss, const VectorXd& w,
                                  const VectorXd& reference) {
  const VectorXd base = (eval.features * reference).cwiseProduct(eval.labels);
  const VectorXd shift = (eval.features * (w - reference)).cwiseProduct(eval.labels);
  std::vector<double> diffs(static_cast<std::size_t>(eval.size()));
  for (Index i = 0; i < eval.size(); ++i) {
    diffs[static_cast<std::size_t>(i)] = loss_difference(loss, base(i), shift(i));
  }
  return mean_and_stderr(diffs);
}

// ---------------------------------------------------------------------------
// Assumption constants.

struct ThetaEstimate {
  double theta = 0.0;
  std::vector<double> per_probe;
};

/// w*, 0 and `boundary` random points on the sphere of radius R.
inline std::vector<VectorXd> default_probes(const VectorXd& reference_w, double radius, std::uint64_t seed,
                                            int boundary = 32) {
  std::vector<VectorXd> probes{reference_w, VectorXd::Zero(reference_w.size())};
  std::mt19937_64 rng(derive_seed(seed, stream::kProbes));
  std::normal_distribution<double> normal;
  for (int k = 0; k < boundary; ++k) {
    VectorXd p(reference_w.size());
    for (Index j = 0; j < p.size(); ++j) p(j) = normal(rng);
    probes.push_back(p * (radius / p.norm()));
  }
  return probes;
}

/// Smallest generalized eigenvalue of (A(w), B) minimized over probes, with
/// A(w) = mean ell'(y <w, x>)^2 x x^T and B = mean x x^T + 1e-9 I. Optional
/// per-example weights (bootstrap counts) replace the uniform mean.
inline ThetaEstimate theta_from_sample(const Dataset& data, const LossSpec& loss, std::span<const VectorXd> probes,
                                       const VectorXd* weights = nullptr) {
  if (probes.empty()) throw std::invalid_argument("estimate_theta: no probes");
  const Index d = data.dim();
  const VectorXd wts = weights ? *weights : VectorXd::Ones(data.size());
  const double total = wts.sum();
  MatrixXd b = data.features.transpose() * wts.asDiagonal() * data.features / total;
  b.diagonal().array() += 1e-9;
  Eigen::LLT<MatrixXd> llt(b);
  if (llt.info() != Eigen::Success) throw NumericError("estimate_theta: feature second moment is singular");
  const MatrixXd l_inv = llt.matrixL().solve(MatrixXd::Identity(d, d));

  ThetaEstimate out;
  out.theta = std::numeric_limits<double>::infinity();
  for (const auto& w : probes) {
    const VectorXd margins = (data.features * w).cwiseProduct(data.labels);
    VectorXd scale(data.size());
    for (Index i = 0; i < data.size(); ++i) {
      const double g = loss_derivative(loss, margins(i));
      scale(i) = wts(i) * g * g;
    }
    const MatrixXd a = data.features.transpose() * scale.asDiagonal() * data.features / total;
    const MatrixXd c = l_inv * a * l_inv.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (c + c.transpose()), Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    out.per_probe.push_back(lo);
    out.theta = std::min(out.theta, lo);
  }
  return out;
}

inline ThetaEstimate estimate_theta(const LemmaOneSource& source, const LossSpec& loss,
                                    std::span<const VectorXd> probes, Index n_est) {
  if (n_est < 1) throw std::invalid_argument("estimate_theta: n_est must be >= 1");
  return theta_from_sample(sample(source, n_est, derive_seed(source.seed, stream::kPilot)), loss, probes);
}

struct ThetaBootstrap {
  double theta = 0.0;
  double sigma = 0.0;
};

/// theta on the pilot sample plus the standard deviation of `resamples`
/// bootstrap replicates of it.
inline ThetaBootstrap estimate_theta_bootstrap(const LemmaOneSource& source, const LossSpec& loss,
                                               std::span<const VectorXd> probes, Index n_est, int resamples = 32) {
  const Dataset pilot = sample(source, n_est, derive_seed(source.seed, stream::kPilot));
  ThetaBootstrap out;
  out.theta = theta_from_sample(pilot, loss, probes).theta;
  std::mt19937_64 rng(derive_seed(source.seed, stream::kBootstrap));
  std::uniform_int_distribution<Index> pick(0, n_est - 1);
  std::vector<double> reps;
  for (int r = 0; r < resamples; ++r) {
    VectorXd counts = VectorXd::Zero(n_est);
    for (Index i = 0; i < n_est; ++i) counts(pick(rng)) += 1.0;
    reps.push_back(theta_from_sample(pilot, loss, probes, &counts).theta);
  }
  if (reps.size() >= 2) out.sigma = mean_and_stderr(reps).stderr_ * std::sqrt(static_cast<double>(reps.size()));
  return out;
}

/// (1 / 2R) sqrt(E[(<x, w - reference>)^2]), clipped to [0, 1].
inline double estimate_rho(const VectorXd& w, const VectorXd& reference_w, const LemmaOneSource& source,
                           Index n_est, double radius) {
  if (n_est < 1) throw std::invalid_argument("estimate_rho: n_est must be >= 1");
  const Dataset draws = sample(source, n_est, derive_seed(source.seed, stream::kEvaluation));
  const double second_moment = (draws.features * (w - reference_w)).squaredNorm() / static_cast<double>(n_est);
  return std::min(1.0, std::sqrt(second_moment) / (2.0 * radius));
}

// ---------------------------------------------------------------------------
// Excess-risk curves.

struct RiskRow {
  Index n = 0;
  std::size_t repeats = 0;
  double excess_risk_mean = 0.0;
  double excess_risk_stderr = 0.0;
};

struct RiskReport {
  LearnerTag learner = LearnerTag::ONS;
  std::vector<RiskRow> rows;
  double fitted_slope = 0.0;
};

class SlopeFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least-squares slope of ln(mean) on ln(n) over rows whose mean exceeds twice its stderr.
inline double fit_slope(std::span<const RiskRow> rows) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& r : rows) {
    if (r.excess_risk_mean > 2.0 * r.excess_risk_stderr && r.excess_risk_mean > 0.0) {
      xs.push_back(std::log(static_cast<double>(r.n)));
      ys.push_back(std::log(r.excess_risk_mean));
    }
  }
  if (xs.size() < 4) {
    throw SlopeFitError("slope fit needs at least 4 rows with mean > 2 stderr, found " + std::to_string(xs.size()));
  }
  const double k = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= k;
  my /= k;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

/// Everything shared by the learners of one comparison: the data law, the
/// reference minimizer, the common evaluation draws, and the online defaults.
struct ExperimentSetup {
  LemmaOneSource source;
  LossSpec loss;
  std::uint64_t seed = 0;
  VectorXd reference_w;
  ErmResult reference_fit;
  Dataset evaluation;
  double theta = 0.0;
  OnsConfig ons;
  double ogd_step = 1.0;
  ErmConfig erm;
};

struct SetupOptions {
  Index n_max = 16384;
  /// Reference sample is this many times n_max.
  Index reference_factor = 10;
  double reference_grad_tol = 1e-11;
  Index n_eval = 200000;
  Index n_pilot = 10000;
  /// Overrides the pilot estimate of theta when set.
  std::optional<double> theta;
  std::optional<double> eta1;
  std::optional<double> smoothing_a;
  /// OGD step c / sqrt(i); defaults to 2R / G.
  std::optional<double> ogd_step;
  double erm_grad_tol = 1e-9;
};

inline ExperimentSetup make_setup(const LemmaOneSource& source, const LossSpec& loss, std::uint64_t seed,
                                  const SetupOptions& opts = {}) {
  ExperimentSetup s;
  s.source = source.with_seed(seed);
  s.loss = loss;
  s.seed = seed;

  ErmConfig ref_cfg;
  ref_cfg.radius = loss.radius;
  ref_cfg.grad_tol = opts.reference_grad_tol;
  const Dataset ref_sample = sample(s.source, opts.n_max * opts.reference_factor, derive_seed(seed, stream::kReference));
  s.reference_fit = erm_solve(ref_sample, loss, ref_cfg);
  s.reference_w = s.reference_fit.w;

  s.evaluation = evaluation_sample(s.source, opts.n_eval);

  if (opts.theta) {
    s.theta = *opts.theta;
  } else {
    const auto probes = default_probes(s.reference_w, loss.radius, seed);
    s.theta = estimate_theta(s.source, loss, probes, opts.n_pilot).theta;
  }
  s.ons = default_ons_config(loss, s.theta, source.dim);
  if (opts.eta1) s.ons.eta1 = *opts.eta1;
  if (opts.smoothing_a) s.ons.smoothing_a = *opts.smoothing_a;
  // D / G with D = 2R the diameter of the ball.
  s.ogd_step = opts.ogd_step.value_or(2.0 * loss.radius / loss.lipschitz);
  s.erm.radius = loss.radius;
  s.erm.grad_tol = opts.erm_grad_tol;
  return s;
}

/// Training sample of cell (n, repeat); identical for every learner.
inline Dataset training_sample(const ExperimentSetup& setup, Index n, std::size_t repeat) {
  return sample(setup.source, n, derive_seed(derive_seed(setup.seed, stream::kTraining), static_cast<std::uint64_t>(n), repeat));
}

/// Hypothesis the tagged learner outputs after training on `data`:
/// the ERM solution, the averaged online Newton iterate, or the final OGD iterate.
inline VectorXd train_learner(LearnerTag tag, const ExperimentSetup& setup, const Dataset& data) {
  switch (tag) {
    case LearnerTag::ERM:
      return erm_solve(data, setup.loss, setup.erm).w;
    case LearnerTag::ONS: {
      LearnerState state = ons_init(setup.ons, data.dim());
      run_ons(state, setup.ons, setup.loss, data);
      return ons_average(state);
    }
    case LearnerTag::OGD: {
      OgdState state(data.dim());
      run_ogd(state, setup.loss, data, setup.ogd_step);
      return state.iterate;
    }
  }
  throw std::logic_error("train_learner: unknown learner");
}

namespace detail {

// Runs body(k) for k in [0, count) on up to `threads` workers. Each k writes
// only its own output slot, so results do not depend on scheduling.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::min<std::size_t>(threads, count); ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count && !failed; k = next++) {
        try {
          body(k);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

struct RiskCurveOptions {
  std::size_t repeats = 16;
  unsigned threads = 1;
};

/// Excess risk E(w) = L(w) - L(w_ref) of the tagged learner for each n,
/// averaged over repeats, with the slope of ln E against ln n.
inline RiskReport risk_curve(LearnerTag tag, const ExperimentSetup& setup, std::span<const Index> n_grid,
                             const RiskCurveOptions& opts = {}) {
  if (n_grid.empty()) throw std::invalid_argument("risk_curve: empty grid");
  for (std::size_t k = 1; k < n_grid.size(); ++k) {
    if (n_grid[k] <= n_grid[k - 1]) throw std::invalid_argument("risk_curve: grid must be strictly increasing");
  }
  if (n_grid.front() < 1) throw std::invalid_argument("risk_curve: sizes must be positive");
  if (opts.repeats < 8) throw std::invalid_argument("risk_curve: repeats must be >= 8");

  const std::size_t cells = n_grid.size() * opts.repeats;
  std::vector<double> excess(cells);
  detail::parallel_for(cells, opts.threads, [&](std::size_t k) {
    const Index n = n_grid[k / opts.repeats];
    const std::size_t repeat = k % opts.repeats;
    const VectorXd w = train_learner(tag, setup, training_sample(setup, n, repeat));
    excess[k] = paired_excess(setup.evaluation, setup.loss, w, setup.reference_w).mean;
  });

  RiskReport report;
  report.learner = tag;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const auto est = mean_and_stderr(std::span<const double>(excess).subspan(g * opts.repeats, opts.repeats));
    report.rows.push_back({n_grid[g], opts.repeats, est.mean, est.stderr_});
  }
  report.fitted_slope = fit_slope(report.rows);
  return report;
}

struct RegretRow {
  Index n = 0;
  double regret_mean = 0.0;
  double regret_stderr = 0.0;
  /// regret_mean / (d ln n)
  double normalized = 0.0;
};

/// Online Newton regret against the reference minimizer at each n of the
/// grid. Each repeat is one run of length max(n_grid) whose prefixes give the
/// smaller horizons.
inline std::vector<RegretRow> regret_curve(const ExperimentSetup& setup, std::span<const Index> n_grid,
                                           std::size_t repeats) {
  if (n_grid.empty() || repeats < 1) throw std::invalid_argument("regret_curve: empty grid or no repeats");
  const Index horizon = *std::max_element(n_grid.begin(), n_grid.end());
  std::vector<std::vector<double>> per_n(n_grid.size());
  for (std::size_t r = 0; r < repeats; ++r) {
    const Dataset data = training_sample(setup, horizon, r);
    LearnerState state = ons_init(setup.ons, data.dim());
    const auto trace = run_ons(state, setup.ons, setup.loss, data);
    const VectorXd ref_margins = (data.features * setup.reference_w).cwiseProduct(data.labels);
    double cum = 0.0;
    std::size_t g_next = 0;
    std::vector<std::pair<Index, std::size_t>> order;
    for (std::size_t g = 0; g < n_grid.size(); ++g) order.emplace_back(n_grid[g], g);
    std::sort(order.begin(), order.end());
    for (Index i = 0; i < horizon; ++i) {
      cum += trace[static_cast<std::size_t>(i)].loss - loss_value(setup.loss, ref_margins(i));
      while (g_next < order.size() && order[g_next].first == i + 1) {
        per_n[order[g_next].second].push_back(cum);
        ++g_next;
      }
    }
  }
  std::vector<RegretRow> rows;
  const double d = static_cast<double>(setup.source.dim);
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const auto est = mean_and_stderr(per_n[g]);
    rows.push_back({n_grid[g], est.mean, est.stderr_, est.mean / (d * std::log(static_cast<double>(n_grid[g])))});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report CSV: learner,n,repeat_count,excess_risk_mean,excess_risk_stderr then slope,<value>.

inline void write_report_csv(std::ostream& out, const RiskReport& report) {
  out << "learner,n,repeat_count,excess_risk_mean,excess_risk_stderr\n";
  for (const auto& r : report.rows) {
    out << to_string(report.learner) << ',' << r.n << ',' << r.repeats << ',' << format_double(r.excess_risk_mean)
        << ',' << format_double(r.excess_risk_stderr) << '\n';
  }
  out << "slope," << format_double(report.fitted_slope) << '\n';
}

inline RiskReport read_report_csv(std::istream& in) {
  RiskReport report;
  std::string line;
  if (!std::getline(in, line)) throw CsvError("report: missing header");
  bool have_slope = false;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    auto num = [&](std::size_t k) {
      double v = 0.0;
      if (k >= fields.size() || !detail::parse_double(fields[k], v)) {
        throw CsvError("report row " + std::to_string(row) + ": bad numeric field");
      }
      return v;
    };
    if (fields[0] == "slope") {
      report.fitted_slope = num(1);
      have_slope = true;
      continue;
    }
    if (fields.size() != 5) throw CsvError("report row " + std::to_string(row) + ": expected 5 fields");
    report.learner = parse_learner_tag(fields[0]);
    report.rows.push_back({static_cast<Index>(num(1)), static_cast<std::size_t>(num(2)), num(3), num(4)});
  }
  if (!have_slope) throw CsvError("report: missing slope footer");
  return report;
}

inline void write_verifier_csv(std::ostream& out, std::span<const VerifierRecord> records) {
  out << "name,lhs,rhs,tolerance,pass\n";
  for (const auto& r : records) {
    out << r.name << ',' << format_double(r.lhs) << ',' << format_double(r.rhs) << ',' << format_double(r.tolerance)
        << ',' << (r.pass ? "true" : "false") << '\n';
  }
}

// ---------------------------------------------------------------------------
// Inequality and assumption checks.

namespace detail {

inline VectorXd random_in_ball(std::mt19937_64& rng, Index d, double radius) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  VectorXd v(d);
  do {
    for (Index j = 0; j < d; ++j) v(j) = normal(rng);
  } while (v.norm() == 0.0);
  v *= radius * std::pow(unit(rng), 1.0 / static_cast<double>(d)) / v.norm();
  if (v.norm() > radius) v *= radius / v.norm();
  return v;
}

// Keeps the trial with the largest lhs - rhs.
struct WorstCase {
  std::string name;
  double tolerance;
  std::optional<VerifierRecord> worst;

  void add(double lhs, double rhs) {
    if (!worst || lhs - rhs > worst->lhs - worst->rhs) worst = make_record(name, lhs, rhs, tolerance);
  }
};

}  // namespace detail

/// x^T M_new^{-1} x <= ln det M_new - ln det M_old over random histories (d <= 6).
inline VerifierRecord verify_trace_lemma(std::mt19937_64& rng, std::size_t trials, double tolerance = 1e-9) {
  std::uniform_int_distribution<Index> dim(1, 6);
  std::uniform_int_distribution<int> history(0, 30);
  std::uniform_real_distribution<double> log_a(std::log(0.1), std::log(10.0));
  std::uniform_real_distribution<double> unit;
  detail::WorstCase acc{"trace_logdet_lemma", tolerance, {}};
  for (std::size_t t = 0; t < trials; ++t) {
    const Index d = dim(rng);
    SpdState state(d, std::exp(log_a(rng)));
    const int h = history(rng);
    for (int k = 0; k < h; ++k) state.rank_one_update(detail::random_in_ball(rng, d, 1.0));
    const auto rec = trace_lemma_check(state, detail::random_in_ball(rng, d, 1.0), tolerance);
    acc.add(rec.lhs, rec.rhs);
  }
  return *acc.worst;
}

/// ln det M_n - ln det M_0 <= d ln(1 + n / (a d)) over random sequences (d <= 8).
inline VerifierRecord verify_logdet_bound(std::mt19937_64& rng, std::size_t sequences, double tolerance = 1e-9) {
  std::uniform_int_distribution<Index> dim(1, 8);
  std::uniform_int_distribution<int> length(0, 400);
  std::uniform_real_distribution<double> log_a(std::log(0.05), std::log(20.0));
  std::uniform_real_distribution<double> unit;
  detail::WorstCase acc{"logdet_growth_bound", tolerance, {}};
  for (std::size_t t = 0; t < sequences; ++t) {
    const Index d = dim(rng);
    const double a = std::exp(log_a(rng));
    const int n = length(rng);
    const bool unit_norm = unit(rng) < 0.5;
    std::vector<VectorXd> xs;
    for (int k = 0; k < n; ++k) {
      VectorXd x = detail::random_in_ball(rng, d, 1.0);
      if (unit_norm) x.normalize();
      xs.push_back(std::move(x));
    }
    const auto rec = logdet_delta_bound_check(a, d, xs, tolerance);
    acc.add(rec.lhs, rec.rhs);
  }
  return *acc.worst;
}

/// f(w) >= f(w') + <w - w', g> + beta/2 <g, w - w'>^2 with f(w) = ell(y <w, x>),
/// g = grad f(w'), over random (x, y, w, w') with d <= 5. Recorded as
/// lower-bound <= f(w).
inline VerifierRecord verify_quadratic_lower_bound(std::mt19937_64& rng, LossKind kind, std::size_t trials,
                                                   double tolerance = 1e-9) {
  std::uniform_int_distribution<Index> dim(1, 5);
  std::uniform_real_distribution<double> unit;
  const double radii[] = {0.5, 1.0, 2.0};
  detail::WorstCase acc{"quadratic_lower_bound/" + std::string(to_string(kind)), tolerance, {}};
  for (std::size_t t = 0; t < trials; ++t) {
    const double radius = radii[t % 3];
    const LossSpec loss = compute_constants(kind, radius);
    const Index d = dim(rng);
    const VectorXd x = detail::random_in_ball(rng, d, 1.0);
    const double y = unit(rng) < 0.5 ? -1.0 : 1.0;
    const VectorXd w = detail::random_in_ball(rng, d, radius);
    const VectorXd wp = detail::random_in_ball(rng, d, radius);
    const double f = loss_value(loss, y * w.dot(x));
    const double fp = loss_value(loss, y * wp.dot(x));
    const VectorXd g = y * loss_derivative(loss, y * wp.dot(x)) * x;
    const double lin = g.dot(w - wp);
    acc.add(fp + lin + 0.5 * loss.beta * lin * lin, f);
  }
  return *acc.worst;
}

/// Midpoint concavity of exp(-alpha ell) on [-R, R]; recorded as
/// mean of endpoints <= value at midpoint.
inline VerifierRecord verify_exp_concavity(std::mt19937_64& rng, LossKind kind, std::size_t trials,
                                           double tolerance = 1e-9) {
  const double radii[] = {0.5, 1.0, 2.0};
  detail::WorstCase acc{"exp_concavity/" + std::string(to_string(kind)), tolerance, {}};
  for (std::size_t t = 0; t < trials; ++t) {
    const LossSpec loss = compute_constants(kind, radii[t % 3]);
    std::uniform_real_distribution<double> margin(-loss.radius, loss.radius);
    const double z1 = margin(rng);
    const double z2 = margin(rng);
    auto h = [&](double z) { return std::exp(-loss.alpha * loss_value(loss, z)); };
    acc.add(0.5 * (h(z1) + h(z2)), h(0.5 * (z1 + z2)));
  }
  return *acc.worst;
}

/// theta estimated on a source with floor q against the bound q ell'(0)^2;
/// the tolerance is three bootstrap standard deviations.
inline VerifierRecord verify_theta_floor(double flip_q, const LossSpec& loss, Index dim, Index n_est,
                                         std::uint64_t seed) {
  const auto source = LemmaOneSource::classification(dim, flip_q, seed);
  ErmConfig cfg;
  cfg.radius = loss.radius;
  cfg.grad_tol = 1e-8;
  const VectorXd w_ref = erm_solve(sample(source, n_est, derive_seed(seed, stream::kReference)), loss, cfg).w;
  const auto probes = default_probes(w_ref, loss.radius, seed);
  const auto est = estimate_theta_bootstrap(source, loss, probes, n_est);
  const double slope0 = loss_derivative(loss, 0.0);
  return make_record("theta_floor/q=" + format_double(flip_q), flip_q * slope0 * slope0, est.theta, 3.0 * est.sigma);
}

/// Runs every registered check on randomized instances; one record per check.
/// trials == 0 yields an empty report.
inline std::vector<VerifierRecord> verify_all_lemmas(std::uint64_t seed, std::size_t trials) {
  std::vector<VerifierRecord> out;
  if (trials == 0) return out;
  std::mt19937_64 rng(derive_seed(seed, stream::kVerifier));
  out.push_back(verify_trace_lemma(rng, trials));
  out.push_back(verify_logdet_bound(rng, std::max<std::size_t>(1, trials / 10)));
  for (LossKind kind : {LossKind::Logistic, LossKind::SquaredMargin}) {
    out.push_back(verify_quadratic_lower_bound(rng, kind, trials));
    out.push_back(verify_exp_concavity(rng, kind, trials));
  }
  const LossSpec logistic = compute_constants(LossKind::Logistic, 1.0);
  for (double q : {0.1, 0.25, 0.5}) {
    out.push_back(verify_theta_floor(q, logistic, 5, 10000, derive_seed(seed, stream::kPilot, static_cast<std::uint64_t>(q * 1000))));
  }
  return out;
}

inline bool all_pass(std::span<const VerifierRecord> records) {
  return std::all_of(records.begin(), records.end(), [](const VerifierRecord& r) { return r.pass; });
}

}  // namespace expconcave
