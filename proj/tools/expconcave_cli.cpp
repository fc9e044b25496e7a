// expconcave: command-line front end for the online Newton / ERM experiments.
//
// Exit status: 0 success, 1 failed check or numerical failure, 2 usage error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "expconcave/harness.hpp"

namespace ec = expconcave;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string loss = "logistic";
  ec::Index d = 5;
  double radius = 1.0;
  double q = 0.2;
  std::uint64_t seed = 1;
  std::string out = "-";
};

void add_common(CLI::App* cmd, Common& c, bool with_data_law = true) {
  cmd->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  cmd->add_option("--out", c.out, "Output CSV path ('-' for stdout)")->capture_default_str();
  if (!with_data_law) return;
  cmd->add_option("--loss", c.loss, "logistic or squared")
      ->check(CLI::IsMember({"logistic", "squared"}))
      ->capture_default_str();
  cmd->add_option("--d", c.d, "Feature dimension")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--radius", c.radius, "Radius R of the hypothesis ball")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--q", c.q, "Label flip probability of the synthetic source")
      ->check(CLI::Range(0.0, 0.5))
      ->capture_default_str();
}

ec::LemmaOneSource source_of(const Common& c) {
  if (!(c.q > 0.0)) throw UsageError("--q must be positive");
  return ec::LemmaOneSource::classification(c.d, c.q, c.seed);
}

// Writes to --out, or stdout for "-".
template <class Fn>
void emit(const std::string& path, Fn&& fn) {
  std::ostringstream buf;
  fn(buf);
  if (path == "-") {
    std::cout << buf.str();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  out << buf.str();
}

void write_vector(std::ostream& out, const std::string& name, const ec::VectorXd& w) {
  for (ec::Index j = 0; j < w.size(); ++j) out << name << '[' << j << "]," << ec::format_double(w(j)) << '\n';
}

ec::Dataset training_data(const Common& c, ec::Index n, const std::string& data_path, bool strict) {
  if (data_path.empty()) return ec::sample(source_of(c), n, ec::derive_seed(c.seed, ec::stream::kTraining));
  ec::CsvLoadOptions opts;
  opts.strict = strict;
  auto loaded = ec::load_csv(data_path, opts);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  if (loaded.data.empty()) throw UsageError("no examples in " + data_path);
  return std::move(loaded.data);
}

std::vector<ec::Index> parse_grid(const std::string& text) {
  std::vector<ec::Index> grid;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      grid.push_back(static_cast<ec::Index>(v));
    } catch (const std::exception&) {
      throw UsageError("bad --n-grid entry '" + item + "'");
    }
  }
  if (grid.empty()) throw UsageError("--n-grid is empty");
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fast-rate experiments for exp-concave losses: online Newton step, ERM, and checks"};
  app.require_subcommand(1);

  // train-online
  Common online;
  ec::Index online_n = 1000;
  std::optional<double> theta, eta1, smoothing_a;
  bool literal = false;
  std::string trace_path, online_data;
  bool online_strict = false;
  ec::Index n_pilot = 10000;
  auto* cmd_online = app.add_subcommand("train-online", "Run the online Newton learner and report its averaged iterate");
  add_common(cmd_online, online);
  cmd_online->add_option("--n", online_n, "Number of examples")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_online->add_option("--theta", theta, "Assumption constant theta (estimated on a pilot sample if absent)")
      ->check(CLI::PositiveNumber);
  cmd_online->add_option("--eta1", eta1, "Initial step size")->check(CLI::PositiveNumber);
  cmd_online->add_option("--a", smoothing_a, "Smoothing constant of M_0 = a I")->check(CLI::PositiveNumber);
  cmd_online->add_option("--n-pilot", n_pilot, "Pilot sample size for theta")->check(CLI::PositiveNumber);
  cmd_online->add_flag("--literal-gradient", literal, "Drop the label factor from the gradient");
  cmd_online->add_option("--trace", trace_path, "Write the per-step iterate trace here");
  cmd_online->add_option("--data", online_data, "Train on a CSV file (y,x1,...,xd) instead of synthetic draws");
  cmd_online->add_flag("--strict", online_strict, "Reject CSV rows with ||x|| > 1 instead of rescaling");

  // train-batch
  Common batch;
  ec::Index batch_n = 1000;
  double grad_tol = 1e-9;
  std::string batch_data;
  bool batch_strict = false;
  auto* cmd_batch = app.add_subcommand("train-batch", "Solve empirical risk minimization over the ball");
  add_common(cmd_batch, batch);
  cmd_batch->add_option("--n", batch_n, "Number of examples")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_batch->add_option("--grad-tol", grad_tol, "Projected-gradient tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_batch->add_option("--data", batch_data, "Train on a CSV file (y,x1,...,xd) instead of synthetic draws");
  cmd_batch->add_flag("--strict", batch_strict, "Reject CSV rows with ||x|| > 1 instead of rescaling");

  // risk-curve
  Common curve;
  std::string learner = "ons";
  std::string grid_text = "128,256,512,1024,2048,4096,8192,16384";
  std::size_t repeats = 16;
  ec::Index n_eval = 200000;
  unsigned threads = 1;
  std::optional<double> curve_theta;
  auto* cmd_curve = app.add_subcommand("risk-curve", "Excess risk against n with a fitted log-log slope");
  add_common(cmd_curve, curve);
  cmd_curve->add_option("--learner", learner, "ons, erm or ogd")
      ->check(CLI::IsMember({"ons", "erm", "ogd"}))
      ->capture_default_str();
  cmd_curve->add_option("--n-grid", grid_text, "Comma-separated increasing sample sizes")->capture_default_str();
  cmd_curve->add_option("--repeats", repeats, "Repeats per sample size (>= 8)")
      ->check(CLI::Range(8, 1 << 20))
      ->capture_default_str();
  cmd_curve->add_option("--n-eval", n_eval, "Shared evaluation sample size")
      ->check(CLI::Range(1000, 1 << 30))
      ->capture_default_str();
  cmd_curve->add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_curve->add_option("--theta", curve_theta, "Fix theta instead of estimating it")->check(CLI::PositiveNumber);

  // check-assumptions
  Common check;
  ec::Index n_est = 10000;
  auto* cmd_check = app.add_subcommand("check-assumptions", "Loss constants, theta estimate and its lower bound");
  add_common(cmd_check, check);
  cmd_check->add_option("--n-est", n_est, "Sample size for theta")->check(CLI::Range(2, 1 << 28))->capture_default_str();

  // verify-lemmas
  Common lemmas;
  std::size_t trials = 10000;
  auto* cmd_lemmas = app.add_subcommand("verify-lemmas", "Randomized checks of the supporting inequalities");
  add_common(cmd_lemmas, lemmas, false);
  cmd_lemmas->add_option("--trials", trials, "Trials per check")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*cmd_online) {
      const auto loss = ec::compute_constants(ec::parse_loss_kind(online.loss), online.radius);
      const ec::Dataset data = training_data(online, online_n, online_data, online_strict);
      double th = 0.0;
      if (theta) {
        th = *theta;
      } else {
        // From a file, theta comes from the training rows themselves.
        const auto probes = ec::default_probes(ec::VectorXd::Zero(data.dim()), loss.radius, online.seed);
        th = online_data.empty() ? ec::estimate_theta(source_of(online), loss, probes, n_pilot).theta
                                 : ec::theta_from_sample(data, loss, probes).theta;
      }
      ec::OnsConfig cfg = ec::default_ons_config(loss, th, data.dim());
      if (eta1) cfg.eta1 = *eta1;
      if (smoothing_a) cfg.smoothing_a = *smoothing_a;
      cfg.literal_gradient = literal;
      ec::LearnerState state = ec::ons_init(cfg, data.dim());
      const auto trace = ec::run_ons(state, cfg, loss, data);
      if (!trace_path.empty()) emit(trace_path, [&](std::ostream& out) { ec::write_trace_csv(out, trace); });
      const ec::VectorXd avg = ec::ons_average(state);
      emit(online.out, [&](std::ostream& out) {
        out << "field,value\n";
        out << "n," << data.size() << '\n';
        out << "theta," << ec::format_double(cfg.theta) << '\n';
        out << "eta1," << ec::format_double(cfg.eta1) << '\n';
        out << "a," << ec::format_double(cfg.smoothing_a) << '\n';
        out << "cumulative_loss," << ec::format_double(state.cumulative_loss) << '\n';
        out << "empirical_risk_of_average," << ec::format_double(ec::empirical_risk(data, loss, avg)) << '\n';
        write_vector(out, "w_avg", avg);
        write_vector(out, "w_last", state.iterate);
      });
      return 0;
    }

    if (*cmd_batch) {
      const auto loss = ec::compute_constants(ec::parse_loss_kind(batch.loss), batch.radius);
      const ec::Dataset data = training_data(batch, batch_n, batch_data, batch_strict);
      ec::ErmConfig cfg;
      cfg.radius = batch.radius;
      cfg.grad_tol = grad_tol;
      const auto res = ec::erm_solve(data, loss, cfg);
      if (!res.converged) std::cerr << "warning: solver stopped before reaching --grad-tol\n";
      emit(batch.out, [&](std::ostream& out) {
        out << "field,value\n";
        out << "n," << data.size() << '\n';
        out << "objective," << ec::format_double(res.objective) << '\n';
        out << "stationarity," << ec::format_double(res.stationarity) << '\n';
        out << "iterations," << res.iterations << '\n';
        out << "converged," << (res.converged ? "true" : "false") << '\n';
        write_vector(out, "w", res.w);
      });
      return 0;
    }

    if (*cmd_curve) {
      const auto grid = parse_grid(grid_text);
      const auto loss = ec::compute_constants(ec::parse_loss_kind(curve.loss), curve.radius);
      ec::SetupOptions opts;
      opts.n_max = *std::max_element(grid.begin(), grid.end());
      opts.n_eval = n_eval;
      opts.theta = curve_theta;
      const auto setup = ec::make_setup(source_of(curve), loss, curve.seed, opts);
      const auto report = ec::risk_curve(ec::parse_learner_tag(learner), setup, grid, {repeats, threads});
      emit(curve.out, [&](std::ostream& out) { ec::write_report_csv(out, report); });
      return 0;
    }

    if (*cmd_check) {
      const auto loss = ec::compute_constants(ec::parse_loss_kind(check.loss), check.radius);
      const ec::Index d = check.d;
      const auto src = source_of(check);
      ec::ErmConfig cfg;
      cfg.radius = loss.radius;
      cfg.grad_tol = 1e-8;
      const auto ref = ec::erm_solve(ec::sample(src, n_est, ec::derive_seed(check.seed, ec::stream::kReference)), loss, cfg);
      const auto probes = ec::default_probes(ref.w, loss.radius, check.seed);
      const auto boot = ec::estimate_theta_bootstrap(src, loss, probes, n_est);
      const double g0 = ec::loss_derivative(loss, 0.0);
      const auto rec = ec::make_record("theta_floor", check.q * g0 * g0, boot.theta, 3.0 * boot.sigma);
      const auto onscfg = ec::default_ons_config(loss, std::max(boot.theta, 1e-12), d);
      emit(check.out, [&](std::ostream& out) {
        out << "quantity,value\n";
        out << "alpha," << ec::format_double(loss.alpha) << '\n';
        out << "lipschitz," << ec::format_double(loss.lipschitz) << '\n';
        out << "beta," << ec::format_double(loss.beta) << '\n';
        out << "theta_hat," << ec::format_double(boot.theta) << '\n';
        out << "theta_bootstrap_sigma," << ec::format_double(boot.sigma) << '\n';
        out << "theta_floor," << ec::format_double(rec.lhs) << '\n';
        out << "theta_floor_pass," << (rec.pass ? "true" : "false") << '\n';
        out << "rho_at_origin," << ec::format_double(ec::estimate_rho(ec::VectorXd::Zero(d), ref.w, src, n_est, loss.radius)) << '\n';
        out << "eta1," << ec::format_double(onscfg.eta1) << '\n';
        out << "a," << ec::format_double(onscfg.smoothing_a) << '\n';
      });
      return rec.pass ? 0 : kExitFailure;
    }

    if (*cmd_lemmas) {
      const auto records = ec::verify_all_lemmas(lemmas.seed, trials);
      emit(lemmas.out, [&](std::ostream& out) { ec::write_verifier_csv(out, records); });
      return ec::all_pass(records) ? 0 : kExitFailure;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ec::CsvError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
