#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "expconcave/harness.hpp"
#include "oracles.hpp"

namespace expconcave {
namespace {

const LossSpec kLogistic = compute_constants(LossKind::Logistic, 1.0);

SetupOptions small_options() {
  SetupOptions o;
  o.n_max = 512;
  o.n_eval = 20000;
  o.n_pilot = 2000;
  return o;
}

TEST(MeanAndStderr, KnownValues) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto est = mean_and_stderr(v);
  EXPECT_DOUBLE_EQ(est.mean, 2.5);
  EXPECT_NEAR(est.stderr_, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_EQ(mean_and_stderr(std::vector<double>{7.0}).stderr_, 0.0);
  EXPECT_THROW(mean_and_stderr(std::vector<double>{}), std::invalid_argument);
}

TEST(PopulationRisk, OriginIsLogTwoWithZeroStderr) {
  const auto src = LemmaOneSource::classification(3, 0.2, 60);
  const auto est = estimate_population_risk(VectorXd::Zero(3), kLogistic, src, 5000);
  EXPECT_NEAR(est.mean, std::log(2.0), 1e-15);
  EXPECT_EQ(est.stderr_, 0.0);
}

TEST(PopulationRisk, SymmetricLabelsMatchLargeSampleOracle) {
  const auto src = LemmaOneSource::classification(3, 0.5, 61);
  VectorXd w(3);
  w << 0.6, -0.3, 0.2;
  const auto est = estimate_population_risk(w, kLogistic, src, 200000);
  // Labels are fair coins independent of x, so the risk is the average of
  // both label signs over the feature law.
  std::mt19937_64 rng(62);
  double sum = 0.0;
  const int n = 10000000;
  for (int k = 0; k < n; ++k) {
    const double z = oracle::rejection_ball(rng, 3).dot(w);
    sum += 0.5 * (std::log1p(std::exp(-z)) + std::log1p(std::exp(z)));
  }
  EXPECT_NEAR(est.mean, sum / n, 3.0 * est.stderr_);
}

TEST(PopulationRisk, StderrScalesWithSampleSize) {
  const auto src = LemmaOneSource::classification(3, 0.2, 63);
  VectorXd w(3);
  w << 0.5, 0.5, 0.0;
  const double s1 = estimate_population_risk(w, kLogistic, src, 50000).stderr_;
  const double s2 = estimate_population_risk(w, kLogistic, src, 100000).stderr_;
  EXPECT_NEAR(s1 / s2, std::sqrt(2.0), 0.2 * std::sqrt(2.0));
}

TEST(PopulationRisk, RejectsSmallSampleAndInfeasibleWeights) {
  const auto src = LemmaOneSource::classification(3, 0.2, 64);
  EXPECT_THROW(estimate_population_risk(VectorXd::Zero(3), kLogistic, src, 999), std::invalid_argument);
  EXPECT_THROW(estimate_population_risk(VectorXd::Constant(3, 1.0), kLogistic, src, 5000), std::invalid_argument);
}

TEST(PairedExcess, MatchesDifferenceOfRisks) {
  const auto src = LemmaOneSource::classification(3, 0.2, 65);
  const Dataset eval = evaluation_sample(src, 10000);
  VectorXd a(3), b(3);
  a << 0.5, 0.1, 0.0;
  b << 0.4, 0.0, 0.1;
  const double direct = risk_on(eval, kLogistic, a).mean - risk_on(eval, kLogistic, b).mean;
  EXPECT_NEAR(paired_excess(eval, kLogistic, a, b).mean, direct, 1e-13);
  EXPECT_EQ(paired_excess(eval, kLogistic, a, a).mean, 0.0);
}

TEST(Theta, ConstantMultiplierAtOriginWithFairLabels) {
  const auto src = LemmaOneSource::classification(4, 0.5, 66, VectorXd::Zero(4));
  const std::vector<VectorXd> probes{VectorXd::Zero(4)};
  const auto est = estimate_theta(src, kLogistic, probes, 5000);
  EXPECT_NEAR(est.theta, 0.25, 1e-6);
}

TEST(Theta, GeneralizedEigenvalueMatchesDirectSolver) {
  const auto src = LemmaOneSource::classification(3, 0.2, 67);
  const Dataset data = sample(src, 3000);
  VectorXd w(3);
  w << 0.7, -0.2, 0.4;
  const std::vector<VectorXd> probes{w};
  const double theta = theta_from_sample(data, kLogistic, probes).theta;
  MatrixXd a = MatrixXd::Zero(3, 3);
  MatrixXd b = MatrixXd::Zero(3, 3);
  for (Index i = 0; i < data.size(); ++i) {
    const VectorXd x = data.features.row(i).transpose();
    const double g = 1.0 / (1.0 + std::exp(data.labels(i) * w.dot(x)));
    a += g * g * x * x.transpose();
    b += x * x.transpose();
  }
  a /= 3000.0;
  b = b / 3000.0 + 1e-9 * MatrixXd::Identity(3, 3);
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> gen(a, b);
  EXPECT_NEAR(theta, gen.eigenvalues().minCoeff(), 1e-10);
}

TEST(Theta, LabelFloorBoundHoldsWithBootstrapSlack) {
  for (double q : {0.1, 0.25, 0.5}) {
    const auto rec = verify_theta_floor(q, kLogistic, 5, 10000, 68);
    EXPECT_TRUE(rec.pass) << "q = " << q << ": " << rec.rhs << " vs " << rec.lhs << " - " << rec.tolerance;
    EXPECT_GT(rec.tolerance, 0.0);
  }
}

TEST(Theta, Deterministic) {
  const auto src = LemmaOneSource::classification(3, 0.2, 69);
  const auto probes = default_probes(VectorXd::Zero(3), 1.0, 69);
  EXPECT_EQ(probes.size(), 34u);
  EXPECT_EQ(estimate_theta(src, kLogistic, probes, 2000).theta, estimate_theta(src, kLogistic, probes, 2000).theta);
}

TEST(Rho, ZeroAtReference) {
  const auto src = LemmaOneSource::classification(3, 0.2, 70);
  VectorXd w(3);
  w << 0.2, 0.3, 0.1;
  EXPECT_EQ(estimate_rho(w, w, src, 1000, 1.0), 0.0);
}

TEST(Rho, UniformBallSecondMoment) {
  for (Index d : {2, 5}) {
    const auto src = LemmaOneSource::classification(d, 0.2, 71);
    const VectorXd w = VectorXd::Unit(d, 0);
    const VectorXd ref = -VectorXd::Unit(d, 0);
    EXPECT_NEAR(estimate_rho(w, ref, src, 200000, 1.0), 1.0 / std::sqrt(static_cast<double>(d + 2)), 3e-3);
  }
}

TEST(Rho, SymmetricInArguments) {
  const auto src = LemmaOneSource::classification(3, 0.2, 72);
  VectorXd a(3), b(3);
  a << 0.5, 0.1, -0.2;
  b << -0.1, 0.3, 0.4;
  EXPECT_DOUBLE_EQ(estimate_rho(a, b, src, 5000, 1.0), estimate_rho(b, a, src, 5000, 1.0));
}

TEST(FitSlope, RecoversPowerLaw) {
  std::vector<RiskRow> rows;
  for (Index n : {128, 256, 512, 1024, 2048}) rows.push_back({n, 16, 3.0 / static_cast<double>(n), 1e-6});
  EXPECT_NEAR(fit_slope(rows), -1.0, 1e-12);
}

TEST(FitSlope, SkipsNoisyRowsAndRefusesTooFew) {
  std::vector<RiskRow> rows;
  for (Index n : {100, 200, 400, 800}) rows.push_back({n, 16, 1.0 / std::sqrt(static_cast<double>(n)), 1e-4});
  rows.push_back({1600, 16, 1e-3, 1e-3});
  EXPECT_NEAR(fit_slope(rows), -0.5, 1e-12);
  rows[0].excess_risk_stderr = 1.0;
  EXPECT_THROW(fit_slope(rows), SlopeFitError);
}

TEST(RiskCurve, ValidatesGridAndRepeats) {
  const auto setup = make_setup(LemmaOneSource::classification(3, 0.2, 73), kLogistic, 73, small_options());
  const std::vector<Index> bad{64, 32, 128, 256};
  EXPECT_THROW(risk_curve(LearnerTag::ERM, setup, bad), std::invalid_argument);
  const std::vector<Index> good{32, 64, 128, 256};
  EXPECT_THROW(risk_curve(LearnerTag::ERM, setup, good, {.repeats = 4}), std::invalid_argument);
}

TEST(RiskCurve, SmallGridIsSortedNonnegativeAndThreadInvariant) {
  const auto setup = make_setup(LemmaOneSource::classification(3, 0.2, 74), kLogistic, 74, small_options());
  const std::vector<Index> grid{64, 128, 256, 512};
  for (auto tag : {LearnerTag::ERM, LearnerTag::ONS, LearnerTag::OGD}) {
    const auto serial = risk_curve(tag, setup, grid, {.repeats = 8, .threads = 1});
    const auto parallel = risk_curve(tag, setup, grid, {.repeats = 8, .threads = 4});
    ASSERT_EQ(serial.rows.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(serial.rows[k].n, grid[k]);
      EXPECT_EQ(serial.rows[k].repeats, 8u);
      EXPECT_GE(serial.rows[k].excess_risk_mean, -2.0 * serial.rows[k].excess_risk_stderr);
      EXPECT_EQ(serial.rows[k].excess_risk_mean, parallel.rows[k].excess_risk_mean);
    }
    EXPECT_EQ(serial.fitted_slope, parallel.fitted_slope);
    EXPECT_LT(serial.fitted_slope, 0.0);
  }
}

TEST(RiskCurve, DoublingRepeatsShrinksStderr) {
  const auto setup = make_setup(LemmaOneSource::classification(3, 0.2, 75), kLogistic, 75, small_options());
  auto stderr_at = [&](std::size_t repeats) {
    const std::vector<Index> grid{32, 48, 64, 96};
    const auto r = risk_curve(LearnerTag::ERM, setup, grid, {.repeats = repeats});
    double s = 0.0;
    for (const auto& row : r.rows) s += row.excess_risk_stderr;
    return s;
  };
  EXPECT_NEAR(stderr_at(128) / stderr_at(64), 1.0 / std::sqrt(2.0), 0.25 / std::sqrt(2.0));
}

TEST(Setup, ReferenceIsAccurateAndOnsUsesDefaults) {
  const auto setup = make_setup(LemmaOneSource::classification(3, 0.2, 76), kLogistic, 76, small_options());
  EXPECT_TRUE(setup.reference_fit.converged);
  EXPECT_LE(setup.reference_fit.stationarity, 1e-11);
  const auto expected = default_ons_config(kLogistic, setup.theta, 3);
  EXPECT_EQ(setup.ons.eta1, expected.eta1);
  EXPECT_EQ(setup.ons.smoothing_a, expected.smoothing_a);
  EXPECT_GT(setup.theta, 0.0);
  EXPECT_EQ(setup.evaluation.size(), 20000);
}

TEST(Setup, TrainingSamplesAreSharedAcrossLearnersAndDistinctAcrossCells) {
  const auto setup = make_setup(LemmaOneSource::classification(3, 0.2, 77), kLogistic, 77, small_options());
  EXPECT_EQ(training_sample(setup, 64, 0).features, training_sample(setup, 64, 0).features);
  EXPECT_NE(training_sample(setup, 64, 0).features, training_sample(setup, 64, 1).features);
  EXPECT_NE(training_sample(setup, 64, 0).features.row(0), setup.evaluation.features.row(0));
}

TEST(RegretCurve, PrefixRegretMatchesDirectReplay) {
  const auto setup = make_setup(LemmaOneSource::classification(3, 0.2, 78), kLogistic, 78, small_options());
  const std::vector<Index> grid{100, 200};
  const auto rows = regret_curve(setup, grid, 2);
  ASSERT_EQ(rows.size(), 2u);
  double total = 0.0;
  for (std::size_t r = 0; r < 2; ++r) {
    const Dataset data = training_sample(setup, 200, r).head(100);
    LearnerState s = ons_init(setup.ons, 3);
    const auto trace = run_ons(s, setup.ons, kLogistic, data);
    std::vector<double> losses;
    for (const auto& t : trace) losses.push_back(t.loss);
    total += regret_of_run(losses, setup.reference_w, data, kLogistic);
  }
  EXPECT_NEAR(rows[0].regret_mean, total / 2.0, 1e-9);
  EXPECT_NEAR(rows[0].normalized, rows[0].regret_mean / (3.0 * std::log(100.0)), 1e-12);
}

TEST(ReportCsv, RoundTripsLosslessly) {
  RiskReport report;
  report.learner = LearnerTag::OGD;
  report.rows = {{128, 16, 0.0123456789012345, 1.5e-4}, {256, 16, 6.1e-3, -0.0}};
  report.fitted_slope = -0.4987654321;
  std::ostringstream first;
  write_report_csv(first, report);
  std::istringstream in(first.str());
  const auto back = read_report_csv(in);
  EXPECT_EQ(back.learner, LearnerTag::OGD);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[0].excess_risk_mean, report.rows[0].excess_risk_mean);
  EXPECT_EQ(back.fitted_slope, report.fitted_slope);
  std::ostringstream second;
  write_report_csv(second, back);
  EXPECT_EQ(first.str(), second.str());
}

TEST(ReportCsv, MissingFooterIsAnError) {
  std::istringstream in("learner,n,repeat_count,excess_risk_mean,excess_risk_stderr\nons,128,16,0.1,0.01\n");
  EXPECT_THROW(read_report_csv(in), CsvError);
}

TEST(VerifyAllLemmas, ZeroTrialsGivesEmptyReport) { EXPECT_TRUE(verify_all_lemmas(1, 0).empty()); }

TEST(VerifyAllLemmas, DeterministicAndPassing) {
  const auto a = verify_all_lemmas(5, 500);
  const auto b = verify_all_lemmas(5, 500);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.size(), 9u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].name, b[k].name);
    EXPECT_EQ(a[k].lhs, b[k].lhs);
    EXPECT_EQ(a[k].rhs, b[k].rhs);
    EXPECT_TRUE(a[k].pass) << a[k].name;
  }
  EXPECT_TRUE(all_pass(a));
}

TEST(VerifierRecord, PassFlagFollowsTolerance) {
  EXPECT_TRUE(make_record("x", 1.0, 1.0, 0.0).pass);
  EXPECT_TRUE(make_record("x", 1.0 + 1e-10, 1.0, 1e-9).pass);
  EXPECT_FALSE(make_record("x", 1.1, 1.0, 1e-9).pass);
}

TEST(LearnerTags, RoundTrip) {
  for (auto tag : {LearnerTag::ONS, LearnerTag::ERM, LearnerTag::OGD}) EXPECT_EQ(parse_learner_tag(to_string(tag)), tag);
  EXPECT_THROW(parse_learner_tag("sgd"), std::invalid_argument);
}

}  // namespace
}  // namespace expconcave
