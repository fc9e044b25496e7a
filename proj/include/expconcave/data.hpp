#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

namespace expconcave {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kFeatureNormSlack = 1e-12;

/// Mixes a master seed with stream coordinates (splitmix64 finalizer) so that
/// every (seed, tag...) tuple maps to an unrelated generator state.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

struct Example {
  VectorXd x;
  double y = 0.0;
};

/// n examples stored row-wise: features is n x d, labels has length n.
struct Dataset {
  MatrixXd features;
  VectorXd labels;

  Dataset() = default;
  Dataset(MatrixXd f, VectorXd l) : features(std::move(f)), labels(std::move(l)) {
    if (features.rows() != labels.size()) {
      throw std::invalid_argument("Dataset: feature rows and label count differ");
    }
  }

  Index size() const { return labels.size(); }
  Index dim() const { return features.cols(); }
  bool empty() const { return labels.size() == 0; }
  Example example(Index i) const { return {features.row(i).transpose(), labels(i)}; }

  /// Rows [0, n).
  Dataset head(Index n) const { return {features.topRows(n), labels.head(n)}; }
};

enum class LabelMode { Classification, Regression };

/// Synthetic law satisfying Pr(y = +1 | x) >= q and Pr(y = -1 | x) >= q.
///
/// x is uniform on the unit ball, so E[x x^T] = I / (d + 2). A classification
/// label is sign(<teacher, x> + noise), flipped independently with probability
/// flip_q; noise is logistic with scale margin_noise (zero gives a hard sign).
/// Regression labels are clamp(<teacher, x> + U(-regression_noise,
/// regression_noise), [-1, 1]).
struct LemmaOneSource {
  Index dim = 5;
  VectorXd teacher;
  double flip_q = 0.2;
  std::uint64_t seed = 0;
  LabelMode mode = LabelMode::Classification;
  double margin_noise = 0.0;
  double regression_noise = 0.5;

  static LemmaOneSource classification(Index dim, double flip_q, std::uint64_t seed,
                                       VectorXd teacher = {}) {
    LemmaOneSource s;
    s.dim = dim;
    s.flip_q = flip_q;
    s.seed = seed;
    if (teacher.size() == 0) {
      teacher = VectorXd::Zero(dim);
      teacher(0) = 1.0;
    }
    s.teacher = std::move(teacher);
    s.validate();
    return s;
  }

  LemmaOneSource with_seed(std::uint64_t new_seed) const {
    LemmaOneSource s = *this;
    s.seed = new_seed;
    return s;
  }

  void validate() const {
    if (dim < 1) throw std::invalid_argument("LemmaOneSource: dim must be >= 1");
    if (teacher.size() != dim) throw std::invalid_argument("LemmaOneSource: teacher has wrong dimension");
    if (!(flip_q > 0.0 && flip_q <= 0.5)) {
      throw std::invalid_argument("LemmaOneSource: flip_q must lie in (0, 0.5]");
    }
    if (margin_noise < 0.0 || regression_noise < 0.0) {
      throw std::invalid_argument("LemmaOneSource: noise scales must be nonnegative");
    }
  }
};

/// Owned sampling stream over a source.
class ExampleStream {
 public:
  explicit ExampleStream(const LemmaOneSource& source) : source_(source), rng_(source.seed) {
    source_.validate();
  }

  Index dim() const { return source_.dim; }

  void draw(Eigen::Ref<VectorXd> x, double& y) {
    const Index d = source_.dim;
    for (Index j = 0; j < d; ++j) x(j) = normal_(rng_);
    double norm = x.norm();
    while (norm == 0.0) {
      for (Index j = 0; j < d; ++j) x(j) = normal_(rng_);
      norm = x.norm();
    }
    const double radius = std::pow(unit_(rng_), 1.0 / static_cast<double>(d));
    x *= radius / norm;
    const double n2 = x.norm();
    if (n2 > 1.0) x /= n2;

    const double score = source_.teacher.dot(x);
    if (source_.mode == LabelMode::Regression) {
      const double noise = source_.regression_noise * (2.0 * unit_(rng_) - 1.0);
      y = std::clamp(score + noise, -1.0, 1.0);
      return;
    }
    double noisy = score;
    if (source_.margin_noise > 0.0) {
      const double u = std::clamp(unit_(rng_), 1e-300, 1.0 - 1e-16);
      noisy += source_.margin_noise * std::log(u / (1.0 - u));
    }
    y = noisy >= 0.0 ? 1.0 : -1.0;
    if (unit_(rng_) < source_.flip_q) y = -y;
  }

  Example next() {
    Example e{VectorXd(source_.dim), 0.0};
    draw(e.x, e.y);
    return e;
  }

  Dataset take(Index n) {
    MatrixXd features(n, source_.dim);
    VectorXd labels(n);
    VectorXd x(source_.dim);
    for (Index i = 0; i < n; ++i) {
      draw(x, labels(i));
      features.row(i) = x.transpose();
    }
    return {std::move(features), std::move(labels)};
  }

 private:
  LemmaOneSource source_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

/// n i.i.d. examples from the source's own seed.
inline Dataset sample(const LemmaOneSource& source, Index n) {
  if (n < 0) throw std::invalid_argument("sample: n must be nonnegative");
  ExampleStream stream(source);
  return stream.take(n);
}

inline Dataset sample(const LemmaOneSource& source, Index n, std::uint64_t seed) {
  return sample(source.with_seed(seed), n);
}

// ---------------------------------------------------------------------------
// CSV: rows "y,x1,...,xd", optional header, '.' decimal separator.

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvLoadOptions {
  bool strict = false;
  LabelMode mode = LabelMode::Classification;
};

struct CsvLoadResult {
  Dataset data;
  std::vector<std::string> warnings;
};

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline bool parse_double(std::string_view field, double& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  if (field.empty()) return false;
  auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  return res.ec == std::errc() && res.ptr == field.data() + field.size();
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline CsvLoadResult parse_csv(std::istream& in, const CsvLoadOptions& opts = {}) {
  std::vector<double> labels;
  std::vector<double> values;
  std::vector<std::string> warnings;
  Index dim = -1;
  std::string line;
  std::size_t row = 0;
  bool first_content = true;

  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    std::vector<double> parsed(fields.size());
    bool ok = true;
    for (std::size_t k = 0; k < fields.size(); ++k) ok = ok && detail::parse_double(fields[k], parsed[k]);
    if (!ok) {
      if (first_content) {  // header
        first_content = false;
        continue;
      }
      throw CsvError("row " + std::to_string(row) + ": unparsable field");
    }
    first_content = false;
    if (fields.size() < 2) throw CsvError("row " + std::to_string(row) + ": expected y and at least one feature");
    const Index d = static_cast<Index>(fields.size()) - 1;
    if (dim < 0) dim = d;
    if (d != dim) {
      throw CsvError("row " + std::to_string(row) + ": expected " + std::to_string(dim) +
                     " features, found " + std::to_string(d));
    }
    const double y = parsed[0];
    if (opts.mode == LabelMode::Classification) {
      if (y != 1.0 && y != -1.0) throw CsvError("row " + std::to_string(row) + ": label must be -1 or +1");
    } else if (!(y >= -1.0 && y <= 1.0)) {
      throw CsvError("row " + std::to_string(row) + ": label outside [-1, 1]");
    }
    double norm2 = 0.0;
    for (Index j = 1; j <= d; ++j) norm2 += parsed[j] * parsed[j];
    const double norm = std::sqrt(norm2);
    if (norm > 1.0 + kFeatureNormSlack) {
      if (opts.strict) throw CsvError("row " + std::to_string(row) + ": feature norm exceeds 1");
      warnings.push_back("row " + std::to_string(row) + ": feature norm " + format_double(norm) +
                         " rescaled to 1");
      for (Index j = 1; j <= d; ++j) parsed[j] /= norm;
    }
    labels.push_back(y);
    values.insert(values.end(), parsed.begin() + 1, parsed.end());
  }

  const Index n = static_cast<Index>(labels.size());
  if (n == 0) return {Dataset(MatrixXd(0, std::max<Index>(dim, 0)), VectorXd(0)), std::move(warnings)};
  MatrixXd features =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n, dim);
  return {Dataset(std::move(features), Eigen::Map<const VectorXd>(labels.data(), n)), std::move(warnings)};
}

inline CsvLoadResult load_csv(const std::string& path, const CsvLoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open " + path);
  return parse_csv(in, opts);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
  for (Index i = 0; i < data.size(); ++i) {
    out << format_double(data.labels(i));
    for (Index j = 0; j < data.dim(); ++j) out << ',' << format_double(data.features(i, j));
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsvError("cannot write " + path);
  write_csv(out, data);
}

}  // namespace expconcave
