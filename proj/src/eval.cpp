#include "truthprobe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "truthprobe/error.hpp"
#include "truthprobe/losses.hpp"

namespace truthprobe {

namespace fs = std::filesystem;

std::string_view to_string(Orientation o) { return o == Orientation::positive ? "positive" : "negative"; }

AccuracyResult accuracy(const Prober& prober, const ContrastActivationSet& set, OrientationMode mode) {
  if (!set.has_labels()) throw ValidationError("accuracy needs a labelled set");
  if (prober.d() != set.d()) throw ValidationError("prober and data dimensions differ");
  const auto& labels = *set.labels;
  // Counted in half-pairs so both orientations are exact fractions of n.
  long half_correct = 0;
  for (Index i = 0; i < set.n(); ++i) {
    const double score = pair_score(prober, set.phi_plus.row(i).transpose(), set.phi_minus.row(i).transpose());
    const bool yes = labels[static_cast<std::size_t>(i)] == 1;
    if (score == 0.5) {
      half_correct += 1;
    } else if ((score > 0.5) == yes) {
      half_correct += 2;
    }
  }
  const long half_total = 2 * static_cast<long>(set.n());
  const double positive = static_cast<double>(half_correct) / static_cast<double>(half_total);
  const double negative = static_cast<double>(half_total - half_correct) / static_cast<double>(half_total);
  switch (mode) {
    case OrientationMode::positive: return {positive, Orientation::positive};
    case OrientationMode::negative: return {negative, Orientation::negative};
    case OrientationMode::automatic: break;
  }
  if (half_correct * 2 >= half_total) return {positive, Orientation::positive};
  return {negative, Orientation::negative};
}

double mean_abs_cosine(const Direction& direction, std::span<const Direction> reference) {
  if (reference.empty()) throw ValidationError("cosine reference ensemble is empty");
  double total = 0.0;
  for (const auto& r : reference) {
    if (r.d() != direction.d()) throw ValidationError("reference direction has the wrong dimension");
    total += std::abs(direction.dot(r));
  }
  return total / static_cast<double>(reference.size());
}

double self_similarity(std::span<const Direction> reference) {
  if (reference.size() < 2) throw ValidationError("self-similarity needs at least two members");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    for (std::size_t j = i + 1; j < reference.size(); ++j) {
      total += std::abs(reference[i].dot(reference[j]));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

std::vector<Direction> directions_of(std::span<const Prober> probers) {
  std::vector<Direction> out;
  out.reserve(probers.size());
  for (const auto& p : probers) out.push_back(direction(p));
  return out;
}

namespace {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIterations = 100000;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw ConvergenceError("incomplete beta continued fraction did not converge", std::nan(""));
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// log I_x(a, b) on the side where the continued fraction converges quickly.
double log_ibeta_direct(double x, double a, double b) {
  return a * std::log(x) + b * std::log1p(-x) - log_beta(a, b) - std::log(a) +
         std::log(beta_continued_fraction(x, a, b));
}

}  // namespace

double log_incomplete_beta(double x, double a, double b) {
  if (!(a > 0 && b > 0)) throw ValidationError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return -INFINITY;
  if (x == 1.0) return 0.0;
  if (x < (a + 1.0) / (a + b + 2.0)) return log_ibeta_direct(x, a, b);
  // I_x(a, b) = 1 - I_{1-x}(b, a)
  return std::log1p(-std::exp(log_ibeta_direct(1.0 - x, b, a)));
}

double random_cosine_tail(int d, double c) {
  if (d < 2) throw ValidationError("dimension must be >= 2");
  if (!(c > 0.0 && c < 1.0)) throw ValidationError("cosine threshold must lie in (0, 1)");
  const double x = 1.0 - c * c;
  const double log_p = std::log(0.5) + log_incomplete_beta(x, 0.5 * (d - 1), 0.5);
  return log_p / std::log(10.0);
}

std::vector<ProjectionRow> projection_table(const ContrastActivationSet& set, const Prober& prober) {
  set.validate();
  if (prober.d() != set.d()) throw ValidationError("prober and data dimensions differ");
  const Index n = set.n();
  Matrix statements(2 * n, set.d());
  statements.topRows(n) = set.phi_plus;
  statements.bottomRows(n) = set.phi_minus;
  const Vector pc1 = principal_component(statements).direction;
  const Vector theta_hat = direction(prober).vector();

  std::vector<ProjectionRow> rows;
  rows.reserve(static_cast<std::size_t>(2 * n));
  for (Index k = 0; k < 2 * n; ++k) {
    ProjectionRow r;
    r.pair = k % n;
    r.member = k < n ? '+' : '-';
    r.label = set.labels ? (*set.labels)[static_cast<std::size_t>(r.pair)] : -1;
    r.pc1_projection = statements.row(k).dot(pc1);
    r.theta_projection = statements.row(k).dot(theta_hat);
    rows.push_back(r);
  }
  return rows;
}

std::vector<HistogramBin> output_histogram(const Prober& prober, const ContrastActivationSet& set, int bin_count) {
  if (bin_count < 2) throw ValidationError("histogram needs at least 2 bins");
  std::vector<HistogramBin> bins(static_cast<std::size_t>(bin_count));
  for (int b = 0; b < bin_count; ++b) {
    bins[static_cast<std::size_t>(b)].low = static_cast<double>(b) / bin_count;
    bins[static_cast<std::size_t>(b)].high = static_cast<double>(b + 1) / bin_count;
  }
  for (Index i = 0; i < set.n(); ++i) {
    const double score = pair_score(prober, set.phi_plus.row(i).transpose(), set.phi_minus.row(i).transpose());
    const int b = std::clamp(static_cast<int>(std::floor(score * bin_count)), 0, bin_count - 1);
    ++bins[static_cast<std::size_t>(b)].count;
  }
  return bins;
}

namespace {

std::ofstream open_csv(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  out.precision(17);
  return out;
}

}  // namespace

void write_projection_csv(const std::vector<ProjectionRow>& rows, const fs::path& file) {
  auto out = open_csv(file);
  out << "pair,member,label,pc1_projection,theta_projection\n";
  for (const auto& r : rows) {
    out << r.pair << ',' << r.member << ',' << r.label << ',' << r.pc1_projection << ',' << r.theta_projection
        << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<ProjectionRow> read_projection_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open for reading: " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "pair,member,label,pc1_projection,theta_projection") {
    throw ValidationError("unexpected projection CSV header in " + file.string());
  }
  std::vector<ProjectionRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ProjectionRow r;
    std::string field;
    try {
      std::getline(ls, field, ',');
      r.pair = std::stol(field);
      std::getline(ls, field, ',');
      if (field != "+" && field != "-") throw ValidationError("bad member field '" + field + "'");
      r.member = field[0];
      std::getline(ls, field, ',');
      r.label = std::stoi(field);
      std::getline(ls, field, ',');
      r.pc1_projection = std::stod(field);
      std::getline(ls, field, ',');
      r.theta_projection = std::stod(field);
    } catch (const std::logic_error&) {
      throw ValidationError("malformed projection CSV row: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

void write_histogram_csv(const std::vector<HistogramBin>& bins, const fs::path& file) {
  auto out = open_csv(file);
  out << "bin_low,bin_high,count\n";
  for (const auto& b : bins) out << b.low << ',' << b.high << ',' << b.count << '\n';
  if (!out) throw IoError("write failed: " + file.string());
}

}  // namespace truthprobe
