#include "truthprobe/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "truthprobe/digest.hpp"
#include "truthprobe/error.hpp"
#include "truthprobe/random.hpp"

namespace truthprobe {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kContainerVersion = 1;
constexpr const char* kDtype = "f32le";

std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

// Float32 <-> little-endian bytes.
void put_f32(std::vector<char>& out, float value) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

void write_file(const fs::path& file, const std::vector<char>& bytes) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<char> read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + file.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<char> encode_matrix(const Matrix& m) {
  std::vector<char> bytes;
  bytes.reserve(static_cast<std::size_t>(m.size()) * 4);
  for (Index i = 0; i < m.size(); ++i) put_f32(bytes, static_cast<float>(m.data()[i]));
  return bytes;
}

Matrix decode_matrix(const std::vector<char>& bytes, Index rows, Index cols, const std::string& name) {
  const auto expected = static_cast<std::size_t>(rows * cols * 4);
  if (bytes.size() != expected) {
    throw ContainerError(ContainerError::Reason::shape_mismatch,
                         name + ": expected " + std::to_string(expected) + " bytes for shape " +
                             shape_str(rows, cols) + ", found " + std::to_string(bytes.size()));
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    float v = get_f32(bytes.data() + 4 * i);
    if (!std::isfinite(v)) {
      throw ContainerError(ContainerError::Reason::non_finite,
                           name + ": non-finite value at flat index " + std::to_string(i));
    }
    m.data()[i] = static_cast<double>(v);
  }
  return m;
}

fs::path require_blob(const fs::path& dir, const std::string& name) {
  fs::path p = dir / name;
  if (!fs::is_regular_file(p)) {
    throw ContainerError(ContainerError::Reason::missing_blob, "missing blob: " + p.string());
  }
  return p;
}

struct ColumnStats {
  Vector mean;
  Vector divisor;
};

ColumnStats column_stats(const Matrix& m, double epsilon) {
  const double n = static_cast<double>(m.rows());
  ColumnStats s;
  s.mean = m.colwise().sum().transpose() / n;
  s.divisor.resize(m.cols());
  for (Index j = 0; j < m.cols(); ++j) {
    double ss = (m.col(j).array() - s.mean[j]).square().sum();
    double sd = std::sqrt(ss / n);
    s.divisor[j] = sd < epsilon ? 1.0 : sd;
  }
  return s;
}

Matrix standardize(const Matrix& m, const Vector& mean, const Vector& divisor) {
  Matrix out = m;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= divisor.transpose().array();
  return out;
}

}  // namespace

void ContrastActivationSet::validate() const {
  if (phi_plus.rows() != phi_minus.rows() || phi_plus.cols() != phi_minus.cols()) {
    throw ValidationError("phi_plus is " + shape_str(phi_plus.rows(), phi_plus.cols()) + " but phi_minus is " +
                          shape_str(phi_minus.rows(), phi_minus.cols()));
  }
  if (n() < 1 || d() < 1) throw ValidationError("empty activation set: " + shape_str(n(), d()));
  if (!phi_plus.allFinite() || !phi_minus.allFinite()) throw ValidationError("activation set has non-finite values");
  if (labels) {
    if (static_cast<Index>(labels->size()) != n()) {
      throw ValidationError("labels has length " + std::to_string(labels->size()) + ", expected " +
                            std::to_string(n()));
    }
    for (auto y : *labels) {
      if (y > 1) throw ValidationError("label value " + std::to_string(y) + " is not 0/1");
    }
  }
}

std::string digest(const ContrastActivationSet& set) {
  Sha256 h;
  h.update(std::string_view("contrast-activation-set/1"));
  h.update(set.phi_plus).update(set.phi_minus);
  h.update(static_cast<std::uint64_t>(set.normalized));
  if (set.labels) {
    h.update(std::uint64_t{1});
    h.update(std::as_bytes(std::span(set.labels->data(), set.labels->size())));
  } else {
    h.update(std::uint64_t{0});
  }
  return h.hex();
}

std::pair<ContrastActivationSet, NormalizationStats> normalize(const ContrastActivationSet& set, double epsilon) {
  set.validate();
  if (set.normalized) throw ValidationError("activation set is already normalized");
  if (set.n() < 2) throw ValidationError("normalization needs at least 2 pairs, got " + std::to_string(set.n()));
  if (!(epsilon > 0)) throw ValidationError("std floor must be positive");

  ColumnStats plus = column_stats(set.phi_plus, epsilon);
  ColumnStats minus = column_stats(set.phi_minus, epsilon);
  NormalizationStats stats{plus.mean, minus.mean, plus.divisor, minus.divisor, epsilon};
  return {apply_normalization(set, stats), std::move(stats)};
}

ContrastActivationSet apply_normalization(const ContrastActivationSet& set, const NormalizationStats& stats) {
  set.validate();
  if (set.normalized) throw ValidationError("activation set is already normalized");
  if (stats.mu_plus.size() != set.d() || stats.mu_minus.size() != set.d() || stats.sigma_plus.size() != set.d() ||
      stats.sigma_minus.size() != set.d()) {
    throw ValidationError("normalization stats dimension does not match the set");
  }
  ContrastActivationSet out;
  out.phi_plus = standardize(set.phi_plus, stats.mu_plus, stats.sigma_plus);
  out.phi_minus = standardize(set.phi_minus, stats.mu_minus, stats.sigma_minus);
  out.labels = set.labels;
  out.meta = set.meta;
  out.normalized = true;
  return out;
}

ContrastActivationSet subset(const ContrastActivationSet& set, const std::vector<Index>& indices) {
  ContrastActivationSet out;
  const auto m = static_cast<Index>(indices.size());
  out.phi_plus.resize(m, set.d());
  out.phi_minus.resize(m, set.d());
  if (set.labels) out.labels.emplace(indices.size());
  for (Index r = 0; r < m; ++r) {
    Index i = indices[static_cast<std::size_t>(r)];
    if (i < 0 || i >= set.n()) throw ValidationError("subset index out of range: " + std::to_string(i));
    out.phi_plus.row(r) = set.phi_plus.row(i);
    out.phi_minus.row(r) = set.phi_minus.row(i);
    if (set.labels) (*out.labels)[static_cast<std::size_t>(r)] = (*set.labels)[static_cast<std::size_t>(i)];
  }
  out.meta = set.meta;
  out.normalized = set.normalized;
  return out;
}

SplitResult split(const ContrastActivationSet& set, double train_fraction, std::uint64_t seed) {
  set.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie strictly between 0 and 1");
  }
  const Index n = set.n();
  const auto n_train = static_cast<Index>(std::llround(static_cast<double>(n) * train_fraction));
  if (n_train < 2 || n - n_train < 1) {
    throw ValidationError("degenerate split: " + std::to_string(n_train) + " train / " +
                          std::to_string(n - n_train) + " test");
  }
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitSpec spec;
  spec.seed = seed;
  spec.train_indices.assign(perm.begin(), perm.begin() + n_train);
  spec.test_indices.assign(perm.begin() + n_train, perm.end());
  auto train = subset(set, spec.train_indices);
  auto test = subset(set, spec.test_indices);
  return {std::move(train), std::move(test), std::move(spec)};
}

void SyntheticConfig::validate() const {
  if (n < 2 || d < 2) throw ValidationError("synthetic config needs n >= 2 and d >= 2");
  if (signal_scale < 0 || nuisance_scale < 0 || noise_scale < 0) {
    throw ValidationError("synthetic scales must be non-negative");
  }
}

SyntheticData gen_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = config.n;
  const Index d = config.d;

  // Orthonormal (t, g) by Gram-Schmidt on two Gaussian vectors.
  auto gaussian = [&](Index len) {
    Vector v(len);
    for (Index j = 0; j < len; ++j) v[j] = normal(rng);
    return v;
  };
  Vector t = gaussian(d);
  t.normalize();
  Vector g = gaussian(d);
  g -= t.dot(g) * t;
  g.normalize();

  Labels labels(static_cast<std::size_t>(n), 0);
  std::fill(labels.begin(), labels.begin() + n / 2, std::uint8_t{1});
  std::shuffle(labels.begin(), labels.end(), rng);

  ContrastActivationSet set;
  set.phi_plus.resize(n, d);
  set.phi_minus.resize(n, d);
  for (Index i = 0; i < n; ++i) {
    const double s = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    const double c = normal(rng);
    Vector shared = c * config.nuisance_scale * g;
    Vector truth = s * config.signal_scale * t;
    set.phi_plus.row(i) = (truth + shared).transpose();
    set.phi_minus.row(i) = (shared - truth).transpose();
    if (config.noise_scale > 0) {
      set.phi_plus.row(i) += config.noise_scale * gaussian(d).transpose();
      set.phi_minus.row(i) += config.noise_scale * gaussian(d).transpose();
    }
  }
  set.labels = std::move(labels);
  set.meta = {
      {"source", "synthetic"},
      {"seed", std::to_string(config.seed)},
      {"signal_scale", json(config.signal_scale).dump()},
      {"nuisance_scale", json(config.nuisance_scale).dump()},
      {"noise_scale", json(config.noise_scale).dump()},
  };
  return {std::move(set), std::move(t), std::move(g)};
}

ContrastActivationSet quantize_to_storage(const ContrastActivationSet& set) {
  ContrastActivationSet out = set;
  auto q = [](double x) { return static_cast<double>(static_cast<float>(x)); };
  out.phi_plus = set.phi_plus.unaryExpr(q);
  out.phi_minus = set.phi_minus.unaryExpr(q);
  return out;
}

void save(const ContrastActivationSet& set, const fs::path& dir) {
  set.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create container directory: " + dir.string());

  json manifest = {
      {"version", kContainerVersion},
      {"n", set.n()},
      {"d", set.d()},
      {"dtype", kDtype},
      {"normalized", set.normalized},
      {"labels_present", set.has_labels()},
      {"meta", set.meta},
  };
  write_file(dir / "phi_plus.bin", encode_matrix(set.phi_plus));
  write_file(dir / "phi_minus.bin", encode_matrix(set.phi_minus));
  if (set.labels) {
    std::vector<char> bytes(set.labels->begin(), set.labels->end());
    write_file(dir / "labels.bin", bytes);
  } else if (fs::exists(dir / "labels.bin")) {
    fs::remove(dir / "labels.bin");
  }
  // Manifest last: a container without one is never mistaken for complete.
  std::string text = manifest.dump(2) + "\n";
  write_file(dir / "manifest.json", std::vector<char>(text.begin(), text.end()));
}

ContrastActivationSet load(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) {
    throw ContainerError(ContainerError::Reason::corrupt_manifest, "missing manifest: " + manifest_path.string());
  }
  json manifest;
  Index n = 0;
  Index d = 0;
  bool normalized = false;
  bool labels_present = false;
  Meta meta;
  try {
    auto text = read_file(manifest_path);
    manifest = json::parse(text.begin(), text.end());
    if (manifest.at("version").get<int>() != kContainerVersion) {
      throw ContainerError(ContainerError::Reason::corrupt_manifest,
                           "unsupported container version " + manifest.at("version").dump());
    }
    if (manifest.at("dtype").get<std::string>() != kDtype) {
      throw ContainerError(ContainerError::Reason::corrupt_manifest,
                           "unsupported dtype " + manifest.at("dtype").dump());
    }
    n = manifest.at("n").get<Index>();
    d = manifest.at("d").get<Index>();
    normalized = manifest.at("normalized").get<bool>();
    labels_present = manifest.at("labels_present").get<bool>();
    if (manifest.contains("meta")) meta = manifest.at("meta").get<Meta>();
  } catch (const json::exception& e) {
    throw ContainerError(ContainerError::Reason::corrupt_manifest,
                         "corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  if (n < 1 || d < 1) {
    throw ContainerError(ContainerError::Reason::invalid_shape, "manifest declares invalid shape " + shape_str(n, d));
  }

  ContrastActivationSet set;
  set.phi_plus = decode_matrix(read_file(require_blob(dir, "phi_plus.bin")), n, d, "phi_plus.bin");
  set.phi_minus = decode_matrix(read_file(require_blob(dir, "phi_minus.bin")), n, d, "phi_minus.bin");
  if (labels_present) {
    auto bytes = read_file(require_blob(dir, "labels.bin"));
    if (static_cast<Index>(bytes.size()) != n) {
      throw ContainerError(ContainerError::Reason::shape_mismatch,
                           "labels.bin: expected " + std::to_string(n) + " bytes, found " +
                               std::to_string(bytes.size()));
    }
    Labels labels(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      auto y = static_cast<std::uint8_t>(bytes[i]);
      if (y > 1) {
        throw ContainerError(ContainerError::Reason::invalid_labels,
                             "labels.bin: value " + std::to_string(y) + " at index " + std::to_string(i));
      }
      labels[i] = y;
    }
    set.labels = std::move(labels);
  }
  set.meta = std::move(meta);
  set.normalized = normalized;
  return set;
}

void save_direction(const Vector& direction, const fs::path& file) {
  std::vector<char> bytes;
  bytes.reserve(static_cast<std::size_t>(direction.size()) * 4);
  for (Index j = 0; j < direction.size(); ++j) put_f32(bytes, static_cast<float>(direction[j]));
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  write_file(file, bytes);
}

Vector load_direction(const fs::path& file) {
  if (!fs::is_regular_file(file)) {
    throw ContainerError(ContainerError::Reason::missing_blob, "missing blob: " + file.string());
  }
  auto bytes = read_file(file);
  if (bytes.empty() || bytes.size() % 4 != 0) {
    throw ContainerError(ContainerError::Reason::shape_mismatch,
                         file.string() + ": byte length " + std::to_string(bytes.size()) + " is not a multiple of 4");
  }
  Matrix m = decode_matrix(bytes, static_cast<Index>(bytes.size() / 4), 1, file.filename().string());
  return m.col(0);
}

}  // namespace truthprobe
