#include "truthprobe/experiment.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "truthprobe/digest.hpp"
#include "truthprobe/error.hpp"
#include "truthprobe/eval.hpp"
#include "truthprobe/random.hpp"

namespace truthprobe {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open for reading: " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + file.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + file.string());
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

// Seed streams inside the pipeline; the tags keep them disjoint.
enum SeedTag : std::uint64_t { kSplitTag = 1, kReferenceTag, kBestOfTag, kSearchTag, kRandomTag, kSupervisedTag };

}  // namespace

json to_json(const TrainedProber& t) {
  json j = {
      {"d", t.prober.d()},
      {"theta", std::vector<double>(t.prober.theta.data(), t.prober.theta.data() + t.prober.theta.size())},
      {"bias", t.prober.bias},
      {"constraint", to_string(t.prober.constraint)},
      {"seed", t.seed},
      {"loss_variant", to_string(t.loss_spec.variant)},
      {"lambda", t.loss_spec.lambda},
      {"final_loss", t.final_train_loss},
      {"config_digest", t.config_digest},
  };
  if (t.loss_spec.sign_mode) j["sign_mode"] = to_string(*t.loss_spec.sign_mode);
  return j;
}

TrainedProber trained_prober_from_json(const json& j) {
  try {
    TrainedProber t;
    const auto theta = j.at("theta").get<std::vector<double>>();
    const auto d = j.at("d").get<Index>();
    if (static_cast<Index>(theta.size()) != d) throw ValidationError("prober JSON: theta length differs from d");
    t.prober.theta = Eigen::Map<const Vector>(theta.data(), d);
    t.prober.bias = j.at("bias").get<double>();
    t.prober.constraint = constraint_from_string(j.at("constraint").get<std::string>());
    t.prober.validate();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.loss_spec.variant = loss_variant_from_string(j.at("loss_variant").get<std::string>());
    t.loss_spec.lambda = j.at("lambda").get<double>();
    if (j.contains("sign_mode")) t.loss_spec.sign_mode = sign_mode_from_string(j.at("sign_mode").get<std::string>());
    t.final_train_loss = j.at("final_loss").get<double>();
    t.config_digest = get_or<std::string>(j, "config_digest", "");
    return t;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed prober JSON: ") + e.what());
  }
}

void save_prober(const TrainedProber& trained, const fs::path& file) { write_json(to_json(trained), file); }

TrainedProber load_prober(const fs::path& file) { return trained_prober_from_json(read_json(file)); }

void save_ensemble(const std::vector<TrainedProber>& probers, const fs::path& file) {
  json arr = json::array();
  for (const auto& p : probers) arr.push_back(to_json(p));
  write_json({{"probers", arr}}, file);
}

std::vector<TrainedProber> load_ensemble(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "ccs_reference.json" : path;
  const json j = read_json(file);
  std::vector<TrainedProber> out;
  try {
    for (const auto& p : j.at("probers")) out.push_back(trained_prober_from_json(p));
  } catch (const json::exception& e) {
    throw ValidationError("malformed ensemble " + file.string() + ": " + e.what());
  }
  if (out.empty()) throw ValidationError("ensemble " + file.string() + " is empty");
  return out;
}

std::vector<TrainedProber> load_probers(const fs::path& path) {
  if (fs::is_directory(path)) return load_ensemble(path);
  const json j = read_json(path);
  if (j.is_object() && j.contains("probers")) return load_ensemble(path);
  return {trained_prober_from_json(j)};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"optimizer", to_string(c.optimizer)}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  c.epochs = get_or(j, "epochs", c.epochs);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.seed = get_or(j, "seed", c.seed);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  c.validate();
  return c;
}

json to_json(const SyntheticConfig& c) {
  return {{"n", c.n},
          {"d", c.d},
          {"signal_scale", c.signal_scale},
          {"nuisance_scale", c.nuisance_scale},
          {"noise_scale", c.noise_scale},
          {"seed", c.seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j, SyntheticConfig c) {
  c.n = get_or(j, "n", c.n);
  c.d = get_or(j, "d", c.d);
  c.signal_scale = get_or(j, "signal_scale", c.signal_scale);
  c.nuisance_scale = get_or(j, "nuisance_scale", c.nuisance_scale);
  c.noise_scale = get_or(j, "noise_scale", c.noise_scale);
  c.seed = get_or(j, "seed", c.seed);
  c.validate();
  return c;
}

PreparedData prepare_data(const ContrastActivationSet& raw, double train_fraction, std::uint64_t split_seed) {
  auto parts = split(raw, train_fraction, split_seed);
  PreparedData out;
  out.split = std::move(parts.spec);
  if (raw.normalized) {
    out.train = std::move(parts.train);
    out.test = std::move(parts.test);
    return out;
  }
  auto [train, stats] = normalize(parts.train);
  out.test = apply_normalization(parts.test, stats);
  out.train = std::move(train);
  out.stats = std::move(stats);
  return out;
}

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ValidationError("experiment lists no datasets");
  std::set<std::string> ids;
  for (const auto& ds : datasets) {
    if (ds.id.empty()) throw ValidationError("dataset id must not be empty");
    if (!ids.insert(ds.id).second) throw ValidationError("duplicate dataset id '" + ds.id + "'");
    if (ds.path.has_value() == ds.synthetic.has_value()) {
      throw ValidationError("dataset '" + ds.id + "' needs exactly one of path / synthetic");
    }
    if (ds.path && !fs::is_directory(*ds.path)) {
      throw ValidationError("dataset '" + ds.id + "': container not found at " + ds.path->string());
    }
    if (ds.synthetic) ds.synthetic->validate();
  }
  if (losses.empty()) throw ValidationError("experiment lists no losses");
  for (const auto& l : losses) {
    if (!is_known_loss_name(l)) throw ValidationError("unknown loss '" + l + "'");
  }
  train.validate();
  if (!(train_fraction > 0 && train_fraction < 1)) throw ValidationError("train_fraction must lie in (0, 1)");
  if (best_of < 1 || ccs_reference_size < 2 || random_probers < 1) {
    throw ValidationError("best_of >= 1, ccs_reference_size >= 2 and random_probers >= 1 are required");
  }
  if (points_per_round < 3 || seeds_per_point < 1 || rounds < 1) throw ValidationError("invalid search sizes");
  if (hist_bins < 2) throw ValidationError("hist_bins must be >= 2");
}

json ExperimentConfig::to_json() const {
  json ds = json::array();
  for (const auto& d : datasets) {
    json e = {{"id", d.id}, {"model", d.model}};
    if (d.path) e["path"] = d.path->string();
    if (d.synthetic) e["synthetic"] = truthprobe::to_json(*d.synthetic);
    ds.push_back(e);
  }
  json train_json = truthprobe::to_json(train);
  train_json.erase("seed");
  return {
      {"seed", seed},
      {"datasets", ds},
      {"losses", losses},
      {"train", train_json},
      {"train_fraction", train_fraction},
      {"best_of", best_of},
      {"ccs_reference_size", ccs_reference_size},
      {"random_probers", random_probers},
      {"search", {{"points_per_round", points_per_round}, {"seeds_per_point", seeds_per_point}, {"rounds", rounds}}},
      {"sign_mode", to_string(sign_mode)},
      {"hist_bins", hist_bins},
      {"compare_paper", compare_paper},
  };
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.seed = get_or(j, "seed", c.seed);
    for (const auto& e : j.at("datasets")) {
      DatasetSource ds;
      ds.id = e.at("id").get<std::string>();
      ds.model = get_or<std::string>(e, "model", ds.model);
      if (e.contains("path")) ds.path = fs::path(e.at("path").get<std::string>());
      if (e.contains("synthetic")) ds.synthetic = synthetic_config_from_json(e.at("synthetic"));
      c.datasets.push_back(std::move(ds));
    }
    if (j.contains("losses")) c.losses = j.at("losses").get<std::vector<std::string>>();
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    c.train_fraction = get_or(j, "train_fraction", c.train_fraction);
    c.best_of = get_or(j, "best_of", c.best_of);
    c.ccs_reference_size = get_or(j, "ccs_reference_size", c.ccs_reference_size);
    c.random_probers = get_or(j, "random_probers", c.random_probers);
    if (j.contains("search")) {
      const auto& s = j.at("search");
      c.points_per_round = get_or(s, "points_per_round", c.points_per_round);
      c.seeds_per_point = get_or(s, "seeds_per_point", c.seeds_per_point);
      c.rounds = get_or(s, "rounds", c.rounds);
    }
    if (j.contains("sign_mode")) c.sign_mode = sign_mode_from_string(j.at("sign_mode").get<std::string>());
    c.hist_bins = get_or(j, "hist_bins", c.hist_bins);
    c.compare_paper = get_or(j, "compare_paper", c.compare_paper);
    if (j.contains("output_root")) c.output_root = fs::path(j.at("output_root").get<std::string>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
  auto c = from_json(read_json(file));
  // Relative container paths are resolved against the config file.
  for (auto& ds : c.datasets) {
    if (ds.path && ds.path->is_relative()) ds.path = file.parent_path() / *ds.path;
  }
  if (c.output_root && c.output_root->is_relative()) c.output_root = file.parent_path() / *c.output_root;
  return c;
}

std::string ExperimentConfig::digest() const { return sha256_hex(to_json().dump()); }

fs::path default_output_root() {
  if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') return fs::path(env);
  return fs::path("runs");
}

namespace {

struct DatasetOutcome {
  std::vector<ReportRow> rows;
  double self_similarity = 0.0;
  bool cache_hit = false;
  json manifest;
};

std::vector<TrainedProber> cached_reference(const ContrastActivationSet& train, const TrainConfig& config, int k,
                                            std::size_t jobs, const fs::path& cache_dir, bool& hit) {
  Sha256 h;
  h.update(std::string_view("ccs-reference/1"));
  h.update(std::string_view(digest(train)));
  h.update(std::string_view(to_json(config).dump()));
  h.update(static_cast<std::uint64_t>(k));
  const std::string key = h.hex();
  const fs::path file = cache_dir / (key + ".json");

  if (fs::exists(file)) {
    const json cached = read_json(file);
    const std::string payload = cached.at("probers").dump();
    if (cached.value("key", "") != key || cached.value("payload_digest", "") != sha256_hex(payload)) {
      throw ValidationError("CCS reference cache " + file.string() + ": digest mismatch");
    }
    std::vector<TrainedProber> out;
    for (const auto& p : cached.at("probers")) out.push_back(trained_prober_from_json(p));
    hit = true;
    return out;
  }
  auto probers = train_ccs_reference(train, config, k, jobs);
  json arr = json::array();
  for (const auto& p : probers) arr.push_back(to_json(p));
  write_json({{"key", key}, {"payload_digest", sha256_hex(arr.dump())}, {"probers", arr}}, file);
  hit = false;
  return probers;
}

DatasetOutcome run_dataset(const ExperimentConfig& config, std::size_t index, const PipelineOptions& options,
                           const fs::path& out_dir, const fs::path& cache_dir) {
  const DatasetSource& source = config.datasets[index];
  const fs::path ds_dir = out_dir / "datasets" / source.id;
  auto log = [&](const std::string& msg) {
    if (options.verbose) std::cerr << "[" << source.id << "] " << msg << '\n';
  };

  ContrastActivationSet raw =
      source.synthetic ? quantize_to_storage(gen_synthetic(*source.synthetic).set) : load(*source.path);
  if (!raw.has_labels()) throw ValidationError("dataset '" + source.id + "' has no labels; evaluation needs them");
  const std::uint64_t base = derive_seed(config.seed, {index});
  PreparedData data = prepare_data(raw, config.train_fraction, derive_seed(base, {kSplitTag}));

  DatasetOutcome outcome;
  TrainConfig ref_config = config.train;
  ref_config.seed = derive_seed(base, {kReferenceTag});
  log("training CCS reference ensemble");
  const auto reference = cached_reference(data.train, ref_config, config.ccs_reference_size, options.jobs, cache_dir,
                                          outcome.cache_hit);
  save_ensemble(reference, ds_dir / "ccs_reference.json");
  std::vector<Prober> ref_probers;
  for (const auto& r : reference) ref_probers.push_back(r.prober);
  const std::vector<Direction> ref_dirs = directions_of(ref_probers);
  outcome.self_similarity = self_similarity(ref_dirs);

  auto make_row = [&](const std::string& loss_name, const Prober& prober) {
    ReportRow row;
    row.dataset_id = source.id;
    row.model_id = source.model;
    row.loss_name = loss_name;
    const auto acc = accuracy(prober, data.test);
    row.test_accuracy = acc.accuracy;
    row.orientation = acc.orientation;
    row.mean_abs_cosine_to_ccs = mean_abs_cosine(direction(prober), ref_dirs);
    return row;
  };

  TrainConfig best_config = config.train;
  best_config.seed = derive_seed(base, {kBestOfTag});
  json loss_manifest = json::object();
  std::optional<Prober> ccs_best;

  for (std::size_t li = 0; li < config.losses.size(); ++li) {
    const std::string& name = config.losses[li];
    log("loss " + name);
    if (name == "pca") {
      const Prober p = fit_pca(data.train);
      outcome.rows.push_back(make_row(name, p));
      write_json({{"d", p.d()},
                  {"theta", std::vector<double>(p.theta.data(), p.theta.data() + p.d())},
                  {"bias", p.bias},
                  {"constraint", to_string(p.constraint)},
                  {"method", "pca"}},
                 ds_dir / "probers" / "pca.json");
      continue;
    }
    if (name == "random") {
      const auto probers = random_baseline(data.train.d(), config.random_probers, derive_seed(base, {kRandomTag}));
      double acc = 0.0;
      double cos = 0.0;
      for (const auto& p : probers) {
        acc += accuracy(p, data.test).accuracy;
        cos += mean_abs_cosine(direction(p), ref_dirs);
      }
      ReportRow row;
      row.dataset_id = source.id;
      row.model_id = source.model;
      row.loss_name = name;
      row.test_accuracy = acc / static_cast<double>(probers.size());
      row.mean_abs_cosine_to_ccs = cos / static_cast<double>(probers.size());
      outcome.rows.push_back(row);
      continue;
    }
    if (name == "supervised") {
      TrainConfig c = config.train;
      c.seed = derive_seed(base, {kSupervisedTag});
      const auto t = fit_supervised(data.train, c);
      save_prober(t, ds_dir / "probers" / "supervised.json");
      outcome.rows.push_back(make_row(name, t.prober));
      continue;
    }

    LossSpec spec = LossSpec::ccs();
    std::optional<SearchResult> search;
    if (name != "ccs") {
      GridSearchConfig gs = GridSearchConfig::defaults_for(name == "md_ccs" ? SearchObjective::cosine_to_ccs
                                                                            : SearchObjective::train_accuracy);
      gs.points_per_round = config.points_per_round;
      gs.seeds_per_point = config.seeds_per_point;
      gs.rounds = config.rounds;
      gs.base_seed = derive_seed(base, {kSearchTag, li});
      if (name == "md_ccs" || name == "md_acc") {
        spec = LossSpec::md(0.0);
      } else if (name == "ma") {
        spec = LossSpec::ma(0.0, config.sign_mode);
      } else {
        spec = LossSpec::smr(0.0, config.sign_mode);
      }
      SearchContext ctx{config.train, ref_dirs, options.jobs};
      search = grid_search(spec, data.train, ctx, gs);
      spec = spec.with_lambda(search->lambda_star);
      write_json(to_json(search->trace), ds_dir / "search" / (name + ".json"));
      write_trace_csv(search->trace, ds_dir / "search" / (name + ".csv"));
    }
    const auto best = train_best_of(spec, data.train, best_config, config.best_of, options.jobs);
    save_prober(best.best, ds_dir / "probers" / (name + ".json"));
    ReportRow row = make_row(name, best.best.prober);
    if (search) row.lambda_star = search->lambda_star;
    if (spec.sign_mode) row.sign_mode = std::string(to_string(*spec.sign_mode));
    outcome.rows.push_back(row);
    if (name == "ccs") ccs_best = best.best.prober;

    json runs = json::array();
    for (const auto& r : best.runs) {
      runs.push_back({{"seed", r.seed},
                      {"final_loss", r.final_train_loss ? json(*r.final_train_loss) : json(nullptr)},
                      {"error", r.error}});
    }
    loss_manifest[name] = {{"loss_spec", spec.describe()}, {"selected_seed", best.best.seed}, {"runs", runs}};
  }

  // Plot data for the CCS prober (or the first reference member when CCS is not in the loss list).
  const Prober& plotted = ccs_best ? *ccs_best : reference.front().prober;
  write_projection_csv(projection_table(data.test, plotted), ds_dir / "projection.csv");
  write_histogram_csv(output_histogram(plotted, data.test, config.hist_bins), ds_dir / "histogram.csv");

  outcome.manifest = {
      {"id", source.id},
      {"model", source.model},
      {"dataset_digest", digest(raw)},
      {"train_digest", digest(data.train)},
      {"n_train", data.train.n()},
      {"n_test", data.test.n()},
      {"ccs_reference_cache_hit", outcome.cache_hit},
      {"plot_population", "test split, normalized with train statistics, both pair members"},
      {"losses", loss_manifest},
  };
  return outcome;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const fs::path root = options.output_root ? *options.output_root
                        : config.output_root ? *config.output_root
                                             : default_output_root();
  const std::string cfg_digest = config.digest();
  const fs::path out_dir = root / cfg_digest.substr(0, 16);
  const fs::path cache_dir = root / "cache" / "ccs_reference";
  fs::create_directories(out_dir);
  write_json(config.to_json(), out_dir / "config.json");

  std::vector<ReportRow> rows;
  std::map<std::pair<std::string, std::string>, double> self_sim;
  PipelineResult result;
  result.output_dir = out_dir;
  json datasets = json::array();
  for (std::size_t i = 0; i < config.datasets.size(); ++i) {
    auto outcome = run_dataset(config, i, options, out_dir, cache_dir);
    rows.insert(rows.end(), outcome.rows.begin(), outcome.rows.end());
    self_sim[{config.datasets[i].id, config.datasets[i].model}] = outcome.self_similarity;
    result.cache_hits.push_back(outcome.cache_hit);
    datasets.push_back(std::move(outcome.manifest));
  }
  result.report = build_report(std::move(rows), std::move(self_sim));
  write_json(to_json(result.report, config.compare_paper), out_dir / "report.json");
  write_rows_csv(result.report, out_dir / "report_rows.csv");
  write_table_csv(result.report, false, config.compare_paper, out_dir / "accuracy_table.csv");
  write_table_csv(result.report, true, config.compare_paper, out_dir / "cosine_table.csv");

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json({{"config_digest", cfg_digest},
              {"jobs", options.jobs},
              {"wall_time_seconds", wall},
              {"datasets", datasets}},
             out_dir / "manifest.json");
  return result;
}

}  // namespace truthprobe
