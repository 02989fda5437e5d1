#include "truthprobe/cli.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "truthprobe/digest.hpp"
#include "truthprobe/error.hpp"
#include "truthprobe/eval.hpp"
#include "truthprobe/experiment.hpp"
#include "truthprobe/report.hpp"
#include "truthprobe/search.hpp"

namespace truthprobe {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void write_json_file(const json& j, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + file.string());
}

// Options shared by every command that trains or evaluates on a container.
struct DataOptions {
  std::string data;
  double train_fraction = 0.6;
  std::uint64_t split_seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--data", data, "activation container directory")->required();
    app->add_option("--train-fraction", train_fraction, "fraction of pairs used for training")
        ->capture_default_str();
    app->add_option("--split-seed", split_seed, "seed of the train/test permutation")->capture_default_str();
  }
  PreparedData prepare() const { return prepare_data(load(data), train_fraction, split_seed); }
};

struct TrainOptions {
  int epochs = 1000;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  std::string optimizer = "gd";

  void add_to(CLI::App* app) {
    app->add_option("--epochs", epochs)->capture_default_str();
    app->add_option("--lr", learning_rate, "learning rate")->capture_default_str();
    app->add_option("--seed", seed, "base seed")->capture_default_str();
    app->add_option("--optimizer", optimizer)->check(CLI::IsMember({"gd", "adam"}))->capture_default_str();
  }
  TrainConfig config() const {
    TrainConfig c{epochs, learning_rate, seed, optimizer_from_string(optimizer)};
    c.validate();
    return c;
  }
};

// --out, or a digest-named directory under the default output root.
fs::path output_dir(const std::string& flag, const std::string& command, const std::vector<std::string>& args) {
  if (!flag.empty()) return flag;
  std::string joined;
  for (const auto& a : args) joined += a + '\x1f';
  return default_output_root() / (command + "-" + sha256_hex(joined).substr(0, 12));
}

LossSpec parse_loss(const std::string& name, double lambda, const std::string& sign_mode) {
  LossSpec spec;
  spec.variant = loss_variant_from_string(name);
  spec.lambda = spec.uses_lambda() ? lambda : 0.0;
  if (spec.variant == LossVariant::ma || spec.variant == LossVariant::smr) spec.sign_mode = sign_mode_from_string(sign_mode);
  spec.validate();
  return spec;
}

std::vector<Direction> reference_directions(const std::string& path) {
  std::vector<Prober> probers;
  for (const auto& t : load_ensemble(path)) probers.push_back(t.prober);
  return directions_of(probers);
}

json runs_json(const std::vector<RunRecord>& runs) {
  json arr = json::array();
  for (const auto& r : runs) {
    arr.push_back({{"seed", r.seed},
                   {"final_loss", r.final_train_loss ? json(*r.final_train_loss) : json(nullptr)},
                   {"error", r.error}});
  }
  return arr;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train and evaluate linear truth probers on contrast-pair activations"};
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t jobs = 1;
  app.add_option("--jobs", jobs, "worker threads")->capture_default_str();

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic contrast-pair container");
  SyntheticConfig synth;
  std::string gen_config, gen_out;
  bool emit_directions = false;
  gen->add_option("--config", gen_config, "JSON file with synthetic settings (flags win)");
  gen->add_option("--n", synth.n)->capture_default_str();
  gen->add_option("--d", synth.d)->capture_default_str();
  gen->add_option("--signal", synth.signal_scale)->capture_default_str();
  gen->add_option("--nuisance", synth.nuisance_scale)->capture_default_str();
  gen->add_option("--noise", synth.noise_scale)->capture_default_str();
  gen->add_option("--seed", synth.seed)->capture_default_str();
  gen->add_option("--out", gen_out);
  gen->add_flag("--emit-directions", emit_directions, "also write truth_direction.bin / nuisance_direction.bin");

  // train
  auto* train = app.add_subcommand("train", "train probers on the train split");
  DataOptions train_data;
  TrainOptions train_opts;
  std::string loss_name, sign_mode = "md_consistent", train_out;
  double lambda = 0.0;
  int best_of = 1;
  int ensemble = 0;
  train_data.add_to(train);
  train_opts.add_to(train);
  train->add_option("--loss", loss_name)->required()->check(CLI::IsMember({"ccs", "md", "ma", "smr", "supervised"}));
  train->add_option("--lambda", lambda)->capture_default_str();
  train->add_option("--sign-mode", sign_mode)->check(CLI::IsMember({"literal", "md_consistent"}))->capture_default_str();
  auto* best_opt = train->add_option("--best-of", best_of, "keep the lowest-loss of k seeds")->capture_default_str();
  train->add_option("--ensemble", ensemble, "train and keep k CCS probers (reference ensemble)")->excludes(best_opt);
  train->add_option("--out", train_out);

  // search
  auto* search = app.add_subcommand("search", "grid search lambda for md/ma/smr");
  DataOptions search_data;
  TrainOptions search_opts;
  std::string search_loss, objective = "accuracy", ccs_ref, search_out, search_sign = "md_consistent";
  std::optional<double> lo, hi;
  int points = 11, seeds = 3, rounds = 2;
  search_data.add_to(search);
  search_opts.add_to(search);
  search->add_option("--loss", search_loss)->required()->check(CLI::IsMember({"md", "ma", "smr"}));
  search->add_option("--objective", objective)->check(CLI::IsMember({"accuracy", "cosine"}))->capture_default_str();
  search->add_option("--ccs-ref", ccs_ref, "CCS reference ensemble (file or directory)");
  search->add_option("--sign-mode", search_sign)->check(CLI::IsMember({"literal", "md_consistent"}));
  search->add_option("--lo", lo);
  search->add_option("--hi", hi);
  search->add_option("--points", points)->capture_default_str();
  search->add_option("--seeds", seeds)->capture_default_str();
  search->add_option("--rounds", rounds)->capture_default_str();
  search->add_option("--out", search_out);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate probers and emit report and plot data");
  DataOptions eval_data;
  std::vector<std::string> prober_args;
  std::string eval_ref, eval_out, dataset_id = "dataset", model_id = "model", eval_split = "test";
  int hist_bins = 40;
  bool compare_paper = false;
  eval_data.add_to(eval);
  eval->add_option("--prober", prober_args, "[name=]prober.json; name is a report loss name")->required();
  eval->add_option("--ccs-ref", eval_ref);
  eval->add_option("--split", eval_split)->check(CLI::IsMember({"test", "train"}))->capture_default_str();
  eval->add_option("--dataset-id", dataset_id)->capture_default_str();
  eval->add_option("--model-id", model_id)->capture_default_str();
  eval->add_option("--hist-bins", hist_bins)->capture_default_str();
  eval->add_flag("--compare-paper", compare_paper, "append the published reference tables");
  eval->add_option("--out", eval_out);

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "run a full experiment from a JSON config");
  std::string pipeline_config, pipeline_out;
  bool verbose = false;
  pipeline->add_option("--config", pipeline_config)->required()->check(CLI::ExistingFile);
  pipeline->add_option("--out", pipeline_out, "output root (overrides config and environment)");
  pipeline->add_flag("--verbose", verbose);

  // save-prober / load-prober
  auto* save_cmd = app.add_subcommand("save-prober", "write a prober JSON from a raw direction or weights");
  std::string save_blob, save_out, save_constraint = "unit_norm";
  std::vector<double> save_theta;
  double save_bias = 0.0;
  save_cmd->add_option("--direction-bin", save_blob, "d little-endian float32 values");
  save_cmd->add_option("--theta", save_theta, "weights")->delimiter(',');
  save_cmd->add_option("--bias", save_bias);
  save_cmd->add_option("--constraint", save_constraint)->check(CLI::IsMember({"unit_norm", "unconstrained"}));
  save_cmd->add_option("--out", save_out)->required();

  auto* load_cmd = app.add_subcommand("load-prober", "validate a prober JSON and print a summary");
  std::string load_in;
  DataOptions load_data;
  load_cmd->add_option("--in", load_in)->required();
  load_cmd->add_option("--data", load_data.data, "optionally report accuracy on this container's test split");
  load_cmd->add_option("--train-fraction", load_data.train_fraction);
  load_cmd->add_option("--split-seed", load_data.split_seed);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageExitCode;
  }

  const std::vector<std::string> rest(args.begin() + 1, args.end());
  try {
    if (gen->parsed()) {
      SyntheticConfig c = synth;
      if (!gen_config.empty()) {
        std::ifstream in(gen_config);
        if (!in) throw IoError("cannot open " + gen_config);
        json j;
        try {
          j = json::parse(in);
        } catch (const json::exception& e) {
          throw ValidationError(std::string("malformed synthetic config: ") + e.what());
        }
        c = synthetic_config_from_json(j);
        // Flags given explicitly override the file.
        if (gen->count("--n")) c.n = synth.n;
        if (gen->count("--d")) c.d = synth.d;
        if (gen->count("--signal")) c.signal_scale = synth.signal_scale;
        if (gen->count("--nuisance")) c.nuisance_scale = synth.nuisance_scale;
        if (gen->count("--noise")) c.noise_scale = synth.noise_scale;
        if (gen->count("--seed")) c.seed = synth.seed;
      }
      const auto data = gen_synthetic(c);
      const auto stored = quantize_to_storage(data.set);
      const fs::path dir = output_dir(gen_out, "gen", rest);
      save(stored, dir);
      if (emit_directions) {
        save_direction(data.truth_direction, dir / "truth_direction.bin");
        save_direction(data.nuisance_direction, dir / "nuisance_direction.bin");
      }
      out << "container " << dir.string() << "\n";
      out << "n " << stored.n() << " d " << stored.d() << "\n";
      out << "digest " << digest(stored) << "\n";
      return 0;
    }

    if (train->parsed()) {
      const auto start = std::chrono::steady_clock::now();
      const LossSpec spec = parse_loss(loss_name, lambda, sign_mode);
      const TrainConfig config = train_opts.config();
      const auto data = train_data.prepare();
      if (spec.variant == LossVariant::supervised && !data.train.has_labels()) {
        throw ValidationError("--loss supervised needs a labelled container");
      }
      const fs::path dir = output_dir(train_out, "train", rest);
      json manifest = {{"command", "train"},
                       {"config", to_json(config)},
                       {"loss_spec", spec.describe()},
                       {"dataset", train_data.data},
                       {"dataset_digest", digest(data.train)},
                       {"train_fraction", train_data.train_fraction},
                       {"split_seed", train_data.split_seed}};
      if (ensemble > 0) {
        if (spec.variant != LossVariant::ccs) throw ValidationError("--ensemble is only defined for --loss ccs");
        const auto probers = train_ccs_reference(data.train, config, ensemble, jobs);
        save_ensemble(probers, dir / "ccs_reference.json");
        json losses = json::array();
        for (const auto& p : probers) losses.push_back({{"seed", p.seed}, {"final_loss", p.final_train_loss}});
        manifest["runs"] = losses;
        out << "ensemble " << (dir / "ccs_reference.json").string() << " (" << probers.size() << " probers)\n";
      } else {
        const auto result = train_best_of(spec, data.train, config, best_of, jobs);
        save_prober(result.best, dir / "prober.json");
        manifest["runs"] = runs_json(result.runs);
        manifest["selected_seed"] = result.best.seed;
        out << "prober " << (dir / "prober.json").string() << " seed " << result.best.seed << " final_loss "
            << result.best.final_train_loss << "\n";
      }
      manifest["wall_time_seconds"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_json_file(manifest, dir / "run_manifest.json");
      return 0;
    }

    if (search->parsed()) {
      const auto obj = search_objective_from_string(objective);
      GridSearchConfig gs = GridSearchConfig::defaults_for(obj);
      if (lo) gs.initial_interval.lo = *lo;
      if (hi) gs.initial_interval.hi = *hi;
      gs.points_per_round = points;
      gs.seeds_per_point = seeds;
      gs.rounds = rounds;
      gs.base_seed = search_opts.seed;
      SearchContext ctx;
      ctx.train_config = search_opts.config();
      ctx.jobs = jobs;
      if (obj == SearchObjective::cosine_to_ccs) {
        if (ccs_ref.empty()) throw ValidationError("--objective cosine needs --ccs-ref");
        ctx.ccs_reference = reference_directions(ccs_ref);
      }
      const LossSpec spec = parse_loss(search_loss, 0.0, search_sign);
      const auto data = search_data.prepare();
      const auto result = grid_search(spec, data.train, ctx, gs);
      const fs::path dir = output_dir(search_out, "search", rest);
      write_json_file(to_json(result.trace), dir / "search_trace.json");
      write_trace_csv(result.trace, dir / "search_trace.csv");
      out << "lambda_star " << result.lambda_star << "\n";
      out << "interval " << gs.initial_interval.lo << " " << gs.initial_interval.hi << "\n";
      out << "trace " << (dir / "search_trace.csv").string() << "\n";
      return 0;
    }

    if (eval->parsed()) {
      const auto data = eval_data.prepare();
      const ContrastActivationSet& target = eval_split == "train" ? data.train : data.test;
      std::optional<std::vector<Direction>> ref;
      if (!eval_ref.empty()) ref = reference_directions(eval_ref);
      std::vector<ReportRow> rows;
      std::optional<Prober> plotted;
      for (const auto& arg : prober_args) {
        std::string name;
        std::string path = arg;
        if (auto eq = arg.find('='); eq != std::string::npos) {
          name = arg.substr(0, eq);
          path = arg.substr(eq + 1);
        }
        const auto loaded = load_probers(path);
        const auto& t = loaded.front();
        if (name.empty()) {
          static const std::map<LossVariant, std::string> kDefaultName = {
              {LossVariant::ccs, "ccs"}, {LossVariant::md, "md_acc"}, {LossVariant::ma, "ma"},
              {LossVariant::smr, "smr"}, {LossVariant::supervised, "supervised"}};
          name = kDefaultName.at(t.loss_spec.variant);
        }
        ReportRow row;
        row.dataset_id = dataset_id;
        row.model_id = model_id;
        row.loss_name = name;
        // An ensemble is scored by its average, like the random baseline.
        double acc_sum = 0.0;
        double cos_sum = 0.0;
        for (const auto& member : loaded) {
          const auto acc = accuracy(member.prober, target);
          acc_sum += acc.accuracy;
          if (loaded.size() == 1) row.orientation = acc.orientation;
          if (ref) cos_sum += mean_abs_cosine(direction(member.prober), *ref);
        }
        const double k = static_cast<double>(loaded.size());
        row.test_accuracy = acc_sum / k;
        if (ref) row.mean_abs_cosine_to_ccs = cos_sum / k;
        if (t.loss_spec.uses_lambda()) row.lambda_star = t.loss_spec.lambda;
        if (t.loss_spec.sign_mode) row.sign_mode = std::string(to_string(*t.loss_spec.sign_mode));
        rows.push_back(row);
        if (!plotted || name == "ccs") plotted = t.prober;
      }
      std::map<std::pair<std::string, std::string>, double> self_sim;
      if (ref && ref->size() >= 2) self_sim[{dataset_id, model_id}] = self_similarity(*ref);
      const auto report = build_report(std::move(rows), std::move(self_sim));
      const fs::path dir = output_dir(eval_out, "eval", rest);
      write_json_file(to_json(report, compare_paper), dir / "report.json");
      write_rows_csv(report, dir / "report_rows.csv");
      write_table_csv(report, false, compare_paper, dir / "accuracy_table.csv");
      write_table_csv(report, true, compare_paper, dir / "cosine_table.csv");
      write_projection_csv(projection_table(target, *plotted), dir / "projection.csv");
      write_histogram_csv(output_histogram(*plotted, target, hist_bins), dir / "histogram.csv");
      for (const auto& r : report.rows) {
        out << r.loss_name << " accuracy " << r.test_accuracy;
        if (r.mean_abs_cosine_to_ccs) out << " mean_abs_cos " << *r.mean_abs_cosine_to_ccs;
        out << "\n";
      }
      out << "report " << (dir / "report.json").string() << "\n";
      return 0;
    }

    if (pipeline->parsed()) {
      const auto config = ExperimentConfig::load(pipeline_config);
      PipelineOptions opts;
      opts.jobs = jobs;
      opts.verbose = verbose;
      if (!pipeline_out.empty()) opts.output_root = fs::path(pipeline_out);
      const auto result = run_pipeline(config, opts);
      for (const auto& [loss, cell] : result.report.overall_average) {
        out << loss << " accuracy " << cell.accuracy;
        if (cell.cosine) out << " mean_abs_cos " << *cell.cosine;
        out << "\n";
      }
      out << "output " << result.output_dir.string() << "\n";
      return 0;
    }

    if (save_cmd->parsed()) {
      if (save_blob.empty() == save_theta.empty()) {
        throw ValidationError("save-prober needs exactly one of --direction-bin / --theta");
      }
      TrainedProber t;
      t.prober.theta = save_blob.empty() ? Vector(Eigen::Map<const Vector>(save_theta.data(),
                                                                           static_cast<Index>(save_theta.size())))
                                         : load_direction(save_blob);
      t.prober.bias = save_bias;
      t.prober.constraint = constraint_from_string(save_constraint);
      if (t.prober.constraint == Constraint::unit_norm) t.prober = project_unit(t.prober);
      t.loss_spec = t.prober.constraint == Constraint::unit_norm ? LossSpec::md(0.0) : LossSpec::ccs();
      t.prober.validate();
      save_prober(t, save_out);
      out << "prober " << save_out << " d " << t.prober.d() << "\n";
      return 0;
    }

    if (load_cmd->parsed()) {
      const auto t = load_prober(load_in);
      out << "d " << t.prober.d() << "\n";
      out << "norm " << t.prober.theta.norm() << "\n";
      out << "bias " << t.prober.bias << "\n";
      out << "constraint " << to_string(t.prober.constraint) << "\n";
      out << "loss " << t.loss_spec.describe() << "\n";
      out << "seed " << t.seed << "\n";
      out << "final_loss " << t.final_train_loss << "\n";
      if (!load_data.data.empty()) {
        const auto data = load_data.prepare();
        const auto acc = accuracy(t.prober, data.test);
        out << "test_accuracy " << acc.accuracy << " (" << to_string(acc.orientation) << ")\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::io);
  }
  return kUsageExitCode;
}

}  // namespace truthprobe
