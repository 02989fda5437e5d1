#include "truthprobe/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "truthprobe/error.hpp"

namespace truthprobe {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, 8> kDisplayNames = {"CCS", "MD-CCS", "MD-Acc", "MA",
                                                           "SMR", "PCA",    "Rand.",  "Superv."};

std::size_t loss_index(std::string_view name) {
  auto it = std::find(kLossNames.begin(), kLossNames.end(), name);
  if (it == kLossNames.end()) throw ValidationError("unknown report loss name '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - kLossNames.begin());
}

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  out.precision(10);
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string_view loss_display_name(std::string_view loss_name) { return kDisplayNames[loss_index(loss_name)]; }

bool is_known_loss_name(std::string_view loss_name) {
  return std::find(kLossNames.begin(), kLossNames.end(), loss_name) != kLossNames.end();
}

EvalReport build_report(std::vector<ReportRow> rows, std::map<std::pair<std::string, std::string>, double> self_similarity) {
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& r : rows) {
    loss_index(r.loss_name);
    if (!seen.emplace(r.dataset_id, r.model_id, r.loss_name).second) {
      throw ValidationError("duplicate report key (" + r.dataset_id + ", " + r.model_id + ", " + r.loss_name + ")");
    }
    if (!in_unit_interval(r.test_accuracy)) throw ValidationError("accuracy outside [0, 1] in report row");
    if (r.mean_abs_cosine_to_ccs && !in_unit_interval(*r.mean_abs_cosine_to_ccs)) {
      throw ValidationError("cosine outside [0, 1] in report row");
    }
  }

  EvalReport report;
  report.self_similarity = std::move(self_similarity);

  // Per (model, loss): mean over datasets.
  struct Acc {
    double acc = 0.0;
    double cos = 0.0;
    int n = 0;
    int n_cos = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> per_model;
  for (const auto& r : rows) {
    auto& a = per_model[{r.model_id, r.loss_name}];
    a.acc += r.test_accuracy;
    ++a.n;
    if (r.mean_abs_cosine_to_ccs) {
      a.cos += *r.mean_abs_cosine_to_ccs;
      ++a.n_cos;
    }
  }
  std::map<std::string, Acc> overall;
  for (const auto& [key, a] : per_model) {
    TableCell cell{a.acc / a.n, a.n_cos > 0 ? std::optional<double>(a.cos / a.n_cos) : std::nullopt, a.n};
    report.model_averages[key] = cell;
    auto& o = overall[key.second];
    o.acc += cell.accuracy;
    ++o.n;
    if (cell.cosine) {
      o.cos += *cell.cosine;
      ++o.n_cos;
    }
  }
  for (const auto& [loss, o] : overall) {
    report.overall_average[loss] =
        TableCell{o.acc / o.n, o.n_cos > 0 ? std::optional<double>(o.cos / o.n_cos) : std::nullopt, o.n};
  }
  report.rows = std::move(rows);
  return report;
}

const std::vector<PaperReferenceRow>& paper_reference_accuracy() {
  static const std::vector<PaperReferenceRow> rows = {
      {"UQA (E)", {0.6863, 0.6902, 0.7414, 0.7399, 0.7419, 0.7383, 0.6363, 0.8839}},
      {"UQA (D)", {0.8305, 0.8200, 0.8180, 0.7550, 0.7460, 0.7525, 0.6286, 0.9140}},
      {"DeBERTa", {0.7740, 0.7855, 0.8735, 0.8650, 0.8585, 0.8605, 0.7288, 0.9135}},
      {"GPT-Neo", {0.5510, 0.5755, 0.5898, 0.5820, 0.5555, 0.5737, 0.5603, 0.7580}},
      {"Average", {0.7105, 0.7178, 0.7557, 0.7355, 0.7255, 0.7313, 0.6385, 0.8674}},
  };
  return rows;
}

const std::vector<PaperReferenceRow>& paper_reference_cosine() {
  static const std::vector<PaperReferenceRow> rows = {
      {"UQA (E)", {0.8359, 0.7034, 0.2995, 0.1448, 0.1991, 0.2406, 0.0222, 0.2583}},
      {"UQA (D)", {0.8787, 0.7269, 0.5303, 0.1687, 0.2432, 0.1792, 0.0228, 0.6014}},
      {"DeBERTa", {0.8643, 0.6209, 0.2786, 0.2309, 0.2024, 0.0741, 0.0202, 0.4617}},
      {"GPT-Neo", {0.5277, 0.4830, 0.4164, 0.0226, 0.0485, 0.1901, 0.0245, 0.1347}},
      {"Average", {0.7767, 0.6336, 0.3812, 0.1418, 0.1733, 0.1710, 0.0224, 0.3640}},
  };
  return rows;
}

const std::vector<PaperDatasetRow>& paper_dataset_accuracy() {
  static const std::vector<PaperDatasetRow> rows = {
      {"UQA (E)", "IMDB", {0.9200, 0.9225, 0.9200, 0.9225, 0.9200, 0.9220, 0.7908, 0.9300}},
      {"UQA (E)", "Amazon", {0.9438, 0.9469, 0.9469, 0.9469, 0.9469, 0.9469, 0.7344, 0.9469}},
      {"UQA (E)", "BoolQ", {0.5225, 0.5167, 0.7825, 0.7900, 0.7925, 0.7800, 0.6047, 0.8875}},
      {"UQA (E)", "AG News", {0.5275, 0.5375, 0.5300, 0.5275, 0.5275, 0.5150, 0.5152, 0.9500}},
      {"UQA (E)", "RTE", {0.5175, 0.5275, 0.5275, 0.5125, 0.5225, 0.5275, 0.5365, 0.7050}},
      {"UQA (D)", "IMDB", {0.9275, 0.9250, 0.9200, 0.9325, 0.9325, 0.9150, 0.7190, 0.9200}},
      {"UQA (D)", "Amazon", {0.9400, 0.9425, 0.9450, 0.6050, 0.5900, 0.7675, 0.6355, 0.9425}},
      {"UQA (D)", "BoolQ", {0.9775, 0.9625, 0.9625, 0.9800, 0.9875, 0.8725, 0.6303, 0.9850}},
      {"UQA (D)", "AG News", {0.5924, 0.5300, 0.5300, 0.5675, 0.5325, 0.5175, 0.5750, 0.9550}},
      {"UQA (D)", "RTE", {0.7150, 0.7400, 0.7325, 0.6900, 0.6875, 0.6900, 0.5833, 0.7675}},
      {"GPT-Neo", "IMDB", {0.6225, 0.7050, 0.7650, 0.7400, 0.5225, 0.7435, 0.5525, 0.8225}},
      {"GPT-Neo", "Amazon", {0.5950, 0.6200, 0.6200, 0.6175, 0.7100, 0.5725, 0.6422, 0.8800}},
      {"GPT-Neo", "BoolQ", {0.5075, 0.5350, 0.53375, 0.5075, 0.5075, 0.5225, 0.5360, 0.5800}},
      {"GPT-Neo", "AG News", {0.5250, 0.5075, 0.5150, 0.5375, 0.5325, 0.5175, 0.5478, 0.9500}},
      {"GPT-Neo", "RTE", {0.5050, 0.5100, 0.5150, 0.5075, 0.5050, 0.5125, 0.5232, 0.5575}},
      {"DeBERTa", "IMDB", {0.9550, 0.9500, 0.9475, 0.9550, 0.9475, 0.9500, 0.8067, 0.9550}},
      {"DeBERTa", "Amazon", {0.9475, 0.9425, 0.9475, 0.9400, 0.9500, 0.9425, 0.8145, 0.9500}},
      {"DeBERTa", "BoolQ", {0.6600, 0.7475, 0.8100, 0.8125, 0.8125, 0.8100, 0.7100, 0.8275}},
      {"DeBERTa", "AG News", {0.5000, 0.5000, 0.8250, 0.7700, 0.7300, 0.8250, 0.6545, 0.9425}},
      {"DeBERTa", "RTE", {0.8075, 0.7875, 0.8375, 0.8475, 0.8525, 0.775, 0.6585, 0.8925}},
  };
  return rows;
}

const std::vector<PaperDatasetRow>& paper_dataset_cosine() {
  static const std::vector<PaperDatasetRow> rows = {
      {"UQA (E)", "IMDB", {0.9305, 0.7065, 0.2929, 0.2064, 0.3167, 0.2930, 0.0214, 0.3862}},
      {"UQA (E)", "Amazon", {0.9635, 0.8177, 0.3149, 0.2777, 0.3867, 0.3150, 0.0231, 0.7639}},
      {"UQA (E)", "BoolQ", {0.8082, 0.8000, 0.0187, 0.0332, 0.0442, 0.0194, 0.0181, 0.0860}},
      {"UQA (E)", "AG News", {0.5081, 0.4817, 0.4758, 0.1997, 0.2009, 0.1835, 0.0267, 0.0328}},
      {"UQA (E)", "RTE", {0.9691, 0.7111, 0.3954, 0.0069, 0.0468, 0.3919, 0.0215, 0.0224}},
      {"UQA (D)", "IMDB", {0.9905, 0.7111, 0.4048, 0.3867, 0.3815, 0.2378, 0.0212, 0.6790}},
      {"UQA (D)", "Amazon", {0.8357, 0.6021, 0.3969, 0.0387, 0.0076, 0.0760, 0.0165, 0.7499}},
      {"UQA (D)", "BoolQ", {0.9850, 0.8694, 0.5393, 0.2768, 0.2808, 0.1158, 0.0194, 0.8640}},
      {"UQA (D)", "AG News", {0.5924, 0.5348, 0.4547, 0.0109, 0.4274, 0.3548, 0.0254, 0.0219}},
      {"UQA (D)", "RTE", {0.9899, 0.9169, 0.8558, 0.1303, 0.1187, 0.1115, 0.0314, 0.6924}},
      {"GPT-Neo", "IMDB", {0.6296, 0.2483, 0.0785, 0.0549, 0.0367, 0.0624, 0.0212, 0.3465}},
      {"GPT-Neo", "Amazon", {0.3005, 0.3059, 0.3066, 0.0092, 0.0359, 0.1351, 0.0266, 0.2310}},
      {"GPT-Neo", "BoolQ", {0.6478, 0.6683, 0.6628, 0.0175, 0.0175, 0.3581, 0.0213, 0.0136}},
      {"GPT-Neo", "AG News", {0.3644, 0.4627, 0.3123, 0.0133, 0.0123, 0.1781, 0.0298, 0.0531}},
      {"GPT-Neo", "RTE", {0.6964, 0.7296, 0.7218, 0.0183, 0.1400, 0.2166, 0.0237, 0.0295}},
      {"DeBERTa", "IMDB", {0.9376, 0.5504, 0.5466, 0.2599, 0.1685, 0.0554, 0.0143, 0.6811}},
      {"DeBERTa", "Amazon", {0.9538, 0.2760, 0.2406, 0.1657, 0.2401, 0.0648, 0.0178, 0.8104}},
      {"DeBERTa", "BoolQ", {0.7823, 0.7377, 0.0357, 0.0448, 0.0543, 0.0358, 0.0175, 0.2912}},
      {"DeBERTa", "AG News", {0.7003, 0.6401, 0.0145, 0.1750, 0.0140, 0.0146, 0.0222, 0.0435}},
      {"DeBERTa", "RTE", {0.9476, 0.9002, 0.5557, 0.5093, 0.5349, 0.1998, 0.0294, 0.4823}},
  };
  return rows;
}

json to_json(const EvalReport& report, bool compare_paper) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({
        {"dataset", r.dataset_id},
        {"model", r.model_id},
        {"loss", r.loss_name},
        {"test_accuracy", r.test_accuracy},
        {"mean_abs_cosine_to_ccs", optional_json(r.mean_abs_cosine_to_ccs)},
        {"lambda_star", optional_json(r.lambda_star)},
        {"orientation", r.orientation ? json(to_string(*r.orientation)) : json(nullptr)},
        {"sign_mode", r.sign_mode ? json(*r.sign_mode) : json(nullptr)},
    });
  }
  json self = json::array();
  for (const auto& [key, value] : report.self_similarity) {
    self.push_back({{"dataset", key.first}, {"model", key.second}, {"self_similarity", value}});
  }
  json models = json::array();
  for (const auto& [key, cell] : report.model_averages) {
    models.push_back({{"model", key.first},
                      {"loss", key.second},
                      {"test_accuracy", cell.accuracy},
                      {"mean_abs_cosine_to_ccs", optional_json(cell.cosine)},
                      {"datasets", cell.count}});
  }
  json overall = json::object();
  for (const auto& [loss, cell] : report.overall_average) {
    overall[loss] = {{"test_accuracy", cell.accuracy}, {"mean_abs_cosine_to_ccs", optional_json(cell.cosine)}};
  }
  json out = {
      {"schema", "truthprobe.report/1"},
      {"cosine", "absolute"},
      {"rows", rows},
      {"self_similarity", self},
      {"model_averages", models},
      {"average", overall},
  };
  if (compare_paper) {
    auto table = [](const std::vector<PaperReferenceRow>& src) {
      json t = json::array();
      for (const auto& row : src) {
        json values = json::object();
        for (std::size_t i = 0; i < kLossNames.size(); ++i) values[std::string(kLossNames[i])] = row.values[i];
        t.push_back({{"model", row.model}, {"values", values}});
      }
      return t;
    };
    auto per_dataset = [](const std::vector<PaperDatasetRow>& src) {
      json t = json::array();
      for (const auto& row : src) {
        json values = json::object();
        for (std::size_t i = 0; i < kLossNames.size(); ++i) values[std::string(kLossNames[i])] = row.values[i];
        t.push_back({{"model", row.model}, {"dataset", row.dataset}, {"values", values}});
      }
      return t;
    };
    out["paper_reference"] = {
        {"note", "published values for full-size model activations; static comparison only"},
        {"test_accuracy", table(paper_reference_accuracy())},
        {"mean_abs_cosine_to_ccs", table(paper_reference_cosine())},
        {"per_dataset",
         {{"test_accuracy", per_dataset(paper_dataset_accuracy())},
          {"mean_abs_cosine_to_ccs", per_dataset(paper_dataset_cosine())}}},
    };
  }
  return out;
}

void write_table_csv(const EvalReport& report, bool cosine, bool compare_paper, const fs::path& file) {
  auto out = open_out(file);
  out << "model";
  for (auto name : kDisplayNames) out << ',' << name;
  out << '\n';

  std::vector<std::string> models;
  for (const auto& [key, cell] : report.model_averages) {
    if (std::find(models.begin(), models.end(), key.first) == models.end()) models.push_back(key.first);
  }
  auto emit = [&](const TableCell* cell) {
    out << ',';
    if (cell == nullptr) return;
    if (cosine) {
      if (cell->cosine) out << *cell->cosine;
    } else {
      out << cell->accuracy;
    }
  };
  for (const auto& model : models) {
    out << model;
    for (auto name : kLossNames) {
      auto it = report.model_averages.find({model, std::string(name)});
      emit(it == report.model_averages.end() ? nullptr : &it->second);
    }
    out << '\n';
  }
  out << "Average";
  for (auto name : kLossNames) {
    auto it = report.overall_average.find(std::string(name));
    emit(it == report.overall_average.end() ? nullptr : &it->second);
  }
  out << '\n';
  if (compare_paper) {
    for (const auto& row : cosine ? paper_reference_cosine() : paper_reference_accuracy()) {
      out << "paper: " << row.model;
      for (double v : row.values) out << ',' << v;
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + file.string());
}

void write_rows_csv(const EvalReport& report, const fs::path& file) {
  auto out = open_out(file);
  out << "dataset,model,loss,test_accuracy,mean_abs_cosine_to_ccs,lambda_star,orientation,sign_mode\n";
  for (const auto& r : report.rows) {
    out << r.dataset_id << ',' << r.model_id << ',' << r.loss_name << ',' << r.test_accuracy << ',';
    if (r.mean_abs_cosine_to_ccs) out << *r.mean_abs_cosine_to_ccs;
    out << ',';
    if (r.lambda_star) out << *r.lambda_star;
    out << ',';
    if (r.orientation) out << to_string(*r.orientation);
    out << ',';
    if (r.sign_mode) out << *r.sign_mode;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

}  // namespace truthprobe
