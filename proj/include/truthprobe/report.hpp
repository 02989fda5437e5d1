#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "truthprobe/eval.hpp"

namespace truthprobe {

/// Column order of the accuracy and cosine tables.
inline constexpr std::array<std::string_view, 8> kLossNames = {"ccs", "md_ccs", "md_acc", "ma",
                                                               "smr", "pca",    "random", "supervised"};

/// Column headings used in the tables ("CCS", "MD-CCS", ...).
std::string_view loss_display_name(std::string_view loss_name);
bool is_known_loss_name(std::string_view loss_name);

struct ReportRow {
  std::string dataset_id;
  std::string model_id;
  std::string loss_name;
  double test_accuracy = 0.0;
  std::optional<double> mean_abs_cosine_to_ccs;
  std::optional<double> lambda_star;
  std::optional<Orientation> orientation;
  std::optional<std::string> sign_mode;
};

struct TableCell {
  double accuracy = 0.0;
  std::optional<double> cosine;
  int count = 0;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  /// Reference-ensemble self-similarity per (dataset, model).
  std::map<std::pair<std::string, std::string>, double> self_similarity;
  /// (model, loss) -> mean over datasets.
  std::map<std::pair<std::string, std::string>, TableCell> model_averages;
  /// loss -> mean over the model rows ("Average").
  std::map<std::string, TableCell> overall_average;
};

/// Validates the key space (unique keys, known loss names, values in [0, 1])
/// and computes the per-model and overall averages.
EvalReport build_report(std::vector<ReportRow> rows,
                        std::map<std::pair<std::string, std::string>, double> self_similarity = {});

struct PaperReferenceRow {
  std::string_view model;
  std::array<double, 8> values;  // in kLossNames order
};

/// Published test accuracies and mean |cos| to 20 CCS probers, averaged over
/// five datasets, for full-size model activations. Static comparison data only.
const std::vector<PaperReferenceRow>& paper_reference_accuracy();
const std::vector<PaperReferenceRow>& paper_reference_cosine();

struct PaperDatasetRow {
  std::string_view model;
  std::string_view dataset;
  std::array<double, 8> values;  // in kLossNames order
};

/// The same published values broken down per model and dataset.
const std::vector<PaperDatasetRow>& paper_dataset_accuracy();
const std::vector<PaperDatasetRow>& paper_dataset_cosine();

nlohmann::json to_json(const EvalReport& report, bool compare_paper = false);

/// Model rows x loss columns plus an "Average" row; `cosine` selects the table.
void write_table_csv(const EvalReport& report, bool cosine, bool compare_paper, const std::filesystem::path& file);
/// One line per report row.
void write_rows_csv(const EvalReport& report, const std::filesystem::path& file);

}  // namespace truthprobe
