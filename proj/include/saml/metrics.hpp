#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "saml/dataset.hpp"

namespace saml::metrics {

/// Pixel-level confusion counts and scores for one class.
/// For binary pixel sets dice == f1; both fields are kept because reports
/// quote them under both names.
struct ClassScore {
  data::CellClass cell_class = data::CellClass::podocyte;
  uint64_t tp = 0, fp = 0, fn = 0;
  double f1 = 0.0;
  double dice = 0.0;
  bool both_empty = false;  // neither pred nor ref contain the class; scored 1.0
};

/// F1/Dice of `pred` against `ref` for membership in class c.
ClassScore class_f1(const data::LabelMap& pred, const data::LabelMap& ref,
                    data::CellClass c);

double binary_dice(const Mask& a, const Mask& b);

/// One patch's score row, carrying the grouping metadata.
struct PatchScore {
  std::string method;
  std::string annotator_group;
  std::string patch_id;
  data::Stratum stratum = data::Stratum::normal;
  ClassScore score;
};

/// Aggregated cell: micro (pooled counts) and macro (mean of per-patch F1).
struct AggCell {
  uint64_t tp = 0, fp = 0, fn = 0;
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  double dice = 0.0;  // == f1_micro
  size_t n_patches = 0;
  bool is_average_row = false;  // arithmetic mean of stratum rows; counts not pooled
};

struct ReportKey {
  std::string method;
  std::string annotator_group;
  std::string stratum;  // "injured", "normal" or "average"
  data::CellClass cell_class = data::CellClass::podocyte;

  auto operator<=>(const ReportKey&) const = default;
};

struct EvalReport {
  std::map<ReportKey, AggCell> rows;
  std::string pooling = "micro";  // which column the text table quotes

  const AggCell* find(const std::string& method, const std::string& group,
                      const std::string& stratum, data::CellClass c) const;
};

/// Micro-average within each stratum (pooled tp/fp/fn), per-patch mean as the
/// macro column, plus "average" rows (arithmetic mean across strata) and
/// "mean" annotator rows (arithmetic mean across annotator groups).
EvalReport aggregate_report(const std::vector<PatchScore>& scores);

/// Per-class F1 of each candidate annotation set against the expert
/// reference, aggregated per stratum. Patches missing from the reference are
/// excluded with a warning.
EvalReport annotation_accuracy(
    const std::map<std::string, std::map<std::string, data::LabelMap>>& candidates_by_group,
    const std::map<std::string, data::LabelMap>& reference,
    const std::map<std::string, data::Stratum>& strata, const std::string& method_of_group);

/// Same, but with one (method, group) per candidate set.
EvalReport annotation_accuracy_methods(
    const std::vector<std::tuple<std::string, std::string, std::map<std::string, data::LabelMap>>>&
        candidates,  // (method, group, labels)
    const std::map<std::string, data::LabelMap>& reference,
    const std::map<std::string, data::Stratum>& strata);

// report.csv: one row per (method, annotator_group, stratum, cell_class).
void save_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_report(const std::filesystem::path& path);

/// Text table mirroring the Injured / Normal / Average x Podocyte / Mesangial
/// column layout.
std::string format_report_table(const EvalReport& report);

}  // namespace saml::metrics
