#include "saml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "saml/csv.hpp"
#include "saml/error.hpp"
#include "saml/log.hpp"

namespace saml::metrics {

ClassScore class_f1(const data::LabelMap& pred, const data::LabelMap& ref,
                    data::CellClass c) {
  if (!pred.classes.same_shape(ref.classes)) {
    throw InputError("class_f1: dimension mismatch for patch " + ref.patch_id);
  }
  ClassScore s;
  s.cell_class = c;
  const uint8_t cls = uint8_t(c);
  for (size_t i = 0; i < pred.classes.size(); ++i) {
    const bool p = pred.classes[i] == cls;
    const bool r = ref.classes[i] == cls;
    s.tp += (p && r);
    s.fp += (p && !r);
    s.fn += (!p && r);
  }
  const uint64_t denom = 2 * s.tp + s.fp + s.fn;
  if (denom == 0) {
    // Perfect agreement on absence; flagged so averages stay auditable.
    s.both_empty = true;
    s.f1 = s.dice = 1.0;
  } else {
    s.f1 = s.dice = 2.0 * double(s.tp) / double(denom);
  }
  return s;
}

double binary_dice(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw InputError("binary_dice: dimension mismatch");
  uint64_t inter = 0, sa = 0, sb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool pa = a[i] != 0, pb = b[i] != 0;
    inter += (pa && pb);
    sa += pa;
    sb += pb;
  }
  if (sa + sb == 0) return 1.0;
  return 2.0 * double(inter) / double(sa + sb);
}

const AggCell* EvalReport::find(const std::string& method, const std::string& group,
                                const std::string& stratum, data::CellClass c) const {
  auto it = rows.find(ReportKey{method, group, stratum, c});
  return it == rows.end() ? nullptr : &it->second;
}

namespace {

AggCell pool(const std::vector<const PatchScore*>& scores) {
  AggCell cell;
  double macro_sum = 0.0;
  for (const auto* ps : scores) {
    cell.tp += ps->score.tp;
    cell.fp += ps->score.fp;
    cell.fn += ps->score.fn;
    macro_sum += ps->score.f1;
    cell.n_patches++;
  }
  const uint64_t denom = 2 * cell.tp + cell.fp + cell.fn;
  cell.f1_micro = denom == 0 ? 1.0 : 2.0 * double(cell.tp) / double(denom);
  cell.f1_macro = cell.n_patches ? macro_sum / double(cell.n_patches) : 1.0;
  cell.dice = cell.f1_micro;
  return cell;
}

AggCell mean_of(const std::vector<const AggCell*>& cells) {
  AggCell out;
  out.is_average_row = true;
  if (cells.empty()) return out;
  for (const auto* c : cells) {
    out.f1_micro += c->f1_micro;
    out.f1_macro += c->f1_macro;
    out.n_patches += c->n_patches;
  }
  out.f1_micro /= double(cells.size());
  out.f1_macro /= double(cells.size());
  out.dice = out.f1_micro;
  return out;
}

}  // namespace

EvalReport aggregate_report(const std::vector<PatchScore>& scores) {
  EvalReport report;

  std::map<ReportKey, std::vector<const PatchScore*>> groups;
  for (const auto& ps : scores) {
    groups[ReportKey{ps.method, ps.annotator_group, data::to_string(ps.stratum),
                     ps.score.cell_class}]
        .push_back(&ps);
  }
  for (const auto& [key, list] : groups) {
    if (list.empty()) continue;
    report.rows[key] = pool(list);
  }

  // "average" stratum rows: arithmetic mean over present strata.
  std::set<std::tuple<std::string, std::string, data::CellClass>> mg;
  for (const auto& [key, cell] : report.rows) {
    mg.insert({key.method, key.annotator_group, key.cell_class});
  }
  for (const auto& [method, group, cls] : mg) {
    std::vector<const AggCell*> cells;
    for (const char* st : {"injured", "normal"}) {
      if (const AggCell* c = report.find(method, group, st, cls)) cells.push_back(c);
    }
    if (cells.empty()) {
      log_warn("no stratum rows for method=" + method + " group=" + group);
      continue;
    }
    report.rows[ReportKey{method, group, "average", cls}] = mean_of(cells);
  }

  // "mean" annotator rows when a method has several groups.
  std::map<std::string, std::set<std::string>> groups_of_method;
  for (const auto& [key, cell] : report.rows) {
    groups_of_method[key.method].insert(key.annotator_group);
  }
  for (const auto& [method, grps] : groups_of_method) {
    if (grps.size() < 2) continue;
    for (const char* st : {"injured", "normal", "average"}) {
      for (data::CellClass cls : data::kForegroundClasses) {
        std::vector<const AggCell*> cells;
        for (const auto& g : grps) {
          if (const AggCell* c = report.find(method, g, st, cls)) cells.push_back(c);
        }
        if (!cells.empty()) {
          report.rows[ReportKey{method, "mean", st, cls}] = mean_of(cells);
        }
      }
    }
  }
  return report;
}

EvalReport annotation_accuracy_methods(
    const std::vector<std::tuple<std::string, std::string, std::map<std::string, data::LabelMap>>>&
        candidates,
    const std::map<std::string, data::LabelMap>& reference,
    const std::map<std::string, data::Stratum>& strata) {
  std::vector<PatchScore> scores;
  for (const auto& [method, group, labels] : candidates) {
    for (const auto& [patch_id, lm] : labels) {
      auto ref_it = reference.find(patch_id);
      if (ref_it == reference.end()) {
        log_warn("patch " + patch_id + " present in candidate '" + method +
                 "' but not in reference; excluded");
        continue;
      }
      auto st_it = strata.find(patch_id);
      if (st_it == strata.end()) {
        log_warn("patch " + patch_id + " has no stratum metadata; excluded");
        continue;
      }
      for (data::CellClass c : data::kForegroundClasses) {
        PatchScore ps;
        ps.method = method;
        ps.annotator_group = group;
        ps.patch_id = patch_id;
        ps.stratum = st_it->second;
        ps.score = class_f1(lm, ref_it->second, c);
        scores.push_back(std::move(ps));
      }
    }
  }
  return aggregate_report(scores);
}

EvalReport annotation_accuracy(
    const std::map<std::string, std::map<std::string, data::LabelMap>>& candidates_by_group,
    const std::map<std::string, data::LabelMap>& reference,
    const std::map<std::string, data::Stratum>& strata, const std::string& method) {
  std::vector<std::tuple<std::string, std::string, std::map<std::string, data::LabelMap>>> cands;
  for (const auto& [group, labels] : candidates_by_group) {
    cands.emplace_back(method, group, labels);
  }
  return annotation_accuracy_methods(cands, reference, strata);
}

void save_report(const std::filesystem::path& path, const EvalReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [key, cell] : report.rows) {
    rows.push_back({key.method, key.annotator_group, key.stratum,
                    data::to_string(key.cell_class),
                    cell.is_average_row ? "" : std::to_string(cell.tp),
                    cell.is_average_row ? "" : std::to_string(cell.fp),
                    cell.is_average_row ? "" : std::to_string(cell.fn),
                    csv::format_double(cell.f1_micro), csv::format_double(cell.f1_macro),
                    csv::format_double(cell.dice), std::to_string(cell.n_patches)});
  }
  csv::write(path, {"method", "annotator_group", "stratum", "cell_class", "tp", "fp", "fn",
                    "f1_micro", "f1_macro", "dice", "n_patches"},
             rows);
}

EvalReport load_report(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ArtifactMissingError("report not found: " + path.string());
  }
  auto t = csv::read(path, {"method", "annotator_group", "stratum", "cell_class", "tp", "fp",
                            "fn", "f1_micro", "f1_macro", "dice", "n_patches"});
  EvalReport report;
  for (const auto& row : t.rows) {
    ReportKey key{row[0], row[1], row[2], data::cell_class_from_string(row[3])};
    AggCell cell;
    cell.is_average_row = row[4].empty();
    if (!cell.is_average_row) {
      cell.tp = std::stoull(row[4]);
      cell.fp = std::stoull(row[5]);
      cell.fn = std::stoull(row[6]);
    }
    cell.f1_micro = std::stod(row[7]);
    cell.f1_macro = std::stod(row[8]);
    cell.dice = std::stod(row[9]);
    cell.n_patches = std::stoull(row[10]);
    report.rows[key] = cell;
  }
  return report;
}

std::string format_report_table(const EvalReport& report) {
  const bool macro = report.pooling == "macro";
  auto value = [&](const AggCell* c) {
    if (!c) return std::string("   -  ");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.4f", macro ? c->f1_macro : c->f1_micro);
    return std::string(buf);
  };

  std::set<std::pair<std::string, std::string>> method_groups;
  for (const auto& [key, cell] : report.rows) {
    method_groups.insert({key.method, key.annotator_group});
  }

  std::ostringstream out;
  out << "F1 (" << report.pooling << " pooling per stratum)\n";
  char head[160];
  std::snprintf(head, sizeof(head), "%-28s %-10s | %-15s | %-15s | %-15s\n", "method", "group",
                "injured", "normal", "average");
  out << head;
  std::snprintf(head, sizeof(head), "%-28s %-10s | %-7s %-7s | %-7s %-7s | %-7s %-7s\n", "", "",
                "podo", "mesan", "podo", "mesan", "podo", "mesan");
  out << head;
  out << std::string(100, '-') << "\n";
  for (const auto& [method, group] : method_groups) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-28s %-10s | %-7s %-7s | %-7s %-7s | %-7s %-7s\n",
                  method.c_str(), group.c_str(),
                  value(report.find(method, group, "injured", data::CellClass::podocyte)).c_str(),
                  value(report.find(method, group, "injured", data::CellClass::mesangial)).c_str(),
                  value(report.find(method, group, "normal", data::CellClass::podocyte)).c_str(),
                  value(report.find(method, group, "normal", data::CellClass::mesangial)).c_str(),
                  value(report.find(method, group, "average", data::CellClass::podocyte)).c_str(),
                  value(report.find(method, group, "average", data::CellClass::mesangial)).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace saml::metrics
