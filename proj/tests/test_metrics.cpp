#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "saml/error.hpp"
#include "saml/metrics.hpp"
#include "saml/rng.hpp"

using namespace saml;
using namespace saml::metrics;
using data::CellClass;
using data::LabelMap;
using data::Stratum;

namespace {

LabelMap label_map(int h, int w, const std::vector<std::pair<std::pair<int, int>, int>>& px,
                   const std::string& id = "p") {
  LabelMap lm;
  lm.patch_id = id;
  lm.classes = ClassGrid(h, w, 0);
  for (const auto& [rc, cls] : px) lm.classes.at(rc.first, rc.second) = uint8_t(cls);
  return lm;
}

// Independent oracle: explicit pixel-set intersection / difference.
struct BruteCounts {
  uint64_t tp = 0, fp = 0, fn = 0;
};

BruteCounts brute_force_counts(const LabelMap& pred, const LabelMap& ref, CellClass c) {
  std::set<std::pair<int, int>> P, R;
  for (int r = 0; r < pred.classes.height(); ++r) {
    for (int col = 0; col < pred.classes.width(); ++col) {
      if (pred.classes.at(r, col) == uint8_t(c)) P.insert({r, col});
      if (ref.classes.at(r, col) == uint8_t(c)) R.insert({r, col});
    }
  }
  std::vector<std::pair<int, int>> inter, ponly, ronly;
  std::set_intersection(P.begin(), P.end(), R.begin(), R.end(), std::back_inserter(inter));
  std::set_difference(P.begin(), P.end(), R.begin(), R.end(), std::back_inserter(ponly));
  std::set_difference(R.begin(), R.end(), P.begin(), P.end(), std::back_inserter(ronly));
  return {inter.size(), ponly.size(), ronly.size()};
}

LabelMap random_label_map(Rng& rng, int h, int w, const std::string& id) {
  LabelMap lm;
  lm.patch_id = id;
  lm.classes = ClassGrid(h, w, 0);
  for (auto& v : lm.classes.data()) v = uint8_t(rng.uniform_int(0, 2));
  return lm;
}

}  // namespace

TEST_CASE("class_f1 identity and disjoint extremes") {
  LabelMap ref = label_map(4, 4, {{{0, 0}, 1}, {{1, 1}, 1}, {{2, 2}, 2}});
  ClassScore same = class_f1(ref, ref, CellClass::podocyte);
  CHECK(same.f1 == doctest::Approx(1.0));
  CHECK(same.both_empty == false);

  LabelMap pred = label_map(4, 4, {{{3, 3}, 1}});
  ClassScore disj = class_f1(pred, ref, CellClass::podocyte);
  CHECK(disj.f1 == doctest::Approx(0.0));
}

TEST_CASE("class_f1 hand-counted 4x4 example: tp=2 fp=1 fn=1 -> 4/6") {
  LabelMap ref = label_map(4, 4, {{{0, 0}, 1}, {{0, 1}, 1}, {{1, 0}, 1}});
  LabelMap pred = label_map(4, 4, {{{0, 0}, 1}, {{0, 1}, 1}, {{2, 2}, 1}});
  ClassScore s = class_f1(pred, ref, CellClass::podocyte);
  CHECK(s.tp == 2);
  CHECK(s.fp == 1);
  CHECK(s.fn == 1);
  CHECK(s.f1 == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  CHECK(s.dice == s.f1);
}

TEST_CASE("class_f1 both-empty convention") {
  LabelMap a = label_map(3, 3, {});
  LabelMap b = label_map(3, 3, {});
  ClassScore s = class_f1(a, b, CellClass::mesangial);
  CHECK(s.both_empty);
  CHECK(s.f1 == doctest::Approx(1.0));
}

TEST_CASE("class_f1 dimension mismatch is a hard error") {
  LabelMap a = label_map(3, 3, {});
  LabelMap b = label_map(4, 4, {});
  CHECK_THROWS_AS(class_f1(a, b, CellClass::podocyte), InputError);
}

TEST_CASE("class_f1 agrees with the brute-force set oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    LabelMap pred = random_label_map(rng, 16, 16, "p");
    LabelMap ref = random_label_map(rng, 16, 16, "p");
    for (CellClass c : data::kForegroundClasses) {
      BruteCounts bc = brute_force_counts(pred, ref, c);
      ClassScore s = class_f1(pred, ref, c);
      CHECK(s.tp == bc.tp);
      CHECK(s.fp == bc.fp);
      CHECK(s.fn == bc.fn);
      const uint64_t denom = 2 * bc.tp + bc.fp + bc.fn;
      if (denom > 0) {
        CHECK(std::abs(s.f1 - 2.0 * double(bc.tp) / double(denom)) < 1e-12);
      }
    }
  }
}

TEST_CASE("dice symmetry and monotonicity") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    LabelMap a = random_label_map(rng, 8, 8, "p");
    LabelMap b = random_label_map(rng, 8, 8, "p");
    for (CellClass c : data::kForegroundClasses) {
      CHECK(class_f1(a, b, c).f1 == doctest::Approx(class_f1(b, a, c).f1).epsilon(1e-12));
    }
  }

  // Adding one correctly-predicted pixel never decreases F1.
  Rng rng2(6);
  for (int trial = 0; trial < 100; ++trial) {
    LabelMap ref = random_label_map(rng2, 8, 8, "p");
    LabelMap pred = random_label_map(rng2, 8, 8, "p");
    // Find a pixel where ref is podocyte but pred is not.
    int fix = -1;
    for (size_t i = 0; i < ref.classes.size(); ++i) {
      if (ref.classes[i] == 1 && pred.classes[i] != 1) {
        fix = int(i);
        break;
      }
    }
    if (fix < 0) continue;
    const double before = class_f1(pred, ref, CellClass::podocyte).f1;
    pred.classes[size_t(fix)] = 1;
    const double after = class_f1(pred, ref, CellClass::podocyte).f1;
    CHECK(after >= before - 1e-12);
  }
}

TEST_CASE("binary_dice hand example") {
  Mask a(3, 3, 1);  // 9 px
  Mask b(3, 3, 0);  // left 2 columns -> 6 px
  for (int r = 0; r < 3; ++r) {
    b.at(r, 0) = 1;
    b.at(r, 1) = 1;
  }
  CHECK(binary_dice(b, a) == doctest::Approx(2.0 * 6 / (6 + 9)).epsilon(1e-12));
}

TEST_CASE("aggregate_report pools micro and averages macro") {
  // Patch A (2x2): f1 = 1.0 (tp=1). Patch B (4x4): tp=4 fp=4 fn=4 -> f1 = 0.5.
  // Micro pooled: 2*5/(2*5+4+4) = 10/18. Macro mean: 0.75.
  std::vector<PatchScore> scores;
  PatchScore a;
  a.method = "m";
  a.annotator_group = "g";
  a.patch_id = "A";
  a.stratum = Stratum::normal;
  a.score = {CellClass::podocyte, 1, 0, 0, 1.0, 1.0, false};
  PatchScore b = a;
  b.patch_id = "B";
  b.score = {CellClass::podocyte, 4, 4, 4, 0.5, 0.5, false};
  scores = {a, b};

  EvalReport rep = aggregate_report(scores);
  const AggCell* cell = rep.find("m", "g", "normal", CellClass::podocyte);
  REQUIRE(cell != nullptr);
  CHECK(cell->tp == 5);
  CHECK(cell->f1_micro == doctest::Approx(10.0 / 18.0).epsilon(1e-12));
  CHECK(cell->f1_macro == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(cell->n_patches == 2);
}

TEST_CASE("aggregate_report average rows are recomputable means") {
  std::vector<PatchScore> scores;
  auto add = [&](const std::string& pid, Stratum st, CellClass c, uint64_t tp, uint64_t fp,
                 uint64_t fn) {
    PatchScore ps;
    ps.method = "m";
    ps.annotator_group = "g";
    ps.patch_id = pid;
    ps.stratum = st;
    const uint64_t denom = 2 * tp + fp + fn;
    const double f1 = denom ? 2.0 * double(tp) / double(denom) : 1.0;
    ps.score = {c, tp, fp, fn, f1, f1, denom == 0};
    scores.push_back(ps);
  };
  add("A", Stratum::injured, CellClass::podocyte, 8, 2, 0);
  add("B", Stratum::normal, CellClass::podocyte, 6, 0, 6);
  add("A", Stratum::injured, CellClass::mesangial, 5, 5, 5);
  add("B", Stratum::normal, CellClass::mesangial, 1, 0, 0);

  EvalReport rep = aggregate_report(scores);
  for (CellClass c : data::kForegroundClasses) {
    const AggCell* inj = rep.find("m", "g", "injured", c);
    const AggCell* nor = rep.find("m", "g", "normal", c);
    const AggCell* avg = rep.find("m", "g", "average", c);
    REQUIRE(inj);
    REQUIRE(nor);
    REQUIRE(avg);
    CHECK(avg->f1_micro ==
          doctest::Approx(0.5 * (inj->f1_micro + nor->f1_micro)).epsilon(1e-12));
    CHECK(avg->f1_macro ==
          doctest::Approx(0.5 * (inj->f1_macro + nor->f1_macro)).epsilon(1e-12));
    CHECK(avg->is_average_row);
  }
}

TEST_CASE("aggregate_report mean annotator rows") {
  std::vector<PatchScore> scores;
  auto add = [&](const std::string& group, double f1, uint64_t tp, uint64_t fp, uint64_t fn) {
    PatchScore ps;
    ps.method = "m";
    ps.annotator_group = group;
    ps.patch_id = "A";
    ps.stratum = Stratum::normal;
    ps.score = {CellClass::podocyte, tp, fp, fn, f1, f1, false};
    scores.push_back(ps);
  };
  // Two annotators with stratum-level f1 0.8 and 0.9 -> mean row 0.85.
  add("ann1", 0.8, 8, 2, 2);   // micro 16/20 = 0.8
  add("ann2", 0.9, 9, 1, 1);   // micro 18/20 = 0.9

  EvalReport rep = aggregate_report(scores);
  const AggCell* mean = rep.find("m", "mean", "normal", CellClass::podocyte);
  REQUIRE(mean != nullptr);
  CHECK(mean->f1_micro == doctest::Approx(0.85).epsilon(1e-12));
}

TEST_CASE("annotation_accuracy candidate == reference scores 1.0") {
  Rng rng(9);
  std::map<std::string, LabelMap> reference;
  std::map<std::string, Stratum> strata;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "p" + std::to_string(i);
    reference[id] = random_label_map(rng, 8, 8, id);
    strata[id] = i % 2 ? Stratum::injured : Stratum::normal;
  }
  std::map<std::string, std::map<std::string, LabelMap>> candidates;
  candidates["ann1"] = reference;

  EvalReport rep = annotation_accuracy(candidates, reference, strata, "manual");
  for (const char* st : {"injured", "normal", "average"}) {
    for (CellClass c : data::kForegroundClasses) {
      const AggCell* cell = rep.find("manual", "ann1", st, c);
      REQUIRE(cell);
      CHECK(cell->f1_micro == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("annotation_accuracy all-background candidate scores 0 per foreground class") {
  std::map<std::string, LabelMap> reference;
  reference["p0"] = label_map(4, 4, {{{1, 1}, 1}, {{2, 2}, 2}}, "p0");
  std::map<std::string, Stratum> strata{{"p0", Stratum::normal}};
  std::map<std::string, std::map<std::string, LabelMap>> candidates;
  candidates["ann"] = {{"p0", label_map(4, 4, {}, "p0")}};

  EvalReport rep = annotation_accuracy(candidates, reference, strata, "blank");
  for (CellClass c : data::kForegroundClasses) {
    const AggCell* cell = rep.find("blank", "ann", "normal", c);
    REQUIRE(cell);
    CHECK(cell->f1_micro == doctest::Approx(0.0));
  }
}

TEST_CASE("annotation_accuracy excludes candidate-only patches") {
  std::map<std::string, LabelMap> reference;
  reference["p0"] = label_map(4, 4, {{{1, 1}, 1}}, "p0");
  std::map<std::string, Stratum> strata{{"p0", Stratum::normal},
                                        {"extra", Stratum::normal}};
  std::map<std::string, std::map<std::string, LabelMap>> candidates;
  candidates["ann"] = {{"p0", reference["p0"]},
                       {"extra", label_map(4, 4, {}, "extra")}};

  EvalReport rep = annotation_accuracy(candidates, reference, strata, "m");
  const AggCell* cell = rep.find("m", "ann", "normal", CellClass::podocyte);
  REQUIRE(cell);
  CHECK(cell->n_patches == 1);  // "extra" was skipped
  CHECK(cell->f1_micro == doctest::Approx(1.0));
}

TEST_CASE("report csv round trip and table rendering") {
  auto dir = std::filesystem::temp_directory_path() / "saml_test_report";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  std::vector<PatchScore> scores;
  PatchScore ps;
  ps.method = "m";
  ps.annotator_group = "g";
  ps.patch_id = "A";
  ps.stratum = Stratum::injured;
  ps.score = {CellClass::podocyte, 3, 1, 1, 0.75, 0.75, false};
  scores.push_back(ps);
  ps.stratum = Stratum::normal;
  scores.push_back(ps);
  ps.score.cell_class = CellClass::mesangial;
  scores.push_back(ps);

  EvalReport rep = aggregate_report(scores);
  save_report(dir / "report.csv", rep);
  EvalReport back = load_report(dir / "report.csv");
  REQUIRE(back.rows.size() == rep.rows.size());
  for (const auto& [key, cell] : rep.rows) {
    REQUIRE(back.rows.count(key) == 1);
    CHECK(back.rows.at(key).f1_micro == doctest::Approx(cell.f1_micro).epsilon(1e-9));
    CHECK(back.rows.at(key).tp == cell.tp);
  }

  std::string table = format_report_table(rep);
  CHECK(table.find("injured") != std::string::npos);
  CHECK(table.find("0.7500") != std::string::npos);
}
