#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "saml/dataset.hpp"
#include "saml/error.hpp"
#include "saml/png_io.hpp"
#include "saml/rng.hpp"

using namespace saml;
using namespace saml::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("saml_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Patch make_patch(const std::string& id, int h = 8, int w = 8,
                 Stratum stratum = Stratum::normal) {
  Patch p;
  p.patch_id = id;
  p.image = RgbImage(h, w, Rgb{100, 100, 100});
  p.modality = Modality::PAS;
  p.stratum = stratum;
  p.source_wsi = "wsi0";
  p.annotator_id = "expert";
  return p;
}

InstanceMask make_instance(const std::string& id, const std::string& patch_id, CellClass cls,
                           const std::vector<std::pair<int, int>>& pixels, int h = 8,
                           int w = 8) {
  InstanceMask m;
  m.instance_id = id;
  m.patch_id = patch_id;
  m.cell_class = cls;
  m.mask = Mask(h, w, 0);
  for (auto [r, c] : pixels) m.mask.at(r, c) = 1;
  return m;
}

Corpus tiny_corpus(int n_patches, Stratum stratum = Stratum::normal) {
  Corpus corpus;
  for (int i = 0; i < n_patches; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%04d", i);
    corpus.add_patch(make_patch(buf, 4, 4, stratum));
  }
  return corpus;
}

}  // namespace

TEST_CASE("corpus validation rejects bad inputs") {
  Corpus corpus;
  corpus.add_patch(make_patch("p1"));

  // Empty instance masks are rejected at ingestion.
  CHECK_THROWS_AS(corpus.add_instance(make_instance("i1", "p1", CellClass::podocyte, {})),
                  InputError);
  // Dimension mismatch.
  CHECK_THROWS_AS(
      corpus.add_instance(make_instance("i1", "p1", CellClass::podocyte, {{0, 0}}, 4, 4)),
      InputError);
  // Unknown patch.
  CHECK_THROWS_AS(
      corpus.add_instance(make_instance("i1", "nope", CellClass::podocyte, {{0, 0}})),
      InputError);
  // Unsafe ids.
  CHECK_THROWS_AS(corpus.add_patch(make_patch("../evil")), InputError);

  corpus.add_instance(make_instance("i1", "p1", CellClass::podocyte, {{1, 1}}));
  CHECK_THROWS_AS(corpus.add_instance(make_instance("i1", "p1", CellClass::podocyte, {{2, 2}})),
                  InputError);  // duplicate id

  // Labelmap with out-of-range class value.
  LabelMap lm;
  lm.patch_id = "p1";
  lm.classes = ClassGrid(8, 8, 3);
  CHECK_THROWS_AS(corpus.set_labelmap(lm), InputError);
}

TEST_CASE("corpus counts patches per class") {
  Corpus corpus;
  corpus.add_patch(make_patch("p1"));
  corpus.add_patch(make_patch("p2", 8, 8, Stratum::injured));
  corpus.add_instance(make_instance("a", "p1", CellClass::podocyte, {{0, 0}}));
  corpus.add_instance(make_instance("b", "p1", CellClass::podocyte, {{1, 1}}));
  corpus.add_instance(make_instance("c", "p1", CellClass::mesangial, {{2, 2}}));
  corpus.add_instance(make_instance("d", "p2", CellClass::podocyte, {{3, 3}}));

  auto counts = corpus.counts();
  CHECK(counts.patches == 2);
  CHECK(counts.instances == 4);
  CHECK(counts.patches_with_class[CellClass::podocyte] == 2);
  CHECK(counts.patches_with_class[CellClass::mesangial] == 1);
  CHECK(counts.instances_per_class[CellClass::podocyte] == 3);
  CHECK(counts.patches_per_stratum[Stratum::injured] == 1);
}

TEST_CASE("corpus round trip through disk") {
  auto dir = temp_dir("corpus_rt");
  Corpus corpus;
  Rng rng(3);
  for (int i = 0; i < 3; ++i) {
    Patch p = make_patch("p" + std::to_string(i), 8, 8,
                         i % 2 ? Stratum::injured : Stratum::normal);
    for (auto& px : p.image.data()) {
      px = {uint8_t(rng.uniform_int(0, 255)), uint8_t(rng.uniform_int(0, 255)),
            uint8_t(rng.uniform_int(0, 255))};
    }
    corpus.add_patch(std::move(p));
    corpus.add_instance(make_instance("i" + std::to_string(i), "p" + std::to_string(i),
                                      i % 2 ? CellClass::mesangial : CellClass::podocyte,
                                      {{1, 1}, {2, 3}}));
    LabelMap lm;
    lm.patch_id = "p" + std::to_string(i);
    lm.classes = ClassGrid(8, 8, 0);
    lm.classes.at(1, 1) = uint8_t(i % 2 ? 2 : 1);
    corpus.set_labelmap(lm);
  }

  save_corpus(corpus, dir);
  Corpus back = load_corpus(dir);

  REQUIRE(back.patches().size() == corpus.patches().size());
  for (const auto& p : corpus.patches()) {
    const Patch& q = back.patch(p.patch_id);
    CHECK(q.image == p.image);
    CHECK(q.modality == p.modality);
    CHECK(q.stratum == p.stratum);
    CHECK(q.source_wsi == p.source_wsi);
    CHECK(q.annotator_id == p.annotator_id);
  }
  REQUIRE(back.instances().size() == corpus.instances().size());
  for (const auto& m : corpus.instances()) {
    const InstanceMask* n = back.find_instance(m.instance_id);
    REQUIRE(n != nullptr);
    CHECK(n->mask == m.mask);
    CHECK(n->cell_class == m.cell_class);
  }
  for (const auto& [id, lm] : corpus.labelmaps()) {
    REQUIRE(back.labelmap(id) != nullptr);
    CHECK(back.labelmap(id)->classes == lm.classes);
  }
}

TEST_CASE("load_corpus hard errors") {
  auto dir = temp_dir("corpus_err");

  SUBCASE("empty directory") {
    CHECK_THROWS_WITH_AS(load_corpus(dir), doctest::Contains("no patches found"), InputError);
  }

  SUBCASE("missing image named in meta") {
    std::ofstream(dir / "meta.csv")
        << "patch_id,modality,stratum,source_wsi,annotator_id\nghost,PAS,normal,w,a\n";
    try {
      load_corpus(dir);
      FAIL("expected InputError");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
  }

  SUBCASE("mask dimension mismatch") {
    Corpus corpus;
    corpus.add_patch(make_patch("p1", 8, 8));
    save_corpus(corpus, dir);
    fs::create_directories(dir / "masks" / "p1");
    Grid<uint8_t> small(4, 4, 255);
    png_io::write_gray8(dir / "masks" / "p1" / "i1.png", small);
    std::ofstream(dir / "instances.csv") << "instance_id,patch_id,cell_class\ni1,p1,podocyte\n";
    CHECK_THROWS_AS(load_corpus(dir), InputError);
  }

  SUBCASE("unknown class index in labelmap") {
    Corpus corpus;
    corpus.add_patch(make_patch("p1", 4, 4));
    save_corpus(corpus, dir);
    fs::create_directories(dir / "labelmaps");
    Grid<uint8_t> bad(4, 4, 7);
    png_io::write_gray8(dir / "labelmaps" / "p1.png", bad);
    CHECK_THROWS_WITH_AS(load_corpus(dir), doctest::Contains("unknown class"), InputError);
  }

  SUBCASE("orphan mask file") {
    Corpus corpus;
    corpus.add_patch(make_patch("p1", 4, 4));
    save_corpus(corpus, dir);
    fs::create_directories(dir / "masks" / "p1");
    Grid<uint8_t> m(4, 4, 255);
    png_io::write_gray8(dir / "masks" / "p1" / "stray.png", m);
    CHECK_THROWS_WITH_AS(load_corpus(dir), doctest::Contains("orphan"), InputError);
  }
}

TEST_CASE("stratified_split 100 patches 6:1:3 gives 60/10/30") {
  Corpus corpus = tiny_corpus(100);
  SplitAssignment split = stratified_split(corpus, {6, 1, 3}, 7);

  std::map<Split, int> counts;
  for (const auto& [id, s] : split.assignment) counts[s]++;
  CHECK(counts[Split::train] == 60);
  CHECK(counts[Split::val] == 10);
  CHECK(counts[Split::test] == 30);
  CHECK(split.assignment.size() == 100);
}

TEST_CASE("stratified_split single patch goes to train") {
  Corpus corpus = tiny_corpus(1);
  SplitAssignment split = stratified_split(corpus, {6, 1, 3}, 1);
  REQUIRE(split.assignment.size() == 1);
  CHECK(split.assignment.begin()->second == Split::train);
}

TEST_CASE("stratified_split determinism and partition property") {
  Corpus corpus;
  Rng rng(11);
  for (int i = 0; i < 137; ++i) {
    corpus.add_patch(make_patch("p" + std::to_string(i), 4, 4,
                                rng.coin() ? Stratum::injured : Stratum::normal));
  }
  SplitAssignment a = stratified_split(corpus, {6, 1, 3}, 99);
  SplitAssignment b = stratified_split(corpus, {6, 1, 3}, 99);
  CHECK(a.assignment == b.assignment);
  SplitAssignment c = stratified_split(corpus, {6, 1, 3}, 100);
  CHECK(a.assignment != c.assignment);

  // Every patch in exactly one split (map covers all ids).
  CHECK(a.assignment.size() == corpus.patches().size());

  // Per-stratum deviation from the exact ratio is at most 1.
  std::map<Stratum, std::map<Split, double>> counts;
  std::map<Stratum, double> totals;
  for (const auto& p : corpus.patches()) {
    counts[p.stratum][a.assignment.at(p.patch_id)] += 1;
    totals[p.stratum] += 1;
  }
  for (const auto& [stratum, by_split] : counts) {
    const double n = totals[stratum];
    const double weights[3] = {6, 1, 3};
    for (int s = 0; s < 3; ++s) {
      const double exact = n * weights[s] / 10.0;
      const double realized =
          by_split.count(Split(s)) ? by_split.at(Split(s)) : 0.0;
      CHECK(std::abs(realized - exact) <= 1.0);
    }
  }
}

TEST_CASE("splits csv round trip") {
  auto dir = temp_dir("splits");
  Corpus corpus = tiny_corpus(10);
  SplitAssignment split = stratified_split(corpus, {6, 1, 3}, 5);
  save_splits(dir / "splits.csv", split);
  SplitAssignment back = load_splits(dir / "splits.csv");
  CHECK(back.assignment == split.assignment);
}

TEST_CASE("instances_to_labelmap disjoint union") {
  auto a = make_instance("a", "p", CellClass::podocyte, {{0, 0}, {0, 1}});
  auto b = make_instance("b", "p", CellClass::mesangial, {{3, 3}});
  LabelMap lm = instances_to_labelmap({&a, &b}, 8, 8);
  CHECK(lm.classes.at(0, 0) == 1);
  CHECK(lm.classes.at(0, 1) == 1);
  CHECK(lm.classes.at(3, 3) == 2);
  size_t fg = 0;
  for (auto v : lm.classes.data()) fg += v != 0;
  CHECK(fg == 3);
}

TEST_CASE("instances_to_labelmap empty list is all background") {
  LabelMap lm = instances_to_labelmap({}, 4, 4);
  for (auto v : lm.classes.data()) CHECK(v == 0);
}

TEST_CASE("instances_to_labelmap smaller instance wins overlap") {
  // 10-pixel podocyte overlapping a 50-pixel mesangial on 4 pixels:
  // the 4 shared pixels end up podocyte.
  std::vector<std::pair<int, int>> podo;
  for (int c = 0; c < 10; ++c) podo.push_back({2, c});  // row 2, 10 px
  std::vector<std::pair<int, int>> mesa;
  for (int r = 2; r < 7; ++r) {
    for (int c = 6; c < 16; ++c) mesa.push_back({r, c});  // 5x10 block, overlap = (2, 6..9)
  }
  auto a = make_instance("podo", "p", CellClass::podocyte, podo, 16, 16);
  auto b = make_instance("mesa", "p", CellClass::mesangial, mesa, 16, 16);
  REQUIRE(count_true(a.mask) == 10);
  REQUIRE(count_true(b.mask) == 50);

  LabelMap lm = instances_to_labelmap({&a, &b}, 16, 16);
  for (int c = 6; c < 10; ++c) CHECK(lm.classes.at(2, c) == 1);  // overlap -> podocyte
  CHECK(lm.classes.at(3, 6) == 2);
  CHECK(lm.classes.at(2, 0) == 1);

  // larger_area_wins flips the overlap.
  LabelMap lm2 = instances_to_labelmap({&a, &b}, 16, 16, OverlapPolicy::larger_area_wins);
  for (int c = 6; c < 10; ++c) CHECK(lm2.classes.at(2, c) == 2);
}

TEST_CASE("instances_to_labelmap equal-area tie goes to lower class index") {
  auto a = make_instance("z", "p", CellClass::mesangial, {{1, 1}});
  auto b = make_instance("y", "p", CellClass::podocyte, {{1, 1}});
  LabelMap lm = instances_to_labelmap({&a, &b}, 8, 8);
  CHECK(lm.classes.at(1, 1) == 1);
}

TEST_CASE("labelmap and class-mask re-merge is the identity without overlaps") {
  auto a = make_instance("a", "p", CellClass::podocyte, {{0, 0}, {1, 1}});
  auto b = make_instance("b", "p", CellClass::mesangial, {{3, 3}, {3, 4}});
  LabelMap lm = instances_to_labelmap({&a, &b}, 8, 8);

  auto masks = labelmap_to_class_masks(lm);
  InstanceMask ra{"ra", "p", CellClass::podocyte, masks[CellClass::podocyte]};
  InstanceMask rb{"rb", "p", CellClass::mesangial, masks[CellClass::mesangial]};
  LabelMap lm2 = instances_to_labelmap({&ra, &rb}, 8, 8);
  CHECK(lm2.classes == lm.classes);
}
