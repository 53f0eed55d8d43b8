#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "saml/base64.hpp"
#include "saml/csv.hpp"
#include "saml/error.hpp"
#include "saml/promptseg.hpp"
#include "saml/rng.hpp"

using namespace saml;
using namespace saml::promptseg;
using boxgen::BoxKind;
using boxgen::BoxPrompt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("saml_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

data::Corpus toy_corpus() {
  data::Corpus corpus;
  data::Patch p;
  p.patch_id = "p";
  p.image = RgbImage(8, 8, Rgb{50, 50, 50});
  corpus.add_patch(std::move(p));

  data::InstanceMask square;  // 3x3 block at (2..4, 2..4)
  square.instance_id = "sq";
  square.patch_id = "p";
  square.cell_class = data::CellClass::podocyte;
  square.mask = Mask(8, 8, 0);
  for (int r = 2; r <= 4; ++r) {
    for (int c = 2; c <= 4; ++c) square.mask.at(r, c) = 1;
  }
  corpus.add_instance(std::move(square));

  data::InstanceMask dot;
  dot.instance_id = "dot";
  dot.patch_id = "p";
  dot.cell_class = data::CellClass::mesangial;
  dot.mask = Mask(8, 8, 0);
  dot.mask.at(6, 6) = 1;
  dot.mask.at(6, 7) = 1;
  corpus.add_instance(std::move(dot));
  return corpus;
}

BoxPrompt box_of(const std::string& inst, int r0, int c0, int r1, int c1,
                 BoxKind kind = BoxKind::tight,
                 data::CellClass cls = data::CellClass::podocyte) {
  BoxPrompt b;
  b.instance_id = inst;
  b.patch_id = "p";
  b.cell_class = cls;
  b.r_min = r0;
  b.c_min = c0;
  b.r_max = r1;
  b.c_max = c1;
  b.kind = kind;
  return b;
}

SegmentResult result_with(const std::string& id, const std::vector<std::pair<int, int>>& px,
                          double conf, int h = 8, int w = 8) {
  SegmentResult r;
  r.instance_id = id;
  r.mask = Mask(h, w, 0);
  for (auto [row, col] : px) r.mask.at(row, col) = 1;
  r.confidence = conf;
  return r;
}

// Backend double that can fail on demand and return wrong shapes.
class FlakySegmenter : public PromptableSegmenter {
 public:
  explicit FlakySegmenter(const data::Corpus& corpus) : oracle_(corpus) {}

  SegmenterCapabilities capabilities() const override { return {true, true, 0}; }
  std::string id() const override { return "flaky"; }
  std::string version() const override { return "1"; }

  SegmentResult segment(const data::Patch& patch, const BoxPrompt& box) override {
    calls++;
    if (fail_ids.count(box.instance_id) && fails_left > 0) {
      --fails_left;
      throw BackendUnavailableError("simulated outage", {box.instance_id});
    }
    if (wrong_shape) {
      SegmentResult r;
      r.instance_id = box.instance_id;
      r.mask = Mask(2, 2, 0);
      return r;
    }
    return oracle_.segment(patch, box);
  }

  std::set<std::string> fail_ids;
  int fails_left = 0;
  bool wrong_shape = false;
  int calls = 0;

 private:
  OracleSegmenter oracle_;
};

}  // namespace

TEST_CASE("oracle_segment tight box reproduces ground truth with confidence 1") {
  data::Corpus corpus = toy_corpus();
  const data::InstanceMask* gt = corpus.find_instance("sq");
  BoxPrompt tight = boxgen::tight_box(*gt);

  SegmentResult r = oracle_segment(*gt, tight);
  CHECK(r.mask == gt->mask);
  CHECK(r.confidence == doctest::Approx(1.0));
}

TEST_CASE("oracle_segment crops to the box: mask = GT intersect B") {
  data::Corpus corpus = toy_corpus();
  const data::InstanceMask* gt = corpus.find_instance("sq");

  // Random-style box covering only columns 2..3 of the instance.
  BoxPrompt b = box_of("sq", 0, 0, 7, 3, BoxKind::random);
  SegmentResult r = oracle_segment(*gt, b);

  Mask expected(8, 8, 0);
  for (int row = 2; row <= 4; ++row) {
    for (int col = 2; col <= 3; ++col) expected.at(row, col) = 1;
  }
  CHECK(r.mask == expected);
  // Dice(6-pixel crop, 9-pixel GT) = 2*6/(6+9).
  CHECK(r.confidence == doctest::Approx(2.0 * 6 / (6 + 9)).epsilon(1e-12));
}

TEST_CASE("oracle_segment erosion can annihilate the mask") {
  data::Corpus corpus = toy_corpus();
  const data::InstanceMask* gt = corpus.find_instance("sq");
  BoxPrompt tight = boxgen::tight_box(*gt);

  SegmentResult r = oracle_segment(*gt, tight, {0, 5});
  CHECK(count_true(r.mask) == 0);
  CHECK(r.confidence == doctest::Approx(0.0));
}

TEST_CASE("oracle_segment dilation grows the mask and lowers confidence") {
  data::Corpus corpus = toy_corpus();
  const data::InstanceMask* gt = corpus.find_instance("sq");
  BoxPrompt tight = boxgen::tight_box(*gt);

  SegmentResult r = oracle_segment(*gt, tight, {1, 0});
  CHECK(count_true(r.mask) == 25);  // 3x3 dilated by 1 -> 5x5
  CHECK(r.confidence == doctest::Approx(2.0 * 9 / (25 + 9)).epsilon(1e-12));
}

TEST_CASE("segment_with_prompts basic contract") {
  data::Corpus corpus = toy_corpus();
  OracleSegmenter oracle(corpus);
  const data::Patch& patch = corpus.patch("p");

  SUBCASE("empty prompt list gives empty results") {
    auto rs = segment_with_prompts(oracle, patch, {});
    CHECK(rs.empty());
  }

  SUBCASE("one result per prompt, same order") {
    auto sq = boxgen::tight_box(*corpus.find_instance("sq"));
    auto dot = boxgen::tight_box(*corpus.find_instance("dot"));
    auto rs = segment_with_prompts(oracle, patch, {dot, sq});
    REQUIRE(rs.size() == 2);
    CHECK(rs[0].instance_id == "dot");
    CHECK(rs[1].instance_id == "sq");
  }

  SUBCASE("wrong-shaped backend mask is a contract violation") {
    FlakySegmenter flaky(corpus);
    flaky.wrong_shape = true;
    auto sq = boxgen::tight_box(*corpus.find_instance("sq"));
    CHECK_THROWS_AS(segment_with_prompts(flaky, patch, {sq}), ContractViolationError);
  }

  SUBCASE("backend failures are collected into one retryable error") {
    FlakySegmenter flaky(corpus);
    flaky.fail_ids = {"sq", "dot"};
    flaky.fails_left = 99;
    auto sq = boxgen::tight_box(*corpus.find_instance("sq"));
    auto dot = boxgen::tight_box(*corpus.find_instance("dot"));
    try {
      segment_with_prompts(flaky, patch, {sq, dot});
      FAIL("expected BackendUnavailableError");
    } catch (const BackendUnavailableError& e) {
      REQUIRE(e.instance_ids.size() == 2);
      CHECK(e.instance_ids[0] == "sq");
      CHECK(e.instance_ids[1] == "dot");
    }
  }
}

TEST_CASE("merge_results policies") {
  std::map<std::string, data::CellClass> class_of{
      {"a", data::CellClass::podocyte}, {"b", data::CellClass::mesangial}};

  SUBCASE("disjoint results keep their classes") {
    auto lm = merge_results(
        {result_with("a", {{0, 0}}, 1.0), result_with("b", {{5, 5}}, 1.0)}, class_of);
    CHECK(lm.classes.at(0, 0) == 1);
    CHECK(lm.classes.at(5, 5) == 2);
  }

  SUBCASE("higher confidence wins the overlap") {
    auto lm = merge_results({result_with("a", {{3, 3}, {3, 4}}, 0.6),
                             result_with("b", {{3, 3}}, 0.9)},
                            class_of);
    CHECK(lm.classes.at(3, 3) == 2);  // class 2 with confidence 0.9
    CHECK(lm.classes.at(3, 4) == 1);
  }

  SUBCASE("equal confidence: smaller area wins") {
    auto lm = merge_results({result_with("a", {{3, 3}, {3, 4}, {3, 5}}, 1.0),
                             result_with("b", {{3, 3}}, 1.0)},
                            class_of);
    CHECK(lm.classes.at(3, 3) == 2);
  }

  SUBCASE("equal confidence and area: lower class index wins") {
    auto lm = merge_results(
        {result_with("a", {{3, 3}}, 1.0), result_with("b", {{3, 3}}, 1.0)}, class_of);
    CHECK(lm.classes.at(3, 3) == 1);
  }

  SUBCASE("empty result list is all background") {
    auto lm = merge_results({}, class_of);
    CHECK(lm.classes.empty());  // caller supplies dimensions for empty patches
  }
}

TEST_CASE("pseudolabel_corpus composition identity and provenance") {
  auto dir = temp_dir("pseudo");
  data::Corpus corpus = toy_corpus();
  OracleSegmenter oracle(corpus);

  boxgen::PerturbConfig pc;
  pc.seed = 5;
  auto boxes = boxgen::boxes_for_corpus(corpus, BoxKind::tight, pc);

  auto outcome = pseudolabel_corpus(corpus, boxes, oracle, dir);
  CHECK(outcome.patches_written == 1);
  CHECK(outcome.failures.empty());

  auto labels = data::load_labelmap_dir(dir / "labelmaps");
  REQUIRE(labels.count("p"));
  auto insts = corpus.instances_for_patch("p");
  data::LabelMap gt = data::instances_to_labelmap(insts, 8, 8);
  CHECK(labels.at("p").classes == gt.classes);

  auto prov = csv::read(dir / "pseudolabels.csv",
                        {"patch_id", "box_kind", "seed", "segmenter_id", "segmenter_version",
                         "n_prompts", "n_failures"});
  REQUIRE(prov.rows.size() == 1);
  CHECK(prov.rows[0][0] == "p");
  CHECK(prov.rows[0][1] == "tight");
  CHECK(prov.rows[0][2] == "5");
  CHECK(prov.rows[0][3] == "oracle");
  CHECK(prov.rows[0][5] == "2");
  CHECK(prov.rows[0][6] == "0");
}

TEST_CASE("pseudolabel_corpus writes all-background labelmap for boxless patches") {
  auto dir = temp_dir("pseudo_nobox");
  data::Corpus corpus = toy_corpus();
  data::Patch lonely;
  lonely.patch_id = "z";
  lonely.image = RgbImage(6, 6);
  corpus.add_patch(std::move(lonely));

  OracleSegmenter oracle(corpus);
  boxgen::PerturbConfig pc;
  auto boxes = boxgen::boxes_for_corpus(corpus, BoxKind::tight, pc);
  auto outcome = pseudolabel_corpus(corpus, boxes, oracle, dir);
  CHECK(outcome.patches_written == 2);

  auto labels = data::load_labelmap_dir(dir / "labelmaps");
  REQUIRE(labels.count("z"));
  CHECK(labels.at("z").classes.height() == 6);
  for (auto v : labels.at("z").classes.data()) CHECK(v == 0);
}

TEST_CASE("pseudolabel_corpus resume after failure reproduces the uninterrupted output") {
  auto dir_a = temp_dir("pseudo_resume_a");
  auto dir_b = temp_dir("pseudo_resume_b");
  data::Corpus corpus = toy_corpus();
  boxgen::PerturbConfig pc;
  pc.seed = 3;
  auto boxes = boxgen::boxes_for_corpus(corpus, BoxKind::tight, pc);

  // Uninterrupted reference run (same backend identity, no outages).
  FlakySegmenter steady(corpus);
  auto ref_outcome = pseudolabel_corpus(corpus, boxes, steady, dir_a);
  CHECK(ref_outcome.failures.empty());

  // First run fails on instance "sq" (patch p is left unwritten) ...
  FlakySegmenter flaky(corpus);
  flaky.fail_ids = {"sq"};
  flaky.fails_left = 1;
  auto first = pseudolabel_corpus(corpus, boxes, flaky, dir_b);
  CHECK(first.failures.count("p") == 1);
  CHECK(first.patches_written == 0);
  CHECK(!fs::exists(dir_b / "labelmaps" / "p.png"));

  // ... and the resumed run completes it.
  PseudolabelOptions opts;
  opts.resume = true;
  auto second = pseudolabel_corpus(corpus, boxes, flaky, dir_b, opts);
  CHECK(second.failures.empty());
  CHECK(second.patches_written == 1);

  auto read_bytes = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), {});
  };
  CHECK(read_bytes(dir_a / "labelmaps" / "p.png") == read_bytes(dir_b / "labelmaps" / "p.png"));
  CHECK(read_bytes(dir_a / "pseudolabels.csv") == read_bytes(dir_b / "pseudolabels.csv"));
}

TEST_CASE("pseudolabel_corpus skip_prompt policy records failures") {
  auto dir = temp_dir("pseudo_skip");
  data::Corpus corpus = toy_corpus();
  FlakySegmenter flaky(corpus);
  flaky.fail_ids = {"dot"};
  flaky.fails_left = 99;

  boxgen::PerturbConfig pc;
  auto boxes = boxgen::boxes_for_corpus(corpus, BoxKind::tight, pc);
  PseudolabelOptions opts;
  opts.on_backend_error = OnBackendError::skip_prompt;
  auto outcome = pseudolabel_corpus(corpus, boxes, flaky, dir, opts);
  CHECK(outcome.failures.empty());
  CHECK(outcome.patches_written == 1);

  auto prov = csv::read(dir / "pseudolabels.csv",
                        {"patch_id", "box_kind", "seed", "segmenter_id", "segmenter_version",
                         "n_prompts", "n_failures"});
  REQUIRE(prov.rows.size() == 1);
  CHECK(prov.rows[0][5] == "2");
  CHECK(prov.rows[0][6] == "1");

  // The completed labelmap contains only the surviving instance.
  auto labels = data::load_labelmap_dir(dir / "labelmaps");
  CHECK(labels.at("p").classes.at(3, 3) == 1);
  CHECK(labels.at("p").classes.at(6, 6) == 0);
}

TEST_CASE("pseudolabel_corpus parallel output matches serial") {
  auto dir_s = temp_dir("pseudo_ser");
  auto dir_p = temp_dir("pseudo_par");
  data::Corpus corpus;
  Rng rng(31);
  for (int i = 0; i < 6; ++i) {
    data::Patch p;
    p.patch_id = "p" + std::to_string(i);
    p.image = RgbImage(10, 10);
    corpus.add_patch(std::move(p));
    data::InstanceMask m;
    m.instance_id = "i" + std::to_string(i);
    m.patch_id = "p" + std::to_string(i);
    m.cell_class = rng.coin() ? data::CellClass::podocyte : data::CellClass::mesangial;
    m.mask = Mask(10, 10, 0);
    m.mask.at(int(rng.uniform_int(0, 9)), int(rng.uniform_int(0, 9))) = 1;
    corpus.add_instance(std::move(m));
  }
  OracleSegmenter oracle(corpus);
  boxgen::PerturbConfig pc;
  auto boxes = boxgen::boxes_for_corpus(corpus, BoxKind::tight, pc);

  pseudolabel_corpus(corpus, boxes, oracle, dir_s);
  PseudolabelOptions opts;
  opts.jobs = 4;
  pseudolabel_corpus(corpus, boxes, oracle, dir_p, opts);

  auto read_bytes = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), {});
  };
  CHECK(read_bytes(dir_s / "pseudolabels.csv") == read_bytes(dir_p / "pseudolabels.csv"));
  for (int i = 0; i < 6; ++i) {
    const std::string name = "p" + std::to_string(i) + ".png";
    CHECK(read_bytes(dir_s / "labelmaps" / name) == read_bytes(dir_p / "labelmaps" / name));
  }
}

TEST_CASE("external adapter against a local HTTP segmenter") {
  data::Corpus corpus = toy_corpus();
  const data::Patch& patch = corpus.patch("p");

  httplib::Server server;
  std::atomic<int> mode{0};  // 0 = fill box, 1 = wrong size, 2 = http 500
  server.Post("/segment", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    const int h = body["height"], w = body["width"];
    if (mode == 2) {
      res.status = 500;
      return;
    }
    std::vector<uint8_t> mask;
    if (mode == 1) {
      mask.assign(3, 255);
    } else {
      mask.assign(size_t(h) * w, 0);
      const auto& box = body["box"];
      for (int r = box["r_min"]; r <= int(box["r_max"]); ++r) {
        for (int c = box["c_min"]; c <= int(box["c_max"]); ++c) {
          mask[size_t(r) * w + c] = 255;
        }
      }
    }
    nlohmann::json reply;
    reply["mask_b64"] = base64::encode(mask);
    reply["confidence"] = 0.75;
    res.set_content(reply.dump(), "application/json");
  });

  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ExternalAdapterConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
  cfg.model_id = "boxfill";
  cfg.threshold = 0.5;
  ExternalModelAdapter adapter(cfg);

  SUBCASE("box-fill reply round trips with confidence") {
    BoxPrompt b = box_of("sq", 2, 2, 4, 4);
    SegmentResult r = adapter.segment(patch, b);
    CHECK(count_true(r.mask) == 9);
    CHECK(r.mask.at(3, 3) == 1);
    CHECK(r.mask.at(0, 0) == 0);
    CHECK(r.confidence == doctest::Approx(0.75));
    CHECK(adapter.version() == "boxfill@" + cfg.endpoint);
  }

  SUBCASE("wrong-sized mask is a contract violation") {
    mode = 1;
    BoxPrompt b = box_of("sq", 2, 2, 4, 4);
    CHECK_THROWS_AS(adapter.segment(patch, b), ContractViolationError);
  }

  SUBCASE("server error is retryable backend unavailability") {
    mode = 2;
    BoxPrompt b = box_of("sq", 2, 2, 4, 4);
    CHECK_THROWS_AS(adapter.segment(patch, b), BackendUnavailableError);
  }

  server.stop();
  server_thread.join();

  SUBCASE("unreachable endpoint is retryable") {
    ExternalAdapterConfig dead;
    dead.endpoint = "http://127.0.0.1:1";  // nothing listens here
    dead.model_id = "none";
    dead.timeout_s = 1;
    ExternalModelAdapter gone(dead);
    BoxPrompt b = box_of("sq", 2, 2, 4, 4);
    CHECK_THROWS_AS(gone.segment(patch, b), BackendUnavailableError);
  }
}

namespace {

// Declares max_concurrency = 1 and verifies calls are never concurrent.
class SerialOnlySegmenter : public PromptableSegmenter {
 public:
  explicit SerialOnlySegmenter(const data::Corpus& corpus) : oracle_(corpus) {}
  SegmenterCapabilities capabilities() const override { return {true, true, 1}; }
  std::string id() const override { return "serial"; }
  std::string version() const override { return "1"; }
  SegmentResult segment(const data::Patch& patch, const boxgen::BoxPrompt& box) override {
    const int now = ++in_flight;
    max_in_flight = std::max(max_in_flight.load(), now);
    auto r = oracle_.segment(patch, box);
    --in_flight;
    return r;
  }
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};

 private:
  OracleSegmenter oracle_;
};

}  // namespace

TEST_CASE("pseudolabel_corpus honors max_concurrency = 1") {
  auto dir = temp_dir("pseudo_serialized");
  data::Corpus corpus;
  for (int i = 0; i < 8; ++i) {
    const std::string pid = "p" + std::to_string(i);
    data::Patch p;
    p.patch_id = pid;
    p.image = RgbImage(8, 8);
    corpus.add_patch(std::move(p));
    data::InstanceMask m;
    m.instance_id = "i" + std::to_string(i);
    m.patch_id = pid;
    m.cell_class = data::CellClass::podocyte;
    m.mask = Mask(8, 8, 0);
    m.mask.at(4, 4) = 1;
    corpus.add_instance(std::move(m));
  }

  SerialOnlySegmenter seg(corpus);
  boxgen::PerturbConfig pc;
  auto boxes = boxgen::boxes_for_corpus(corpus, BoxKind::tight, pc);
  PseudolabelOptions opts;
  opts.jobs = 4;  // requested parallelism must be capped at 1
  auto outcome = pseudolabel_corpus(corpus, boxes, seg, dir, opts);
  CHECK(outcome.failures.empty());
  CHECK(seg.max_in_flight.load() == 1);
}

TEST_CASE("oracle confidence equals the exact crop-Dice formula per instance") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    data::Corpus corpus;
    data::Patch p;
    p.patch_id = "p";
    p.image = RgbImage(24, 24);
    corpus.add_patch(std::move(p));
    data::InstanceMask m;
    m.instance_id = "i";
    m.patch_id = "p";
    m.cell_class = data::CellClass::podocyte;
    m.mask = Mask(24, 24, 0);
    const int n = int(rng.uniform_int(1, 60));
    for (int k = 0; k < n; ++k) {
      m.mask.at(int(rng.uniform_int(0, 23)), int(rng.uniform_int(0, 23))) = 1;
    }
    const Mask gt = m.mask;
    corpus.add_instance(std::move(m));

    boxgen::BoxPrompt t = boxgen::tight_box(*corpus.find_instance("i"));
    boxgen::PerturbConfig pc;
    pc.offset_kind = boxgen::OffsetKind::absolute_px;
    pc.max_offset = 6;
    pc.seed = uint64_t(trial);
    boxgen::BoxPrompt b = boxgen::random_box(t, 24, 24, pc, 0);

    SegmentResult r = oracle_segment(*corpus.find_instance("i"), b);
    uint64_t inter = 0, total = 0;
    for (int row = 0; row < 24; ++row) {
      for (int col = 0; col < 24; ++col) {
        if (!gt.at(row, col)) continue;
        ++total;
        if (row >= b.r_min && row <= b.r_max && col >= b.c_min && col <= b.c_max) ++inter;
      }
    }
    const double expect = total + inter == 0 ? 1.0 : 2.0 * double(inter) / double(inter + total);
    CHECK(r.confidence == doctest::Approx(expect).epsilon(1e-12));
    // Crop loss only ever removes pixels: Dice is monotone in the kept area.
    CHECK(count_true(r.mask) == inter);
  }
}
