#include "saml/config.hpp"

#include <fstream>

#include <json.hpp>

#include "saml/error.hpp"
#include "saml/rng.hpp"

namespace saml::harness {

using json = nlohmann::ordered_json;

void SyntheticSpec::validate() const {
  if (n_patches < 1) throw InputError("synth.n_patches must be >= 1");
  if (patch_size < 8) throw InputError("synth.patch_size must be >= 8");
  if (blobs_per_class_min < 0 || blobs_per_class_max < blobs_per_class_min) {
    throw InputError("synth blob count range invalid");
  }
  if (blob_radius_min < 1 || blob_radius_max < blob_radius_min) {
    throw InputError("synth blob radius range invalid");
  }
  if (injured_fraction < 0.0 || injured_fraction > 1.0) {
    throw InputError("synth.injured_fraction must be in [0,1]");
  }
  if (edge_softness < 0.0 || edge_softness > 1.0) {
    throw InputError("synth.edge_softness must be in [0,1]");
  }
  if (corruption_fraction < 0.0 || corruption_fraction > 1.0) {
    throw InputError("synth.corruption_fraction must be in [0,1]");
  }
  if (corruption_dilate_px < 0 || corruption_erode_px < 0) {
    throw InputError("synth corruption radii must be >= 0");
  }
  if (corruption_fraction > 0.0 && corruption_dilate_px == 0 && corruption_erode_px == 0) {
    throw InputError("synth corruption requested but both radii are 0");
  }
}

uint64_t PipelineConfig::box_seed() const {
  return boxes.seed ? boxes.seed : mix_seed({seed, fnv1a64("boxes")});
}
uint64_t PipelineConfig::split_seed() const {
  return split.seed ? split.seed : mix_seed({seed, fnv1a64("split")});
}
uint64_t PipelineConfig::mocl_seed() const {
  return mocl.train.seed ? mocl.train.seed : mix_seed({seed, fnv1a64("mocl")});
}
uint64_t PipelineConfig::synth_seed() const {
  return synth.seed ? synth.seed : mix_seed({seed, fnv1a64("synth")});
}
uint64_t PipelineConfig::model_seed() const { return mix_seed({mocl_seed(), fnv1a64("model")}); }

std::filesystem::path PipelineConfig::corpus_root() const { return paths.corpus_root; }
std::filesystem::path PipelineConfig::output_dir() const { return paths.output_dir; }

std::filesystem::path PipelineConfig::checkpoint_path() const {
  if (!paths.checkpoint.empty()) return paths.checkpoint;
  return output_dir() / "checkpoint.bin";
}

void PipelineConfig::validate() const {
  if (segmenter.backend != "oracle" && segmenter.backend != "external") {
    throw InputError("segmenter.backend must be 'oracle' or 'external'");
  }
  if (segmenter.threshold < 0.0 || segmenter.threshold > 1.0) {
    throw InputError("segmenter.threshold must be in [0,1]");
  }
  for (double r : split.ratios) {
    if (!(r > 0)) throw InputError("split.ratios must be positive");
  }
  if (boxes.max_offset < 0) throw InputError("boxes.max_offset must be >= 0");
  if (boxes.samples_per_instance < 1) throw InputError("boxes.samples_per_instance must be >= 1");
  if (mocl.channels < 1 || mocl.embed_dim < 1) throw InputError("mocl network size invalid");
  if (metrics.pooling != "micro" && metrics.pooling != "macro") {
    throw InputError("metrics.pooling must be 'micro' or 'macro'");
  }
  mocl.train.validate();
  synth.validate();
}

namespace {

std::string refresh_to_string(mocl::ConfidenceRefresh r) {
  return r == mocl::ConfidenceRefresh::per_batch ? "per_batch" : "per_epoch";
}
mocl::ConfidenceRefresh refresh_from_string(const std::string& s) {
  if (s == "per_batch") return mocl::ConfidenceRefresh::per_batch;
  if (s == "per_epoch") return mocl::ConfidenceRefresh::per_epoch;
  throw InputError("unknown confidence_refresh '" + s + "'");
}
std::string background_to_string(mocl::BackgroundConfidence b) {
  return b == mocl::BackgroundConfidence::anchored ? "anchored" : "uniform";
}
mocl::BackgroundConfidence background_from_string(const std::string& s) {
  if (s == "anchored") return mocl::BackgroundConfidence::anchored;
  if (s == "uniform") return mocl::BackgroundConfidence::uniform;
  throw InputError("unknown background_confidence '" + s + "'");
}
std::string offset_kind_to_string(boxgen::OffsetKind k) {
  return k == boxgen::OffsetKind::absolute_px ? "absolute" : "relative";
}
boxgen::OffsetKind offset_kind_from_string(const std::string& s) {
  if (s == "absolute") return boxgen::OffsetKind::absolute_px;
  if (s == "relative") return boxgen::OffsetKind::relative_frac;
  throw InputError("unknown offset_kind '" + s + "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string serialize_config(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["paths"] = {{"corpus_root", c.paths.corpus_root},
                {"output_dir", c.paths.output_dir},
                {"labels_dir", c.paths.labels_dir},
                {"checkpoint", c.paths.checkpoint}};
  j["boxes"] = {{"mode", boxgen::to_string(c.boxes.mode)},
                {"offset_kind", offset_kind_to_string(c.boxes.offset_kind)},
                {"max_offset", c.boxes.max_offset},
                {"seed", c.boxes.seed},
                {"samples_per_instance", c.boxes.samples_per_instance}};
  j["segmenter"] = {{"backend", c.segmenter.backend},
                    {"threshold", c.segmenter.threshold},
                    {"max_concurrency", c.segmenter.max_concurrency},
                    {"endpoint", c.segmenter.endpoint},
                    {"model_id", c.segmenter.model_id},
                    {"oracle_dilate_px", c.segmenter.oracle_dilate_px},
                    {"oracle_erode_px", c.segmenter.oracle_erode_px}};
  j["split"] = {{"ratios", c.split.ratios}, {"seed", c.split.seed}};
  j["mocl"] = {{"k_fraction", c.mocl.train.k_fraction},
               {"warmup_epochs", c.mocl.train.warmup_epochs},
               {"epochs", c.mocl.train.epochs},
               {"batch_size", c.mocl.train.batch_size},
               {"learning_rate", c.mocl.train.learning_rate},
               {"seed", c.mocl.train.seed},
               {"similarity_aggregation", mocl::to_string(c.mocl.train.similarity_aggregation)},
               {"confidence_refresh", refresh_to_string(c.mocl.train.confidence_refresh)},
               {"background_confidence", background_to_string(c.mocl.train.background_confidence)},
               {"sample_pixels", c.mocl.train.sample_pixels},
               {"channels", c.mocl.channels},
               {"embed_dim", c.mocl.embed_dim}};
  j["metrics"] = {{"pooling", c.metrics.pooling},
                  {"method", c.metrics.method},
                  {"group", c.metrics.group}};
  j["synth"] = {{"n_patches", c.synth.n_patches},
                {"patch_size", c.synth.patch_size},
                {"blobs_per_class_min", c.synth.blobs_per_class_min},
                {"blobs_per_class_max", c.synth.blobs_per_class_max},
                {"blob_radius_min", c.synth.blob_radius_min},
                {"blob_radius_max", c.synth.blob_radius_max},
                {"edge_softness", c.synth.edge_softness},
                {"injured_fraction", c.synth.injured_fraction},
                {"corruption_fraction", c.synth.corruption_fraction},
                {"corruption_dilate_px", c.synth.corruption_dilate_px},
                {"corruption_erode_px", c.synth.corruption_erode_px},
                {"seed", c.synth.seed},
                {"annotator_id", c.synth.annotator_id}};
  return j.dump(2) + "\n";
}

PipelineConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }

  PipelineConfig c;
  try {
    get_if(j, "seed", c.seed);
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      get_if(p, "corpus_root", c.paths.corpus_root);
      get_if(p, "output_dir", c.paths.output_dir);
      get_if(p, "labels_dir", c.paths.labels_dir);
      get_if(p, "checkpoint", c.paths.checkpoint);
    }
    if (j.contains("boxes")) {
      const auto& b = j["boxes"];
      if (b.contains("mode")) c.boxes.mode = boxgen::box_kind_from_string(b["mode"]);
      if (b.contains("offset_kind")) {
        c.boxes.offset_kind = offset_kind_from_string(b["offset_kind"]);
      }
      get_if(b, "max_offset", c.boxes.max_offset);
      get_if(b, "seed", c.boxes.seed);
      get_if(b, "samples_per_instance", c.boxes.samples_per_instance);
    }
    if (j.contains("segmenter")) {
      const auto& s = j["segmenter"];
      get_if(s, "backend", c.segmenter.backend);
      get_if(s, "threshold", c.segmenter.threshold);
      get_if(s, "max_concurrency", c.segmenter.max_concurrency);
      get_if(s, "endpoint", c.segmenter.endpoint);
      get_if(s, "model_id", c.segmenter.model_id);
      get_if(s, "oracle_dilate_px", c.segmenter.oracle_dilate_px);
      get_if(s, "oracle_erode_px", c.segmenter.oracle_erode_px);
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      get_if(s, "ratios", c.split.ratios);
      get_if(s, "seed", c.split.seed);
    }
    if (j.contains("mocl")) {
      const auto& m = j["mocl"];
      get_if(m, "k_fraction", c.mocl.train.k_fraction);
      get_if(m, "warmup_epochs", c.mocl.train.warmup_epochs);
      get_if(m, "epochs", c.mocl.train.epochs);
      get_if(m, "batch_size", c.mocl.train.batch_size);
      get_if(m, "learning_rate", c.mocl.train.learning_rate);
      get_if(m, "seed", c.mocl.train.seed);
      if (m.contains("similarity_aggregation")) {
        c.mocl.train.similarity_aggregation =
            mocl::similarity_aggregation_from_string(m["similarity_aggregation"]);
      }
      if (m.contains("confidence_refresh")) {
        c.mocl.train.confidence_refresh = refresh_from_string(m["confidence_refresh"]);
      }
      if (m.contains("background_confidence")) {
        c.mocl.train.background_confidence = background_from_string(m["background_confidence"]);
      }
      get_if(m, "sample_pixels", c.mocl.train.sample_pixels);
      get_if(m, "channels", c.mocl.channels);
      get_if(m, "embed_dim", c.mocl.embed_dim);
    }
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      get_if(m, "pooling", c.metrics.pooling);
      get_if(m, "method", c.metrics.method);
      get_if(m, "group", c.metrics.group);
    }
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      get_if(s, "n_patches", c.synth.n_patches);
      get_if(s, "patch_size", c.synth.patch_size);
      get_if(s, "blobs_per_class_min", c.synth.blobs_per_class_min);
      get_if(s, "blobs_per_class_max", c.synth.blobs_per_class_max);
      get_if(s, "blob_radius_min", c.synth.blob_radius_min);
      get_if(s, "blob_radius_max", c.synth.blob_radius_max);
      get_if(s, "edge_softness", c.synth.edge_softness);
      get_if(s, "injured_fraction", c.synth.injured_fraction);
      get_if(s, "corruption_fraction", c.synth.corruption_fraction);
      get_if(s, "corruption_dilate_px", c.synth.corruption_dilate_px);
      get_if(s, "corruption_erode_px", c.synth.corruption_erode_px);
      get_if(s, "seed", c.synth.seed);
      get_if(s, "annotator_id", c.synth.annotator_id);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config field has wrong type: ") + e.what());
  }

  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

void echo_config(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "config_echo.json", std::ios::binary);
  if (!out) throw InputError("cannot write config echo in " + out_dir.string());
  out << serialize_config(cfg);
}

}  // namespace saml::harness
