#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "saml/boxgen.hpp"
#include "saml/mocl.hpp"
#include "saml/promptseg.hpp"

namespace saml::harness {

struct SyntheticSpec {
  int n_patches = 50;
  int patch_size = 64;
  int blobs_per_class_min = 1;
  int blobs_per_class_max = 3;
  int blob_radius_min = 5;
  int blob_radius_max = 10;
  /// 0 = hard color edge at the mask boundary; towards 1 the blob color
  /// fades into the background across the boundary, making boundary pixels
  /// genuinely ambiguous (the regime where annotation noise matters).
  double edge_softness = 0.0;
  double injured_fraction = 0.5;
  double corruption_fraction = 0.0;  // fraction of instances perturbed in the noisy set
  int corruption_dilate_px = 2;
  int corruption_erode_px = 2;
  uint64_t seed = 0;  // 0 = derive from the global seed
  std::string annotator_id = "synth";

  void validate() const;
};

/// Full experiment configuration. Parses from / serializes to a single JSON
/// file; parse -> serialize -> parse is the identity. Sub-seeds left at 0
/// derive deterministically from the global seed.
struct PipelineConfig {
  uint64_t seed = 1;

  struct Paths {
    std::string corpus_root;
    std::string output_dir;
    std::string labels_dir;  // training labels override; default <output_dir>/labelmaps,
                             // falling back to <corpus_root>/labelmaps
    std::string checkpoint;  // default <output_dir>/checkpoint.bin
  } paths;

  struct Boxes {
    boxgen::BoxKind mode = boxgen::BoxKind::tight;
    boxgen::OffsetKind offset_kind = boxgen::OffsetKind::relative_frac;
    double max_offset = 0.10;
    uint64_t seed = 0;
    int samples_per_instance = 1;
  } boxes;

  struct Segmenter {
    std::string backend = "oracle";  // oracle | external
    double threshold = 0.5;
    int max_concurrency = 1;
    std::string endpoint;
    std::string model_id;
    int oracle_dilate_px = 0;
    int oracle_erode_px = 0;
  } segmenter;

  struct SplitCfg {
    std::array<double, 3> ratios = {6, 1, 3};
    uint64_t seed = 0;
  } split;

  struct Mocl {
    mocl::MoclConfig train;
    int channels = 8;
    int embed_dim = 32;
  } mocl;

  struct Metrics {
    std::string pooling = "micro";  // column quoted by the text table
    std::string method = "model";
    std::string group = "all";
  } metrics;

  SyntheticSpec synth;

  // Effective seeds (0 = derived from the global seed).
  uint64_t box_seed() const;
  uint64_t split_seed() const;
  uint64_t mocl_seed() const;
  uint64_t synth_seed() const;
  uint64_t model_seed() const;

  std::filesystem::path corpus_root() const;
  std::filesystem::path output_dir() const;
  std::filesystem::path checkpoint_path() const;

  void validate() const;
};

PipelineConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const PipelineConfig& cfg);
PipelineConfig parse_config(const std::string& text);

/// Every command echoes its full configuration into the output directory so
/// artifacts stay replayable.
void echo_config(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace saml::harness
