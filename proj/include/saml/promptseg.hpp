#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "saml/boxgen.hpp"
#include "saml/dataset.hpp"

namespace saml::promptseg {

struct SegmenterCapabilities {
  bool accepts_box_prompts = true;
  bool returns_confidence = false;
  /// 0 = safe for unbounded concurrent calls; 1 = serialize all calls.
  int max_concurrency = 0;
};

/// One per-prompt segmentation: mask matching the patch dimensions plus a
/// confidence in [0,1] (1.0 when the backend reports none).
struct SegmentResult {
  std::string instance_id;
  Mask mask;
  double confidence = 1.0;
};

/// Pluggable promptable-segmenter backend. One segment() call per box prompt.
class PromptableSegmenter {
 public:
  virtual ~PromptableSegmenter() = default;
  virtual SegmenterCapabilities capabilities() const = 0;
  virtual std::string id() const = 0;
  virtual std::string version() const = 0;
  virtual SegmentResult segment(const data::Patch& patch, const boxgen::BoxPrompt& box) = 0;
};

struct OracleNoise {
  int dilate_px = 0;
  int erode_px = 0;
};

/// Test double standing in for the zero-shot foundation segmenter: returns
/// the ground-truth instance mask cropped to the prompt box, optionally
/// dilated/eroded; confidence = Dice against the full ground truth.
class OracleSegmenter : public PromptableSegmenter {
 public:
  OracleSegmenter(const data::Corpus& corpus, OracleNoise noise = {});

  SegmenterCapabilities capabilities() const override {
    return {true, true, 0};  // pure lookups; concurrency-safe
  }
  std::string id() const override { return "oracle"; }
  std::string version() const override;
  SegmentResult segment(const data::Patch& patch, const boxgen::BoxPrompt& box) override;

 private:
  const data::Corpus& corpus_;
  OracleNoise noise_;
};

/// Standalone oracle primitive (used directly by tests and by OracleSegmenter).
SegmentResult oracle_segment(const data::InstanceMask& ground_truth,
                             const boxgen::BoxPrompt& box, OracleNoise noise = {});

struct ExternalAdapterConfig {
  std::string endpoint;       // e.g. http://127.0.0.1:8188
  std::string model_id;       // reported in provenance
  double threshold = 0.5;     // soft-mask binarization threshold
  int max_concurrency = 1;
  int timeout_s = 30;
};

/// Adapter for an out-of-process promptable segmenter reached over HTTP.
/// POST {endpoint}/segment with JSON:
///   {"model": str, "patch_id": str, "height": H, "width": W,
///    "image_b64": base64 of H*W*3 RGB bytes,
///    "box": {"r_min":..,"c_min":..,"r_max":..,"c_max":..},
///    "cell_class": str}
/// Expected reply: {"mask_b64": base64 of H*W soft values in 0..255,
///                  "confidence": optional float in [0,1]}
/// Soft masks binarize at threshold*255. Transport failures and 5xx raise
/// BackendUnavailableError (retryable); malformed replies raise
/// ContractViolationError.
class ExternalModelAdapter : public PromptableSegmenter {
 public:
  explicit ExternalModelAdapter(ExternalAdapterConfig cfg);
  ~ExternalModelAdapter() override;

  SegmenterCapabilities capabilities() const override {
    return {true, true, cfg_.max_concurrency};
  }
  std::string id() const override { return "external"; }
  std::string version() const override { return cfg_.model_id + "@" + cfg_.endpoint; }
  SegmentResult segment(const data::Patch& patch, const boxgen::BoxPrompt& box) override;

 private:
  ExternalAdapterConfig cfg_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Run one prompt per box through the segmenter, preserving order. Transient
/// failures are collected and rethrown as one BackendUnavailableError
/// carrying every failing instance_id; wrong-shaped masks are hard
/// contract violations.
std::vector<SegmentResult> segment_with_prompts(PromptableSegmenter& segmenter,
                                                const data::Patch& patch,
                                                const std::vector<boxgen::BoxPrompt>& prompts);

struct MergePolicy {
  // Winner on overlap: highest confidence, tie -> smaller mask area,
  // tie -> lower class index, tie -> lower instance_id.
};

/// Merge per-instance results into a multi-class label map.
data::LabelMap merge_results(const std::vector<SegmentResult>& results,
                             const std::map<std::string, data::CellClass>& class_of,
                             MergePolicy policy = {});

enum class OnBackendError {
  fail_patch,   // leave the patch unwritten (retryable with resume); default
  skip_prompt,  // complete the patch without the failing prompts
};

struct PseudolabelOptions {
  bool resume = false;
  int jobs = 1;
  OnBackendError on_backend_error = OnBackendError::fail_patch;
  MergePolicy merge;
};

struct PseudolabelOutcome {
  size_t patches_written = 0;
  size_t patches_skipped = 0;  // already present (resume)
  std::map<std::string, std::string> failures;  // patch_id -> message
};

/// Segment every patch's boxes and write per-patch pseudo-label maps in the
/// dataset labelmap format plus a pseudolabels.csv provenance file. Rerunning
/// with resume=true skips completed patches and yields byte-identical final
/// artifacts.
PseudolabelOutcome pseudolabel_corpus(const data::Corpus& corpus,
                                      const std::vector<boxgen::CorpusBox>& boxes,
                                      PromptableSegmenter& segmenter,
                                      const std::filesystem::path& out_dir,
                                      const PseudolabelOptions& options = {});

}  // namespace saml::promptseg
