#pragma once

#include <memory>

#include "saml/config.hpp"
#include "saml/metrics.hpp"
#include "saml/mocl.hpp"
#include "saml/promptseg.hpp"
#include "saml/synth.hpp"

namespace saml::harness {

/// Build the configured segmenter backend. backend=external with no endpoint
/// raises BackendUnavailableError ("segmenter unavailable").
std::unique_ptr<promptseg::PromptableSegmenter> make_segmenter(const PipelineConfig& cfg,
                                                               const data::Corpus& corpus);

/// Ground-truth label map for a patch: the stored labelmap when present,
/// otherwise merged from the patch's clean instance masks.
data::LabelMap reference_labelmap(const data::Corpus& corpus, const std::string& patch_id);

/// Load or (deterministically) compute and persist the split for a corpus.
data::SplitAssignment ensure_split(const PipelineConfig& cfg, const data::Corpus& corpus);

struct RunOptions {
  bool resume = false;
  int jobs = 1;
};

void run_synth(const PipelineConfig& cfg);
void run_boxes(const PipelineConfig& cfg);
void run_pseudolabel(const PipelineConfig& cfg, const RunOptions& opts);
void run_train(const PipelineConfig& cfg);
metrics::EvalReport run_evaluate(const PipelineConfig& cfg, const RunOptions& opts);

/// Train + evaluate one row per method in {pixel-labels, tight-box,
/// random-box}, each with a distinct derived seed, and consolidate into one
/// report.
metrics::EvalReport run_matrix(const PipelineConfig& cfg, const RunOptions& opts);

}  // namespace saml::harness
