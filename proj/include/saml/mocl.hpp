#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saml/dataset.hpp"
#include "saml/net.hpp"

namespace saml::mocl {

/// Per-pixel loss weight in [0,1]; modulates the corrective-learning loss.
struct ConfidenceMap {
  std::string patch_id;
  Grid<float> weights;
};

enum class SimilarityAggregation { mean, max };
enum class ConfidenceRefresh { per_batch, per_epoch };
enum class BackgroundConfidence { anchored, uniform };

std::string to_string(SimilarityAggregation a);
SimilarityAggregation similarity_aggregation_from_string(const std::string& s);

struct ModelConfig {
  int channels = 8;
  int embed_dim = 32;
  uint64_t seed = 1;
};

struct MoclConfig {
  double k_fraction = 0.05;  // per-class top-k as a fraction of labeled pixels, min 1
  int warmup_epochs = 5;     // plain CE before reweighting kicks in
  int epochs = 20;
  int batch_size = 4;
  double learning_rate = 1e-3;
  uint64_t seed = 1;
  SimilarityAggregation similarity_aggregation = SimilarityAggregation::mean;
  ConfidenceRefresh confidence_refresh = ConfidenceRefresh::per_batch;
  BackgroundConfidence background_confidence = BackgroundConfidence::anchored;
  int sample_pixels = 0;  // 0 = exhaustive similarity map; >0 = stochastic subset

  void validate() const;
};

/// Top-k most confident pixels of one class: the pixels labeled `cls` whose
/// predicted probability for `cls` is highest. k = max(1, round(k_fraction *
/// n_labeled)); ties resolve in row-major pixel order.
struct AnchorSet {
  uint8_t cls = 0;
  std::vector<uint32_t> pixels;  // row-major indices
  std::vector<float> embeddings;  // |pixels| x D, raw (unnormalized)
};

AnchorSet select_topk_anchors(const net::Tensor& probs, const net::Tensor& embeddings,
                              const ClassGrid& labels, uint8_t cls, double k_fraction);

struct ConfidenceOptions {
  SimilarityAggregation aggregation = SimilarityAggregation::mean;
  BackgroundConfidence background = BackgroundConfidence::anchored;
  int sample_pixels = 0;
  uint64_t sample_seed = 0;
};

/// Per-pixel weight from cosine similarity to same-class anchors:
/// weight = (s+1)/2 clamped to [0,1], with s the aggregated cosine between
/// the pixel embedding and the anchors of its annotated class. Pixels of a
/// class with no anchors get weight 1; zero-norm embeddings contribute
/// cosine 0 (with a warning).
ConfidenceMap confidence_from_anchors(const std::map<uint8_t, AnchorSet>& anchors,
                                      const net::Tensor& embeddings, const ClassGrid& labels,
                                      const ConfidenceOptions& options = {});

/// Softmax probabilities from logits, channelwise per pixel.
net::Tensor softmax(const net::Tensor& logits);

/// Confidence-weighted cross-entropy: sum_p w(p) CE(p) / sum_p w(p).
/// Weights are constants for gradient purposes. Non-finite logits are a hard
/// error; an all-zero weight sum yields loss 0. When grad_out is non-null it
/// receives d(loss)/d(logits) in the logits layout.
double mocl_loss(const net::Tensor& logits, const ClassGrid& labels,
                 const Grid<float>& confidence, std::vector<double>* grad_out = nullptr);

// --- training -----------------------------------------------------------------

struct Checkpoint {
  std::string arch;
  ModelConfig model;
  MoclConfig mocl;
  uint64_t seed = 0;
  std::vector<float> weights;

  net::UNet restore() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_dice_podocyte = 0;
  double val_dice_mesangial = 0;
  double val_dice_macro = 0;
  double mean_confidence = 1.0;
};

struct TrainData {
  const data::Corpus* corpus = nullptr;
  const std::map<std::string, data::LabelMap>* labels = nullptr;  // training targets
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

struct TrainResult {
  Checkpoint checkpoint;  // best validation macro Dice
  int best_epoch = 0;
  std::vector<EpochStats> history;
  std::vector<float> final_weights;  // last completed epoch, for reproducibility checks
};

/// Train the segmenter. Epochs 1..warmup use uniform confidence (plain CE);
/// afterwards confidence is recomputed from the current model. The returned
/// checkpoint is the epoch with the best validation macro Dice.
TrainResult train(const TrainData& data, const ModelConfig& model_cfg, const MoclConfig& cfg);

// history.csv: epoch,train_loss,val_dice_podocyte,val_dice_mesangial,val_dice_macro,mean_confidence
void save_history(const std::filesystem::path& path, const std::vector<EpochStats>& history);

/// Per-pixel argmax prediction. Patches whose dimensions are not divisible by
/// the architecture stride are reflect-padded and cropped back.
data::LabelMap predict(const net::UNet& net, const data::Patch& patch);
data::LabelMap predict(const Checkpoint& ckpt, const data::Patch& patch);

}  // namespace saml::mocl
