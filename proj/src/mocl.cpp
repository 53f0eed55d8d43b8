#include "saml/mocl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "saml/csv.hpp"
#include "saml/error.hpp"
#include "saml/log.hpp"
#include "saml/metrics.hpp"
#include "saml/rng.hpp"

namespace saml::mocl {

using json = nlohmann::ordered_json;

std::string to_string(SimilarityAggregation a) {
  return a == SimilarityAggregation::mean ? "mean" : "max";
}

SimilarityAggregation similarity_aggregation_from_string(const std::string& s) {
  if (s == "mean") return SimilarityAggregation::mean;
  if (s == "max") return SimilarityAggregation::max;
  throw InputError("unknown similarity aggregation '" + s + "'");
}

void MoclConfig::validate() const {
  if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw InputError("k_fraction must be in (0,1]");
  if (warmup_epochs < 0) throw InputError("warmup_epochs must be >= 0");
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw InputError("learning_rate must be positive");
  if (sample_pixels < 0) throw InputError("sample_pixels must be >= 0");
}

// --- anchors -----------------------------------------------------------------

AnchorSet select_topk_anchors(const net::Tensor& probs, const net::Tensor& embeddings,
                              const ClassGrid& labels, uint8_t cls, double k_fraction) {
  if (probs.h != labels.height() || probs.w != labels.width() || embeddings.h != probs.h ||
      embeddings.w != probs.w) {
    throw InputError("select_topk_anchors: grid dimensions disagree");
  }
  if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw InputError("k_fraction must be in (0,1]");
  if (cls >= probs.c) throw InputError("select_topk_anchors: class out of range");

  AnchorSet out;
  out.cls = cls;

  std::vector<uint32_t> labeled;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == cls) labeled.push_back(uint32_t(i));
  }
  if (labeled.empty()) return out;

  const size_t k = std::max<size_t>(1, size_t(std::llround(k_fraction * double(labeled.size()))));
  const float* p = probs.plane(cls);

  // Stable sort keeps row-major order among equal probabilities.
  std::stable_sort(labeled.begin(), labeled.end(),
                   [&](uint32_t a, uint32_t b) { return p[a] > p[b]; });
  labeled.resize(std::min(k, labeled.size()));
  std::sort(labeled.begin(), labeled.end());

  out.pixels = std::move(labeled);
  out.embeddings.reserve(out.pixels.size() * embeddings.c);
  for (uint32_t px : out.pixels) {
    for (int d = 0; d < embeddings.c; ++d) {
      out.embeddings.push_back(embeddings.v[size_t(d) * embeddings.plane_size() + px]);
    }
  }
  return out;
}

// --- confidence ---------------------------------------------------------------

namespace {

// L2-normalize rows of a K x D matrix in place; zero rows stay zero.
bool normalize_rows(std::vector<float>& m, size_t d) {
  bool saw_zero = false;
  for (size_t i = 0; i + d <= m.size(); i += d) {
    double n2 = 0;
    for (size_t j = 0; j < d; ++j) n2 += double(m[i + j]) * m[i + j];
    if (n2 == 0) {
      saw_zero = true;
      continue;
    }
    const float inv = float(1.0 / std::sqrt(n2));
    for (size_t j = 0; j < d; ++j) m[i + j] *= inv;
  }
  return saw_zero;
}

}  // namespace

ConfidenceMap confidence_from_anchors(const std::map<uint8_t, AnchorSet>& anchors,
                                      const net::Tensor& embeddings, const ClassGrid& labels,
                                      const ConfidenceOptions& options) {
  const int h = labels.height(), w = labels.width();
  if (embeddings.h != h || embeddings.w != w) {
    throw InputError("confidence_from_anchors: dimensions disagree");
  }
  const int D = embeddings.c;
  const size_t n = labels.size();

  ConfidenceMap out;
  out.weights = Grid<float>(h, w, 1.0f);

  // Per class: normalized anchor matrix, plus the mean anchor vector for the
  // fast mean-aggregation path (mean of cosines == dot with mean unit vector).
  struct ClassAnchors {
    std::vector<float> rows;  // K x D normalized
    std::vector<float> mean;  // D
    size_t k = 0;
  };
  // Zero-norm embeddings are common early in training (dead ReLU pixels);
  // warn once per process, not once per batch.
  static std::atomic<bool> warned_zero{false};
  static std::atomic<bool> warned_zero_pixel{false};

  std::map<uint8_t, ClassAnchors> prepped;
  for (const auto& [cls, aset] : anchors) {
    if (aset.pixels.empty()) continue;
    ClassAnchors ca;
    ca.rows = aset.embeddings;
    ca.k = aset.pixels.size();
    if (ca.rows.size() != ca.k * size_t(D)) {
      throw InputError("anchor embedding matrix has wrong size for class " +
                       std::to_string(int(cls)));
    }
    if (normalize_rows(ca.rows, size_t(D)) && !warned_zero.exchange(true)) {
      log_warn("zero-norm anchor embedding treated as cosine 0");
    }
    ca.mean.assign(D, 0.f);
    for (size_t i = 0; i < ca.k; ++i) {
      for (int d = 0; d < D; ++d) ca.mean[d] += ca.rows[i * D + d];
    }
    for (int d = 0; d < D; ++d) ca.mean[d] /= float(ca.k);
    prepped[cls] = std::move(ca);
  }

  // Optional stochastic variant: only a seeded subset of pixels is scored,
  // everything else keeps weight 1.
  std::vector<uint8_t> scored;
  if (options.sample_pixels > 0 && size_t(options.sample_pixels) < n) {
    scored.assign(n, 0);
    std::vector<uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed({options.sample_seed, 0x5a4d1ULL}));
    rng.shuffle(idx);
    for (int i = 0; i < options.sample_pixels; ++i) scored[idx[i]] = 1;
  }

  const size_t plane = embeddings.plane_size();
  std::vector<float> e(D);
  for (size_t i = 0; i < n; ++i) {
    if (!scored.empty() && !scored[i]) continue;
    const uint8_t cls = labels[i];
    if (options.background == BackgroundConfidence::uniform && cls == 0) continue;
    auto it = prepped.find(cls);
    if (it == prepped.end()) continue;  // empty anchor set -> weight 1

    double n2 = 0;
    for (int d = 0; d < D; ++d) {
      e[d] = embeddings.v[size_t(d) * plane + i];
      n2 += double(e[d]) * e[d];
    }
    double s = 0;
    if (n2 == 0) {
      if (!warned_zero_pixel.exchange(true)) {
        log_warn("zero-norm pixel embedding treated as cosine 0");
      }
      s = 0;
    } else {
      const double inv = 1.0 / std::sqrt(n2);
      const ClassAnchors& ca = it->second;
      if (options.aggregation == SimilarityAggregation::mean) {
        double dot = 0;
        for (int d = 0; d < D; ++d) dot += double(e[d]) * ca.mean[d];
        s = dot * inv;
      } else {
        double best = -1.0;
        for (size_t a = 0; a < ca.k; ++a) {
          double dot = 0;
          for (int d = 0; d < D; ++d) dot += double(e[d]) * ca.rows[a * D + d];
          best = std::max(best, dot * inv);
        }
        s = best;
      }
    }
    out.weights[i] = float(std::clamp((s + 1.0) / 2.0, 0.0, 1.0));
  }
  return out;
}

// --- loss ---------------------------------------------------------------------

net::Tensor softmax(const net::Tensor& logits) {
  net::Tensor probs(logits.c, logits.h, logits.w);
  const size_t n = logits.plane_size();
  for (size_t i = 0; i < n; ++i) {
    float m = logits.v[i];
    for (int c = 1; c < logits.c; ++c) m = std::max(m, logits.v[size_t(c) * n + i]);
    double sum = 0;
    for (int c = 0; c < logits.c; ++c) {
      const double ex = std::exp(double(logits.v[size_t(c) * n + i]) - m);
      probs.v[size_t(c) * n + i] = float(ex);
      sum += ex;
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < logits.c; ++c) {
      probs.v[size_t(c) * n + i] = float(probs.v[size_t(c) * n + i] * inv);
    }
  }
  return probs;
}

double mocl_loss(const net::Tensor& logits, const ClassGrid& labels,
                 const Grid<float>& confidence, std::vector<double>* grad_out) {
  const size_t n = logits.plane_size();
  if (labels.size() != n || confidence.size() != n) {
    throw InputError("mocl_loss: shapes disagree");
  }
  for (float v : logits.v) {
    if (!std::isfinite(v)) throw ContractViolationError("mocl_loss: non-finite logit");
  }
  for (size_t i = 0; i < n; ++i) {
    if (confidence[i] < 0.f || confidence[i] > 1.f) {
      throw InputError("mocl_loss: confidence weight outside [0,1]");
    }
    if (labels[i] >= logits.c) throw InputError("mocl_loss: label out of class range");
  }

  if (grad_out) grad_out->assign(logits.v.size(), 0.0);

  double weight_sum = 0;
  for (size_t i = 0; i < n; ++i) weight_sum += confidence[i];
  if (weight_sum == 0) {
    log_warn("mocl_loss: all confidence weights are zero; loss defined as 0");
    return 0.0;
  }

  double weighted_ce = 0;
  std::vector<double> p(logits.c);
  for (size_t i = 0; i < n; ++i) {
    const double wgt = confidence[i];
    double m = logits.v[i];
    for (int c = 1; c < logits.c; ++c) m = std::max(m, double(logits.v[size_t(c) * n + i]));
    double sum = 0;
    for (int c = 0; c < logits.c; ++c) {
      p[c] = std::exp(double(logits.v[size_t(c) * n + i]) - m);
      sum += p[c];
    }
    const double lse = m + std::log(sum);
    const uint8_t y = labels[i];
    weighted_ce += wgt * (lse - double(logits.v[size_t(y) * n + i]));
    if (grad_out && wgt != 0) {
      for (int c = 0; c < logits.c; ++c) {
        const double soft = p[c] / sum;
        (*grad_out)[size_t(c) * n + i] = wgt * (soft - (c == y ? 1.0 : 0.0));
      }
    }
  }

  if (grad_out) {
    const double inv = 1.0 / weight_sum;
    for (auto& g : *grad_out) g *= inv;
  }
  return weighted_ce / weight_sum;
}

// --- checkpoint -----------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'S', 'A', 'M', 'L', 'C', 'K', 'P', '1'};
}

net::UNet Checkpoint::restore() const {
  net::UNet n(model.channels, model.embed_dim, data::kNumClasses, model.seed);
  if (n.arch() != arch) {
    throw ContractViolationError("checkpoint arch '" + arch + "' does not match '" + n.arch() +
                                 "'");
  }
  n.load_weights(weights);
  return n;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json header;
  header["arch"] = ckpt.arch;
  header["model"] = {{"channels", ckpt.model.channels},
                     {"embed_dim", ckpt.model.embed_dim},
                     {"seed", ckpt.model.seed}};
  header["mocl"] = {{"k_fraction", ckpt.mocl.k_fraction},
                    {"warmup_epochs", ckpt.mocl.warmup_epochs},
                    {"epochs", ckpt.mocl.epochs},
                    {"batch_size", ckpt.mocl.batch_size},
                    {"learning_rate", ckpt.mocl.learning_rate},
                    {"seed", ckpt.mocl.seed},
                    {"similarity_aggregation", to_string(ckpt.mocl.similarity_aggregation)},
                    {"confidence_refresh",
                     ckpt.mocl.confidence_refresh == ConfidenceRefresh::per_batch
                         ? "per_batch"
                         : "per_epoch"},
                    {"background_confidence",
                     ckpt.mocl.background_confidence == BackgroundConfidence::anchored
                         ? "anchored"
                         : "uniform"},
                    {"sample_pixels", ckpt.mocl.sample_pixels}};
  header["seed"] = ckpt.seed;
  header["n_weights"] = ckpt.weights.size();
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), std::streamsize(hs.size()));
  out.write(reinterpret_cast<const char*>(ckpt.weights.data()),
            std::streamsize(ckpt.weights.size() * sizeof(float)));
  if (!out) throw InputError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactMissingError("checkpoint not found: " + path.string());

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ContractViolationError("not a checkpoint file: " + path.string());
  }
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (1u << 20)) throw ContractViolationError("corrupt checkpoint header");
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  if (!in) throw ContractViolationError("corrupt checkpoint header");

  Checkpoint ckpt;
  try {
    json header = json::parse(hs);
    ckpt.arch = header.at("arch").get<std::string>();
    ckpt.model.channels = header.at("model").at("channels").get<int>();
    ckpt.model.embed_dim = header.at("model").at("embed_dim").get<int>();
    ckpt.model.seed = header.at("model").at("seed").get<uint64_t>();
    const auto& mc = header.at("mocl");
    ckpt.mocl.k_fraction = mc.at("k_fraction").get<double>();
    ckpt.mocl.warmup_epochs = mc.at("warmup_epochs").get<int>();
    ckpt.mocl.epochs = mc.at("epochs").get<int>();
    ckpt.mocl.batch_size = mc.at("batch_size").get<int>();
    ckpt.mocl.learning_rate = mc.at("learning_rate").get<double>();
    ckpt.mocl.seed = mc.at("seed").get<uint64_t>();
    ckpt.mocl.similarity_aggregation =
        similarity_aggregation_from_string(mc.at("similarity_aggregation").get<std::string>());
    if (mc.contains("confidence_refresh")) {
      ckpt.mocl.confidence_refresh = mc["confidence_refresh"] == "per_epoch"
                                         ? ConfidenceRefresh::per_epoch
                                         : ConfidenceRefresh::per_batch;
    }
    if (mc.contains("background_confidence")) {
      ckpt.mocl.background_confidence = mc["background_confidence"] == "uniform"
                                            ? BackgroundConfidence::uniform
                                            : BackgroundConfidence::anchored;
    }
    if (mc.contains("sample_pixels")) ckpt.mocl.sample_pixels = mc["sample_pixels"].get<int>();
    ckpt.seed = header.at("seed").get<uint64_t>();
    const size_t n = header.at("n_weights").get<size_t>();
    ckpt.weights.resize(n);
  } catch (const json::exception& e) {
    throw ContractViolationError(std::string("corrupt checkpoint header: ") + e.what());
  }

  in.read(reinterpret_cast<char*>(ckpt.weights.data()),
          std::streamsize(ckpt.weights.size() * sizeof(float)));
  if (!in) throw ContractViolationError("checkpoint weight blob truncated");
  return ckpt;
}

// --- training --------------------------------------------------------------------

namespace {

ClassGrid labels_for(const TrainData& data, const std::string& patch_id) {
  auto it = data.labels->find(patch_id);
  if (it == data.labels->end()) {
    throw ArtifactMissingError("no training labels for patch " + patch_id);
  }
  return it->second.classes;
}

std::map<uint8_t, AnchorSet> anchors_for_image(const net::Tensor& probs,
                                               const net::Tensor& embed, const ClassGrid& labels,
                                               const MoclConfig& cfg) {
  std::map<uint8_t, AnchorSet> anchors;
  std::set<uint8_t> present(labels.data().begin(), labels.data().end());
  for (uint8_t cls : present) {
    if (cls == 0 && cfg.background_confidence == BackgroundConfidence::uniform) continue;
    anchors[cls] = select_topk_anchors(probs, embed, labels, cls, cfg.k_fraction);
  }
  return anchors;
}

struct ValScores {
  double dice_podocyte = 0, dice_mesangial = 0, dice_macro = 0;
};

ValScores validate(const net::UNet& model, const TrainData& data) {
  // Pooled (micro) Dice per foreground class over the validation split.
  std::map<data::CellClass, std::array<uint64_t, 3>> counts;  // tp, fp, fn
  for (const auto& id : data.val_ids) {
    const data::Patch& patch = data.corpus->patch(id);
    data::LabelMap pred = predict(model, patch);
    data::LabelMap ref;
    ref.patch_id = id;
    ref.classes = labels_for(data, id);
    for (data::CellClass c : data::kForegroundClasses) {
      auto s = metrics::class_f1(pred, ref, c);
      counts[c][0] += s.tp;
      counts[c][1] += s.fp;
      counts[c][2] += s.fn;
    }
  }
  auto dice = [&](data::CellClass c) {
    const auto& k = counts[c];
    const uint64_t denom = 2 * k[0] + k[1] + k[2];
    return denom == 0 ? 1.0 : 2.0 * double(k[0]) / double(denom);
  };
  ValScores v;
  v.dice_podocyte = dice(data::CellClass::podocyte);
  v.dice_mesangial = dice(data::CellClass::mesangial);
  v.dice_macro = 0.5 * (v.dice_podocyte + v.dice_mesangial);
  return v;
}

}  // namespace

TrainResult train(const TrainData& data, const ModelConfig& model_cfg, const MoclConfig& cfg) {
  cfg.validate();
  if (!data.corpus || !data.labels) throw InputError("train: corpus and labels required");
  if (data.train_ids.empty()) throw InputError("train: empty train split");
  if (data.val_ids.empty()) throw InputError("train: empty validation split");

  net::UNet model(model_cfg.channels, model_cfg.embed_dim, data::kNumClasses, model_cfg.seed);
  net::Adam opt(model.params(), cfg.learning_rate);

  TrainResult result;
  result.checkpoint.arch = model.arch();
  result.checkpoint.model = model_cfg;
  result.checkpoint.mocl = cfg;
  result.checkpoint.seed = cfg.seed;

  std::vector<std::string> order = data.train_ids;
  net::UNet::Activations acts;
  net::Tensor dlogits;
  double best_dice = -1.0;

  // Per-epoch anchor cache for ConfidenceRefresh::per_epoch.
  std::map<std::string, std::map<uint8_t, AnchorSet>> epoch_anchors;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed({cfg.seed, uint64_t(epoch)}));
    shuffle_rng.shuffle(order);
    const bool reweight = epoch > cfg.warmup_epochs;

    if (reweight && cfg.confidence_refresh == ConfidenceRefresh::per_epoch) {
      epoch_anchors.clear();
      for (const auto& id : order) {
        const data::Patch& patch = data.corpus->patch(id);
        model.forward(net::image_to_tensor(patch.image), acts);
        epoch_anchors[id] =
            anchors_for_image(softmax(acts.logits), acts.embed, labels_for(data, id), cfg);
      }
    }

    double loss_sum = 0;
    size_t loss_terms = 0;
    double conf_sum = 0;
    size_t conf_terms = 0;

    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
      model.zero_grad();
      const double inv_batch = 1.0 / double(end - start);

      for (size_t bi = start; bi < end; ++bi) {
        const std::string& id = order[bi];
        const data::Patch& patch = data.corpus->patch(id);
        const ClassGrid labels = labels_for(data, id);
        if (labels.height() != patch.image.height() || labels.width() != patch.image.width()) {
          throw InputError("training labels for patch " + id + " have mismatched dimensions");
        }

        model.forward(net::image_to_tensor(patch.image), acts);

        Grid<float> conf(labels.height(), labels.width(), 1.0f);
        if (reweight) {
          ConfidenceOptions copts;
          copts.aggregation = cfg.similarity_aggregation;
          copts.background = cfg.background_confidence;
          copts.sample_pixels = cfg.sample_pixels;
          copts.sample_seed = mix_seed({cfg.seed, uint64_t(epoch), fnv1a64(id)});
          const auto anchors =
              cfg.confidence_refresh == ConfidenceRefresh::per_epoch
                  ? epoch_anchors.at(id)
                  : anchors_for_image(softmax(acts.logits), acts.embed, labels, cfg);
          ConfidenceMap cm = confidence_from_anchors(anchors, acts.embed, labels, copts);
          conf = std::move(cm.weights);
        }
        for (float v : conf.data()) conf_sum += v;
        conf_terms += conf.size();

        std::vector<double> grad;
        const double loss = mocl_loss(acts.logits, labels, conf, &grad);
        loss_sum += loss;
        loss_terms += 1;

        if (!dlogits.same_shape(acts.logits)) {
          dlogits = net::Tensor(acts.logits.c, acts.logits.h, acts.logits.w);
        }
        for (size_t i = 0; i < grad.size(); ++i) dlogits.v[i] = float(grad[i] * inv_batch);
        model.backward(acts, dlogits);
      }
      opt.step();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_terms ? loss_sum / double(loss_terms) : 0.0;
    stats.mean_confidence = conf_terms ? conf_sum / double(conf_terms) : 1.0;

    try {
      ValScores v = validate(model, data);
      stats.val_dice_podocyte = v.dice_podocyte;
      stats.val_dice_mesangial = v.dice_mesangial;
      stats.val_dice_macro = v.dice_macro;
    } catch (const std::exception& e) {
      // Keep the checkpoint of the last completed epoch.
      log_warn(std::string("validation failed mid-run: ") + e.what());
      if (best_dice < 0) {
        result.checkpoint.weights = model.serialize_weights();
        result.best_epoch = epoch;
      }
      result.history.push_back(stats);
      return result;
    }

    result.history.push_back(stats);
    if (stats.val_dice_macro > best_dice) {
      best_dice = stats.val_dice_macro;
      result.checkpoint.weights = model.serialize_weights();
      result.best_epoch = epoch;
    }
  }
  result.final_weights = model.serialize_weights();
  return result;
}

void save_history(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(history.size());
  for (const auto& h : history) {
    rows.push_back({std::to_string(h.epoch), csv::format_double(h.train_loss),
                    csv::format_double(h.val_dice_podocyte),
                    csv::format_double(h.val_dice_mesangial),
                    csv::format_double(h.val_dice_macro),
                    csv::format_double(h.mean_confidence)});
  }
  csv::write(path, {"epoch", "train_loss", "val_dice_podocyte", "val_dice_mesangial",
                    "val_dice_macro", "mean_confidence"},
             rows);
}

data::LabelMap predict(const net::UNet& model, const data::Patch& patch) {
  const int h = patch.image.height(), w = patch.image.width();
  RgbImage padded = net::pad_reflect(patch.image, 4);

  net::UNet::Activations acts;
  model.forward(net::image_to_tensor(padded), acts);

  data::LabelMap lm;
  lm.patch_id = patch.patch_id;
  lm.classes = ClassGrid(h, w, 0);
  const size_t plane = acts.logits.plane_size();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const size_t i = size_t(r) * padded.width() + c;
      int best = 0;
      float bv = acts.logits.v[i];
      for (int k = 1; k < acts.logits.c; ++k) {
        const float v = acts.logits.v[size_t(k) * plane + i];
        if (v > bv) {
          bv = v;
          best = k;
        }
      }
      lm.classes.at(r, c) = uint8_t(best);
    }
  }
  return lm;
}

data::LabelMap predict(const Checkpoint& ckpt, const data::Patch& patch) {
  net::UNet model = ckpt.restore();
  return predict(model, patch);
}

}  // namespace saml::mocl
