#include "saml/harness.hpp"

#include <algorithm>
#include <fstream>

#include "saml/csv.hpp"
#include "saml/error.hpp"
#include "saml/log.hpp"
#include "saml/parallel.hpp"
#include "saml/rng.hpp"

namespace fs = std::filesystem;

namespace saml::harness {

std::unique_ptr<promptseg::PromptableSegmenter> make_segmenter(const PipelineConfig& cfg,
                                                               const data::Corpus& corpus) {
  if (cfg.segmenter.backend == "oracle") {
    promptseg::OracleNoise noise{cfg.segmenter.oracle_dilate_px, cfg.segmenter.oracle_erode_px};
    return std::make_unique<promptseg::OracleSegmenter>(corpus, noise);
  }
  if (cfg.segmenter.endpoint.empty()) {
    throw BackendUnavailableError("segmenter unavailable: backend=external but no endpoint");
  }
  promptseg::ExternalAdapterConfig ac;
  ac.endpoint = cfg.segmenter.endpoint;
  ac.model_id = cfg.segmenter.model_id;
  ac.threshold = cfg.segmenter.threshold;
  ac.max_concurrency = cfg.segmenter.max_concurrency;
  return std::make_unique<promptseg::ExternalModelAdapter>(ac);
}

data::LabelMap reference_labelmap(const data::Corpus& corpus, const std::string& patch_id) {
  if (const data::LabelMap* lm = corpus.labelmap(patch_id)) return *lm;
  const data::Patch& p = corpus.patch(patch_id);
  data::LabelMap lm = data::instances_to_labelmap(corpus.instances_for_patch(patch_id),
                                                  p.image.height(), p.image.width());
  lm.patch_id = patch_id;
  return lm;
}

data::SplitAssignment ensure_split(const PipelineConfig& cfg, const data::Corpus& corpus) {
  const fs::path path = cfg.output_dir() / "splits.csv";
  if (fs::exists(path)) return data::load_splits(path);
  data::SplitAssignment split = data::stratified_split(corpus, cfg.split.ratios,
                                                       cfg.split_seed());
  fs::create_directories(cfg.output_dir());
  data::save_splits(path, split);
  return split;
}

namespace {

// The trainer and evaluator consume PAS tiles only; IF tiles ride along as
// metadata-paired provenance inputs.
std::vector<std::string> split_ids(const data::Corpus& corpus,
                                   const data::SplitAssignment& split, data::Split which) {
  std::vector<std::string> out;
  size_t skipped_if = 0;
  for (const auto& [id, s] : split.assignment) {
    if (s != which) continue;
    if (corpus.patch(id).modality == data::Modality::IF) {
      ++skipped_if;
      continue;
    }
    out.push_back(id);
  }
  if (skipped_if) {
    log_warn(std::to_string(skipped_if) + " IF patches excluded from the " +
             data::to_string(which) + " set");
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, data::LabelMap> training_labels(const PipelineConfig& cfg,
                                                      bool allow_output_pseudolabels = true) {
  // Priority: explicit labels_dir, then pseudo-labels in output_dir, then GT.
  // The matrix's pixel-annotation method skips the pseudo-label probe so it
  // always trains on the annotation set.
  if (!cfg.paths.labels_dir.empty()) return data::load_labelmap_dir(cfg.paths.labels_dir);
  const fs::path pseudo = cfg.output_dir() / "labelmaps";
  if (allow_output_pseudolabels && fs::is_directory(pseudo)) {
    return data::load_labelmap_dir(pseudo);
  }
  const fs::path gt = cfg.corpus_root() / "labelmaps";
  if (fs::is_directory(gt)) return data::load_labelmap_dir(gt);
  throw ArtifactMissingError("no training labels found (checked labels_dir, " +
                             pseudo.string() + ", " + gt.string() + ")");
}

mocl::TrainResult train_on_labels(const PipelineConfig& cfg, const data::Corpus& corpus,
                                  const data::SplitAssignment& split,
                                  const std::map<std::string, data::LabelMap>& labels,
                                  uint64_t seed_override = 0) {
  mocl::TrainData td;
  td.corpus = &corpus;
  td.labels = &labels;
  td.train_ids = split_ids(corpus, split, data::Split::train);
  td.val_ids = split_ids(corpus, split, data::Split::val);

  mocl::ModelConfig model_cfg;
  model_cfg.channels = cfg.mocl.channels;
  model_cfg.embed_dim = cfg.mocl.embed_dim;
  model_cfg.seed = seed_override ? mix_seed({seed_override, fnv1a64("model")})
                                 : cfg.model_seed();

  mocl::MoclConfig train_cfg = cfg.mocl.train;
  train_cfg.seed = seed_override ? seed_override : cfg.mocl_seed();
  return mocl::train(td, model_cfg, train_cfg);
}

std::vector<metrics::PatchScore> score_split(const data::Corpus& corpus,
                                             const std::vector<std::string>& ids,
                                             const mocl::Checkpoint& ckpt,
                                             const std::string& method,
                                             const std::string& group, int jobs) {
  net::UNet model = ckpt.restore();
  std::vector<std::vector<metrics::PatchScore>> slots(ids.size());
  parallel_for(ids.size(), jobs, [&](size_t i) {
    const data::Patch& patch = corpus.patch(ids[i]);
    data::LabelMap pred = mocl::predict(model, patch);
    data::LabelMap ref = reference_labelmap(corpus, ids[i]);
    for (data::CellClass c : data::kForegroundClasses) {
      metrics::PatchScore ps;
      ps.method = method;
      ps.annotator_group = group;
      ps.patch_id = ids[i];
      ps.stratum = patch.stratum;
      ps.score = metrics::class_f1(pred, ref, c);
      slots[i].push_back(std::move(ps));
    }
  });
  std::vector<metrics::PatchScore> out;
  for (auto& s : slots) {
    for (auto& ps : s) out.push_back(std::move(ps));
  }
  return out;
}

void save_patch_scores(const fs::path& path, const std::vector<metrics::PatchScore>& scores) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& ps : scores) {
    rows.push_back({ps.method, ps.annotator_group, ps.patch_id, data::to_string(ps.stratum),
                    data::to_string(ps.score.cell_class), std::to_string(ps.score.tp),
                    std::to_string(ps.score.fp), std::to_string(ps.score.fn),
                    csv::format_double(ps.score.f1), ps.score.both_empty ? "1" : "0"});
  }
  csv::write(path, {"method", "annotator_group", "patch_id", "stratum", "cell_class", "tp",
                    "fp", "fn", "f1", "both_empty"},
             rows);
}

void write_report_files(const fs::path& dir, const metrics::EvalReport& report) {
  metrics::save_report(dir / "report.csv", report);
  std::ofstream txt(dir / "report.txt", std::ios::binary);
  txt << metrics::format_report_table(report);
}

}  // namespace

void run_synth(const PipelineConfig& cfg) {
  if (cfg.paths.corpus_root.empty()) throw InputError("paths.corpus_root is required");
  SyntheticSpec spec = cfg.synth;
  spec.seed = cfg.synth_seed();
  auto out = generate_synthetic(spec, cfg.corpus_root());
  echo_config(cfg, cfg.corpus_root());
  log_info("synthetic corpus: " + std::to_string(out.patches) + " patches, " +
           std::to_string(out.instances) + " instances, " + std::to_string(out.corrupted) +
           " corrupted");
}

void run_boxes(const PipelineConfig& cfg) {
  data::Corpus corpus = data::load_corpus(cfg.corpus_root());
  boxgen::PerturbConfig pc;
  pc.offset_kind = cfg.boxes.offset_kind;
  pc.max_offset = cfg.boxes.max_offset;
  pc.seed = cfg.box_seed();
  pc.samples_per_instance = cfg.boxes.samples_per_instance;

  auto boxes = boxgen::boxes_for_corpus(corpus, cfg.boxes.mode, pc);
  fs::create_directories(cfg.output_dir());
  boxgen::save_boxes(cfg.output_dir() / "boxes.csv", boxes);
  echo_config(cfg, cfg.output_dir());
  log_info("wrote " + std::to_string(boxes.size()) + " boxes");
}

void run_pseudolabel(const PipelineConfig& cfg, const RunOptions& opts) {
  data::Corpus corpus = data::load_corpus(cfg.corpus_root());
  auto boxes = boxgen::load_boxes(cfg.output_dir() / "boxes.csv");
  auto segmenter = make_segmenter(cfg, corpus);

  promptseg::PseudolabelOptions po;
  po.resume = opts.resume;
  po.jobs = opts.jobs;
  auto outcome = promptseg::pseudolabel_corpus(corpus, boxes, *segmenter, cfg.output_dir(), po);
  echo_config(cfg, cfg.output_dir());

  if (!outcome.failures.empty()) {
    std::string ids;
    for (const auto& [pid, msg] : outcome.failures) ids += (ids.empty() ? "" : ", ") + pid;
    throw BackendUnavailableError("pseudolabel failed for " +
                                  std::to_string(outcome.failures.size()) + " patch(es): " +
                                  ids);
  }
  log_info("pseudo-labeled " + std::to_string(outcome.patches_written) + " patches (" +
           std::to_string(outcome.patches_skipped) + " resumed)");
}

void run_train(const PipelineConfig& cfg) {
  data::Corpus corpus = data::load_corpus(cfg.corpus_root());
  data::SplitAssignment split = ensure_split(cfg, corpus);
  auto labels = training_labels(cfg);

  mocl::TrainResult result = train_on_labels(cfg, corpus, split, labels);
  fs::create_directories(cfg.output_dir());
  mocl::save_checkpoint(cfg.checkpoint_path(), result.checkpoint);
  mocl::save_history(cfg.output_dir() / "history.csv", result.history);
  echo_config(cfg, cfg.output_dir());
  log_info("trained " + std::to_string(result.history.size()) + " epochs; best epoch " +
           std::to_string(result.best_epoch));
}

metrics::EvalReport run_evaluate(const PipelineConfig& cfg, const RunOptions& opts) {
  data::Corpus corpus = data::load_corpus(cfg.corpus_root());
  data::SplitAssignment split = ensure_split(cfg, corpus);
  mocl::Checkpoint ckpt = mocl::load_checkpoint(cfg.checkpoint_path());

  auto test_ids = split_ids(corpus, split, data::Split::test);
  if (test_ids.empty()) throw InputError("test split is empty");

  auto scores = score_split(corpus, test_ids, ckpt, cfg.metrics.method, cfg.metrics.group,
                            opts.jobs);
  metrics::EvalReport report = metrics::aggregate_report(scores);
  report.pooling = cfg.metrics.pooling;

  fs::create_directories(cfg.output_dir());
  save_patch_scores(cfg.output_dir() / "patch_scores.csv", scores);
  write_report_files(cfg.output_dir(), report);
  echo_config(cfg, cfg.output_dir());
  return report;
}

metrics::EvalReport run_matrix(const PipelineConfig& cfg, const RunOptions& opts) {
  data::Corpus corpus = data::load_corpus(cfg.corpus_root());
  data::SplitAssignment split = ensure_split(cfg, corpus);
  auto test_ids = split_ids(corpus, split, data::Split::test);
  if (test_ids.empty()) throw InputError("test split is empty");

  struct Method {
    std::string name;
    boxgen::BoxKind box_mode = boxgen::BoxKind::tight;
    bool uses_boxes = false;
  };
  const std::vector<Method> methods = {{"pixel-labels", boxgen::BoxKind::tight, false},
                                       {"tight-box", boxgen::BoxKind::tight, true},
                                       {"random-box", boxgen::BoxKind::random, true}};

  std::vector<metrics::PatchScore> all_scores;
  for (const auto& method : methods) {
    const fs::path mdir = cfg.output_dir() / "matrix" / method.name;
    fs::create_directories(mdir);
    const uint64_t run_seed = mix_seed({cfg.seed, fnv1a64("matrix"), fnv1a64(method.name)});

    std::map<std::string, data::LabelMap> labels;
    if (method.uses_boxes) {
      boxgen::PerturbConfig pc;
      pc.offset_kind = cfg.boxes.offset_kind;
      pc.max_offset = cfg.boxes.max_offset;
      pc.seed = mix_seed({run_seed, fnv1a64("boxes")});
      pc.samples_per_instance = cfg.boxes.samples_per_instance;
      auto boxes = boxgen::boxes_for_corpus(corpus, method.box_mode, pc);
      boxgen::save_boxes(mdir / "boxes.csv", boxes);

      auto segmenter = make_segmenter(cfg, corpus);
      promptseg::PseudolabelOptions po;
      po.resume = opts.resume;
      po.jobs = opts.jobs;
      auto outcome = promptseg::pseudolabel_corpus(corpus, boxes, *segmenter, mdir, po);
      if (!outcome.failures.empty()) {
        throw BackendUnavailableError("matrix method " + method.name + " failed for " +
                                      std::to_string(outcome.failures.size()) + " patch(es)");
      }
      labels = data::load_labelmap_dir(mdir / "labelmaps");
    } else {
      labels = training_labels(cfg, /*allow_output_pseudolabels=*/false);
    }

    mocl::TrainResult result = train_on_labels(cfg, corpus, split, labels, run_seed);
    mocl::save_checkpoint(mdir / "checkpoint.bin", result.checkpoint);
    mocl::save_history(mdir / "history.csv", result.history);

    auto scores = score_split(corpus, test_ids, result.checkpoint, method.name,
                              cfg.metrics.group, opts.jobs);
    save_patch_scores(mdir / "patch_scores.csv", scores);
    for (auto& s : scores) all_scores.push_back(std::move(s));
  }

  metrics::EvalReport report = metrics::aggregate_report(all_scores);
  report.pooling = cfg.metrics.pooling;
  write_report_files(cfg.output_dir(), report);
  echo_config(cfg, cfg.output_dir());
  return report;
}

}  // namespace saml::harness
