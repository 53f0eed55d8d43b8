#include "saml/promptseg.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <thread>

#include "saml/csv.hpp"
#include "saml/error.hpp"
#include "saml/log.hpp"
#include "saml/metrics.hpp"
#include "saml/morph.hpp"
#include "saml/png_io.hpp"

namespace fs = std::filesystem;

namespace saml::promptseg {

// --- oracle ----------------------------------------------------------------

OracleSegmenter::OracleSegmenter(const data::Corpus& corpus, OracleNoise noise)
    : corpus_(corpus), noise_(noise) {}

std::string OracleSegmenter::version() const {
  return "gt-d" + std::to_string(noise_.dilate_px) + "-e" + std::to_string(noise_.erode_px);
}

SegmentResult OracleSegmenter::segment(const data::Patch& patch, const boxgen::BoxPrompt& box) {
  const data::InstanceMask* gt = corpus_.find_instance(box.instance_id);
  if (!gt) throw InputError("oracle has no ground truth for instance " + box.instance_id);
  if (gt->patch_id != patch.patch_id) {
    throw InputError("box for instance " + box.instance_id + " does not belong to patch " +
                     patch.patch_id);
  }
  return oracle_segment(*gt, box, noise_);
}

SegmentResult oracle_segment(const data::InstanceMask& ground_truth,
                             const boxgen::BoxPrompt& box, OracleNoise noise) {
  const Mask& gt = ground_truth.mask;
  if (!box.valid_for(gt.height(), gt.width())) {
    throw InputError("oracle_segment: box out of bounds for instance " +
                     ground_truth.instance_id);
  }

  Mask m(gt.height(), gt.width(), 0);
  for (int r = box.r_min; r <= box.r_max; ++r) {
    for (int c = box.c_min; c <= box.c_max; ++c) {
      m.at(r, c) = gt.at(r, c);
    }
  }
  if (noise.dilate_px > 0) m = morph::dilate(m, noise.dilate_px);
  if (noise.erode_px > 0) m = morph::erode(m, noise.erode_px);

  SegmentResult res;
  res.instance_id = ground_truth.instance_id;
  res.confidence = std::clamp(metrics::binary_dice(m, gt), 0.0, 1.0);
  res.mask = std::move(m);
  return res;
}

// --- prompt fan-out ----------------------------------------------------------

std::vector<SegmentResult> segment_with_prompts(PromptableSegmenter& segmenter,
                                                const data::Patch& patch,
                                                const std::vector<boxgen::BoxPrompt>& prompts) {
  std::vector<SegmentResult> results;
  results.reserve(prompts.size());
  std::vector<std::string> failed;
  std::string first_error;

  for (const auto& p : prompts) {
    if (!p.valid_for(patch.image.height(), patch.image.width())) {
      throw InputError("prompt box for instance " + p.instance_id +
                       " is invalid for patch " + patch.patch_id);
    }
    try {
      SegmentResult r = segmenter.segment(patch, p);
      if (!r.mask.same_shape(patch.image)) {
        throw ContractViolationError("segmenter " + segmenter.id() + " returned a " +
                                     std::to_string(r.mask.height()) + "x" +
                                     std::to_string(r.mask.width()) + " mask for a " +
                                     std::to_string(patch.image.height()) + "x" +
                                     std::to_string(patch.image.width()) + " patch");
      }
      if (r.confidence < 0.0 || r.confidence > 1.0) {
        throw ContractViolationError("segmenter " + segmenter.id() +
                                     " returned confidence outside [0,1]");
      }
      r.instance_id = p.instance_id;
      results.push_back(std::move(r));
    } catch (const BackendUnavailableError& e) {
      failed.push_back(p.instance_id);
      if (first_error.empty()) first_error = e.what();
    }
  }

  if (!failed.empty()) {
    throw BackendUnavailableError("backend failed for " + std::to_string(failed.size()) +
                                      " prompt(s) on patch " + patch.patch_id + ": " +
                                      first_error,
                                  failed);
  }
  return results;
}

// --- merge -------------------------------------------------------------------

data::LabelMap merge_results(const std::vector<SegmentResult>& results,
                             const std::map<std::string, data::CellClass>& class_of,
                             MergePolicy) {
  data::LabelMap lm;
  if (results.empty()) return lm;

  const int h = results.front().mask.height();
  const int w = results.front().mask.width();
  lm.classes = ClassGrid(h, w, 0);

  struct Entry {
    const SegmentResult* res;
    size_t area;
    data::CellClass cls;
  };
  std::vector<Entry> entries;
  entries.reserve(results.size());
  for (const auto& r : results) {
    if (r.mask.height() != h || r.mask.width() != w) {
      throw InputError("merge_results: mixed mask dimensions");
    }
    auto it = class_of.find(r.instance_id);
    if (it == class_of.end()) {
      throw InputError("merge_results: no class for instance " + r.instance_id);
    }
    entries.push_back({&r, count_true(r.mask), it->second});
  }

  // Paint in ascending priority; the last painter to cover a pixel is the
  // per-pixel winner: highest confidence, tie -> smaller area,
  // tie -> lower class index, tie -> lower instance_id.
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.res->confidence != b.res->confidence) return a.res->confidence < b.res->confidence;
    if (a.area != b.area) return a.area > b.area;
    if (a.cls != b.cls) return a.cls > b.cls;
    return a.res->instance_id > b.res->instance_id;
  });

  for (const auto& e : entries) {
    const uint8_t cls = uint8_t(e.cls);
    const auto& mask = e.res->mask;
    for (size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) lm.classes[i] = cls;
    }
  }
  return lm;
}

// --- corpus pseudo-labeling ----------------------------------------------------

namespace {

constexpr const char* kProvenanceName = "pseudolabels.csv";
const std::vector<std::string> kProvenanceHeader = {
    "patch_id", "box_kind", "seed", "segmenter_id", "segmenter_version", "n_prompts",
    "n_failures"};

struct PatchWork {
  std::string patch_id;
  std::vector<const boxgen::CorpusBox*> boxes;
};

struct PatchResult {
  bool done = false;
  bool skipped = false;
  std::string failure;
  data::LabelMap labelmap;
  std::vector<std::string> row;
};

}  // namespace

PseudolabelOutcome pseudolabel_corpus(const data::Corpus& corpus,
                                      const std::vector<boxgen::CorpusBox>& boxes,
                                      PromptableSegmenter& segmenter, const fs::path& out_dir,
                                      const PseudolabelOptions& options) {
  const fs::path label_dir = out_dir / "labelmaps";
  fs::create_directories(label_dir);

  // Group boxes by patch; every corpus patch gets a row even with zero boxes.
  std::map<std::string, PatchWork> work;
  for (const auto& p : corpus.patches()) work[p.patch_id] = {p.patch_id, {}};
  for (const auto& cb : boxes) {
    auto it = work.find(cb.box.patch_id);
    if (it == work.end()) {
      throw InputError("box references patch " + cb.box.patch_id + " not in corpus");
    }
    it->second.boxes.push_back(&cb);
  }

  // Provenance rows from a previous interrupted run, for resume.
  std::map<std::string, std::vector<std::string>> existing_rows;
  const fs::path prov_path = out_dir / kProvenanceName;
  if (options.resume && fs::exists(prov_path)) {
    auto t = csv::read(prov_path, kProvenanceHeader);
    for (auto& row : t.rows) existing_rows[row[0]] = row;
  }

  std::vector<const PatchWork*> items;
  items.reserve(work.size());
  for (const auto& [id, w] : work) items.push_back(&w);

  std::vector<PatchResult> results(items.size());

  int jobs = std::max(1, options.jobs);
  const auto caps = segmenter.capabilities();
  if (caps.max_concurrency > 0) jobs = std::min(jobs, caps.max_concurrency);
  jobs = int(std::min<size_t>(jobs, items.size()));

  auto process = [&](size_t idx) {
    const PatchWork& pw = *items[idx];
    PatchResult& out = results[idx];

    if (options.resume && fs::exists(label_dir / (pw.patch_id + ".png")) &&
        existing_rows.count(pw.patch_id)) {
      out.done = true;
      out.skipped = true;
      out.row = existing_rows[pw.patch_id];
      return;
    }

    const data::Patch& patch = corpus.patch(pw.patch_id);
    if (pw.boxes.empty()) {
      log_warn("patch " + pw.patch_id + " has no boxes; writing all-background pseudo-label");
    }

    std::vector<boxgen::BoxPrompt> prompts;
    std::map<std::string, data::CellClass> class_of;
    std::set<std::string> kinds;
    uint64_t seed = 0;
    for (const auto* cb : pw.boxes) {
      prompts.push_back(cb->box);
      class_of[cb->box.instance_id] = cb->box.cell_class;
      kinds.insert(boxgen::to_string(cb->box.kind));
      seed = cb->seed;
    }

    std::vector<SegmentResult> seg;
    size_t n_failures = 0;
    try {
      seg = segment_with_prompts(segmenter, patch, prompts);
    } catch (const BackendUnavailableError& e) {
      if (options.on_backend_error == OnBackendError::fail_patch) {
        out.failure = e.what();
        return;
      }
      // skip_prompt: keep the prompts that did succeed.
      std::set<std::string> bad(e.instance_ids.begin(), e.instance_ids.end());
      n_failures = bad.size();
      std::vector<boxgen::BoxPrompt> ok;
      for (const auto& p : prompts) {
        if (!bad.count(p.instance_id)) ok.push_back(p);
      }
      seg = segment_with_prompts(segmenter, patch, ok);
    }

    data::LabelMap lm = merge_results(seg, class_of, options.merge);
    if (lm.classes.empty()) {
      lm.classes = ClassGrid(patch.image.height(), patch.image.width(), 0);
    }
    lm.patch_id = pw.patch_id;

    std::string kind = kinds.empty() ? "none" : (kinds.size() == 1 ? *kinds.begin() : "mixed");
    out.labelmap = std::move(lm);
    out.row = {pw.patch_id,
               kind,
               std::to_string(seed),
               segmenter.id(),
               segmenter.version(),
               std::to_string(prompts.size()),
               std::to_string(n_failures)};
    out.done = true;
  };

  if (jobs <= 1) {
    for (size_t i = 0; i < items.size(); ++i) process(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
          process(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  // Write artifacts in sorted key order regardless of worker interleaving.
  PseudolabelOutcome outcome;
  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < items.size(); ++i) {
    PatchResult& r = results[i];
    if (!r.done) {
      outcome.failures[items[i]->patch_id] = r.failure;
      continue;
    }
    if (r.skipped) {
      outcome.patches_skipped++;
    } else {
      data::save_labelmap(label_dir, r.labelmap);
      outcome.patches_written++;
    }
    rows.push_back(r.row);
  }
  csv::write(prov_path, kProvenanceHeader, rows);

  return outcome;
}

}  // namespace saml::promptseg
