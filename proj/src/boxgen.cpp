#include "saml/boxgen.hpp"

#include <algorithm>
#include <cmath>

#include "saml/csv.hpp"
#include "saml/error.hpp"
#include "saml/rng.hpp"

namespace saml::boxgen {

std::string to_string(BoxKind k) { return k == BoxKind::tight ? "tight" : "random"; }

BoxKind box_kind_from_string(const std::string& s) {
  if (s == "tight") return BoxKind::tight;
  if (s == "random") return BoxKind::random;
  throw InputError("unknown box kind '" + s + "'");
}

BoxPrompt tight_box(const data::InstanceMask& mask) {
  const auto& m = mask.mask;
  int r_min = m.height(), r_max = -1, c_min = m.width(), c_max = -1;
  for (int r = 0; r < m.height(); ++r) {
    const uint8_t* row = m.row(r);
    for (int c = 0; c < m.width(); ++c) {
      if (!row[c]) continue;
      r_min = std::min(r_min, r);
      r_max = std::max(r_max, r);
      c_min = std::min(c_min, c);
      c_max = std::max(c_max, c);
    }
  }
  if (r_max < 0) throw InputError("tight_box: instance " + mask.instance_id + " mask is empty");

  BoxPrompt b;
  b.instance_id = mask.instance_id;
  b.patch_id = mask.patch_id;
  b.cell_class = mask.cell_class;
  b.r_min = r_min;
  b.c_min = c_min;
  b.r_max = r_max;
  b.c_max = c_max;
  b.kind = BoxKind::tight;
  return b;
}

namespace {

int offset_magnitude(const PerturbConfig& cfg, int side) {
  if (cfg.max_offset < 0) throw InputError("max_offset must be non-negative");
  if (cfg.max_offset == 0) return 0;
  if (cfg.offset_kind == OffsetKind::absolute_px) return int(std::llround(cfg.max_offset));
  return std::max(1, int(std::llround(cfg.max_offset * side)));
}

}  // namespace

BoxPrompt random_box(const BoxPrompt& tight, int patch_height, int patch_width,
                     const PerturbConfig& cfg, int draw_index) {
  if (tight.kind != BoxKind::tight) throw InputError("random_box expects a tight box");
  if (!tight.valid_for(patch_height, patch_width)) {
    throw InputError("random_box: tight box out of bounds for instance " + tight.instance_id);
  }

  Rng rng(mix_seed({cfg.seed, fnv1a64(tight.instance_id), uint64_t(draw_index)}));
  const int off_r = offset_magnitude(cfg, tight.height());
  const int off_c = offset_magnitude(cfg, tight.width());

  // Fixed draw order: r_min, c_min, r_max, c_max.
  int r0 = tight.r_min + int(rng.uniform_int(-off_r, off_r));
  int c0 = tight.c_min + int(rng.uniform_int(-off_c, off_c));
  int r1 = tight.r_max + int(rng.uniform_int(-off_r, off_r));
  int c1 = tight.c_max + int(rng.uniform_int(-off_c, off_c));

  if (r0 > r1) std::swap(r0, r1);
  if (c0 > c1) std::swap(c0, c1);
  auto clamp = [](int v, int hi) { return std::min(std::max(v, 0), hi); };
  r0 = clamp(r0, patch_height - 1);
  r1 = clamp(r1, patch_height - 1);
  c0 = clamp(c0, patch_width - 1);
  c1 = clamp(c1, patch_width - 1);

  BoxPrompt b = tight;
  b.r_min = r0;
  b.c_min = c0;
  b.r_max = r1;
  b.c_max = c1;
  b.kind = BoxKind::random;
  return b;
}

std::vector<CorpusBox> boxes_for_corpus(const data::Corpus& corpus, BoxKind mode,
                                        const PerturbConfig& cfg) {
  if (cfg.samples_per_instance < 1) throw InputError("samples_per_instance must be >= 1");

  std::vector<CorpusBox> out;
  for (const auto& inst : corpus.instances()) {
    const auto& patch = corpus.patch(inst.patch_id);
    BoxPrompt tb = tight_box(inst);
    if (mode == BoxKind::tight) {
      out.push_back({tb, cfg.seed, 0});
    } else {
      for (int d = 0; d < cfg.samples_per_instance; ++d) {
        out.push_back({random_box(tb, patch.image.height(), patch.image.width(), cfg, d),
                       cfg.seed, d});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const CorpusBox& a, const CorpusBox& b) {
    if (a.box.patch_id != b.box.patch_id) return a.box.patch_id < b.box.patch_id;
    if (a.box.instance_id != b.box.instance_id) return a.box.instance_id < b.box.instance_id;
    return a.draw_index < b.draw_index;
  });
  return out;
}

void save_boxes(const std::filesystem::path& path, const std::vector<CorpusBox>& boxes) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(boxes.size());
  for (const auto& cb : boxes) {
    const auto& b = cb.box;
    rows.push_back({b.patch_id, b.instance_id, data::to_string(b.cell_class),
                    to_string(b.kind), std::to_string(b.r_min), std::to_string(b.c_min),
                    std::to_string(b.r_max), std::to_string(b.c_max), std::to_string(cb.seed),
                    std::to_string(cb.draw_index)});
  }
  csv::write(path, {"patch_id", "instance_id", "cell_class", "kind", "r_min", "c_min", "r_max",
                    "c_max", "seed", "draw_index"},
             rows);
}

std::vector<CorpusBox> load_boxes(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ArtifactMissingError("boxes file not found: " + path.string());
  }
  auto t = csv::read(path, {"patch_id", "instance_id", "cell_class", "kind", "r_min", "c_min",
                            "r_max", "c_max", "seed", "draw_index"});
  std::vector<CorpusBox> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    CorpusBox cb;
    cb.box.patch_id = row[0];
    cb.box.instance_id = row[1];
    cb.box.cell_class = data::cell_class_from_string(row[2]);
    cb.box.kind = box_kind_from_string(row[3]);
    cb.box.r_min = std::stoi(row[4]);
    cb.box.c_min = std::stoi(row[5]);
    cb.box.r_max = std::stoi(row[6]);
    cb.box.c_max = std::stoi(row[7]);
    cb.seed = std::stoull(row[8]);
    cb.draw_index = std::stoi(row[9]);
    if (cb.box.r_min > cb.box.r_max || cb.box.c_min > cb.box.c_max || cb.box.r_min < 0 ||
        cb.box.c_min < 0) {
      throw InputError("invalid box for instance " + cb.box.instance_id + " in " +
                       path.string());
    }
    out.push_back(std::move(cb));
  }
  return out;
}

}  // namespace saml::boxgen
