#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "saml/dataset.hpp"

namespace saml::boxgen {

enum class BoxKind { tight, random };

std::string to_string(BoxKind k);
BoxKind box_kind_from_string(const std::string& s);

/// Axis-aligned box with inclusive bounds, the weak annotation fed to the
/// promptable segmenter.
struct BoxPrompt {
  std::string instance_id;
  std::string patch_id;
  data::CellClass cell_class = data::CellClass::podocyte;
  int r_min = 0, c_min = 0, r_max = 0, c_max = 0;
  BoxKind kind = BoxKind::tight;

  int height() const { return r_max - r_min + 1; }
  int width() const { return c_max - c_min + 1; }
  bool valid_for(int patch_height, int patch_width) const {
    return 0 <= r_min && r_min <= r_max && r_max < patch_height && 0 <= c_min &&
           c_min <= c_max && c_max < patch_width;
  }
};

/// Offset magnitude is either absolute pixels or a fraction of the
/// corresponding tight-box side (rounded, min 1 when nonzero).
enum class OffsetKind { absolute_px, relative_frac };

struct PerturbConfig {
  OffsetKind offset_kind = OffsetKind::relative_frac;
  double max_offset = 0.10;
  uint64_t seed = 0;
  int samples_per_instance = 1;
};

/// Minimal axis-aligned rectangle containing every true pixel of the mask.
BoxPrompt tight_box(const data::InstanceMask& mask);

/// Tight box with four independent uniform integer offsets in
/// [-max_offset, +max_offset], one per coordinate, drawn from a stream seeded
/// by (cfg.seed, instance_id, draw_index). Axis inversion is repaired by
/// swapping, then coordinates are clamped to the image bounds.
BoxPrompt random_box(const BoxPrompt& tight, int patch_height, int patch_width,
                     const PerturbConfig& cfg, int draw_index);

/// One tight box per instance, or samples_per_instance random boxes per
/// instance. Output sorted by (patch_id, instance_id, draw_index).
struct CorpusBox {
  BoxPrompt box;
  uint64_t seed = 0;
  int draw_index = 0;
};

std::vector<CorpusBox> boxes_for_corpus(const data::Corpus& corpus, BoxKind mode,
                                        const PerturbConfig& cfg);

// boxes.csv: patch_id,instance_id,cell_class,kind,r_min,c_min,r_max,c_max,seed,draw_index
void save_boxes(const std::filesystem::path& path, const std::vector<CorpusBox>& boxes);
std::vector<CorpusBox> load_boxes(const std::filesystem::path& path);

}  // namespace saml::boxgen
