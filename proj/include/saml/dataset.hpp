#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saml/grid.hpp"

namespace saml::data {

enum class Modality { PAS, IF };
enum class Stratum { injured, normal };
enum class CellClass : uint8_t { podocyte = 1, mesangial = 2 };
enum class Split { train, val, test };

constexpr int kNumClasses = 3;  // background + podocyte + mesangial
constexpr std::array<CellClass, 2> kForegroundClasses = {CellClass::podocyte,
                                                         CellClass::mesangial};

std::string to_string(Modality m);
std::string to_string(Stratum s);
std::string to_string(CellClass c);
std::string to_string(Split s);
Modality modality_from_string(const std::string& s);
Stratum stratum_from_string(const std::string& s);
CellClass cell_class_from_string(const std::string& s);
Split split_from_string(const std::string& s);

/// One image tile, the unit of annotation and training. 512x512 is the
/// documented default; arbitrary sizes are accepted.
struct Patch {
  std::string patch_id;
  RgbImage image;
  Modality modality = Modality::PAS;
  Stratum stratum = Stratum::normal;
  std::string source_wsi;
  std::string annotator_id;
};

/// Binary pixel mask for one cell instance. Never empty once ingested.
struct InstanceMask {
  std::string instance_id;
  std::string patch_id;
  CellClass cell_class = CellClass::podocyte;
  Mask mask;
};

/// Per-pixel class map: 0 background, 1 podocyte, 2 mesangial.
struct LabelMap {
  std::string patch_id;
  ClassGrid classes;
};

struct SplitAssignment {
  std::map<std::string, Split> assignment;
  uint64_t seed = 0;
  std::array<double, 3> ratios = {6, 1, 3};
};

struct CorpusCounts {
  size_t patches = 0;
  size_t instances = 0;
  std::map<Stratum, size_t> patches_per_stratum;
  std::map<CellClass, size_t> patches_with_class;  // patches containing >=1 instance
  std::map<CellClass, size_t> instances_per_class;
};

/// Validated in-memory corpus. Value object; safe to share across threads
/// once built.
class Corpus {
 public:
  void add_patch(Patch p);
  void add_instance(InstanceMask m);
  void set_labelmap(LabelMap lm);

  const std::vector<Patch>& patches() const { return patches_; }
  const std::vector<InstanceMask>& instances() const { return instances_; }

  const Patch& patch(const std::string& patch_id) const;
  bool has_patch(const std::string& patch_id) const;
  /// Indices into instances() for one patch, in insertion order.
  std::vector<const InstanceMask*> instances_for_patch(const std::string& patch_id) const;
  const InstanceMask* find_instance(const std::string& instance_id) const;

  const LabelMap* labelmap(const std::string& patch_id) const;
  const std::map<std::string, LabelMap>& labelmaps() const { return labelmaps_; }

  CorpusCounts counts() const;

 private:
  std::vector<Patch> patches_;
  std::vector<InstanceMask> instances_;
  std::map<std::string, size_t> patch_index_;
  std::map<std::string, size_t> instance_index_;
  std::map<std::string, std::vector<size_t>> patch_instances_;
  std::map<std::string, LabelMap> labelmaps_;
};

// Directory layout:
//   <root>/patches/<patch_id>.png            RGB
//   <root>/masks/<patch_id>/<instance_id>.png  8-bit gray, 0/255
//   <root>/labelmaps/<patch_id>.png          8-bit indexed, values 0/1/2
//   <root>/meta.csv        patch_id,modality,stratum,source_wsi,annotator_id
//   <root>/instances.csv   instance_id,patch_id,cell_class
/// Load and validate a corpus. Hard errors on orphans, dimension mismatches,
/// unknown class indices, and empty instance masks.
Corpus load_corpus(const std::filesystem::path& root);

/// Write a corpus in the same layout (inverse of load_corpus).
void save_corpus(const Corpus& corpus, const std::filesystem::path& root);

/// Load only the labelmaps directory of a corpus-layout tree, keyed by
/// patch_id. Used for pseudo-label and noisy-annotation label sources.
std::map<std::string, LabelMap> load_labelmap_dir(const std::filesystem::path& dir);
void save_labelmap(const std::filesystem::path& dir, const LabelMap& lm);

/// Deterministic per-stratum split. Within each stratum the realized counts
/// deviate from the exact ratio by at most 1 patch (largest-remainder
/// apportionment over a seeded shuffle).
SplitAssignment stratified_split(const Corpus& corpus, const std::array<double, 3>& ratios,
                                 uint64_t seed);

void save_splits(const std::filesystem::path& path, const SplitAssignment& split);
SplitAssignment load_splits(const std::filesystem::path& path);

enum class OverlapPolicy { smaller_area_wins, larger_area_wins };

/// Merge per-instance binary masks into one multi-class label map.
/// Overlaps resolve by policy (default: smaller-area instance wins),
/// tie -> lower class index, further tie -> lower instance_id.
LabelMap instances_to_labelmap(const std::vector<const InstanceMask*>& instances,
                               int height, int width,
                               OverlapPolicy policy = OverlapPolicy::smaller_area_wins);

/// Split a label map back into one binary mask per foreground class.
std::map<CellClass, Mask> labelmap_to_class_masks(const LabelMap& lm);

}  // namespace saml::data
