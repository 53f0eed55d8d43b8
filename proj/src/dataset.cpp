#include "saml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "saml/csv.hpp"
#include "saml/error.hpp"
#include "saml/log.hpp"
#include "saml/png_io.hpp"
#include "saml/rng.hpp"

namespace fs = std::filesystem;

namespace saml::data {

std::string to_string(Modality m) { return m == Modality::PAS ? "PAS" : "IF"; }
std::string to_string(Stratum s) { return s == Stratum::injured ? "injured" : "normal"; }
std::string to_string(CellClass c) {
  return c == CellClass::podocyte ? "podocyte" : "mesangial";
}
std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

Modality modality_from_string(const std::string& s) {
  if (s == "PAS") return Modality::PAS;
  if (s == "IF") return Modality::IF;
  throw InputError("unknown modality '" + s + "'");
}

Stratum stratum_from_string(const std::string& s) {
  if (s == "injured") return Stratum::injured;
  if (s == "normal") return Stratum::normal;
  throw InputError("unknown stratum '" + s + "'");
}

CellClass cell_class_from_string(const std::string& s) {
  if (s == "podocyte") return CellClass::podocyte;
  if (s == "mesangial") return CellClass::mesangial;
  throw InputError("unknown cell class '" + s + "'");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InputError("unknown split '" + s + "'");
}

namespace {

// Identifiers become file and directory names; keep them path-safe.
void validate_id(const std::string& id, const char* what) {
  if (id.empty()) throw InputError(std::string(what) + " id is empty");
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '_' || c == '-' || c == '.';
    if (!ok) throw InputError(std::string(what) + " id '" + id + "' has unsafe character");
  }
  if (id == "." || id == "..") throw InputError(std::string(what) + " id '" + id + "' invalid");
}

}  // namespace

void Corpus::add_patch(Patch p) {
  validate_id(p.patch_id, "patch");
  if (p.image.height() < 1 || p.image.width() < 1) {
    throw InputError("patch " + p.patch_id + " has empty image");
  }
  if (patch_index_.count(p.patch_id)) {
    throw InputError("duplicate patch id " + p.patch_id);
  }
  patch_index_[p.patch_id] = patches_.size();
  patches_.push_back(std::move(p));
}

void Corpus::add_instance(InstanceMask m) {
  validate_id(m.instance_id, "instance");
  auto it = patch_index_.find(m.patch_id);
  if (it == patch_index_.end()) {
    throw InputError("instance " + m.instance_id + " references missing patch " + m.patch_id);
  }
  const Patch& p = patches_[it->second];
  if (!m.mask.same_shape(p.image)) {
    throw InputError("instance " + m.instance_id + " mask is " +
                     std::to_string(m.mask.height()) + "x" + std::to_string(m.mask.width()) +
                     " but patch " + m.patch_id + " is " + std::to_string(p.image.height()) +
                     "x" + std::to_string(p.image.width()));
  }
  if (count_true(m.mask) == 0) {
    throw InputError("instance " + m.instance_id + " has an empty mask");
  }
  if (instance_index_.count(m.instance_id)) {
    throw InputError("duplicate instance id " + m.instance_id);
  }
  instance_index_[m.instance_id] = instances_.size();
  patch_instances_[m.patch_id].push_back(instances_.size());
  instances_.push_back(std::move(m));
}

void Corpus::set_labelmap(LabelMap lm) {
  auto it = patch_index_.find(lm.patch_id);
  if (it == patch_index_.end()) {
    throw InputError("labelmap references missing patch " + lm.patch_id);
  }
  const Patch& p = patches_[it->second];
  if (!lm.classes.same_shape(p.image)) {
    throw InputError("labelmap for patch " + lm.patch_id + " has mismatched dimensions");
  }
  for (uint8_t v : lm.classes.data()) {
    if (v >= kNumClasses) {
      throw InputError("labelmap for patch " + lm.patch_id + " has unknown class index " +
                       std::to_string(int(v)));
    }
  }
  labelmaps_[lm.patch_id] = std::move(lm);
}

const Patch& Corpus::patch(const std::string& patch_id) const {
  auto it = patch_index_.find(patch_id);
  if (it == patch_index_.end()) throw InputError("unknown patch " + patch_id);
  return patches_[it->second];
}

bool Corpus::has_patch(const std::string& patch_id) const {
  return patch_index_.count(patch_id) != 0;
}

std::vector<const InstanceMask*> Corpus::instances_for_patch(const std::string& patch_id) const {
  std::vector<const InstanceMask*> out;
  auto it = patch_instances_.find(patch_id);
  if (it == patch_instances_.end()) return out;
  out.reserve(it->second.size());
  for (size_t i : it->second) out.push_back(&instances_[i]);
  return out;
}

const InstanceMask* Corpus::find_instance(const std::string& instance_id) const {
  auto it = instance_index_.find(instance_id);
  return it == instance_index_.end() ? nullptr : &instances_[it->second];
}

const LabelMap* Corpus::labelmap(const std::string& patch_id) const {
  auto it = labelmaps_.find(patch_id);
  return it == labelmaps_.end() ? nullptr : &it->second;
}

CorpusCounts Corpus::counts() const {
  CorpusCounts c;
  c.patches = patches_.size();
  c.instances = instances_.size();
  for (const auto& p : patches_) c.patches_per_stratum[p.stratum]++;
  std::map<CellClass, std::set<std::string>> patch_sets;
  for (const auto& m : instances_) {
    c.instances_per_class[m.cell_class]++;
    patch_sets[m.cell_class].insert(m.patch_id);
  }
  for (const auto& [cls, s] : patch_sets) c.patches_with_class[cls] = s.size();
  return c;
}

Corpus load_corpus(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError("corpus not found: " + root.string());

  const fs::path meta_path = root / "meta.csv";
  if (!fs::exists(meta_path)) throw InputError("no patches found (missing meta.csv in " +
                                               root.string() + ")");

  Corpus corpus;
  auto meta = csv::read(meta_path, {"patch_id", "modality", "stratum", "source_wsi",
                                    "annotator_id"});
  if (meta.rows.empty()) throw InputError("no patches found in " + meta_path.string());

  for (const auto& row : meta.rows) {
    Patch p;
    p.patch_id = row[0];
    validate_id(p.patch_id, "patch");
    const fs::path img_path = root / "patches" / (p.patch_id + ".png");
    if (!fs::exists(img_path)) {
      throw InputError("missing image for patch " + p.patch_id + ": " + img_path.string());
    }
    p.image = png_io::read_rgb8(img_path);
    p.modality = modality_from_string(row[1]);
    p.stratum = stratum_from_string(row[2]);
    p.source_wsi = row[3];
    p.annotator_id = row[4];
    corpus.add_patch(std::move(p));
  }

  // Image present but not declared -> orphan.
  if (fs::is_directory(root / "patches")) {
    for (const auto& e : fs::directory_iterator(root / "patches")) {
      if (e.path().extension() != ".png") continue;
      const std::string id = e.path().stem().string();
      if (!corpus.has_patch(id)) {
        throw InputError("orphan patch image with no meta.csv row: " + e.path().string());
      }
    }
  }

  const fs::path inst_path = root / "instances.csv";
  if (fs::exists(inst_path)) {
    auto inst = csv::read(inst_path, {"instance_id", "patch_id", "cell_class"});
    for (const auto& row : inst.rows) {
      InstanceMask m;
      m.instance_id = row[0];
      validate_id(m.instance_id, "instance");
      m.patch_id = row[1];
      m.cell_class = cell_class_from_string(row[2]);
      const fs::path mask_path = root / "masks" / m.patch_id / (m.instance_id + ".png");
      if (!fs::exists(mask_path)) {
        throw InputError("missing mask for instance " + m.instance_id + ": " +
                         mask_path.string());
      }
      auto gray = png_io::read_gray8(mask_path);
      Mask mask(gray.height(), gray.width());
      for (size_t i = 0; i < gray.size(); ++i) {
        if (gray[i] != 0 && gray[i] != 255) {
          throw InputError("mask " + mask_path.string() + " has value " +
                           std::to_string(int(gray[i])) + ", expected 0/255");
        }
        mask[i] = gray[i] ? 1 : 0;
      }
      m.mask = std::move(mask);
      corpus.add_instance(std::move(m));
    }
  }

  // Mask file present but not declared -> orphan.
  if (fs::is_directory(root / "masks")) {
    for (const auto& dir : fs::directory_iterator(root / "masks")) {
      if (!dir.is_directory()) continue;
      for (const auto& e : fs::directory_iterator(dir.path())) {
        if (e.path().extension() != ".png") continue;
        if (!corpus.find_instance(e.path().stem().string())) {
          throw InputError("orphan mask with no instances.csv row: " + e.path().string());
        }
      }
    }
  }

  if (fs::is_directory(root / "labelmaps")) {
    for (const auto& e : fs::directory_iterator(root / "labelmaps")) {
      if (e.path().extension() != ".png") continue;
      const std::string id = e.path().stem().string();
      if (!corpus.has_patch(id)) {
        throw InputError("orphan labelmap with no patch: " + e.path().string());
      }
      LabelMap lm;
      lm.patch_id = id;
      lm.classes = png_io::read_index8(e.path());
      corpus.set_labelmap(std::move(lm));  // validates values and dimensions
    }
  }

  return corpus;
}

void save_corpus(const Corpus& corpus, const fs::path& root) {
  fs::create_directories(root / "patches");
  fs::create_directories(root / "masks");

  std::vector<std::vector<std::string>> meta_rows;
  for (const auto& p : corpus.patches()) {
    png_io::write_rgb8(root / "patches" / (p.patch_id + ".png"), p.image);
    meta_rows.push_back({p.patch_id, to_string(p.modality), to_string(p.stratum), p.source_wsi,
                         p.annotator_id});
  }
  std::sort(meta_rows.begin(), meta_rows.end());
  csv::write(root / "meta.csv", {"patch_id", "modality", "stratum", "source_wsi",
                                 "annotator_id"},
             meta_rows);

  std::vector<std::vector<std::string>> inst_rows;
  for (const auto& m : corpus.instances()) {
    fs::create_directories(root / "masks" / m.patch_id);
    Grid<uint8_t> gray(m.mask.height(), m.mask.width());
    for (size_t i = 0; i < m.mask.size(); ++i) gray[i] = m.mask[i] ? 255 : 0;
    png_io::write_gray8(root / "masks" / m.patch_id / (m.instance_id + ".png"), gray);
    inst_rows.push_back({m.instance_id, m.patch_id, to_string(m.cell_class)});
  }
  std::sort(inst_rows.begin(), inst_rows.end());
  csv::write(root / "instances.csv", {"instance_id", "patch_id", "cell_class"}, inst_rows);

  if (!corpus.labelmaps().empty()) {
    fs::create_directories(root / "labelmaps");
    for (const auto& [id, lm] : corpus.labelmaps()) {
      save_labelmap(root / "labelmaps", lm);
    }
  }
}

std::map<std::string, LabelMap> load_labelmap_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ArtifactMissingError("labelmap dir not found: " +
                                                         dir.string());
  std::map<std::string, LabelMap> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".png") continue;
    LabelMap lm;
    lm.patch_id = e.path().stem().string();
    lm.classes = png_io::read_index8(e.path());
    for (uint8_t v : lm.classes.data()) {
      if (v >= kNumClasses) {
        throw InputError("labelmap " + e.path().string() + " has unknown class index " +
                         std::to_string(int(v)));
      }
    }
    out[lm.patch_id] = std::move(lm);
  }
  return out;
}

void save_labelmap(const fs::path& dir, const LabelMap& lm) {
  fs::create_directories(dir);
  png_io::write_indexed8(dir / (lm.patch_id + ".png"), lm.classes, png_io::labelmap_palette());
}

SplitAssignment stratified_split(const Corpus& corpus, const std::array<double, 3>& ratios,
                                 uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0)) throw InputError("split ratios must be positive");
  }
  if (corpus.patches().empty()) throw InputError("cannot split an empty corpus");

  SplitAssignment out;
  out.seed = seed;
  out.ratios = ratios;
  const double total_w = ratios[0] + ratios[1] + ratios[2];

  std::map<Stratum, std::vector<std::string>> by_stratum;
  for (const auto& p : corpus.patches()) by_stratum[p.stratum].push_back(p.patch_id);

  for (auto& [stratum, ids] : by_stratum) {
    Rng rng(mix_seed({seed, fnv1a64(to_string(stratum))}));
    rng.shuffle(ids);

    const size_t n = ids.size();
    if (n < 3) {
      log_warn("stratum " + to_string(stratum) + " has only " + std::to_string(n) +
               " patches; best-effort assignment");
    }

    // Largest-remainder apportionment; fractional ties resolved toward the
    // larger ratio weight, then by split order.
    std::array<double, 3> exact;
    std::array<size_t, 3> quota;
    size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      exact[s] = double(n) * ratios[s] / total_w;
      quota[s] = size_t(std::floor(exact[s]));
      assigned += quota[s];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double fa = exact[a] - std::floor(exact[a]);
      const double fb = exact[b] - std::floor(exact[b]);
      if (fa != fb) return fa > fb;
      if (ratios[a] != ratios[b]) return ratios[a] > ratios[b];
      return a < b;
    });
    for (size_t k = 0; assigned < n; ++k, ++assigned) quota[order[k % 3]]++;

    size_t idx = 0;
    for (int s = 0; s < 3; ++s) {
      for (size_t k = 0; k < quota[s]; ++k, ++idx) {
        out.assignment[ids[idx]] = Split(s);
      }
    }
  }
  return out;
}

void save_splits(const fs::path& path, const SplitAssignment& split) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [id, s] : split.assignment) rows.push_back({id, to_string(s)});
  csv::write(path, {"patch_id", "split"}, rows);
}

SplitAssignment load_splits(const fs::path& path) {
  if (!fs::exists(path)) throw ArtifactMissingError("splits file not found: " + path.string());
  auto t = csv::read(path, {"patch_id", "split"});
  SplitAssignment out;
  for (const auto& row : t.rows) out.assignment[row[0]] = split_from_string(row[1]);
  return out;
}

LabelMap instances_to_labelmap(const std::vector<const InstanceMask*>& instances, int height,
                               int width, OverlapPolicy policy) {
  LabelMap lm;
  lm.classes = ClassGrid(height, width, 0);
  if (instances.empty()) return lm;

  lm.patch_id = instances.front()->patch_id;
  for (const auto* m : instances) {
    if (m->patch_id != lm.patch_id) {
      throw InputError("instances_to_labelmap: mixed patch ids (" + m->patch_id + " vs " +
                       lm.patch_id + ")");
    }
    if (m->mask.height() != height || m->mask.width() != width) {
      throw InputError("instances_to_labelmap: instance " + m->instance_id +
                       " dimensions do not match");
    }
  }

  // Paint losers first so the policy winner lands last. Winner on overlap:
  // preferred area per policy, tie -> lower class index, tie -> lower id.
  std::vector<std::pair<size_t, const InstanceMask*>> ordered;
  for (const auto* m : instances) ordered.emplace_back(count_true(m->mask), m);
  std::sort(ordered.begin(), ordered.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) {
      return policy == OverlapPolicy::smaller_area_wins ? a.first > b.first : a.first < b.first;
    }
    if (a.second->cell_class != b.second->cell_class) {
      return a.second->cell_class > b.second->cell_class;
    }
    return a.second->instance_id > b.second->instance_id;
  });

  for (const auto& [area, m] : ordered) {
    const uint8_t cls = uint8_t(m->cell_class);
    for (size_t i = 0; i < m->mask.size(); ++i) {
      if (m->mask[i]) lm.classes[i] = cls;
    }
  }
  return lm;
}

std::map<CellClass, Mask> labelmap_to_class_masks(const LabelMap& lm) {
  std::map<CellClass, Mask> out;
  for (CellClass c : kForegroundClasses) {
    Mask m(lm.classes.height(), lm.classes.width(), 0);
    for (size_t i = 0; i < lm.classes.size(); ++i) m[i] = (lm.classes[i] == uint8_t(c)) ? 1 : 0;
    out[c] = std::move(m);
  }
  return out;
}

}  // namespace saml::data
