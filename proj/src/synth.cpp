#include "saml/synth.hpp"

#include <algorithm>
#include <limits>
#include <cmath>

#include <set>

#include "saml/csv.hpp"
#include "saml/error.hpp"
#include "saml/morph.hpp"
#include "saml/png_io.hpp"
#include "saml/rng.hpp"

namespace fs = std::filesystem;

namespace saml::harness {

namespace {

std::string patch_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%05d", i);
  return buf;
}

// Slightly irregular ellipse, so blobs are not all perfect disks. The q-map
// holds the normalized radial coordinate (q = 1 at the mask boundary) for
// rendering soft edges; pixels beyond the fade reach keep q = +inf.
struct Blob {
  Mask mask;
  Grid<float> q;
};

Blob make_blob(int size, int cr, int cc, double ra, double rb, double rot, double wobble,
               double wobble_phase) {
  Blob b{Mask(size, size, 0), Grid<float>(size, size, std::numeric_limits<float>::infinity())};
  const double cs = std::cos(rot), sn = std::sin(rot);
  const int reach = int(std::ceil(std::max(ra, rb) * (1.0 + wobble) * 1.6)) + 1;
  for (int r = std::max(0, cr - reach); r <= std::min(size - 1, cr + reach); ++r) {
    for (int c = std::max(0, cc - reach); c <= std::min(size - 1, cc + reach); ++c) {
      const double dy = r - cr, dx = c - cc;
      const double u = dx * cs + dy * sn;
      const double v = -dx * sn + dy * cs;
      const double theta = std::atan2(v, u);
      const double scale = 1.0 + wobble * std::sin(3.0 * theta + wobble_phase);
      const double q2 =
          (u * u) / (ra * ra * scale * scale) + (v * v) / (rb * rb * scale * scale);
      const double q = std::sqrt(q2);
      b.q.at(r, c) = float(q);
      if (q <= 1.0) b.mask.at(r, c) = 1;
    }
  }
  return b;
}

// Color blend factor at radial coordinate q. Hard step at q = 1 for
// softness 0; otherwise a linear fade spanning the boundary.
double edge_alpha(double q, double softness) {
  if (softness <= 0.0) return q <= 1.0 ? 1.0 : 0.0;
  const double fade_start = 1.0 - 0.45 * softness;
  const double fade_end = 1.0 + 0.25 * softness;
  if (q <= fade_start) return 1.0;
  if (q >= fade_end) return 0.0;
  return (fade_end - q) / (fade_end - fade_start);
}

bool overlaps(const Mask& a, const Mask& occupancy) {
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] && occupancy[i]) return true;
  }
  return false;
}

struct ClassStyle {
  int base_r, base_g, base_b, jitter;
};

// Class textures separable by intensity distribution so a small model can
// learn them from color alone.
constexpr ClassStyle kBackgroundStyle = {120, 120, 120, 25};
constexpr ClassStyle kPodocyteStyle = {205, 90, 85, 18};
constexpr ClassStyle kMesangialStyle = {80, 140, 210, 18};

uint8_t jittered(Rng& rng, int base, int jitter) {
  const int v = base + int(rng.uniform_int(-jitter, jitter));
  return uint8_t(std::clamp(v, 0, 255));
}

}  // namespace

data::Corpus make_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  if (2 * spec.blob_radius_max + 2 >= spec.patch_size) {
    throw InputError("synthetic blobs do not fit the patch size");
  }

  data::Corpus corpus;
  const int n = spec.n_patches;
  const int size = spec.patch_size;

  // Exact stratum mix, order randomized by seed.
  std::vector<data::Stratum> strata(n, data::Stratum::normal);
  const int n_injured = int(std::llround(spec.injured_fraction * n));
  for (int i = 0; i < std::min(n, n_injured); ++i) strata[i] = data::Stratum::injured;
  {
    Rng rng(mix_seed({spec.seed, fnv1a64("strata")}));
    rng.shuffle(strata);
  }

  for (int i = 0; i < n; ++i) {
    const std::string pid = patch_name(i);
    Rng rng(mix_seed({spec.seed, fnv1a64(pid)}));

    Mask occupancy(size, size, 0);
    struct Placed {
      data::CellClass cls;
      Blob blob;
    };
    std::vector<Placed> blobs;

    for (data::CellClass cls : data::kForegroundClasses) {
      const int count =
          int(rng.uniform_int(spec.blobs_per_class_min, spec.blobs_per_class_max));
      for (int k = 0; k < count; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
          // Fall back to the smallest radius once the patch gets crowded.
          const int radius = attempt < 200
                                 ? int(rng.uniform_int(spec.blob_radius_min,
                                                       spec.blob_radius_max))
                                 : spec.blob_radius_min;
          const int margin = radius + 2;
          const int cr = int(rng.uniform_int(margin, size - 1 - margin));
          const int cc = int(rng.uniform_int(margin, size - 1 - margin));
          // Axes stay within the nominal radius so the margin always holds.
          const double ra = radius * rng.uniform(0.7, 1.0);
          const double rb = radius * rng.uniform(0.7, 1.0);
          const double rot = rng.uniform(0.0, 3.14159265);
          const double wobble_phase = rng.uniform(0.0, 6.2831853);
          Blob blob = make_blob(size, cr, cc, ra, rb, rot, 0.12, wobble_phase);
          if (count_true(blob.mask) == 0) continue;
          // 1px gap keeps instances disjoint even after mild perturbation.
          if (overlaps(morph::dilate(blob.mask, 1), occupancy)) continue;
          for (size_t px = 0; px < blob.mask.size(); ++px) occupancy[px] |= blob.mask[px];
          blobs.push_back({cls, std::move(blob)});
          placed = true;
        }
        if (!placed) {
          throw InputError("infeasible packing: cannot place " +
                           std::to_string(spec.blobs_per_class_min) + ".." +
                           std::to_string(spec.blobs_per_class_max) + " blobs of radius <= " +
                           std::to_string(spec.blob_radius_max) + " in a " +
                           std::to_string(size) + "px patch");
        }
      }
    }

    // Render: background texture blended with the nearest blob's class color
    // by its edge alpha (hard step unless edge_softness > 0).
    RgbImage img(size, size);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        double best_q = std::numeric_limits<double>::infinity();
        const ClassStyle* st = nullptr;
        for (const auto& b : blobs) {
          const double q = b.blob.q.at(r, c);
          if (q < best_q) {
            best_q = q;
            st = b.cls == data::CellClass::podocyte ? &kPodocyteStyle : &kMesangialStyle;
          }
        }
        const double alpha = st ? edge_alpha(best_q, spec.edge_softness) : 0.0;
        const uint8_t bg_r = jittered(rng, kBackgroundStyle.base_r, kBackgroundStyle.jitter);
        const uint8_t bg_g = jittered(rng, kBackgroundStyle.base_g, kBackgroundStyle.jitter);
        const uint8_t bg_b = jittered(rng, kBackgroundStyle.base_b, kBackgroundStyle.jitter);
        if (alpha <= 0.0) {
          img.at(r, c) = {bg_r, bg_g, bg_b};
        } else {
          const uint8_t fg_r = jittered(rng, st->base_r, st->jitter);
          const uint8_t fg_g = jittered(rng, st->base_g, st->jitter);
          const uint8_t fg_b = jittered(rng, st->base_b, st->jitter);
          auto mix = [&](uint8_t fg, uint8_t bg) {
            return uint8_t(std::clamp(int(std::lround(alpha * fg + (1.0 - alpha) * bg)), 0,
                                      255));
          };
          img.at(r, c) = {mix(fg_r, bg_r), mix(fg_g, bg_g), mix(fg_b, bg_b)};
        }
      }
    }

    data::Patch patch;
    patch.patch_id = pid;
    patch.image = std::move(img);
    patch.modality = data::Modality::PAS;
    patch.stratum = strata[i];
    patch.source_wsi = "wsi" + std::to_string(i / 16);
    patch.annotator_id = spec.annotator_id;
    corpus.add_patch(std::move(patch));

    int inst_idx = 0;
    for (auto& b : blobs) {
      data::InstanceMask m;
      m.instance_id = pid + "_i" + std::to_string(inst_idx++);
      m.patch_id = pid;
      m.cell_class = b.cls;
      m.mask = std::move(b.blob.mask);
      corpus.add_instance(std::move(m));
    }

    auto insts = corpus.instances_for_patch(pid);
    corpus.set_labelmap(data::instances_to_labelmap(insts, size, size));
  }
  return corpus;
}

std::pair<data::Corpus, std::vector<CorruptionRecord>> corrupt_corpus(
    const data::Corpus& clean, const SyntheticSpec& spec,
    const std::set<std::string>* eligible_patches) {
  // Seeded choice of exactly round(fraction * n) eligible instances.
  std::vector<std::string> ids;
  for (const auto& m : clean.instances()) {
    if (eligible_patches && !eligible_patches->count(m.patch_id)) continue;
    ids.push_back(m.instance_id);
  }
  std::sort(ids.begin(), ids.end());
  const size_t n_corrupt = size_t(std::llround(spec.corruption_fraction * double(ids.size())));
  Rng pick_rng(mix_seed({spec.seed, fnv1a64("corruption")}));
  pick_rng.shuffle(ids);
  std::set<std::string> chosen(ids.begin(), ids.begin() + std::min(n_corrupt, ids.size()));

  data::Corpus noisy;
  for (const auto& p : clean.patches()) noisy.add_patch(p);

  std::vector<CorruptionRecord> records;
  for (const auto& m : clean.instances()) {
    CorruptionRecord rec;
    rec.instance_id = m.instance_id;

    data::InstanceMask nm = m;
    if (chosen.count(m.instance_id)) {
      Rng rng(mix_seed({spec.seed, fnv1a64("corrupt-op"), fnv1a64(m.instance_id)}));
      const bool can_dilate = spec.corruption_dilate_px > 0;
      const bool can_erode = spec.corruption_erode_px > 0;
      const bool do_dilate = can_dilate && (!can_erode || rng.coin());
      if (do_dilate) {
        rec.op = "dilate";
        rec.radius = spec.corruption_dilate_px;
        nm.mask = morph::dilate(m.mask, rec.radius);
      } else {
        rec.op = "erode";
        int radius = spec.corruption_erode_px;
        Mask eroded = morph::erode(m.mask, radius);
        // Never annihilate an instance; shrink the radius until it survives.
        while (radius > 0 && count_true(eroded) == 0) {
          --radius;
          eroded = morph::erode(m.mask, radius);
        }
        rec.radius = radius;
        nm.mask = std::move(eroded);
      }
      rec.corrupted = true;
    }
    noisy.add_instance(std::move(nm));
    records.push_back(std::move(rec));
  }

  for (const auto& p : noisy.patches()) {
    auto insts = noisy.instances_for_patch(p.patch_id);
    noisy.set_labelmap(
        data::instances_to_labelmap(insts, p.image.height(), p.image.width()));
  }

  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
  return {std::move(noisy), std::move(records)};
}

SyntheticOutcome generate_synthetic(const SyntheticSpec& spec, const fs::path& root) {
  data::Corpus corpus = make_synthetic_corpus(spec);
  data::save_corpus(corpus, root);

  SyntheticOutcome out;
  out.patches = corpus.patches().size();
  out.instances = corpus.instances().size();

  if (spec.corruption_fraction > 0.0) {
    auto [noisy, records] = corrupt_corpus(corpus, spec);

    const fs::path noisy_root = root / "noisy";
    fs::create_directories(noisy_root / "masks");
    for (const auto& m : noisy.instances()) {
      fs::create_directories(noisy_root / "masks" / m.patch_id);
      Grid<uint8_t> gray(m.mask.height(), m.mask.width());
      for (size_t i = 0; i < m.mask.size(); ++i) gray[i] = m.mask[i] ? 255 : 0;
      png_io::write_gray8(noisy_root / "masks" / m.patch_id / (m.instance_id + ".png"), gray);
    }
    for (const auto& [pid, lm] : noisy.labelmaps()) {
      data::save_labelmap(noisy_root / "labelmaps", lm);
    }

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : records) {
      rows.push_back({r.instance_id, r.corrupted ? "1" : "0", r.op, std::to_string(r.radius)});
      out.corrupted += r.corrupted;
    }
    csv::write(noisy_root / "corruption.csv", {"instance_id", "corrupted", "op", "radius"},
               rows);
  }
  return out;
}

}  // namespace saml::harness
