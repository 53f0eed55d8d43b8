#pragma once

#include <filesystem>
#include <set>

#include "saml/config.hpp"
#include "saml/dataset.hpp"

namespace saml::harness {

struct SyntheticOutcome {
  size_t patches = 0;
  size_t instances = 0;
  size_t corrupted = 0;
};

/// Build a synthetic blob corpus in memory: disjoint textured blobs of each
/// cell class over a noisy background, plus clean instance masks and ground
/// truth label maps. Deterministic under spec.seed.
data::Corpus make_synthetic_corpus(const SyntheticSpec& spec);

/// Generate the corpus on disk in the dataset layout. When
/// corruption_fraction > 0, a noisy annotation set is written alongside under
/// <root>/noisy/ (masks, labelmaps and a corruption.csv provenance listing
/// exactly round(fraction * instances) perturbed instances).
SyntheticOutcome generate_synthetic(const SyntheticSpec& spec,
                                    const std::filesystem::path& root);

/// The noisy twin of a clean corpus: same patches, instance masks perturbed
/// by seeded dilation/erosion. Returns per-instance provenance rows
/// (instance_id, corrupted, op, radius). When `eligible_patches` is given,
/// only instances of those patches are candidates for corruption (e.g.
/// corrupting the training split while validation stays clean); the corrupted
/// count is round(fraction * eligible instances).
struct CorruptionRecord {
  std::string instance_id;
  bool corrupted = false;
  std::string op;  // "dilate" | "erode" | ""
  int radius = 0;
};

std::pair<data::Corpus, std::vector<CorruptionRecord>> corrupt_corpus(
    const data::Corpus& clean, const SyntheticSpec& spec,
    const std::set<std::string>* eligible_patches = nullptr);

}  // namespace saml::harness
