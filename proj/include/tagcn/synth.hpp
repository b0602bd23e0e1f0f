#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "tagcn/random.hpp"
#include "tagcn/streams.hpp"

namespace tagcn {

// Labeled motion snippets with the class evidence confined to a known frame
// window. Class c moves with harmonic index c+1: the index sets both the
// oscillation frequency and the standing-wave profile across joints, so
// signatures are distinct by construction. Frames outside the window carry
// only noise, which is what makes the window a ground-truth target for frame
// selection.
struct SyntheticSpec {
  SkeletonTopology topology;
  Index num_classes = 4;
  Index frames = 16;
  Index window_start = 5;
  Index window_len = 4;
  double amplitude = 1.0;
  double noise = 0.05;
  Index samples_per_class = 200;
  double val_fraction = 0.25;
};

inline void validate_synthetic_spec(const SyntheticSpec& spec) {
  if (spec.topology.num_joints < 1)
    fail(ErrorKind::validation, "synthetic spec: topology with joints required");
  if (spec.num_classes < 2) fail(ErrorKind::validation, "synthetic spec: at least 2 classes");
  if (spec.num_classes > spec.topology.num_joints + 1)
    fail(ErrorKind::validation, "synthetic spec: at most joints+1 classes keep the joint profiles distinct");
  if (spec.frames < 1) fail(ErrorKind::validation, "synthetic spec: at least 1 frame");
  if (spec.window_start < 0 || spec.window_len < 1 ||
      spec.window_start + spec.window_len > spec.frames)
    fail(ErrorKind::validation, "synthetic spec: window [" + std::to_string(spec.window_start) +
                                    ", +" + std::to_string(spec.window_len) + ") outside " +
                                    std::to_string(spec.frames) + " frames");
  if (spec.amplitude <= 0.0) fail(ErrorKind::validation, "synthetic spec: amplitude must be positive");
  if (spec.noise < 0.0) fail(ErrorKind::validation, "synthetic spec: negative noise");
  if (spec.samples_per_class < 1) fail(ErrorKind::validation, "synthetic spec: at least 1 sample per class");
  if (spec.val_fraction < 0.0 || spec.val_fraction >= 1.0)
    fail(ErrorKind::validation, "synthetic spec: val fraction outside [0, 1)");
}

inline double class_frequency(Index cls) { return 0.5 * static_cast<double>(cls + 1); }

inline double joint_profile(Index cls, Index joint, Index num_joints) {
  return std::cos(std::numbers::pi * static_cast<double>((cls + 1) * (joint + 1)) /
                  static_cast<double>(num_joints + 1));
}

// One sample: background noise everywhere, plus the class signature inside
// the window. Channels hold (sin wave, cos wave, static profile); only the
// wave phase varies between samples of a class. Noise draws happen even at
// noise 0 so the phase stream is independent of the noise setting.
inline SkeletonSequence synth_sample(const SyntheticSpec& spec, Index cls, Rng& rng) {
  const Index n = spec.topology.num_joints;
  SkeletonSequence seq;
  seq.label = static_cast<int>(cls);
  seq.topology = spec.topology.name;
  seq.data = Tensor::zeros({3, spec.frames, n});
  const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (Index ch = 0; ch < 3; ++ch)
    for (Index t = 0; t < spec.frames; ++t)
      for (Index j = 0; j < n; ++j) seq.data.at({ch, t, j}) = spec.noise * rng.normal();
  for (Index t = spec.window_start; t < spec.window_start + spec.window_len; ++t) {
    const double u = static_cast<double>(t - spec.window_start) / static_cast<double>(spec.window_len);
    const double angle = 2.0 * std::numbers::pi * class_frequency(cls) * u + psi;
    for (Index j = 0; j < n; ++j) {
      const double p = spec.amplitude * joint_profile(cls, j, n);
      seq.data.at({0, t, j}) += p * std::sin(angle);
      seq.data.at({1, t, j}) += p * std::cos(angle);
      seq.data.at({2, t, j}) += p;
    }
  }
  return seq;
}

// Class-major generation; the tail of each class goes to the validation
// split, so the split is balanced and seed-stable.
inline Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  validate_synthetic_spec(spec);
  // val fraction < 1 guarantees at least one training sample per class
  const Index val_per_class =
      static_cast<Index>(spec.val_fraction * static_cast<double>(spec.samples_per_class));
  const Index train_per_class = spec.samples_per_class - val_per_class;
  Rng rng(seed);
  Dataset ds;
  for (Index c = 0; c < spec.num_classes; ++c)
    for (Index s = 0; s < spec.samples_per_class; ++s) {
      SkeletonSequence seq = synth_sample(spec, c, rng);
      (s < train_per_class ? ds.train : ds.val).push_back(std::move(seq));
    }
  return ds;
}

// Materializes the dataset as sequence files plus the manifest consumed by
// load_dataset. Output is byte-identical for equal (spec, seed).
inline void write_synthetic(const SyntheticSpec& spec, std::uint64_t seed, const std::string& dir) {
  Dataset ds = generate_synthetic(spec, seed);
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest) fail(ErrorKind::io, "cannot write manifest in '" + dir + "'");
  std::vector<Index> counter(static_cast<std::size_t>(spec.num_classes), 0);
  auto emit = [&](const SkeletonSequence& seq, const char* split) {
    const Index idx = counter[static_cast<std::size_t>(seq.label)]++;
    std::string name = "c" + std::to_string(seq.label) + "_" + std::to_string(idx) + ".seq";
    save_sequence(seq, dir + "/" + name);
    manifest << name << " " << split << "\n";
  };
  for (const auto& seq : ds.train) emit(seq, "train");
  for (const auto& seq : ds.val) emit(seq, "val");
  if (!manifest.good()) fail(ErrorKind::io, "manifest write failed in '" + dir + "'");
}

// Fraction of the planted window present among the selected frames.
inline double window_recall(const std::vector<Index>& selected, Index window_start,
                            Index window_len) {
  if (window_len < 1) fail(ErrorKind::validation, "window_recall: empty window");
  Index hits = 0;
  for (Index f : selected)
    if (f >= window_start && f < window_start + window_len) ++hits;
  return static_cast<double>(hits) / static_cast<double>(window_len);
}

}  // namespace tagcn
