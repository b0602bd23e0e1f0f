#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tagcn/checkpoint.hpp"
#include "tagcn/graph.hpp"
#include "tagcn/ops.hpp"

namespace tagcn {

// One recorded skeleton sequence. Channels are (x, y, z) or (x, y,
// confidence); either way they all flow through the same arithmetic.
struct SkeletonSequence {
  Tensor data;           // (C, T_raw, N)
  int label = -1;        // -1 when unlabeled
  std::string topology;  // name of the topology the joint axis follows
};

// Tiles the sequence cyclically along the frame axis until it reaches
// t_target; longer sequences are truncated.
template <typename Scalar>
TensorT<Scalar> pad_repeat(const TensorT<Scalar>& raw, Index t_target) {
  if (raw.rank() != 3) fail(ErrorKind::shape, "pad_repeat: rank 3 input required");
  if (t_target < 1) fail(ErrorKind::validation, "pad_repeat: target length must be positive");
  const Index c = raw.extent(0), t_raw = raw.extent(1), n = raw.extent(2);
  if (t_raw == t_target) return raw;
  TensorT<Scalar> out = TensorT<Scalar>::from_shape({c, t_target, n});
  for (Index ci = 0; ci < c; ++ci)
    for (Index ti = 0; ti < t_target; ++ti) {
      const Scalar* src = raw.values().data() + (ci * t_raw + ti % t_raw) * n;
      Scalar* dst = out.values().data() + (ci * t_target + ti) * n;
      std::memcpy(dst, src, static_cast<std::size_t>(n) * sizeof(Scalar));
    }
  return out;
}

// Bone stream: each joint's channel vector minus its kinematic parent's.
// The center joint has no parent and stays zero.
template <typename Scalar>
TensorT<Scalar> bones(const TensorT<Scalar>& joints, const SkeletonTopology& topo) {
  if (joints.rank() != 3 || joints.extent(2) != topo.num_joints)
    fail(ErrorKind::shape, "bones: input joint axis does not match topology '" + topo.name + "'");
  if (topo.bones.empty())
    fail(ErrorKind::validation, "bones: topology '" + topo.name + "' declares no bones");
  const Index c = joints.extent(0), t = joints.extent(1), n = joints.extent(2);
  TensorT<Scalar> out = TensorT<Scalar>::zeros({c, t, n});
  for (auto [src, dst] : topo.bones)
    for (Index ci = 0; ci < c; ++ci)
      for (Index ti = 0; ti < t; ++ti) {
        const Scalar* row = joints.values().data() + (ci * t + ti) * n;
        out.values()((ci * t + ti) * n + dst) = row[dst] - row[src];
      }
  return out;
}

// Motion stream: forward frame difference, zero at the final frame.
template <typename Scalar>
TensorT<Scalar> motion(const TensorT<Scalar>& x) {
  if (x.rank() != 3) fail(ErrorKind::shape, "motion: rank 3 input required");
  const Index c = x.extent(0), t = x.extent(1), n = x.extent(2);
  TensorT<Scalar> out = TensorT<Scalar>::zeros({c, t, n});
  for (Index ci = 0; ci < c; ++ci)
    for (Index ti = 0; ti + 1 < t; ++ti)
      for (Index ni = 0; ni < n; ++ni)
        out.values()((ci * t + ti) * n + ni) =
            x.values()((ci * t + ti + 1) * n + ni) - x.values()((ci * t + ti) * n + ni);
  return out;
}

// Joint-bone early fusion: stack along channels, joints first.
template <typename Scalar>
TensorT<Scalar> fuse_joint_bone(const TensorT<Scalar>& joints, const TensorT<Scalar>& bone) {
  if (joints.shape() != bone.shape())
    fail(ErrorKind::shape, "fuse_joint_bone: stream shapes differ, " + shape_str(joints.shape()) +
                               " vs " + shape_str(bone.shape()));
  return concat_channels(joints, bone);
}

// ---- sequence files ---------------------------------------------------------
//
//   magic "TGSQ" | u32 version | u32 C | u32 T_raw | u32 N | i32 label
//   | u32 topology-name bytes | name | f32 payload, little-endian, (C,T,N)
//   row-major

inline constexpr std::uint32_t kSequenceVersion = 1;

inline void save_sequence(const SkeletonSequence& seq, const std::string& path) {
  if (seq.data.rank() != 3) fail(ErrorKind::shape, "save_sequence: rank 3 data required");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  os.write("TGSQ", 4);
  detail::write_le<std::uint32_t>(os, kSequenceVersion);
  for (int d = 0; d < 3; ++d)
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.data.extent(d)));
  detail::write_le<std::int32_t>(os, seq.label);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.topology.size()));
  os.write(seq.topology.data(), static_cast<std::streamsize>(seq.topology.size()));
  for (Index i = 0; i < seq.data.size(); ++i)
    detail::write_le<float>(os, static_cast<float>(seq.data.values()(i)));
  if (!os) fail(ErrorKind::io, "write failure on '" + path + "'");
}

inline SkeletonSequence load_sequence(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open '" + path + "' for reading");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "TGSQ", 4) != 0)
    fail(ErrorKind::format, "'" + path + "' is not a sequence file");
  const auto version = detail::read_le<std::uint32_t>(is, "version");
  if (version != kSequenceVersion)
    fail(ErrorKind::format, "unsupported sequence version " + std::to_string(version));
  const auto c = detail::read_le<std::uint32_t>(is, "channels");
  const auto t = detail::read_le<std::uint32_t>(is, "frames");
  const auto n = detail::read_le<std::uint32_t>(is, "joints");
  if (c == 0 || t == 0 || n == 0) fail(ErrorKind::format, "'" + path + "': zero extent");
  SkeletonSequence seq;
  seq.label = detail::read_le<std::int32_t>(is, "label");
  const auto name_len = detail::read_le<std::uint32_t>(is, "topology name length");
  seq.topology.resize(name_len);
  if (name_len && !is.read(seq.topology.data(), name_len))
    fail(ErrorKind::format, "'" + path + "': truncated topology name");
  seq.data = Tensor::from_shape({static_cast<Index>(c), static_cast<Index>(t), static_cast<Index>(n)});
  for (Index i = 0; i < seq.data.size(); ++i)
    seq.data.values()(i) = static_cast<double>(detail::read_le<float>(is, "payload"));
  return seq;
}

// ---- datasets ---------------------------------------------------------------
//
// A dataset directory holds sequence files plus `manifest.txt`, one
// "<filename> <train|val>" entry per line, '#' comments allowed.

struct Dataset {
  std::vector<SkeletonSequence> train;
  std::vector<SkeletonSequence> val;
};

inline Dataset load_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.txt";
  std::ifstream is(manifest_path);
  if (!is) fail(ErrorKind::io, "cannot open manifest '" + manifest_path + "'");
  Dataset ds;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string file, split;
    if (!(ls >> file)) continue;
    if (!(ls >> split) || (split != "train" && split != "val"))
      fail(ErrorKind::format, manifest_path + ":" + std::to_string(line_no) +
                                  ": expected '<file> train|val'");
    auto& bucket = split == "train" ? ds.train : ds.val;
    bucket.push_back(load_sequence(dir + "/" + file));
  }
  if (ds.train.empty()) fail(ErrorKind::validation, "dataset '" + dir + "' has no training split");
  return ds;
}

}  // namespace tagcn
