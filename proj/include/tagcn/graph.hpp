#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tagcn/error.hpp"
#include "tagcn/tensor.hpp"

namespace tagcn {

// Degree offset guarding against empty rows during partition normalization;
// partitions other than the root always contain nodes with no members on
// their side.
inline constexpr double kDegreeEpsilon = 0.001;

// Skeleton connectivity. Joints are 0-based in memory; the descriptor file
// format is 1-based. Edges are undirected pairs; bones are directed
// (source, target) with the source nearer the body center, one bone per
// non-center joint.
struct SkeletonTopology {
  std::string name;
  int num_joints = 0;
  int center = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::pair<int, int>> bones;
};

// Breadth-first hop distance from the center joint. Requires a validated
// (connected) topology; unreachable joints report -1.
inline std::vector<int> hop_distances(const SkeletonTopology& topo) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(topo.num_joints));
  for (auto [a, b] : topo.edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  std::vector<int> dist(static_cast<std::size_t>(topo.num_joints), -1);
  std::deque<int> queue{topo.center};
  dist[static_cast<std::size_t>(topo.center)] = 0;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (int w : adj[static_cast<std::size_t>(v)])
      if (dist[static_cast<std::size_t>(w)] < 0) {
        dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(v)] + 1;
        queue.push_back(w);
      }
  }
  return dist;
}

inline void validate_topology(const SkeletonTopology& topo) {
  if (topo.num_joints < 1) fail(ErrorKind::validation, "topology '" + topo.name + "': num_joints must be positive");
  if (topo.center < 0 || topo.center >= topo.num_joints)
    fail(ErrorKind::validation, "topology '" + topo.name + "': center joint out of range");
  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : topo.edges) {
    if (a < 0 || a >= topo.num_joints || b < 0 || b >= topo.num_joints)
      fail(ErrorKind::validation, "topology '" + topo.name + "': edge joint out of range");
    if (a == b) fail(ErrorKind::validation, "topology '" + topo.name + "': self-loop on joint " + std::to_string(a + 1));
    const std::pair<int, int> key = std::minmax(a, b);
    if (!seen.insert(key).second)
      fail(ErrorKind::validation, "topology '" + topo.name + "': duplicate edge (" +
                                      std::to_string(key.first + 1) + "," + std::to_string(key.second + 1) + ")");
  }
  const auto dist = hop_distances(topo);
  for (int j = 0; j < topo.num_joints; ++j)
    if (dist[static_cast<std::size_t>(j)] < 0)
      fail(ErrorKind::validation, "topology '" + topo.name + "': joint " + std::to_string(j + 1) +
                                      " unreachable from center");
  if (!topo.bones.empty()) {
    if (static_cast<int>(topo.bones.size()) != topo.num_joints - 1)
      fail(ErrorKind::validation, "topology '" + topo.name + "': expected " +
                                      std::to_string(topo.num_joints - 1) + " bones, got " +
                                      std::to_string(topo.bones.size()));
    std::set<int> targets;
    for (auto [src, dst] : topo.bones) {
      if (src < 0 || src >= topo.num_joints || dst < 0 || dst >= topo.num_joints)
        fail(ErrorKind::validation, "topology '" + topo.name + "': bone joint out of range");
      if (seen.count(std::minmax(src, dst)) == 0)
        fail(ErrorKind::validation, "topology '" + topo.name + "': bone (" + std::to_string(src + 1) + "," +
                                        std::to_string(dst + 1) + ") is not an edge");
      if (dist[static_cast<std::size_t>(src)] >= dist[static_cast<std::size_t>(dst)])
        fail(ErrorKind::validation, "topology '" + topo.name + "': bone (" + std::to_string(src + 1) + "," +
                                        std::to_string(dst + 1) + ") does not point away from the center");
      if (dst == topo.center)
        fail(ErrorKind::validation, "topology '" + topo.name + "': bone targets the center joint");
      if (!targets.insert(dst).second)
        fail(ErrorKind::validation, "topology '" + topo.name + "': joint " + std::to_string(dst + 1) +
                                        " is the target of more than one bone");
    }
    if (static_cast<int>(targets.size()) != topo.num_joints - 1)
      fail(ErrorKind::validation, "topology '" + topo.name + "': bones do not cover every non-center joint");
  }
}

// Binary adjacency (symmetric, zero diagonal).
inline Eigen::MatrixXd build_adjacency(const SkeletonTopology& topo) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(topo.num_joints, topo.num_joints);
  for (auto [i, j] : topo.edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

// Symmetric normalization with self connections:
//   A_hat = D^{-1/2} (A + I) D^{-1/2},  D_ii = sum_j (A + I)_ij.
// Degrees are >= 1, so every entry lands in [0, 1].
inline Eigen::MatrixXd normalize_self(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) fail(ErrorKind::shape, "normalize_self: square matrix required");
  Eigen::MatrixXd at = a + Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::VectorXd d_inv_sqrt = at.rowwise().sum().array().rsqrt();
  return d_inv_sqrt.asDiagonal() * at * d_inv_sqrt.asDiagonal();
}

// Degree-normalizes one partition matrix:
//   A_hat_p = D_p^{-1/2} A_p D_p^{-1/2},  D_(ii)p = sum_j A_(ij)p + eps.
// The eps keeps empty rows finite (their degree collapses to eps alone).
inline Eigen::MatrixXd normalize_partition(const Eigen::MatrixXd& a, double eps = kDegreeEpsilon) {
  if (a.rows() != a.cols()) fail(ErrorKind::shape, "normalize_partition: square matrix required");
  Eigen::VectorXd d_inv_sqrt = (a.rowwise().sum().array() + eps).rsqrt();
  return d_inv_sqrt.asDiagonal() * a * d_inv_sqrt.asDiagonal();
}

enum Partition { kRoot = 0, kCentripetal = 1, kCentrifugal = 2 };

// Distance partitioning of the self-augmented adjacency. Entry (i, j) of
// partition p means "j participates in partition p of i's neighborhood":
//   root        - j == i (self connections),
//   centripetal - j adjacent to i and strictly nearer the center,
//   centrifugal - j adjacent to i, equally near or farther (ties included).
// The three matrices sum to A + I exactly.
struct PartitionedAdjacency {
  std::array<Eigen::MatrixXd, 3> raw;
  std::array<Eigen::MatrixXd, 3> normalized;
  std::vector<int> hops;
};

inline PartitionedAdjacency partition_adjacency(const SkeletonTopology& topo,
                                                double eps = kDegreeEpsilon) {
  validate_topology(topo);
  PartitionedAdjacency out;
  out.hops = hop_distances(topo);
  const int n = topo.num_joints;
  for (auto& m : out.raw) m = Eigen::MatrixXd::Zero(n, n);
  out.raw[kRoot] = Eigen::MatrixXd::Identity(n, n);
  for (auto [a, b] : topo.edges) {
    const int ha = out.hops[static_cast<std::size_t>(a)];
    const int hb = out.hops[static_cast<std::size_t>(b)];
    // each endpoint classifies the other relative to its own hop count
    auto& from_a = (hb < ha) ? out.raw[kCentripetal] : out.raw[kCentrifugal];
    from_a(a, b) = 1.0;
    auto& from_b = (ha < hb) ? out.raw[kCentripetal] : out.raw[kCentrifugal];
    from_b(b, a) = 1.0;
  }
  for (int p = 0; p < 3; ++p) out.normalized[static_cast<std::size_t>(p)] = normalize_partition(out.raw[static_cast<std::size_t>(p)], eps);
  return out;
}

// Row-major copy into a tensor (constant; no gradient).
template <typename Scalar = double>
TensorT<Scalar> matrix_to_tensor(const Eigen::MatrixXd& m) {
  TensorT<Scalar> t = TensorT<Scalar>::from_shape({m.rows(), m.cols()});
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) t.values()(i * m.cols() + j) = static_cast<Scalar>(m(i, j));
  return t;
}

// ---- descriptor file format -------------------------------------------------
//
//   # comment / blank lines allowed
//   name <identifier>
//   num_joints <N>
//   center_joint <1-based joint>
//   edge <a> <b>            (1-based, one per line)
//   bone <source> <target>  (1-based, one per line, optional section)

inline SkeletonTopology parse_topology(std::istream& is, const std::string& origin) {
  SkeletonTopology topo;
  bool have_name = false, have_n = false, have_center = false;
  std::string line;
  int line_no = 0;
  auto at = [&](const std::string& msg) {
    fail(ErrorKind::format, origin + ":" + std::to_string(line_no) + ": " + msg);
  };
  auto joint_in_range = [&](long v) {
    if (!have_n) at("joint reference before num_joints");
    if (v < 1 || v > topo.num_joints)
      at("joint " + std::to_string(v) + " outside 1.." + std::to_string(topo.num_joints));
    return static_cast<int>(v - 1);
  };
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "name") {
      if (!(ls >> topo.name)) at("name requires a value");
      have_name = true;
    } else if (key == "num_joints") {
      long v;
      if (!(ls >> v) || v < 1) at("num_joints requires a positive integer");
      topo.num_joints = static_cast<int>(v);
      have_n = true;
    } else if (key == "center_joint") {
      long v;
      if (!(ls >> v)) at("center_joint requires an integer");
      topo.center = joint_in_range(v);
      have_center = true;
    } else if (key == "edge") {
      long a, b;
      if (!(ls >> a >> b)) at("edge requires two joints");
      topo.edges.emplace_back(joint_in_range(a), joint_in_range(b));
    } else if (key == "bone") {
      long a, b;
      if (!(ls >> a >> b)) at("bone requires two joints");
      topo.bones.emplace_back(joint_in_range(a), joint_in_range(b));
    } else {
      at("unknown key '" + key + "'");
    }
    std::string extra;
    if (ls >> extra) at("trailing content '" + extra + "'");
  }
  ++line_no;
  if (!have_name) at("missing required field 'name'");
  if (!have_n) at("missing required field 'num_joints'");
  if (!have_center) at("missing required field 'center_joint'");
  validate_topology(topo);
  return topo;
}

inline SkeletonTopology load_topology(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "cannot open topology file '" + path + "'");
  return parse_topology(is, path);
}

inline void save_topology(const SkeletonTopology& topo, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  os << "name " << topo.name << "\n";
  os << "num_joints " << topo.num_joints << "\n";
  os << "center_joint " << topo.center + 1 << "\n";
  for (auto [a, b] : topo.edges) os << "edge " << a + 1 << " " << b + 1 << "\n";
  for (auto [a, b] : topo.bones) os << "bone " << a + 1 << " " << b + 1 << "\n";
  if (!os) fail(ErrorKind::io, "write failure on '" + path + "'");
}

}  // namespace tagcn
