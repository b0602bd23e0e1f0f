#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tagcn/complexity.hpp"
#include "tagcn/gradcheck.hpp"
#include "tagcn/synth.hpp"
#include "tagcn/train.hpp"

using namespace tagcn;
using nlohmann::json;

namespace {

// Error categories map to stable exit codes so scripts can branch on them.
int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::shape: return 2;
    case ErrorKind::validation: return 3;
    case ErrorKind::format: return 4;
    case ErrorKind::io: return 5;
    case ErrorKind::numeric: return 6;
    case ErrorKind::usage: return 7;
  }
  return 1;
}

std::string data_dir_or_fail(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TAGCN_DATA_DIR")) return env;
  fail(ErrorKind::usage, "no data directory: pass --data or set TAGCN_DATA_DIR");
}

// Bare names resolve against --data and then TAGCN_DATA_DIR.
std::string resolve_file(const std::string& name, const std::string& data_flag) {
  if (name.empty()) fail(ErrorKind::usage, "empty file name");
  if (std::filesystem::exists(name)) return name;
  std::vector<std::string> dirs;
  if (!data_flag.empty()) dirs.push_back(data_flag);
  if (const char* env = std::getenv("TAGCN_DATA_DIR")) dirs.push_back(env);
  for (const auto& dir : dirs) {
    const std::string candidate = dir + "/" + name;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  fail(ErrorKind::io, "cannot find '" + name + "' (searched --data and TAGCN_DATA_DIR)");
}

struct CliConfig {
  ModelConfig model;
  TrainConfig train;
  std::string topology;
  bool plan_given = false;
};

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "multiply") return MaskMode::multiply;
  if (s == "add") return MaskMode::add;
  fail(ErrorKind::format, "mask_mode '" + s + "' is not multiply|add");
}

CliConfig parse_config_json(const json& j) {
  CliConfig out;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    out.model.arch = m.value("arch", out.model.arch);
    out.model.input_channels = m.value("input_channels", out.model.input_channels);
    out.model.num_joints = m.value("num_joints", out.model.num_joints);
    out.model.sequence_length = m.value("sequence_length", out.model.sequence_length);
    out.model.num_classes = m.value("num_classes", out.model.num_classes);
    out.model.width_scale = m.value("width_scale", out.model.width_scale);
    if (m.contains("mask_mode"))
      out.model.mask_mode = parse_mask_mode(m.at("mask_mode").get<std::string>());
    if (m.contains("tam")) {
      out.model.tam.after_layer = m.at("tam").value("after_layer", 0);
      out.model.tam.t_prime = m.at("tam").value("t_prime", Index{0});
    }
    if (m.contains("plan")) {
      out.plan_given = true;
      for (const auto& l : m.at("plan")) {
        LayerPlan p;
        p.out_channels = l.value("channels", Index{0});
        p.stride = l.value("stride", Index{1});
        p.temporal = l.value("temporal", true);
        p.residual = l.value("residual", true);
        out.model.plan.push_back(p);
      }
    }
    out.topology = m.value("topology", std::string{});
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    if (t.contains("lr")) {
      const auto& lr = t.at("lr");
      out.train.schedule.initial = lr.value("initial", out.train.schedule.initial);
      if (lr.contains("boundaries"))
        out.train.schedule.boundaries = lr.at("boundaries").get<std::vector<int>>();
      out.train.schedule.decay_factor = lr.value("decay_factor", out.train.schedule.decay_factor);
      out.train.schedule.total_epochs = lr.value("total_epochs", out.train.schedule.total_epochs);
    }
    out.train.weight_decay = t.value("weight_decay", out.train.weight_decay);
    out.train.momentum = t.value("momentum", out.train.momentum);
    out.train.batch_size = t.value("batch_size", out.train.batch_size);
    out.train.seed = t.value("seed", out.train.seed);
    out.train.precision = t.value("precision", out.train.precision);
  }
  return out;
}

CliConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "cannot open config '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    fail(ErrorKind::format, "config '" + path + "': " + e.what());
  }
  try {
    return parse_config_json(j);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "config '" + path + "': " + e.what());
  }
}

Network build_model(const CliConfig& cc, const SkeletonTopology& topo) {
  Rng rng(cc.train.seed);
  if (cc.plan_given) return build_network(cc.model, topo, rng);
  if (cc.model.arch == "stgcn") {
    ModelConfig cfg = cc.model;
    return build_stgcn_baseline(cfg, topo, rng);
  }
  if (cc.model.arch == "tagcn") {
    ModelConfig cfg = cc.model;
    return build_tagcn(cfg, topo, rng);
  }
  fail(ErrorKind::validation, "unknown arch '" + cc.model.arch + "' (tagcn|stgcn)");
}

// Pads every sequence to the model's frame count, then swaps in the chosen
// input representation.
void prepare(std::vector<SkeletonSequence>& seqs, const SkeletonTopology& topo, Index t_target,
             const std::string& stream) {
  for (auto& s : seqs) {
    if (s.topology != topo.name)
      fail(ErrorKind::validation,
           "sequence follows topology '" + s.topology + "', model uses '" + topo.name + "'");
    Tensor joints = pad_repeat(s.data, t_target);
    if (stream == "joint")
      s.data = joints;
    else if (stream == "bone")
      s.data = bones(joints, topo);
    else if (stream == "joint-motion")
      s.data = motion(joints);
    else if (stream == "bone-motion")
      s.data = motion(bones(joints, topo));
    else if (stream == "joint+bone")
      s.data = fuse_joint_bone(joints, bones(joints, topo));
    else
      fail(ErrorKind::usage, "unknown stream '" + stream + "'");
  }
}

void check_input_shape(const CliConfig& cc, const std::vector<SkeletonSequence>& seqs,
                       const std::string& stream) {
  if (seqs.empty()) return;
  const Shape got = seqs[0].data.shape();
  const Shape want{cc.model.input_channels, cc.model.sequence_length, cc.model.num_joints};
  if (got != want)
    fail(ErrorKind::validation, "model expects input " + shape_str(want) + ", stream '" + stream +
                                    "' produced " + shape_str(got));
}

// ---- subcommands -----------------------------------------------------------

struct SynthArgs {
  std::string out, topology, data;
  SyntheticSpec spec;
  std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& a) {
  SyntheticSpec spec = a.spec;
  spec.topology = load_topology(resolve_file(a.topology, a.data));
  write_synthetic(spec, a.seed, a.out);
  const Index val = static_cast<Index>(spec.val_fraction * static_cast<double>(spec.samples_per_class));
  std::printf("wrote %lld sequences (%lld train, %lld val per class, %lld classes) to %s\n",
              static_cast<long long>(spec.num_classes * spec.samples_per_class),
              static_cast<long long>(spec.samples_per_class - val), static_cast<long long>(val),
              static_cast<long long>(spec.num_classes), a.out.c_str());
  std::printf("informative window: frames [%lld, %lld)\n",
              static_cast<long long>(spec.window_start),
              static_cast<long long>(spec.window_start + spec.window_len));
  return 0;
}

struct TrainArgs {
  std::string config, data, out = "model.ckpt", stream = "joint";
  int epochs = 0;
  double lr = 0.0;
  int batch = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int run_train(const TrainArgs& a) {
  CliConfig cc = load_config(a.config);
  if (a.epochs > 0) cc.train.schedule.total_epochs = a.epochs;
  if (a.lr > 0.0) cc.train.schedule.initial = a.lr;
  if (a.batch > 0) cc.train.batch_size = a.batch;
  if (a.seed_set) cc.train.seed = a.seed;
  if (cc.topology.empty()) fail(ErrorKind::validation, "config: model.topology file is required");

  const std::string dir = data_dir_or_fail(a.data);
  Dataset ds = load_dataset(dir);
  SkeletonTopology topo = load_topology(resolve_file(cc.topology, a.data));
  prepare(ds.train, topo, cc.model.sequence_length, a.stream);
  prepare(ds.val, topo, cc.model.sequence_length, a.stream);
  check_input_shape(cc, ds.train, a.stream);

  Network net = build_model(cc, topo);
  std::printf("training %s: %lld parameters, %zu train / %zu val sequences\n",
              cc.model.arch.c_str(), static_cast<long long>(parameter_count(net)),
              ds.train.size(), ds.val.size());
  TrainResult r = train(net, ds, cc.train, &std::cout);
  save_checkpoint(r.best_state, a.out);
  std::printf("best epoch %d (%s %.4f); checkpoint written to %s\n", r.best_epoch,
              ds.val.empty() ? "train_acc" : "val_acc", r.best_val_acc, a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string config, data, checkpoint, stream = "joint", split = "val";
};

int run_eval(const EvalArgs& a) {
  CliConfig cc = load_config(a.config);
  if (cc.topology.empty()) fail(ErrorKind::validation, "config: model.topology file is required");
  const std::string dir = data_dir_or_fail(a.data);
  Dataset ds = load_dataset(dir);
  SkeletonTopology topo = load_topology(resolve_file(cc.topology, a.data));
  Network net = build_model(cc, topo);
  load_network(net, a.checkpoint);

  std::vector<SkeletonSequence>& split = a.split == "train" ? ds.train : ds.val;
  if (a.split != "train" && a.split != "val")
    fail(ErrorKind::usage, "unknown split '" + a.split + "'");
  prepare(split, topo, cc.model.sequence_length, a.stream);
  check_input_shape(cc, split, a.stream);
  EvalResult r = evaluate(net, split);
  std::printf("split %s: %lld samples\n", a.split.c_str(), static_cast<long long>(r.count));
  std::printf("top1 %.4f\ntop5 %.4f\nloss %.4f\n", r.top1, r.top5, r.mean_loss);
  return 0;
}

struct AnalyzeArgs {
  std::string config, data, ratio_against;
  int streams = 1;
};

int run_analyze(const AnalyzeArgs& a) {
  CliConfig cc;
  if (!a.config.empty()) cc = load_config(a.config);
  if (cc.topology.empty()) cc.topology = "ntu_rgbd_25.topology";
  SkeletonTopology topo = load_topology(resolve_file(cc.topology, a.data));

  CostReport rep = cost_report(build_model(cc, topo));
  if (a.streams > 1) rep = stream_ensemble(rep, a.streams);
  std::fputs(format_report(rep).c_str(), stdout);

  if (!a.ratio_against.empty()) {
    CliConfig other = cc;
    other.plan_given = false;
    other.model.plan.clear();
    other.model.arch = a.ratio_against;
    if (a.ratio_against == "stgcn") other.model.input_channels = 3;
    CostReport base = cost_report(build_model(other, topo));
    if (a.streams > 1) base = stream_ensemble(base, a.streams);
    auto ratios = compare({rep, base}, base.model);
    std::printf("\nrelative to %s (%lld params, %lld flops):\n", base.model.c_str(),
                static_cast<long long>(base.total_params),
                static_cast<long long>(base.total_flops));
    for (const auto& r : ratios)
      std::printf("  %-12s flops x%.3f  params x%.3f\n", r.model.c_str(), 1.0 / r.flops,
                  1.0 / r.params);
  }
  return 0;
}

// ---- gradient checks --------------------------------------------------------

void fill_normal(Tensor& t, Rng& rng, double stddev = 1.0) {
  for (Index i = 0; i < t.size(); ++i) t.values()(i) = rng.normal(0.0, stddev);
}

Tensor random_grad_tensor(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor t = Tensor::from_shape(std::move(shape));
  fill_normal(t, rng, stddev);
  t.set_requires_grad(true);
  return t;
}

struct CheckRow {
  std::string name;
  double worst = 0.0;
};

double check_conv(Rng& rng, double refine) {
  Tensor x = random_grad_tensor({3, 10, 4}, rng);
  Tensor k = random_grad_tensor({5, 3, 3, 1}, rng);
  auto f = [&] { return sum_all(relu(conv2d(x, k, 2, 1))); };
  return grad_check(f, {x, k}, 1e-5, 1e-3, refine);
}

double check_matmul(Rng& rng, double refine) {
  Tensor x = random_grad_tensor({4, 6, 5}, rng);
  Tensor m = random_grad_tensor({5, 5}, rng);
  auto f = [&] { return sum_all(matmul_last(x, m)); };
  return grad_check(f, {x, m}, 1e-5, 1e-3, refine);
}

double check_norm(Rng& rng, double refine) {
  Tensor x = random_grad_tensor({4, 7, 3}, rng);
  Tensor gamma = random_grad_tensor({4}, rng);
  Tensor beta = random_grad_tensor({4}, rng);
  BatchNormState<double> bn(4);
  auto f = [&] {
    return sum_all(batch_norm(x, gamma, beta, bn, BatchNormMode::train_no_update));
  };
  return grad_check(f, {x, gamma, beta}, 1e-5, 1e-3, refine);
}

double check_spatial(Rng& rng, MaskMode mode, double refine) {
  SkeletonTopology topo;
  topo.name = "chain5";
  topo.num_joints = 5;
  topo.center = 2;
  for (int i = 0; i + 1 < 5; ++i) topo.edges.emplace_back(i, i + 1);
  auto a_hat = graph_tensors(partition_adjacency(topo));

  SpatialGraphConv<double> conv;
  conv.mode = mode;
  std::vector<Tensor> leaves;
  for (int p = 0; p < 3; ++p) {
    conv.weight[p] = random_grad_tensor({4, 3, 1, 1}, rng);
    conv.mask[p] = random_grad_tensor({5, 5}, rng, 0.3);
    leaves.push_back(conv.weight[p]);
    leaves.push_back(conv.mask[p]);
  }
  conv.bias = random_grad_tensor({4}, rng);
  leaves.push_back(conv.bias);
  Tensor x = random_grad_tensor({3, 6, 5}, rng);
  leaves.push_back(x);
  auto f = [&] { return sum_all(spatial_presum(x, conv, a_hat)); };
  return grad_check(f, leaves, 1e-5, 1e-3, refine);
}

double check_temporal(Rng& rng, double refine) {
  TemporalConv<double> conv;
  conv.weight = random_grad_tensor({3, 4, 9, 1}, rng, 0.4);
  conv.bias = random_grad_tensor({3}, rng);
  conv.stride = 2;
  Tensor x = random_grad_tensor({4, 12, 3}, rng);
  auto f = [&] { return sum_all(temporal_forward(x, conv)); };
  return grad_check(f, {conv.weight, conv.bias, x}, 1e-5, 1e-3, refine);
}

double check_tam(Rng& rng, double refine) {
  Tensor h = random_grad_tensor({3, 8, 4}, rng);
  Rng init(rng.next_u64());
  TemporalAttention<double> att = make_temporal_attention(8, 4, init);
  att.theta.set_requires_grad(true);
  const auto frozen = tam_forward(h, att).selected;
  auto f = [&] {
    return sum_all(select_frames(apply_attention(h, attention_scores(h, att.theta)), frozen));
  };
  return grad_check(f, {h, att.theta}, 1e-5, 1e-3, refine);
}

double check_model(Rng& rng, double refine) {
  SkeletonTopology topo;
  topo.name = "chain5";
  topo.num_joints = 5;
  topo.center = 2;
  for (int i = 0; i + 1 < 5; ++i) topo.edges.emplace_back(i, i + 1);

  ModelConfig cfg;
  cfg.input_channels = 3;
  cfg.num_joints = 5;
  cfg.sequence_length = 16;
  cfg.num_classes = 4;
  cfg.width_scale = 1.0 / 64.0;
  cfg.tam.t_prime = 8;
  Rng build_rng(rng.next_u64());
  Network net = build_tagcn(cfg, topo, build_rng);

  std::vector<Tensor> leaves;
  for (auto& p : named_parameters(net)) leaves.push_back(p.tensor);
  Tensor x = random_grad_tensor({3, 16, 5}, rng);
  leaves.push_back(x);
  auto f = [&] {
    return cross_entropy(network_forward(net, x, BatchNormMode::train_no_update), 1);
  };
  return grad_check(f, leaves, 1e-5, 1e-3, refine);
}

struct GradcheckArgs {
  std::string target = "all";
  int seeds = 5;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
  if (a.seeds < 1) fail(ErrorKind::usage, "--seeds must be positive");
  std::vector<CheckRow> rows;
  auto want = [&](const char* name) { return a.target == "all" || a.target == name; };
  auto sweep = [&](const char* name, auto&& check) {
    CheckRow row{name, 0.0};
    for (int s = 0; s < a.seeds; ++s) {
      Rng rng(1000 + static_cast<std::uint64_t>(s) * 7919);
      row.worst = std::max(row.worst, check(rng, a.tolerance));
    }
    rows.push_back(row);
  };
  if (want("conv")) sweep("conv", check_conv);
  if (want("matmul")) sweep("matmul", check_matmul);
  if (want("norm")) sweep("norm", check_norm);
  if (want("spatial")) {
    sweep("spatial", [](Rng& rng, double r) { return check_spatial(rng, MaskMode::multiply, r); });
    sweep("spatial-add", [](Rng& rng, double r) { return check_spatial(rng, MaskMode::add, r); });
  }
  if (want("temporal")) sweep("temporal", check_temporal);
  if (want("tam")) sweep("tam", check_tam);
  if (want("model")) sweep("model", check_model);
  if (rows.empty())
    fail(ErrorKind::usage, "unknown target '" + a.target +
                               "' (conv|matmul|norm|spatial|temporal|tam|model|all)");

  bool ok = true;
  for (const auto& row : rows) {
    const bool pass = row.worst < a.tolerance;
    ok = ok && pass;
    std::printf("%-12s max rel err %.3e over %d seeds  %s\n", row.name.c_str(), row.worst,
                a.seeds, pass ? "PASS" : "FAIL");
  }
  return ok ? 0 : 1;
}

struct InspectArgs {
  std::string config, data, checkpoint, stream = "joint", split = "val";
  int sample = 0;
};

int run_tam_inspect(const InspectArgs& a) {
  CliConfig cc = load_config(a.config);
  if (cc.topology.empty()) fail(ErrorKind::validation, "config: model.topology file is required");
  const std::string dir = data_dir_or_fail(a.data);
  Dataset ds = load_dataset(dir);
  SkeletonTopology topo = load_topology(resolve_file(cc.topology, a.data));
  Network net = build_model(cc, topo);
  if (!net.has_tam) fail(ErrorKind::validation, "model has no frame selection module");
  if (!a.checkpoint.empty()) load_network(net, a.checkpoint);

  std::vector<SkeletonSequence>& split = a.split == "train" ? ds.train : ds.val;
  if (a.split != "train" && a.split != "val")
    fail(ErrorKind::usage, "unknown split '" + a.split + "'");
  if (a.sample < 0 || static_cast<std::size_t>(a.sample) >= split.size())
    fail(ErrorKind::usage, "sample " + std::to_string(a.sample) + " outside split of " +
                               std::to_string(split.size()));
  prepare(split, topo, cc.model.sequence_length, a.stream);
  check_input_shape(cc, split, a.stream);

  const SkeletonSequence& s = split[static_cast<std::size_t>(a.sample)];
  AttentionResult<double> attn;
  Tensor logits = network_forward(net, s.data, BatchNormMode::train_no_update, &attn);
  Prediction pred = predict(logits);

  const Index frames = attn.scores.size();
  std::vector<bool> kept(static_cast<std::size_t>(frames), false);
  for (Index f : attn.selected) kept[static_cast<std::size_t>(f)] = true;
  std::printf("%zu of %lld frames kept\n", attn.selected.size(), static_cast<long long>(frames));
  std::printf("frame  score     kept\n");
  for (Index t = 0; t < frames; ++t)
    std::printf("%5lld  %.6f  %s\n", static_cast<long long>(t), attn.scores.values()(t),
                kept[static_cast<std::size_t>(t)] ? "*" : "");
  std::printf("predicted class %lld (p=%.3f)", static_cast<long long>(pred.label),
              pred.scores[static_cast<std::size_t>(pred.label)]);
  if (s.label >= 0) std::printf(", label %d", s.label);
  std::printf("\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skeleton action recognition with learned frame selection"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "generate a labeled synthetic dataset");
  cmd_synth->add_option("--out", synth.out, "output directory")->required();
  cmd_synth->add_option("--topology", synth.topology, "topology file")->required();
  cmd_synth->add_option("--data", synth.data, "directory for resolving bare file names");
  cmd_synth->add_option("--classes", synth.spec.num_classes, "number of classes");
  cmd_synth->add_option("--frames", synth.spec.frames, "frames per sequence");
  cmd_synth->add_option("--window-start", synth.spec.window_start, "first informative frame");
  cmd_synth->add_option("--window-len", synth.spec.window_len, "informative frame count");
  cmd_synth->add_option("--amplitude", synth.spec.amplitude, "signature amplitude");
  cmd_synth->add_option("--noise", synth.spec.noise, "background noise level");
  cmd_synth->add_option("--per-class", synth.spec.samples_per_class, "samples per class");
  cmd_synth->add_option("--val-fraction", synth.spec.val_fraction, "share held out per class");
  cmd_synth->add_option("--seed", synth.seed, "generator seed");

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "train a model on a dataset directory");
  cmd_train->add_option("--config", tr.config, "JSON config file")->required();
  cmd_train->add_option("--data", tr.data, "dataset directory (default TAGCN_DATA_DIR)");
  cmd_train->add_option("--out", tr.out, "checkpoint output path");
  cmd_train->add_option("--stream", tr.stream,
                        "input representation: joint|bone|joint-motion|bone-motion|joint+bone");
  cmd_train->add_option("--epochs", tr.epochs, "override total epochs");
  cmd_train->add_option("--lr", tr.lr, "override initial learning rate");
  cmd_train->add_option("--batch", tr.batch, "override batch size");
  cmd_train->add_option("--seed", tr.seed, "override seed")->each([&](const std::string&) {
    tr.seed_set = true;
  });

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  cmd_eval->add_option("--config", ev.config, "JSON config file")->required();
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint path")->required();
  cmd_eval->add_option("--data", ev.data, "dataset directory (default TAGCN_DATA_DIR)");
  cmd_eval->add_option("--stream", ev.stream, "input representation");
  cmd_eval->add_option("--split", ev.split, "train|val");

  AnalyzeArgs an;
  auto* cmd_analyze = app.add_subcommand("analyze", "parameter and flop report");
  cmd_analyze->add_option("--config", an.config, "JSON config file (default: canonical)");
  cmd_analyze->add_option("--data", an.data, "directory for resolving the topology file");
  cmd_analyze->add_option("--ratio-against", an.ratio_against, "baseline arch to divide by");
  cmd_analyze->add_option("--streams", an.streams, "report an n-stream ensemble");

  GradcheckArgs gc;
  auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  cmd_gradcheck->add_option("--target", gc.target,
                            "conv|matmul|norm|spatial|temporal|tam|model|all");
  cmd_gradcheck->add_option("--seeds", gc.seeds, "random instances per check");
  cmd_gradcheck->add_option("--tolerance", gc.tolerance, "max relative error allowed");

  InspectArgs in;
  auto* cmd_inspect = app.add_subcommand("tam-inspect", "show frame scores and selection");
  cmd_inspect->add_option("--config", in.config, "JSON config file")->required();
  cmd_inspect->add_option("--data", in.data, "dataset directory (default TAGCN_DATA_DIR)");
  cmd_inspect->add_option("--checkpoint", in.checkpoint, "checkpoint path (optional)");
  cmd_inspect->add_option("--stream", in.stream, "input representation");
  cmd_inspect->add_option("--split", in.split, "train|val");
  cmd_inspect->add_option("--sample", in.sample, "sample index within the split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::usage);
  }

  try {
    if (cmd_synth->parsed()) return run_synth(synth);
    if (cmd_train->parsed()) return run_train(tr);
    if (cmd_eval->parsed()) return run_eval(ev);
    if (cmd_analyze->parsed()) return run_analyze(an);
    if (cmd_gradcheck->parsed()) return run_gradcheck(gc);
    if (cmd_inspect->parsed()) return run_tam_inspect(in);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", error_kind_name(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error [internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
