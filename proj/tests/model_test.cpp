#include <doctest.h>

#include <filesystem>
#include <set>

#include "tagcn/complexity.hpp"
#include "tagcn/gradcheck.hpp"
#include "tagcn/model.hpp"
#include "test_util.hpp"

using namespace tagcn;
using testutil::random_tensor;

namespace {

SkeletonTopology toy_topology() {
  return load_topology(testutil::data_dir() + "/toy_line_5.topology");
}

ModelConfig toy_config(double width_scale, Index t = 16, Index t_prime = 8) {
  ModelConfig cfg;
  cfg.input_channels = 6;
  cfg.num_joints = 5;
  cfg.sequence_length = t;
  cfg.num_classes = 4;
  cfg.tam.t_prime = t_prime;
  cfg.width_scale = width_scale;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("canonical plan and shape propagation") {
  Rng rng(401);
  ModelConfig cfg;
  cfg.tam.t_prime = 150;
  SkeletonTopology ntu = load_topology(testutil::data_dir() + "/ntu_rgbd_25.topology");
  Network net = build_tagcn(cfg, ntu, rng);

  REQUIRE(net.config.plan.size() == 6);
  const Index widths[6] = {64, 64, 128, 128, 256, 256};
  const Index strides[6] = {1, 1, 2, 1, 2, 1};
  for (int i = 0; i < 6; ++i) {
    CHECK(net.config.plan[static_cast<std::size_t>(i)].out_channels == widths[i]);
    CHECK(net.config.plan[static_cast<std::size_t>(i)].stride == strides[i]);
    CHECK(net.config.plan[static_cast<std::size_t>(i)].temporal == (i >= 2));
    CHECK(net.config.plan[static_cast<std::size_t>(i)].residual == (i >= 2));
  }
  CHECK(net.config.tam.after_layer == 2);
  CHECK(net.has_tam);
  CHECK(net.tam.theta.shape() == Shape{300, 300});

  // frames entering each block: 300, 300, (selection) 150, 75, 75, 38
  CHECK(extent_before_layer(net.config, 1) == 300);
  CHECK(extent_before_layer(net.config, 2) == 150);
  CHECK(extent_before_layer(net.config, 3) == 75);
  CHECK(extent_before_layer(net.config, 4) == 75);
  CHECK(extent_before_layer(net.config, 5) == 38);
  CHECK(extent_before_layer(net.config, 6) == 38);

  // residual projections exist exactly where channel count or stride changes
  CHECK(!net.blocks[3].residual_weight.defined());
  CHECK(net.blocks[2].residual_weight.defined());
  CHECK(net.blocks[4].residual_weight.defined());
  CHECK(!net.blocks[5].residual_weight.defined());

  Tensor x = random_tensor({6, 300, 25}, rng);
  AttentionResult<double> attn;
  Tensor logits = network_forward(net, x, BatchNormMode::eval, &attn);
  CHECK(logits.shape() == Shape{60});
  CHECK(all_finite(logits));
  CHECK(attn.selected_frames.extent(1) == 150);
  CHECK(static_cast<Index>(attn.selected.size()) == 150);
}

TEST_CASE("width scaling floors at one channel") {
  CHECK(scaled_width(64, 1.0 / 16.0) == 4);
  CHECK(scaled_width(256, 1.0 / 16.0) == 16);
  CHECK(scaled_width(64, 1.0 / 1000.0) == 1);
  CHECK(scaled_width(3, 1.0) == 3);

  Rng rng(409);
  Network net = build_tagcn(toy_config(1.0 / 16.0), toy_topology(), rng);
  const Index widths[6] = {4, 4, 8, 8, 16, 16};
  for (int i = 0; i < 6; ++i)
    CHECK(net.config.plan[static_cast<std::size_t>(i)].out_channels == widths[i]);
  Tensor x = random_tensor({6, 16, 5}, rng);
  Tensor logits = network_forward(net, x, BatchNormMode::train);
  CHECK(logits.shape() == Shape{4});
}

TEST_CASE("t_prime equal to the frame count keeps every frame") {
  Rng rng(419);
  Network net = build_tagcn(toy_config(1.0 / 16.0, 16, 16), toy_topology(), rng);
  Tensor x = random_tensor({6, 16, 5}, rng);
  AttentionResult<double> attn;
  network_forward(net, x, BatchNormMode::eval, &attn);
  CHECK(attn.selected.size() == 16);
  for (Index t = 0; t < 16; ++t) CHECK(attn.selected[static_cast<std::size_t>(t)] == t);
}

TEST_CASE("baseline stack geometry") {
  Rng rng(421);
  ModelConfig cfg;
  cfg.input_channels = 3;
  cfg.width_scale = 1.0 / 16.0;
  cfg.num_joints = 5;
  cfg.sequence_length = 48;
  cfg.num_classes = 4;
  Network net = build_stgcn_baseline(cfg, toy_topology(), rng);
  REQUIRE(net.config.plan.size() == 9);
  CHECK(!net.has_tam);
  CHECK(net.config.mask_mode == MaskMode::multiply);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(net.config.plan[i].temporal);
    CHECK(net.config.plan[i].residual);
    CHECK(net.config.plan[i].stride == ((i == 4 || i == 7) ? 2 : 1));
  }
  // two halvings: 48 -> 24 -> 12
  CHECK(extent_before_layer(net.config, 9) == 12);

  Tensor x = random_tensor({3, 48, 5}, rng);
  CHECK(network_forward(net, x, BatchNormMode::eval).shape() == Shape{4});
}

TEST_CASE("config validation") {
  Rng rng(431);
  auto topo = toy_topology();

  ModelConfig empty = toy_config(1.0);
  CHECK_THROWS_AS(build_network(empty, topo, rng), Error);

  ModelConfig cfg = toy_config(1.0 / 16.0);
  CHECK_THROWS_AS(build_tagcn(toy_config(1.0 / 16.0, 16, 17), topo, rng), Error);
  CHECK_THROWS_AS(build_tagcn(toy_config(-1.0), topo, rng), Error);

  ModelConfig bad_joints = toy_config(1.0 / 16.0);
  bad_joints.num_joints = 7;
  CHECK_THROWS_AS(build_tagcn(bad_joints, topo, rng), Error);

  ModelConfig strided_spatial = toy_config(1.0 / 16.0);
  strided_spatial.plan = {{4, 2, false, false}};
  strided_spatial.tam = TamPlan{};
  CHECK_THROWS_AS(build_network(strided_spatial, topo, rng), Error);

  ModelConfig residual_spatial = toy_config(1.0 / 16.0);
  residual_spatial.plan = {{4, 1, false, true}};
  residual_spatial.tam = TamPlan{};
  CHECK_THROWS_AS(build_network(residual_spatial, topo, rng), Error);

  ModelConfig tam_late = toy_config(1.0 / 16.0);
  tam_late.plan = {{4, 1, false, false}};
  tam_late.tam = TamPlan{2, 4};
  CHECK_THROWS_AS(build_network(tam_late, topo, rng), Error);

  // t_prime measured against the frame count at the selection point
  ModelConfig tam_after_stride = toy_config(1.0 / 16.0);
  tam_after_stride.plan = {{4, 1, false, false}, {4, 2, true, true}};
  tam_after_stride.tam = TamPlan{2, 9};  // only 8 frames remain
  CHECK_THROWS_AS(build_network(tam_after_stride, topo, rng), Error);
  tam_after_stride.tam = TamPlan{2, 8};
  CHECK_NOTHROW(build_network(tam_after_stride, topo, rng));

  Network net = build_tagcn(toy_config(1.0 / 16.0), topo, rng);
  CHECK_THROWS_AS(network_forward(net, Tensor::zeros({6, 16, 7}), BatchNormMode::eval), Error);
  CHECK_THROWS_AS(network_forward(net, Tensor::zeros({3, 16, 5}), BatchNormMode::eval), Error);
}

TEST_CASE("parameter registry names are unique and decay flags spare norms and biases") {
  Rng rng(433);
  Network net = build_tagcn(toy_config(1.0 / 16.0), toy_topology(), rng);
  auto params = named_parameters(net);
  std::set<std::string> names;
  for (const auto& p : params) {
    CHECK(names.insert(p.name).second);
    const bool is_norm = p.name.find("norm") != std::string::npos;
    const bool is_bias = p.name.find("bias") != std::string::npos;
    if (is_norm || is_bias)
      CHECK(!p.decay);
    else
      CHECK(p.decay);
  }
  CHECK(names.count("tam.theta") == 1);
  CHECK(names.count("head.weight") == 1);
  CHECK(names.count("layers.0.spatial.mask.2") == 1);
  CHECK(names.count("layers.2.residual.weight") == 1);
  CHECK(names.count("layers.0.temporal.weight") == 0);  // spatial-only stage
}

TEST_CASE("parameter count depends on T only through the selection matrix") {
  Rng rng(439);
  Network small = build_tagcn(toy_config(1.0 / 16.0, 16, 8), toy_topology(), rng);
  Network large = build_tagcn(toy_config(1.0 / 16.0, 32, 8), toy_topology(), rng);
  CHECK(parameter_count(large) - parameter_count(small) == 32 * 32 - 16 * 16);
}

TEST_CASE("prediction and softmax head") {
  Rng rng(443);
  Network net = build_tagcn(toy_config(1.0 / 16.0), toy_topology(), rng);
  net.head_weight = Tensor::zeros(net.head_weight.shape());
  net.head_bias = Tensor::zeros({4});
  Tensor x = random_tensor({6, 16, 5}, rng);
  Prediction p = predict(network_forward(net, x, BatchNormMode::eval));
  for (double s : p.scores) CHECK(s == doctest::Approx(0.25));
  CHECK(p.label == 0);  // uniform scores tie toward the smaller class

  Tensor two_zero = Tensor::from_data({2}, {2.0, 0.0});
  Prediction q = predict(two_zero);
  const double e2 = std::exp(2.0);
  CHECK(q.scores[0] == doctest::Approx(e2 / (e2 + 1.0)));
  CHECK(q.scores[1] == doctest::Approx(1.0 / (e2 + 1.0)));
  CHECK(q.label == 0);

  for (int it = 0; it < 20; ++it) {
    Tensor logits = random_tensor({7}, rng);
    Prediction r = predict(logits);
    Index best = 0;
    for (Index k = 1; k < 7; ++k)
      if (logits.values()(k) > logits.values()(best)) best = k;
    CHECK(r.label == best);
    double sum = 0.0;
    for (double s : r.scores) sum += s;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("ensemble sums stream scores") {
  Prediction same = ensemble({{0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}});
  CHECK(same.label == 1);

  Prediction fused = ensemble({{0.6, 0.4}, {0.1, 0.9}});
  CHECK(fused.scores[0] == doctest::Approx(0.7));
  CHECK(fused.scores[1] == doctest::Approx(1.3));
  CHECK(fused.label == 1);

  Rng rng(449);
  for (int it = 0; it < 10; ++it) {
    std::vector<std::vector<double>> sets(4, std::vector<double>(5));
    std::vector<double> total(5, 0.0);
    for (auto& s : sets)
      for (std::size_t k = 0; k < 5; ++k) {
        s[k] = rng.uniform();
        total[k] += s[k];
      }
    Prediction p = ensemble(sets);
    std::size_t best = 0;
    for (std::size_t k = 1; k < 5; ++k)
      if (total[k] > total[best]) best = k;
    CHECK(p.label == static_cast<Index>(best));
    for (std::size_t k = 0; k < 5; ++k) CHECK(p.scores[k] == doctest::Approx(total[k]));
  }

  CHECK_THROWS_AS(ensemble({{0.5, 0.5}, {0.3, 0.3, 0.4}}), Error);
  CHECK_THROWS_AS(ensemble({}), Error);
}

TEST_CASE("checkpoint round-trip reproduces forwards bit for bit") {
  Rng rng(457);
  Network net = build_tagcn(toy_config(1.0 / 16.0), toy_topology(), rng);
  // give the running stats nontrivial values before saving
  for (int i = 0; i < 3; ++i)
    network_forward(net, random_tensor({6, 16, 5}, rng), BatchNormMode::train);

  const auto path = (std::filesystem::temp_directory_path() / "tagcn_model_ck.bin").string();
  save_network(net, path);

  Rng other(9999);
  Network clone = build_tagcn(toy_config(1.0 / 16.0), toy_topology(), other);
  load_network(clone, path);
  std::filesystem::remove(path);

  for (int it = 0; it < 3; ++it) {
    Tensor x = random_tensor({6, 16, 5}, rng);
    Tensor a = network_forward(net, x, BatchNormMode::eval);
    Tensor b = network_forward(clone, x, BatchNormMode::eval);
    for (Index k = 0; k < a.size(); ++k) CHECK(a.values()(k) == b.values()(k));
  }

  // shape mismatches are rejected
  Network tiny = build_tagcn(toy_config(1.0 / 64.0), toy_topology(), other);
  CHECK_THROWS_AS(load_network_state(tiny, network_state(net)), Error);
}

TEST_CASE("end-to-end gradients on a tiny width-scaled model") {
  Rng rng(461);
  Network net = build_tagcn(toy_config(1.0 / 64.0), toy_topology(), rng);
  Tensor x = random_tensor({6, 16, 5}, rng);

  // fixed seed keeps every score pair separated by far more than the probe
  // step, so the hard selection never flips inside the difference stencil
  std::vector<Tensor> leaves = {x};
  for (auto& p : named_parameters(net)) leaves.push_back(p.tensor);
  auto f = [&] { return cross_entropy(network_forward(net, x, BatchNormMode::train_no_update), 2); };
  CHECK(grad_check(f, leaves) < 1e-4);
}

TEST_SUITE_END();
