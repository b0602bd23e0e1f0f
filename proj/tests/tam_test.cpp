#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tagcn/gradcheck.hpp"
#include "tagcn/tam.hpp"
#include "test_util.hpp"

using namespace tagcn;
using testutil::random_tensor;

namespace {

// Full-sort reference: order every frame by (score desc, index asc), take
// the head.
std::vector<Index> select_oracle(const std::vector<double>& scores, Index t_prime,
                                 bool temporal_order) {
  std::vector<std::pair<double, Index>> ranked;
  for (std::size_t i = 0; i < scores.size(); ++i)
    ranked.emplace_back(scores[i], static_cast<Index>(i));
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<Index> out;
  for (Index k = 0; k < t_prime; ++k) out.push_back(ranked[static_cast<std::size_t>(k)].second);
  if (temporal_order) std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("tam");

TEST_CASE("scores: zero input gives 0.5 everywhere") {
  Rng rng(211);
  Tensor h = Tensor::zeros({3, 5, 4});
  Tensor theta = random_tensor({5, 5}, rng);
  Tensor a = attention_scores(h, theta);
  for (Index t = 0; t < 5; ++t) CHECK(a.values()(t) == 0.5);
}

TEST_CASE("scores: identity map passes frame means through the sigmoid") {
  Tensor h = Tensor::zeros({2, 3, 2});
  const double means[3] = {0.7, -1.2, 0.0};
  for (Index t = 0; t < 3; ++t)
    for (Index c = 0; c < 2; ++c)
      for (Index n = 0; n < 2; ++n) h.at({c, t, n}) = means[t];
  Tensor theta = Tensor::zeros({3, 3});
  for (Index i = 0; i < 3; ++i) theta.at({i, i}) = 1.0;
  Tensor a = attention_scores(h, theta);
  for (Index t = 0; t < 3; ++t)
    CHECK(a.values()(t) == doctest::Approx(1.0 / (1.0 + std::exp(-means[t]))));
}

TEST_CASE("scores: random case matches the pooling + matrix-vector oracle") {
  Rng rng(223);
  for (int it = 0; it < 10; ++it) {
    const Index c = 2, t = 4, n = 3;
    Tensor h = random_tensor({c, t, n}, rng);
    Tensor theta = random_tensor({t, t}, rng);
    Tensor a = attention_scores(h, theta);
    CHECK(a.values().minCoeff() > 0.0);
    CHECK(a.values().maxCoeff() < 1.0);
    for (Index j = 0; j < t; ++j) {
      double pre = 0.0;
      for (Index ti = 0; ti < t; ++ti) {
        double mean = 0.0;
        for (Index ci = 0; ci < c; ++ci)
          for (Index ni = 0; ni < n; ++ni) mean += h.at({ci, ti, ni});
        pre += (mean / (c * n)) * theta.at({ti, j});
      }
      CHECK(a.values()(j) == doctest::Approx(1.0 / (1.0 + std::exp(-pre))));
    }
  }
  CHECK_THROWS_AS(attention_scores(Tensor::zeros({2, 4, 3}), Tensor::zeros({3, 3})), Error);
  CHECK_THROWS_AS(attention_scores(Tensor::zeros({2, 4, 3}), Tensor::zeros({4, 3})), Error);
}

TEST_CASE("apply_attention: halving scores halve nonnegative input") {
  Rng rng(227);
  Tensor h = random_tensor({2, 4, 3}, rng);
  for (Index i = 0; i < h.size(); ++i) h.values()(i) = std::abs(h.values()(i));
  Tensor half = Tensor::constant({4}, 0.5);
  Tensor out = apply_attention(h, half);
  for (Index i = 0; i < h.size(); ++i)
    CHECK(out.values()(i) == doctest::Approx(h.values()(i) / 2.0));
}

TEST_CASE("apply_attention: mixed signs clamp exactly like the elementwise oracle") {
  Rng rng(229);
  Tensor h = random_tensor({3, 5, 2}, rng);
  Tensor a = random_tensor({5}, rng);
  Tensor out = apply_attention(h, a);
  for (Index c = 0; c < 3; ++c)
    for (Index t = 0; t < 5; ++t)
      for (Index n = 0; n < 2; ++n)
        CHECK(out.at({c, t, n}) ==
              doctest::Approx(std::max(0.0, h.at({c, t, n}) * a.values()(t))));
}

TEST_CASE("select_top pinned cases") {
  CHECK(select_top({0.9, 0.1, 0.5, 0.9}, 2) == std::vector<Index>{0, 3});
  CHECK(select_top({0.9, 0.1, 0.5, 0.9}, 2, false) == std::vector<Index>{0, 3});  // tie: earlier first
  CHECK(select_top({0.1, 0.9, 0.5, 0.2}, 2, false) == std::vector<Index>{1, 2});
  CHECK(select_top({0.1, 0.9, 0.5, 0.2}, 4) == std::vector<Index>{0, 1, 2, 3});
  CHECK_THROWS_AS(select_top({0.5, 0.5}, 0), Error);
  CHECK_THROWS_AS(select_top({0.5, 0.5}, 3), Error);
}

TEST_CASE("select_top agrees with the full-sort oracle, duplicates included") {
  Rng rng(233);
  for (int it = 0; it < 200; ++it) {
    const Index t = 1 + static_cast<Index>(rng.below(12));
    std::vector<double> scores(static_cast<std::size_t>(t));
    for (auto& s : scores) s = static_cast<double>(rng.below(4)) / 4.0;  // lots of ties
    const Index tp = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(t)));
    const bool order = it % 2 == 0;
    CHECK(select_top(scores, tp, order) == select_oracle(scores, tp, order));
  }
}

TEST_CASE("selection only depends on score ranks") {
  Rng rng(239);
  for (int it = 0; it < 50; ++it) {
    const Index t = 2 + static_cast<Index>(rng.below(10));
    std::vector<double> scores(static_cast<std::size_t>(t));
    for (auto& s : scores) s = rng.uniform();
    std::vector<double> warped(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
      warped[i] = std::atan(scores[i]) + 3.0 * scores[i];  // strictly increasing
    const Index tp = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(t)));
    CHECK(select_top(scores, tp) == select_top(warped, tp));
  }
}

TEST_CASE("tam_forward on zero input selects the earliest frames") {
  Rng rng(241);
  TemporalAttention<double> att = make_temporal_attention(6, 3, rng);
  Tensor h = Tensor::zeros({2, 6, 3});
  auto res = tam_forward(h, att);
  for (Index t = 0; t < 6; ++t) CHECK(res.scores.values()(t) == 0.5);
  CHECK(res.selected == std::vector<Index>{0, 1, 2});
  CHECK(res.selected_frames.shape() == Shape{2, 3, 3});
}

TEST_CASE("tam_forward with identity map keeps the high-energy frame") {
  Tensor h = Tensor::constant({2, 5, 3}, 0.1);
  for (Index c = 0; c < 2; ++c)
    for (Index n = 0; n < 3; ++n) h.at({c, 3, n}) = 4.0;
  TemporalAttention<double> att;
  att.theta = Tensor::zeros({5, 5});
  for (Index i = 0; i < 5; ++i) att.theta.at({i, i}) = 1.0;
  att.t_prime = 1;
  auto res = tam_forward(h, att);
  CHECK(res.selected == std::vector<Index>{3});
  const auto& a = res.scores.values();
  for (Index t = 0; t < 5; ++t)
    if (t != 3) CHECK(a(3) > a(t));
}

TEST_CASE("tam_forward with t_prime = T is a pure reweighting") {
  Rng rng(251);
  TemporalAttention<double> att = make_temporal_attention(4, 4, rng);
  Tensor h = random_tensor({3, 4, 2}, rng);
  auto res = tam_forward(h, att);
  CHECK(res.selected == std::vector<Index>{0, 1, 2, 3});
  CHECK((res.selected_frames.values() - res.attended.values()).abs().maxCoeff() == 0.0);
}

TEST_CASE("make_temporal_attention starts near the identity") {
  Rng rng(257);
  const Index t = 16;
  auto att = make_temporal_attention(t, 8, rng);
  const double amp = 1.0 / std::sqrt(static_cast<double>(t));
  for (Index i = 0; i < t; ++i)
    for (Index j = 0; j < t; ++j) {
      const double v = att.theta.at({i, j});
      const double center = i == j ? 1.0 : 0.0;
      CHECK(std::abs(v - center) <= amp);
    }
  CHECK_THROWS_AS(make_temporal_attention(4, 5, rng), Error);
  CHECK_THROWS_AS(make_temporal_attention(4, 0, rng), Error);
}

TEST_CASE("gradients flow through scores and selected frames only") {
  Rng rng(263);

  // diagonal theta: each frame's score sees only its own mean, so dropped
  // frames must receive exactly zero gradient
  {
    Tensor h = random_tensor({2, 5, 3}, rng);
    h.set_requires_grad(true);
    TemporalAttention<double> att;
    att.theta = Tensor::zeros({5, 5});
    for (Index i = 0; i < 5; ++i) att.theta.at({i, i}) = 1.0;
    att.t_prime = 2;
    auto res = tam_forward(h, att);
    backward(sum_all(res.selected_frames));
    for (Index t = 0; t < 5; ++t) {
      const bool kept =
          std::find(res.selected.begin(), res.selected.end(), t) != res.selected.end();
      double gsum = 0.0;
      for (Index c = 0; c < 2; ++c)
        for (Index n = 0; n < 3; ++n) gsum += std::abs(h.grad()((c * 5 + t) * 3 + n));
      if (kept)
        CHECK(gsum > 0.0);
      else
        CHECK(gsum == 0.0);
    }
  }

  // dense theta: dropped frames still matter through the scores of kept ones
  {
    Tensor h = random_tensor({2, 5, 3}, rng);
    h.set_requires_grad(true);
    TemporalAttention<double> att;
    att.theta = random_tensor({5, 5}, rng);
    att.t_prime = 2;
    auto res = tam_forward(h, att);
    backward(sum_all(res.selected_frames));
    double dropped_gsum = 0.0;
    for (Index t = 0; t < 5; ++t) {
      if (std::find(res.selected.begin(), res.selected.end(), t) != res.selected.end()) continue;
      for (Index c = 0; c < 2; ++c)
        for (Index n = 0; n < 3; ++n) dropped_gsum += std::abs(h.grad()((c * 5 + t) * 3 + n));
    }
    CHECK(dropped_gsum > 0.0);
  }
}

TEST_CASE("finite differences confirm the attention gradients") {
  Rng rng(269);
  for (int it = 0; it < 5; ++it) {
    Tensor h = random_tensor({2, 6, 3}, rng);
    TemporalAttention<double> att = make_temporal_attention(6, 3, rng);
    // fix the selection so the perturbed losses stay on the same branch
    const auto frozen = tam_forward(h, att).selected;
    auto f = [&] {
      Tensor scores = attention_scores(h, att.theta);
      return mean_all(select_frames(apply_attention(h, scores), frozen));
    };
    CHECK(grad_check(f, {h, att.theta}) < 1e-4);
  }
}

TEST_SUITE_END();
