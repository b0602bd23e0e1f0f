#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "tagcn/model.hpp"

namespace tagcn {

// Counting convention, stated with every report: one multiply-accumulate is
// 2 FLOPs; elementwise work, biases, and normalization passes cost 1 FLOP
// per element; index shuffling (transposes, frame selection) is free.
inline constexpr const char* kCostConvention =
    "MAC=2; elementwise/bias/normalization at 1 FLOP per element pass";

struct CostRow {
  std::string name;
  std::int64_t params = 0;
  std::int64_t flops = 0;
  Shape output;  // (C, T, N) leaving the stage
};

struct CostReport {
  std::string model;
  std::vector<CostRow> rows;
  std::int64_t total_params = 0;
  std::int64_t total_flops = 0;
  Index t_in = 0;
  Index t_selected = 0;  // 0 when no frame selection
  Index joints = 0;
  std::string convention = kCostConvention;
};

namespace detail {

inline std::int64_t tensor_params(const Tensor& t) { return t.defined() ? t.size() : 0; }

}  // namespace detail

inline CostReport cost_report(const Network& net) {
  const ModelConfig& cfg = net.config;
  CostReport rep;
  rep.model = cfg.arch;
  rep.t_in = cfg.sequence_length;
  rep.t_selected = net.has_tam ? cfg.tam.t_prime : 0;
  rep.joints = cfg.num_joints;

  const std::int64_t n = cfg.num_joints;
  std::int64_t t = cfg.sequence_length;
  std::int64_t c_in = cfg.input_channels;

  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const auto& b = net.blocks[i];
    const auto& plan = cfg.plan[i];
    const std::int64_t c_out = plan.out_channels;
    CostRow row;
    row.name = "layers." + std::to_string(i);

    for (std::size_t p = 0; p < 3; ++p) {
      row.params += detail::tensor_params(b.spatial.weight[p]);
      row.params += detail::tensor_params(b.spatial.mask[p]);
    }
    row.params += detail::tensor_params(b.spatial.bias);
    row.params += detail::tensor_params(b.bn1_gamma) + detail::tensor_params(b.bn1_beta);

    // three 1x1 convs, mask combination, neighbor contraction, partition sum
    row.flops += 3 * 2 * c_out * c_in * t * n;
    row.flops += 3 * n * n;
    row.flops += 3 * 2 * c_out * t * n * n;
    row.flops += 2 * c_out * t * n;
    if (b.spatial.bias.defined()) row.flops += c_out * t * n;
    row.flops += 2 * c_out * t * n;  // batch norm
    row.flops += c_out * t * n;      // relu

    if (plan.temporal) {
      const std::int64_t k_t = b.temporal.weight.extent(2);
      const std::int64_t t_out = strided_extent(static_cast<Index>(t), plan.stride);
      row.params += detail::tensor_params(b.temporal.weight) +
                    detail::tensor_params(b.temporal.bias);
      row.params += detail::tensor_params(b.bn2_gamma) + detail::tensor_params(b.bn2_beta);
      row.flops += 2 * c_out * c_out * k_t * t_out * n;
      if (b.temporal.bias.defined()) row.flops += c_out * t_out * n;
      row.flops += 2 * c_out * t_out * n;  // batch norm
      if (plan.residual) {
        if (b.residual_weight.defined()) {
          row.params += detail::tensor_params(b.residual_weight);
          row.flops += 2 * c_out * c_in * t_out * n;
        }
        row.flops += c_out * t_out * n;  // shortcut add
      }
      row.flops += c_out * t_out * n;  // relu
      t = t_out;
    }
    row.output = {static_cast<Index>(c_out), static_cast<Index>(t), static_cast<Index>(n)};
    rep.rows.push_back(row);
    c_in = c_out;

    if (net.has_tam && cfg.tam.after_layer == static_cast<int>(i) + 1) {
      CostRow tam_row;
      tam_row.name = "tam";
      tam_row.params = detail::tensor_params(net.tam.theta);
      tam_row.flops += c_out * t * n;  // frame descriptor pooling
      tam_row.flops += 2 * t * t;      // descriptor through theta
      tam_row.flops += t;              // sigmoid
      tam_row.flops += 2 * c_out * t * n;  // scale + relu
      t = cfg.tam.t_prime;
      tam_row.output = {static_cast<Index>(c_out), static_cast<Index>(t),
                        static_cast<Index>(n)};
      rep.rows.push_back(tam_row);
    }
  }

  CostRow head;
  head.name = "head";
  head.params = detail::tensor_params(net.head_weight) + detail::tensor_params(net.head_bias);
  head.flops += c_in * t * n;  // global average pool
  head.flops += 2 * cfg.num_classes * c_in + cfg.num_classes;
  head.output = {cfg.num_classes};
  rep.rows.push_back(head);

  for (const auto& row : rep.rows) {
    rep.total_params += row.params;
    rep.total_flops += row.flops;
  }
  return rep;
}

// Scales a report to an ensemble of identical streams.
inline CostReport stream_ensemble(CostReport rep, int streams) {
  if (streams < 1) fail(ErrorKind::validation, "stream_ensemble: stream count must be positive");
  rep.model = std::to_string(streams) + "s-" + rep.model;
  for (auto& row : rep.rows) {
    row.params *= streams;
    row.flops *= streams;
  }
  rep.total_params *= streams;
  rep.total_flops *= streams;
  return rep;
}

struct CostRatio {
  std::string model;
  double flops = 0.0;
  double params = 0.0;
};

// Each report's totals relative to the named baseline.
inline std::vector<CostRatio> compare(const std::vector<CostReport>& reports,
                                      const std::string& baseline) {
  const CostReport* base = nullptr;
  for (const auto& r : reports)
    if (r.model == baseline) base = &r;
  if (!base) fail(ErrorKind::validation, "compare: no report named '" + baseline + "'");
  std::vector<CostRatio> out;
  for (const auto& r : reports)
    out.push_back({r.model,
                   static_cast<double>(r.total_flops) / static_cast<double>(base->total_flops),
                   static_cast<double>(r.total_params) / static_cast<double>(base->total_params)});
  return out;
}

inline std::string format_report(const CostReport& rep) {
  std::ostringstream os;
  os << "model " << rep.model << "  (T=" << rep.t_in;
  if (rep.t_selected > 0) os << ", T'=" << rep.t_selected;
  os << ", N=" << rep.joints << ")\n";
  os << "convention: " << rep.convention << "\n";
  os << std::left << std::setw(12) << "stage" << std::right << std::setw(12) << "params"
     << std::setw(16) << "flops" << "  output\n";
  for (const auto& row : rep.rows) {
    os << std::left << std::setw(12) << row.name << std::right << std::setw(12) << row.params
       << std::setw(16) << row.flops << "  " << shape_str(row.output) << "\n";
  }
  os << std::left << std::setw(12) << "total" << std::right << std::setw(12) << rep.total_params
     << std::setw(16) << rep.total_flops << "\n";
  return os.str();
}

}  // namespace tagcn
