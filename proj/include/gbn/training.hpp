#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gbn/errors.hpp"
#include "gbn/inference.hpp"
#include "gbn/model.hpp"

namespace gbn {

struct TrainSchedule {
  int t_max = 1;
  int k1max = 100;
  std::vector<int> b = {1000};  // pre-prune iterations B_T; last value carries over
  std::vector<int> c = {500};   // post-prune iterations C_T; last value carries over
  std::uint64_t seed = 0;
  // Stop growing once the top-layer latent count total falls below this
  // floor (0 disables the early stop).
  std::int64_t min_top_count = 10;

  int b_for(int t) const { return pick(b, t); }
  int c_for(int t) const { return pick(c, t); }

  void validate() const {
    if (t_max < 1 || k1max < 1) {
      throw ConfigError("schedule: t_max and k1max must be at least 1");
    }
    if (b.empty() || c.empty()) throw ConfigError("schedule: B and C must be nonempty");
    for (int x : b) {
      if (x < 1) throw ConfigError("schedule: every B_T must be at least 1");
    }
    for (int x : c) {
      if (x < 1) throw ConfigError("schedule: every C_T must be at least 1");
    }
  }

 private:
  static int pick(const std::vector<int>& xs, int t) {
    const std::size_t i = static_cast<std::size_t>(t) - 1;
    return i < xs.size() ? xs[i] : xs.back();
  }
};

struct TrainLogRecord {
  std::string event;  // "sweep", "prune", or "snapshot"
  int depth = 0;
  int iteration = 0;  // 1-based within the current depth
  std::vector<int> widths;
  std::vector<std::int64_t> layer_totals;  // x^(1) .. x^(T+1)
  double seconds = 0.0;
  std::vector<double> c_median;  // snapshot records only
};

using TrainLogSink = std::function<void(const TrainLogRecord&)>;

struct TrainResult {
  std::vector<GbnNetwork> snapshots;  // one network per trained depth
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::int64_t> layer_totals_of(const GibbsState& state) {
  std::vector<std::int64_t> totals;
  for (int t = 1; t <= state.depth() + 1; ++t) totals.push_back(state.layer_total(t));
  return totals;
}

inline void train_current_depth(GibbsState& state, const TrainSchedule& schedule,
                                TrainResult& result, const TrainLogSink& log) {
  const int t = state.depth();
  const int b_iters = schedule.b_for(t);
  const int c_iters = schedule.c_for(t);
  for (int iter = 1; iter <= b_iters + c_iters; ++iter) {
    const auto start = std::chrono::steady_clock::now();
    state.sweep();
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log) {
      log({"sweep", t, iter, state.network().widths(), layer_totals_of(state), seconds, {}});
    }
    if (iter == b_iters) {
      state.prune_top_layer();
      if (state.degenerate_prune()) {
        result.warnings.push_back("layer " + std::to_string(t) +
                                  ": all factors inactive at the prune point; kept the "
                                  "highest-weight factor");
      }
      if (log) {
        log({"prune", t, iter, state.network().widths(), layer_totals_of(state), 0.0, {}});
      }
    }
  }
}

}  // namespace detail

// Greedy layer-wise training: depth T = 1..t_max, each depth jointly
// resampling all layers for B_T iterations, pruning layer T's inactive
// factors once, then C_T further iterations; a snapshot is emitted per depth.
template <typename DataT>
TrainResult train_layerwise(const DataT& data, LinkType link, const Hyperparams& hyper,
                            const TrainSchedule& schedule, SweepOptions sweep_options = {},
                            const TrainLogSink& log = nullptr) {
  schedule.validate();
  RngStream rng(schedule.seed);
  RngStream init_rng = rng.substream(0xB00);
  GbnNetwork net = init_network(data.rows(), schedule.k1max, link, hyper, init_rng);
  GibbsState state(std::move(net), data, sweep_options, rng.substream(0xB01));

  TrainResult result;
  for (int t = 1; t <= schedule.t_max; ++t) {
    if (t > 1) state.add_layer();
    detail::train_current_depth(state, schedule, result, log);
    result.snapshots.push_back(state.snapshot());
    if (log) {
      log({"snapshot", t, schedule.b_for(t) + schedule.c_for(t), state.network().widths(),
           detail::layer_totals_of(state), 0.0, result.snapshots.back().c_median.value()});
    }
    if (t < schedule.t_max && schedule.min_top_count > 0 &&
        state.layer_total(t + 1) < schedule.min_top_count) {
      result.warnings.push_back("stopping at depth " + std::to_string(t) +
                                ": top-layer latent count total " +
                                std::to_string(state.layer_total(t + 1)) +
                                " fell below the floor of " +
                                std::to_string(schedule.min_top_count));
      break;
    }
  }
  return result;
}

// Fixed-structure joint training: no growth, no pruning. Zero iterations is
// the identity.
template <typename DataT>
GbnNetwork train_fixed(const DataT& data, const GbnNetwork& net, int iterations,
                       SweepOptions sweep_options, RngStream rng) {
  if (iterations < 0) throw ConfigError("train_fixed: iterations must be nonnegative");
  if (iterations == 0) return net;
  GibbsState state(net, data, sweep_options, std::move(rng));
  for (int i = 0; i < iterations; ++i) state.sweep();
  return state.snapshot();
}

}  // namespace gbn
