#pragma once

// Patience-based adaptive rank control, evaluated once per epoch.
//
// Improvement means metric < best * (1 - improve_rel_tol) (lower is better).
// p_decrease consecutive improving epochs shrink r by dr_down (floored at
// r_min); p_increase consecutive non-improving epochs grow r by dr_up, unless
// r + dr_up would reach tau_reset, in which case r returns to r0. Growth is
// clamped to r_max. Counters reset after every non-keep decision; the best
// metric is retained across rank changes.

#include "emasketch/common.hpp"
#include "emasketch/ema_sketch.hpp"

#include <cstdint>
#include <limits>
#include <ostream>
#include <string_view>
#include <vector>

namespace emasketch {

struct RankControllerConfig {
  Index r0 = 2;
  Index r_min = 1;
  Index r_max = 16;
  Index p_decrease = 3;
  Index p_increase = 2;
  Index dr_down = 1;
  Index dr_up = 2;
  Index tau_reset = 16;
  double improve_rel_tol = 1e-4;

  void validate() const;
};

struct RankControllerState {
  Index r = 2;
  double best_metric = std::numeric_limits<double>::infinity();
  Index epochs_improving = 0;
  Index epochs_stagnant = 0;

  static RankControllerState initial(const RankControllerConfig& config);
  bool operator==(const RankControllerState&) const = default;
};

enum class RankDecisionKind { keep, decrease, increase, reset };

std::string_view to_string(RankDecisionKind k);

struct RankDecision {
  RankDecisionKind kind = RankDecisionKind::keep;
  Index new_r = 0;

  bool changes_rank() const { return kind != RankDecisionKind::keep; }
  bool operator==(const RankDecision&) const = default;
};

/// Updates `state` in place. Throws NumericalError on a non-finite metric.
RankDecision observe_epoch(RankControllerState& state, const RankControllerConfig& config,
                           double epoch_metric);

/// Fresh sketch machinery after a rank change.
struct RankChange {
  SketchConfig config;
  NNProjectionSet proj;
  std::vector<LayerSketchState> states;  // one per entry of `layers`
};

/// Projection seed is derive_seed(base_seed, epoch, new_r).
std::uint64_t rank_change_seed(std::uint64_t base_seed, Index epoch, Index new_r);

RankChange apply_rank_change(Index new_r, std::uint64_t base_seed, Index epoch,
                             const SketchConfig& previous, Index layer_count,
                             const std::vector<std::pair<Index, Index>>& layer_widths);

struct RankLogRow {
  Index epoch = 0;
  double metric = 0.0;
  Index r_before = 0;
  RankDecision decision;
};

/// Columns: epoch,metric,r_before,decision,r_after
void write_rank_log(std::ostream& out, const std::vector<RankLogRow>& rows);

}  // namespace emasketch
