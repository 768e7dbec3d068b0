#include "emasketch/rank_controller.hpp"

#include "emasketch/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace emasketch {

void RankControllerConfig::validate() const {
  if (r_min < 1) throw ConfigError("rank_controller: r_min must be >= 1");
  if (!(r_min <= r0 && r0 <= r_max))
    throw ConfigError("rank_controller: require r_min <= r0 <= r_max");
  if (p_decrease < 1 || p_increase < 1)
    throw ConfigError("rank_controller: patience must be >= 1");
  if (dr_down < 1 || dr_up < 1) throw ConfigError("rank_controller: rank steps must be >= 1");
  if (tau_reset <= r0) throw ConfigError("rank_controller: tau_reset must exceed r0");
  if (!(improve_rel_tol >= 0.0) || !std::isfinite(improve_rel_tol))
    throw ConfigError("rank_controller: improve_rel_tol must be a finite value >= 0");
}

RankControllerState RankControllerState::initial(const RankControllerConfig& config) {
  config.validate();
  RankControllerState s;
  s.r = config.r0;
  return s;
}

std::string_view to_string(RankDecisionKind k) {
  switch (k) {
    case RankDecisionKind::keep: return "keep";
    case RankDecisionKind::decrease: return "decrease";
    case RankDecisionKind::increase: return "increase";
    case RankDecisionKind::reset: return "reset";
  }
  return "?";
}

RankDecision observe_epoch(RankControllerState& state, const RankControllerConfig& config,
                           double epoch_metric) {
  if (!std::isfinite(epoch_metric))
    throw NumericalError("rank_controller: non-finite epoch metric");

  // best_metric starts at +inf, so the first finite metric always improves.
  const bool improved = std::isinf(state.best_metric) ||
                        epoch_metric < state.best_metric * (1.0 - config.improve_rel_tol);
  if (improved) {
    state.best_metric = epoch_metric;
    ++state.epochs_improving;
    state.epochs_stagnant = 0;
  } else {
    ++state.epochs_stagnant;
    state.epochs_improving = 0;
  }

  RankDecision d{RankDecisionKind::keep, state.r};
  if (state.epochs_improving >= config.p_decrease) {
    d = {RankDecisionKind::decrease, std::max(config.r_min, state.r - config.dr_down)};
  } else if (state.epochs_stagnant >= config.p_increase) {
    if (state.r + config.dr_up >= config.tau_reset)
      d = {RankDecisionKind::reset, config.r0};
    else
      d = {RankDecisionKind::increase, std::min(config.r_max, state.r + config.dr_up)};
  }
  if (d.changes_rank()) {
    state.r = d.new_r;
    state.epochs_improving = 0;
    state.epochs_stagnant = 0;
  }
  return d;
}

std::uint64_t rank_change_seed(std::uint64_t base_seed, Index epoch, Index new_r) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(epoch),
                     static_cast<std::uint64_t>(new_r));
}

RankChange apply_rank_change(Index new_r, std::uint64_t base_seed, Index epoch,
                             const SketchConfig& previous, Index layer_count,
                             const std::vector<std::pair<Index, Index>>& layer_widths) {
  RankChange out;
  out.config =
      SketchConfig::for_rank(new_r, previous.beta, previous.batch_size, previous.warmup_iters);
  out.proj = make_nn_projections(rank_change_seed(base_seed, epoch, new_r), out.config,
                                 layer_count);
  for (const auto& [d_in, d] : layer_widths)
    out.states.push_back(init_layer_sketch(out.config, d_in, d));
  return out;
}

void write_rank_log(std::ostream& out, const std::vector<RankLogRow>& rows) {
  out << "epoch,metric,r_before,decision,r_after\n";
  for (const auto& row : rows)
    out << fmt::format("{},{:.10e},{},{},{}\n", row.epoch, row.metric, row.r_before,
                       to_string(row.decision.kind), row.decision.new_r);
}

}  // namespace emasketch
