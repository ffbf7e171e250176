#include "sensia/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "sensia/errors.hpp"

namespace sensia {

std::string phase_name(Phase phase) {
  switch (phase) {
    case Phase::kAlignment:
      return "alignment";
    case Phase::kJoint:
      return "joint";
    case Phase::kPolish:
      return "polish";
  }
  return "unknown";
}

void ScheduleConfig::validate() const {
  if (!(a > 0.0 && a < z && z < 1.0)) {
    throw InvalidArgument("schedule requires 0 < a < z < 1");
  }
  for (const LossWeights* w : {&align_weights, &joint_weights, &polish_weights}) {
    if (w->sns < 0.0 || w->ctx < 0.0 || w->lm < 0.0) {
      throw InvalidArgument("schedule weights must be non-negative");
    }
  }
  if (!(tau_sns > 0.0 && tau_ctx > 0.0 && tau_pool > 0.0)) {
    throw InvalidArgument("schedule temperatures must be positive");
  }
}

double interp(double from, double to, double t) {
  if (t < 0.0 || t > 1.0) {
    if (t < -1e-12 || t > 1.0 + 1e-12) {
      std::cerr << "warning: interp progress " << t << " clamped to [0, 1]\n";
    }
    t = std::clamp(t, 0.0, 1.0);
  }
  // Written as a convex combination so both endpoints come out bit-exact.
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  return from * c + to * (1.0 - c);
}

namespace {

LossWeights interp_weights(const LossWeights& from, const LossWeights& to, double t) {
  return {interp(from.sns, to.sns, t), interp(from.ctx, to.ctx, t), interp(from.lm, to.lm, t)};
}

}  // namespace

PhaseWeights weights_at_progress(double p, const ScheduleConfig& cfg) {
  p = std::clamp(p, 0.0, 1.0);
  PhaseWeights out;
  const double a = cfg.a, z = cfg.z;
  switch (cfg.skip) {
    case PhaseSkip::kNone:
      if (p < a) {
        out.phase = Phase::kAlignment;
        out.weights = interp_weights(cfg.align_weights, cfg.joint_weights, p / a);
      } else if (p < z) {
        out.phase = Phase::kJoint;
        out.weights = interp_weights(cfg.joint_weights, cfg.polish_weights, (p - a) / (z - a));
      } else {
        out.phase = Phase::kPolish;
        out.weights = cfg.polish_weights;
      }
      break;
    case PhaseSkip::kNoAlignment:
      if (p < z) {
        out.phase = Phase::kJoint;
        out.weights = interp_weights(cfg.joint_weights, cfg.polish_weights, p / z);
      } else {
        out.phase = Phase::kPolish;
        out.weights = cfg.polish_weights;
      }
      break;
    case PhaseSkip::kNoJoint:
      if (p < a) {
        out.phase = Phase::kAlignment;
        out.weights = interp_weights(cfg.align_weights, cfg.polish_weights, p / a);
      } else {
        out.phase = Phase::kPolish;
        out.weights = cfg.polish_weights;
      }
      break;
    case PhaseSkip::kNoPolish: {
      const double a_stretched = a / z;
      if (p < a_stretched) {
        out.phase = Phase::kAlignment;
        out.weights = interp_weights(cfg.align_weights, cfg.joint_weights, p / a_stretched);
      } else {
        out.phase = Phase::kJoint;
        out.weights = interp_weights(cfg.joint_weights, cfg.polish_weights,
                                     (p - a_stretched) / (1.0 - a_stretched));
      }
      break;
    }
  }
  if (cfg.zero_sns) out.weights.sns = 0.0;
  if (cfg.zero_ctx) out.weights.ctx = 0.0;
  if (cfg.zero_lm) out.weights.lm = 0.0;
  const double decay = cfg.temp_decay ? 1.0 - 0.5 * p : 1.0;
  out.temps = {cfg.tau_sns * decay, cfg.tau_ctx * decay};
  out.freeze_sense_machinery = out.phase == Phase::kPolish;
  return out;
}

PhaseWeights weights_at(std::size_t step, const ScheduleConfig& cfg) {
  if (cfg.total_steps == 0) return weights_at_progress(0.0, cfg);
  const double p = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return weights_at_progress(p, cfg);
}

std::size_t phase_start_step(Phase phase, const ScheduleConfig& cfg) {
  for (std::size_t s = 0; s <= cfg.total_steps; ++s) {
    const Phase current = weights_at(s, cfg).phase;
    if (current == phase) return s;
    if (static_cast<int>(current) > static_cast<int>(phase)) return s;
  }
  return cfg.total_steps;
}

bool is_trainable(ParamGroup group, Phase phase) {
  if (phase != Phase::kPolish) return true;
  return group == ParamGroup::kContextNet || group == ParamGroup::kOutputHead;
}

std::vector<bool> freeze_mask(Phase phase, const BackpackModel& model) {
  std::vector<bool> trainable;
  trainable.reserve(model.parameters().size());
  for (const Parameter& p : model.parameters()) trainable.push_back(is_trainable(p.group, phase));
  return trainable;
}

}  // namespace sensia
