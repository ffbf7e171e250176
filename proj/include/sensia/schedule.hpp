#pragma once

// Three-phase curriculum: alignment -> joint -> polish.
//
// With normalized progress p = step / total_steps:
//   p <  a      alignment, weights interp(align, joint, p / a)
//   a <= p < z  joint,     weights interp(joint, polish, (p - a) / (z - a))
//   p >= z      polish,    weights fixed at the polish triple, sense
//               machinery frozen
// interp(x, y, t) = y + (x - y) (1 + cos(pi t)) / 2.

#include <cstddef>
#include <string>
#include <vector>

#include "sensia/model.hpp"
#include "sensia/objectives.hpp"

namespace sensia {

enum class Phase { kAlignment, kJoint, kPolish };

std::string phase_name(Phase phase);

// Phase-level ablations; loss-level ablations are the zero_* flags.
enum class PhaseSkip {
  kNone,
  kNoAlignment,  // start from the joint triple
  kNoJoint,      // alignment, then straight to polish at p = a
  kNoPolish,     // alignment and joint stretched over the whole run
};

struct ScheduleConfig {
  double a = 0.2;
  double z = 0.5;
  LossWeights align_weights{0.54, 0.44, 0.02};
  LossWeights joint_weights{0.40, 0.40, 0.20};
  LossWeights polish_weights{0.15, 0.15, 0.70};
  double tau_sns = 0.05;
  double tau_ctx = 0.07;
  double tau_pool = 0.7;
  // When set, both contrastive temperatures decay linearly in p to half
  // their configured value.
  bool temp_decay = false;
  std::size_t total_steps = 2000;

  bool zero_sns = false;
  bool zero_ctx = false;
  bool zero_lm = false;
  PhaseSkip skip = PhaseSkip::kNone;

  void validate() const;
};

struct PhaseWeights {
  Phase phase = Phase::kAlignment;
  LossWeights weights;
  Temperatures temps;
  bool freeze_sense_machinery = false;
};

// Cosine interpolation from `from` (t = 0) to `to` (t = 1). t outside [0, 1]
// is clamped and reported on stderr.
double interp(double from, double to, double t);

PhaseWeights weights_at_progress(double p, const ScheduleConfig& cfg);
PhaseWeights weights_at(std::size_t step, const ScheduleConfig& cfg);

// First step whose progress reaches the given phase; total_steps when the
// phase never starts.
std::size_t phase_start_step(Phase phase, const ScheduleConfig& cfg);

// True when parameters of `group` receive updates during `phase`.
bool is_trainable(ParamGroup group, Phase phase);

// One flag per model parameter in manifest order; true = trainable.
std::vector<bool> freeze_mask(Phase phase, const BackpackModel& model);

}  // namespace sensia
