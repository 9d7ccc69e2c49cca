// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "molgen/error.hpp"

namespace molgen {

enum class SchedulerKind { WarmUp, Sgdr };

struct TrainConfig {
  int epochs = 25;
  double kla_start = 0.0;
  double kla_step = 0.02;
  double kla_end = 0.5;
  SchedulerKind scheduler = SchedulerKind::WarmUp;
  int warmup_steps = 100000;
  double eta_min = 0.0;
  double eta_max = 1e-4;
  int cycle_steps = 0;  // 0: one epoch of steps
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double base_lr = 1e-4;
  int batch_size = 32;
  double grad_clip = 0.0;  // 0: off
  std::uint64_t seed = 0;
};

// Per-epoch KL weight: ramps from the start by one step each epoch and clamps
// at the end value (default 0.02 at epoch 1 up to 0.50 at epoch 25).
inline double kl_anneal_weight(int epoch, const TrainConfig& cfg) {
  if (epoch < 1) throw Error(ErrorCode::ConfigError, "epoch starts at 1");
  return std::min(cfg.kla_start + epoch * cfg.kla_step, cfg.kla_end);
}

// Warm-up schedule: linear climb for warmup_steps, then inverse square-root
// decay, peaking at 3 * d_model^-1/2 * warmup^-1/2.
inline double warmup_lr(int step, int d_model, int warmup_steps) {
  if (step < 1 || warmup_steps < 1) throw Error(ErrorCode::ConfigError, "warmup steps start at 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return 3.0 / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

// Cosine schedule with warm restarts every cycle_steps.
inline double sgdr_lr(int step, double eta_min, double eta_max, int cycle_steps) {
  if (cycle_steps < 1) throw Error(ErrorCode::ConfigError, "cycle_steps must be positive");
  const int pos = step % cycle_steps;
  return eta_min + 0.5 * (eta_max - eta_min) *
                       (1.0 + std::cos(M_PI * static_cast<double>(pos) / cycle_steps));
}

inline double scheduled_lr(const TrainConfig& cfg, int step, int d_model, int steps_per_epoch) {
  if (cfg.scheduler == SchedulerKind::WarmUp) {
    return warmup_lr(step, d_model, cfg.warmup_steps);
  }
  const int cycle = cfg.cycle_steps > 0 ? cfg.cycle_steps : steps_per_epoch;
  return sgdr_lr(step - 1, cfg.eta_min, cfg.eta_max, cycle);
}

}  // namespace molgen
