#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gsavatar/control/control_config.hpp"
#include "gsavatar/core/avatar.hpp"
#include "gsavatar/train/adam.hpp"
#include "gsavatar/train/losses.hpp"
#include "gsavatar/train/stage1.hpp"
#include "gsavatar/train/trace.hpp"

namespace gsavatar::train {

struct Stage2Rates {
  double fields = 1e-4;
  double positions = 1e-5;
  double features = 1e-5;
  double rotations = 1e-5;
  double scales = 3e-5;
  double opacity = 1e-4;

  /// Faster preset for desk-scale budgets of a few thousand steps.
  static Stage2Rates desk();
};

struct Stage2Config {
  int iterations = 2000;
  int batch = 1;
  Stage2Rates lr;
  AdamConfig adam;
  LossWeights weights;
  PatchConfig patches;
  bool perceptual = true;
  Vec3 background = Vec3::Zero();
  std::uint64_t seed = 0;
  int psnr_every = 100;

  void validate() const;
};

struct AvatarState {
  core::GaussianSet gaussians;
  core::ResidualFieldBank bank;
  /// Split generation per Gaussian (0 for originals).
  std::vector<std::uint8_t> generation;
};

struct Stage2Result {
  AvatarState state;
  FitTrace trace;
  std::vector<control::SplitReport> splits;
};

Stage2Result fit_stage2(AvatarState state, std::span<const TrainFrame> frames, const control::ControlConfig& ctl,
                        const Stage2Config& cfg);

/// Per-Gaussian expression displacement magnitude (max over frames) and
/// the displacement direction at that maximum.
void split_signal(const AvatarState& state, std::span<const TrainFrame> frames, std::vector<double>& magnitudes,
                  std::vector<Vec3>& directions);

/// Mean PSNR of the avatar over every view of every frame.
double evaluate_psnr(const AvatarState& state, std::span<const TrainFrame> frames, const control::ControlConfig& ctl,
                     const Vec3& background);

}  // namespace gsavatar::train
