#pragma once

#include "ptedit/denoiser.hpp"
#include "ptedit/schedule.hpp"
#include "ptedit/synthgen.hpp"

#include <functional>
#include <random>
#include <span>
#include <vector>

namespace ptedit {

struct TrainConfig {
  DenoiserConfig model{ Vocabulary::builtin().size() };
  double lr = 3e-4;
  std::size_t steps = 20000;
  std::size_t batch = 6;
  int T = 64;
  double p_text = 0.5;  // prompt dropout, inpainting samples only
  double p_recon = 0.1; // probability of the (full x, null prompt) regime
  double grad_clip = 1.0; // global L2 norm; 0 disables
  std::size_t log_every = 100;
  std::uint64_t seed = 1;
};

/// Clean cloud to denoise together with its edit mask and prompt.
struct TrainingExample {
  PointCloud x0;
  EditMask mask;
  TokenIds prompt = kNullPrompt;
};

/// Training examples of the train split: the target cloud, masked by the
/// triplet's mask, with its prompt.
std::vector<TrainingExample> training_examples(const std::vector<EditTriplet>& data);

/// Per-sample randomness of the loss.
struct NoiseDraw {
  int t = 1;
  Points eps;
  bool reconstruction = false;
  bool drop_text = false;
};

NoiseDraw draw_noise(std::size_t k, int T, double p_text, double p_recon, std::mt19937_64& rng);
std::vector<NoiseDraw> draw_noise(std::span<const TrainingExample> batch, int T, double p_text, double p_recon,
                                  std::mt19937_64& rng);

/// Condition fed to the denoiser for one sample under its draw.
GuidanceCondition training_condition(const TrainingExample& example, const NoiseDraw& draw);

/// Mean over points of |eps - eps_hat|^2.
double epsilon_loss(const Points& eps, const Points& eps_hat);

using NoisePredictor = std::function<Points(const Points& x_t, int t, const GuidanceCondition& cond)>;

/// Batch mean of epsilon_loss for an arbitrary predictor.
double batch_loss(const NoisePredictor& predict, std::span<const TrainingExample> batch, std::span<const NoiseDraw> draws,
                  const NoiseSchedule& schedule);

/// Loss of `den` (times `scale`); when `grads` is non-null the gradient of the
/// scaled loss is accumulated into it.
template <typename S>
S denoiser_loss(const DenoiserT<S>& den, std::span<const TrainingExample> batch, std::span<const NoiseDraw> draws,
                const NoiseSchedule& schedule, std::vector<Matrix<S>>* grads = nullptr, S scale = S(1));

/// Draws noise from `rng`, then evaluates the loss.
double loss(const Denoiser& den, std::span<const TrainingExample> batch, const NoiseSchedule& schedule,
            const TrainConfig& config, std::mt19937_64& rng);

/// Gradient of the loss for the given draws.
template <typename S>
std::vector<Matrix<S>> gradients(const DenoiserT<S>& den, std::span<const TrainingExample> batch,
                                 std::span<const NoiseDraw> draws, const NoiseSchedule& schedule, S scale = S(1));

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0; // mean over the logging window
};

struct TrainResult {
  Denoiser model;
  std::vector<LossPoint> curve;
  std::vector<double> step_losses;
  std::size_t steps = 0;
};

using TrainCallback = std::function<void(const LossPoint&)>;

/// Adam with global-norm clipping. Deterministic given config.seed. Throws
/// Diverged when the loss or a parameter becomes non-finite.
TrainResult train(const TrainConfig& config, const std::vector<TrainingExample>& data,
                  const TrainCallback& on_log = {});

extern template float denoiser_loss<float>(const DenoiserT<float>&, std::span<const TrainingExample>,
                                           std::span<const NoiseDraw>, const NoiseSchedule&,
                                           std::vector<Matrix<float>>*, float);
extern template double denoiser_loss<double>(const DenoiserT<double>&, std::span<const TrainingExample>,
                                             std::span<const NoiseDraw>, const NoiseSchedule&,
                                             std::vector<Matrix<double>>*, double);

} // namespace ptedit
