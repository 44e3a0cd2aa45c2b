#pragma once

#include "ptedit/denoiser.hpp"
#include "ptedit/schedule.hpp"

#include <functional>
#include <random>
#include <vector>

namespace ptedit {

enum class Sampler { Deterministic, Ancestral };

std::string_view to_string(Sampler sampler);
std::optional<Sampler> parse_sampler(std::string_view name);

struct BlendConfig {
  int T = 64;
  int t_r = 20;
  Sampler sampler = Sampler::Deterministic;
  std::uint64_t seed = 1;
};

/// ε-prediction function of (x_t, t, condition).
using DenoiserOracle = std::function<Points(const Points& x_t, int t, const GuidanceCondition& cond)>;

DenoiserOracle model_oracle(const Denoiser& den);

/// Optimal predictor for a point-mass data distribution at x_star; ignores the condition.
DenoiserOracle dirac_oracle(const PointCloud& x_star, const NoiseSchedule& schedule);

/// Routes reconstruction-regime calls to `reconstruction` and all others to `inpainting`.
DenoiserOracle stitched_oracle(DenoiserOracle reconstruction, DenoiserOracle inpainting);

/// Generalized DDIM update with explicit noise z:
///   x̂0 = (x_t - sqrt(1-ᾱ_t) ε̂) / sqrt(ᾱ_t)
///   σ = eta * sqrt((1-ᾱ_{t-1}) / (1-ᾱ_t)) * sqrt(1 - ᾱ_t / ᾱ_{t-1})
///   x_{t-1} = sqrt(ᾱ_{t-1}) x̂0 + sqrt(1-ᾱ_{t-1}-σ²) ε̂ + σ z
/// eta = 0 is the deterministic sampler, eta = 1 the ancestral (DDPM posterior) one.
/// When x̂0 leaves [-2, 2]^3 it is clipped and ε̂ is
/// replaced by the noise consistent with the clipped x̂0.
inline constexpr double kX0Bound = 2.0; // edited targets reach ~2 in the source frame
Points ddim_step(const Points& x_t, int t, const Points& eps_hat, const NoiseSchedule& schedule, double eta,
                 const Points& z);

/// One sampler step; the ancestral sampler draws z from `rng`. Throws BadStep unless 1 <= t <= T.
Points denoise_step(const Points& x_t, int t, const Points& eps_hat, const NoiseSchedule& schedule, Sampler sampler,
                    std::mt19937_64& rng);

/// x̂0 implied by an ε estimate.
Points predicted_x0(const Points& x_t, int t, const Points& eps_hat, const NoiseSchedule& schedule);

/// Reconstruction trajectory indexed by t: result[t] = x̂_recon,t, result[T] is the initial noise.
std::vector<Points> reconstruct(const PointCloud& x, const DenoiserOracle& den, const BlendConfig& config);

struct BlendResult {
  Points output;         // x̂_0 of the edit track
  Points reconstruction; // x̂_recon,0
};

/// Coordinate-blending edit. Both tracks start from one noise draw; above t_r the
/// edit track copies the reconstruction track, at and below t_r it is denoised
/// under (x_M, prompt) and blended: M ⊙ edit + (1 - M) ⊙ recon.
BlendResult blended_edit(const PointCloud& x, const EditMask& mask, const TokenIds& prompt,
                         const DenoiserOracle& den, const BlendConfig& config);

/// Same as above with a precomputed reconstruction trajectory from reconstruct()
/// under the same config (lets sweeps over t_r share one reconstruction).
BlendResult blended_edit(const PointCloud& x, const EditMask& mask, const TokenIds& prompt,
                         const DenoiserOracle& den, const BlendConfig& config,
                         const std::vector<Points>& reconstruction);

/// Noise-initialized inpainting track alone, with no reconstruction track.
Points inpaint_only(const PointCloud& x, const EditMask& mask, const TokenIds& prompt, const DenoiserOracle& den,
                    const BlendConfig& config);

/// Inpainting at every step with the off-mask region taken from the
/// reconstruction trajectory, plus RePaint jumps: after reaching a jump point
/// p in {0, j, 2j, ...} with p < T - j, the state is re-noised j steps and
/// denoised again, r - 1 times per point. r = 1 reduces to blended_edit with t_r = T.
BlendResult repaint_baseline(const PointCloud& x, const EditMask& mask, const TokenIds& prompt,
                             const DenoiserOracle& den, const BlendConfig& config, int r, int j);
BlendResult repaint_baseline(const PointCloud& x, const EditMask& mask, const TokenIds& prompt,
                             const DenoiserOracle& den, const BlendConfig& config, int r, int j,
                             const std::vector<Points>& reconstruction);

} // namespace ptedit
