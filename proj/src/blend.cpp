#include "ptedit/blend.hpp"

#include "ptedit/error.hpp"
#include "ptedit/synthgen.hpp"

#include <cmath>
#include <map>

namespace ptedit {

std::string_view
to_string(Sampler sampler)
{
  return sampler == Sampler::Deterministic ? "deterministic" : "ancestral";
}

std::optional<Sampler>
parse_sampler(std::string_view name)
{
  if (name == "deterministic")
    return Sampler::Deterministic;
  if (name == "ancestral")
    return Sampler::Ancestral;
  return std::nullopt;
}

DenoiserOracle
model_oracle(const Denoiser& den)
{
  return [&den](const Points& x_t, int t, const GuidanceCondition& cond) { return predict_noise(den, x_t, t, cond); };
}

DenoiserOracle
dirac_oracle(const PointCloud& x_star, const NoiseSchedule& schedule)
{
  return [x = x_star.points, schedule](const Points& x_t, int t, const GuidanceCondition&) -> Points {
    return (x_t - schedule.sqrt_ab(t) * x) / schedule.sqrt_one_minus_ab(t);
  };
}

DenoiserOracle
stitched_oracle(DenoiserOracle reconstruction, DenoiserOracle inpainting)
{
  return [rec = std::move(reconstruction), inp = std::move(inpainting)](const Points& x_t, int t,
                                                                        const GuidanceCondition& cond) {
    return cond.is_reconstruction() ? rec(x_t, t, cond) : inp(x_t, t, cond);
  };
}

namespace {

void
check_step(int t, const NoiseSchedule& schedule)
{
  if (t < 1 || t > schedule.T)
    throw Error(ErrorKind::BadStep, "sampler step " + std::to_string(t) + " outside [1, T]");
}

// Independent generator streams of one sampling run.
struct Streams {
  std::mt19937_64 init, recon, edit, renoise;

  explicit Streams(std::uint64_t seed)
    : init(mix_seed(seed, 0xb1e0)), recon(mix_seed(seed, 0x2ec0)), edit(mix_seed(seed, 0xed17)),
      renoise(mix_seed(seed, 0x4e9a))
  {
  }
};

void
check_inputs(const PointCloud& x, const EditMask& mask, const BlendConfig& config)
{
  if (mask.size() != x.size())
    throw Error(ErrorKind::LengthMismatch, "mask and cloud differ in length");
  if (config.t_r < 0 || config.t_r > config.T)
    throw Error(ErrorKind::InvalidParams, "t_r must lie in [0, T]");
}

// M ⊙ edit + (1 - M) ⊙ known, row by row so off-mask rows are copied bit-exactly.
void
blend_into(Points& edit, const Points& known, const EditMask& mask)
{
  for (Eigen::Index i = 0; i < edit.rows(); ++i)
    if (!mask[static_cast<std::size_t>(i)])
      edit.row(i) = known.row(i);
}

} // namespace

Points
predicted_x0(const Points& x_t, int t, const Points& eps_hat, const NoiseSchedule& schedule)
{
  return (x_t - schedule.sqrt_one_minus_ab(t) * eps_hat) / schedule.sqrt_ab(t);
}

Points
ddim_step(const Points& x_t, int t, const Points& eps_hat, const NoiseSchedule& schedule, double eta, const Points& z)
{
  check_step(t, schedule);
  if (eps_hat.rows() != x_t.rows() || z.rows() != x_t.rows())
    throw Error(ErrorKind::ShapeMismatch, "sampler inputs differ in shape");
  const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
  const double ab_prev = schedule.alpha_bar[static_cast<std::size_t>(t) - 1];
  const double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  const Points x0 = predicted_x0(x_t, t, eps_hat, schedule);
  Points out;
  if ((x0.array().abs() <= kX0Bound).all()) {
    out = std::sqrt(ab_prev) * x0 + dir * eps_hat;
  } else {
    // clip x̂0 to the data range and use the noise consistent with the clipped estimate
    const Points clipped = x0.cwiseMax(-kX0Bound).cwiseMin(kX0Bound);
    const Points eps = (x_t - schedule.sqrt_ab(t) * clipped) / schedule.sqrt_one_minus_ab(t);
    out = std::sqrt(ab_prev) * clipped + dir * eps;
  }
  if (sigma > 0.0)
    out += sigma * z;
  return out;
}

Points
denoise_step(const Points& x_t, int t, const Points& eps_hat, const NoiseSchedule& schedule, Sampler sampler,
             std::mt19937_64& rng)
{
  check_step(t, schedule);
  if (sampler == Sampler::Deterministic)
    return ddim_step(x_t, t, eps_hat, schedule, 0.0, Points::Zero(x_t.rows(), 3));
  // t = 1 has zero posterior variance; no draw keeps streams aligned across runs
  if (t == 1)
    return ddim_step(x_t, t, eps_hat, schedule, 1.0, Points::Zero(x_t.rows(), 3));
  return ddim_step(x_t, t, eps_hat, schedule, 1.0, standard_normal(static_cast<std::size_t>(x_t.rows()), rng));
}

std::vector<Points>
reconstruct(const PointCloud& x, const DenoiserOracle& den, const BlendConfig& config)
{
  if (config.T < 0)
    throw Error(ErrorKind::InvalidT, "negative step count");
  Streams rng(config.seed);
  std::vector<Points> traj(static_cast<std::size_t>(config.T) + 1);
  traj[static_cast<std::size_t>(config.T)] = standard_normal(x.size(), rng.init);
  if (config.T == 0)
    return traj;
  const auto schedule = make_schedule(config.T);
  const auto cond = GuidanceCondition::reconstruction(x);
  for (int t = config.T; t >= 1; --t) {
    const auto& cur = traj[static_cast<std::size_t>(t)];
    traj[static_cast<std::size_t>(t) - 1] = denoise_step(cur, t, den(cur, t, cond), schedule, config.sampler, rng.recon);
  }
  return traj;
}

BlendResult
blended_edit(const PointCloud& x, const EditMask& mask, const TokenIds& prompt, const DenoiserOracle& den,
             const BlendConfig& config)
{
  check_inputs(x, mask, config);
  return blended_edit(x, mask, prompt, den, config, reconstruct(x, den, config));
}

BlendResult
blended_edit(const PointCloud& x, const EditMask& mask, const TokenIds& prompt, const DenoiserOracle& den,
             const BlendConfig& config, const std::vector<Points>& recon)
{
  check_inputs(x, mask, config);
  if (recon.size() != static_cast<std::size_t>(config.T) + 1)
    throw Error(ErrorKind::ShapeMismatch, "reconstruction trajectory does not match T");
  if (config.T == 0 || config.t_r == 0)
    return { recon[0], recon[0] };

  Streams rng(config.seed);
  const auto schedule = make_schedule(config.T);
  const auto cond = GuidanceCondition::inpainting(x, mask, prompt);
  // the edit track equals the reconstruction track down to x̂_{t_r}
  Points edit = recon[static_cast<std::size_t>(config.t_r)];
  for (int t = config.t_r; t >= 1; --t) {
    edit = denoise_step(edit, t, den(edit, t, cond), schedule, config.sampler, rng.edit);
    blend_into(edit, recon[static_cast<std::size_t>(t) - 1], mask);
  }
  return { edit, recon[0] };
}

Points
inpaint_only(const PointCloud& x, const EditMask& mask, const TokenIds& prompt, const DenoiserOracle& den,
             const BlendConfig& config)
{
  check_inputs(x, mask, config);
  Streams rng(config.seed);
  Points edit = standard_normal(x.size(), rng.init);
  if (config.T == 0)
    return edit;
  const auto schedule = make_schedule(config.T);
  const auto cond = GuidanceCondition::inpainting(x, mask, prompt);
  for (int t = config.T; t >= 1; --t)
    edit = denoise_step(edit, t, den(edit, t, cond), schedule, config.sampler, rng.edit);
  return edit;
}

BlendResult
repaint_baseline(const PointCloud& x, const EditMask& mask, const TokenIds& prompt, const DenoiserOracle& den,
                 const BlendConfig& config, int r, int j)
{
  check_inputs(x, mask, config);
  return repaint_baseline(x, mask, prompt, den, config, r, j, reconstruct(x, den, config));
}

BlendResult
repaint_baseline(const PointCloud& x, const EditMask& mask, const TokenIds& prompt, const DenoiserOracle& den,
                 const BlendConfig& config, int r, int j, const std::vector<Points>& recon)
{
  check_inputs(x, mask, config);
  if (r < 1 || j < 1)
    throw Error(ErrorKind::InvalidParams, "RePaint needs r >= 1 and j >= 1");
  if (recon.size() != static_cast<std::size_t>(config.T) + 1)
    throw Error(ErrorKind::ShapeMismatch, "reconstruction trajectory does not match T");
  if (config.T == 0)
    return { recon[0], recon[0] };

  Streams rng(config.seed);
  const auto schedule = make_schedule(config.T);
  const auto cond = GuidanceCondition::inpainting(x, mask, prompt);
  std::map<int, int> jumps;
  for (int p = 0; p < config.T - j; p += j)
    jumps[p] = r - 1;

  Points edit = recon[static_cast<std::size_t>(config.T)];
  int t = config.T;
  while (t >= 1) {
    edit = denoise_step(edit, t, den(edit, t, cond), schedule, config.sampler, rng.edit);
    --t;
    blend_into(edit, recon[static_cast<std::size_t>(t)], mask);
    auto it = jumps.find(t);
    if (it != jumps.end() && it->second > 0) {
      --it->second;
      // forward diffusion q(x_{s+1} | x_s), j times
      for (int s = t; s < t + j; ++s) {
        const double beta = 1.0 - schedule.alpha_bar[static_cast<std::size_t>(s) + 1] /
                                      schedule.alpha_bar[static_cast<std::size_t>(s)];
        edit = std::sqrt(1.0 - beta) * edit + std::sqrt(beta) * standard_normal(x.size(), rng.renoise);
      }
      t += j;
    }
  }
  return { edit, recon[0] };
}

} // namespace ptedit
