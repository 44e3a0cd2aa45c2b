#include "ptedit/training.hpp"

#include "denoiser_tape.hpp"

#include "ptedit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ptedit {

std::vector<TrainingExample>
training_examples(const std::vector<EditTriplet>& data)
{
  std::vector<TrainingExample> out;
  for (const auto& t : data)
    if (t.split == Split::Train)
      out.push_back({ t.target, t.mask, tokenize(t.prompt, TokenizeMode::Strict) });
  return out;
}

NoiseDraw
draw_noise(std::size_t k, int T, double p_text, double p_recon, std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  NoiseDraw d;
  d.t = std::uniform_int_distribution<int>(1, T)(rng);
  d.reconstruction = u01(rng) < p_recon;
  d.drop_text = u01(rng) < p_text;
  d.eps = standard_normal(k, rng);
  return d;
}

std::vector<NoiseDraw>
draw_noise(std::span<const TrainingExample> batch, int T, double p_text, double p_recon, std::mt19937_64& rng)
{
  std::vector<NoiseDraw> out;
  out.reserve(batch.size());
  for (const auto& ex : batch)
    out.push_back(draw_noise(ex.x0.size(), T, p_text, p_recon, rng));
  return out;
}

GuidanceCondition
training_condition(const TrainingExample& example, const NoiseDraw& draw)
{
  if (draw.reconstruction)
    return GuidanceCondition::reconstruction(example.x0);
  return GuidanceCondition::inpainting(example.x0, example.mask, draw.drop_text ? kNullPrompt : example.prompt);
}

double
epsilon_loss(const Points& eps, const Points& eps_hat)
{
  if (eps.rows() != eps_hat.rows() || eps.rows() == 0)
    throw Error(ErrorKind::ShapeMismatch, "noise and estimate differ in shape");
  return (eps - eps_hat).squaredNorm() / static_cast<double>(eps.rows());
}

namespace {

void
check_batch(std::size_t batch, std::size_t draws)
{
  if (batch == 0)
    throw Error(ErrorKind::ShapeMismatch, "empty batch");
  if (batch != draws)
    throw Error(ErrorKind::ShapeMismatch, "one noise draw per sample required");
}

} // namespace

double
batch_loss(const NoisePredictor& predict, std::span<const TrainingExample> batch, std::span<const NoiseDraw> draws,
           const NoiseSchedule& schedule)
{
  check_batch(batch.size(), draws.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x_t = q_sample(batch[i].x0.points, draws[i].t, draws[i].eps, schedule);
    total += epsilon_loss(draws[i].eps, predict(x_t, draws[i].t, training_condition(batch[i], draws[i])));
  }
  return total / static_cast<double>(batch.size());
}

template <typename S>
S
denoiser_loss(const DenoiserT<S>& den, std::span<const TrainingExample> batch, std::span<const NoiseDraw> draws,
              const NoiseSchedule& schedule, std::vector<Matrix<S>>* grads, S scale)
{
  check_batch(batch.size(), draws.size());
  typename DenoiserT<S>::Tape tape;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& d = draws[i];
    const Matrix<S> x_t = q_sample(batch[i].x0.points, d.t, d.eps, schedule).template cast<S>();
    const Matrix<S> eps = d.eps.template cast<S>();
    const Matrix<S> eps_hat = den.forward(x_t, d.t, training_condition(batch[i], d), tape);
    const Matrix<S> diff = eps_hat - eps;
    const double k = static_cast<double>(diff.rows());
    total += static_cast<double>(diff.squaredNorm()) / k;
    if (grads) {
      const S w = scale * static_cast<S>(2.0 / (k * static_cast<double>(batch.size())));
      den.backward(tape, (diff * w).eval(), *grads);
    }
  }
  return static_cast<S>(total / static_cast<double>(batch.size())) * scale;
}

template float denoiser_loss<float>(const DenoiserT<float>&, std::span<const TrainingExample>,
                                    std::span<const NoiseDraw>, const NoiseSchedule&, std::vector<Matrix<float>>*,
                                    float);
template double denoiser_loss<double>(const DenoiserT<double>&, std::span<const TrainingExample>,
                                      std::span<const NoiseDraw>, const NoiseSchedule&, std::vector<Matrix<double>>*,
                                      double);

double
loss(const Denoiser& den, std::span<const TrainingExample> batch, const NoiseSchedule& schedule,
     const TrainConfig& config, std::mt19937_64& rng)
{
  const auto draws = draw_noise(batch, schedule.T, config.p_text, config.p_recon, rng);
  return denoiser_loss(den, batch, draws, schedule);
}

template <typename S>
std::vector<Matrix<S>>
gradients(const DenoiserT<S>& den, std::span<const TrainingExample> batch, std::span<const NoiseDraw> draws,
          const NoiseSchedule& schedule, S scale)
{
  auto grads = den.zero_grads();
  denoiser_loss(den, batch, draws, schedule, &grads, scale);
  return grads;
}

template std::vector<Matrix<float>> gradients<float>(const DenoiserT<float>&, std::span<const TrainingExample>,
                                                     std::span<const NoiseDraw>, const NoiseSchedule&, float);
template std::vector<Matrix<double>> gradients<double>(const DenoiserT<double>&, std::span<const TrainingExample>,
                                                       std::span<const NoiseDraw>, const NoiseSchedule&, double);

namespace {

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Matrix<float>> m, v;
  std::size_t t = 0;

  Adam(const Denoiser& den, double rate) : lr(rate), m(den.zero_grads()), v(den.zero_grads()) {}

  void step(Denoiser& den, const std::vector<Matrix<float>>& grads)
  {
    ++t;
    const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
    const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(beta1, static_cast<double>(t))));
    const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(beta2, static_cast<double>(t))));
    const float rate = static_cast<float>(lr), e = static_cast<float>(eps);
    auto& ts = den.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * grads[i];
      v[i] = b2 * v[i] + (1.0f - b2) * grads[i].cwiseAbs2();
      ts[i].value.array() -= rate * (m[i].array() * c1) / ((v[i].array() * c2).sqrt() + e);
    }
  }
};

} // namespace

TrainResult
train(const TrainConfig& config, const std::vector<TrainingExample>& data, const TrainCallback& on_log)
{
  if (data.empty())
    throw Error(ErrorKind::InvalidParams, "training set is empty");
  if (config.batch == 0)
    throw Error(ErrorKind::InvalidParams, "batch size must be positive");
  for (double p : { config.p_text, config.p_recon })
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(ErrorKind::InvalidParams, "probabilities must lie in [0, 1]");

  const auto schedule = make_schedule(config.T);
  std::mt19937_64 rng(mix_seed(config.seed, 0x7a1));
  TrainResult result{ Denoiser::initialized(config.model, mix_seed(config.seed, 0x1417)), {}, {}, 0 };
  Adam adam(result.model, config.lr);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::size_t cursor = order.size();
  std::vector<TrainingExample> batch;
  double window = 0.0;
  std::size_t window_n = 0;

  for (std::size_t step = 1; step <= config.steps; ++step) {
    batch.clear();
    while (batch.size() < config.batch) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(data[order[cursor++]]);
    }
    const auto draws = draw_noise(batch, config.T, config.p_text, config.p_recon, rng);
    auto grads = result.model.zero_grads();
    const double l = denoiser_loss(result.model, std::span<const TrainingExample>(batch), draws, schedule, &grads);
    if (!std::isfinite(l))
      throw Error(ErrorKind::Diverged, "loss became non-finite at step " + std::to_string(step));

    if (config.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads)
        sq += static_cast<double>(g.squaredNorm());
      const double norm = std::sqrt(sq);
      if (!std::isfinite(norm))
        throw Error(ErrorKind::Diverged, "gradient became non-finite at step " + std::to_string(step));
      if (norm > config.grad_clip)
        for (auto& g : grads)
          g *= static_cast<float>(config.grad_clip / norm);
    }
    adam.step(result.model, grads);
    if (!result.model.all_finite())
      throw Error(ErrorKind::Diverged, "parameters became non-finite at step " + std::to_string(step));

    result.step_losses.push_back(l);
    result.steps = step;
    window += l;
    ++window_n;
    if (config.log_every > 0 && (step % config.log_every == 0 || step == config.steps)) {
      result.curve.push_back({ step, window / static_cast<double>(window_n) });
      if (on_log)
        on_log(result.curve.back());
      window = 0.0;
      window_n = 0;
    }
  }
  return result;
}

} // namespace ptedit
