#include "ptedit/denoiser.hpp"
#include "ptedit/schedule.hpp"
#include "ptedit/synthgen.hpp"
#include "ptedit/training.hpp"

#include "../src/denoiser_tape.hpp"
#include "test_util.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace ptedit;

namespace {

DenoiserConfig
small_config()
{
  return { Vocabulary::builtin().size(), 16, 2, 4 };
}

// Small labeled training set built straight from the generator.
std::vector<TrainingExample>
examples(std::size_t n, std::size_t k, std::uint64_t seed)
{
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cat = all_categories()[i % kNumCategories];
    const auto params = sample_params(cat, mix_seed(seed, i));
    const auto pair = make_edit_pair(params, random_edit(params, mix_seed(seed, i + 100)), k, mix_seed(seed, i + 200));
    out.push_back({ pair.target, pair.mask, tokenize(pair.prompt) });
  }
  return out;
}

Points
permute_rows(const Points& p, const std::vector<Eigen::Index>& perm)
{
  Points out(p.rows(), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    out.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<Eigen::Index>
random_permutation(Eigen::Index n, std::uint64_t seed)
{
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    perm[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

std::size_t
tensor_index(const DenoiserT<double>& den, const std::string& name)
{
  for (std::size_t i = 0; i < den.tensors().size(); ++i)
    if (den.tensors()[i].name == name)
      return i;
  FAIL("no tensor " << name);
  return 0;
}

} // namespace

TEST_CASE("cosine schedule endpoints and monotonicity")
{
  const auto s = make_schedule(64);
  REQUIRE(s.alpha_bar.size() == 65);
  CHECK(s.alpha_bar[0] == 1.0);
  for (int t = 1; t <= 64; ++t)
    CHECK(s.alpha_bar[static_cast<std::size_t>(t)] < s.alpha_bar[static_cast<std::size_t>(t) - 1]);
  CHECK(s.alpha_bar[64] > 0.0);
  CHECK(s.alpha_bar[64] < 1e-3);
}

TEST_CASE("cosine schedule matches the closed form before the beta cap engages")
{
  const auto s = make_schedule(64);
  const double off = 0.008;
  const auto f = [&](double t) {
    const double c = std::cos((t / 64.0 + off) / (1.0 + off) * std::numbers::pi / 2.0);
    return c * c;
  };
  for (int t = 0; t <= 60; ++t)
    CHECK(s.alpha_bar[static_cast<std::size_t>(t)] == doctest::Approx(f(t) / f(0)).epsilon(1e-12));
}

TEST_CASE("schedule rejects tiny T")
{
  CHECK_ERROR_KIND(make_schedule(1), ErrorKind::InvalidT);
  CHECK_ERROR_KIND(make_schedule(0), ErrorKind::InvalidT);
  CHECK_NOTHROW(make_schedule(2));
}

TEST_CASE("q_sample closed-form cases")
{
  const auto s = make_schedule(64);
  const Points x0 = testutil::random_points(40, 1);
  const Points eps = testutil::random_points(40, 2);
  CHECK(q_sample(x0, 0, eps, s) == x0);
  const Points zero = Points::Zero(40, 3);
  CHECK((q_sample(x0, 17, zero, s) - std::sqrt(s.alpha_bar[17]) * x0).cwiseAbs().maxCoeff() < 1e-15);
  const Points xt = q_sample(x0, 30, eps, s);
  CHECK((xt - (std::sqrt(s.alpha_bar[30]) * x0 + std::sqrt(1.0 - s.alpha_bar[30]) * eps)).cwiseAbs().maxCoeff() <
        1e-15);
  CHECK_ERROR_KIND(q_sample(x0, 65, eps, s), ErrorKind::BadStep);
  CHECK_ERROR_KIND(q_sample(x0, -1, eps, s), ErrorKind::BadStep);
  CHECK_ERROR_KIND(q_sample(x0, 3, Points::Zero(39, 3), s), ErrorKind::ShapeMismatch);
}

TEST_CASE("q_sample marginal mean and variance")
{
  const auto s = make_schedule(64);
  Points x0(1, 3);
  x0 << 0.3, -0.7, 0.5;
  std::mt19937_64 rng(5);
  for (int t : { 5, 32, 60 }) {
    const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
    constexpr int n = 10000;
    Eigen::RowVector3d sum = Eigen::RowVector3d::Zero(), sum2 = Eigen::RowVector3d::Zero();
    for (int i = 0; i < n; ++i) {
      const Points xt = q_sample(x0, t, standard_normal(1, rng), s);
      const Eigen::RowVector3d d = xt.row(0) - std::sqrt(ab) * x0.row(0);
      sum += xt.row(0);
      sum2 += d.cwiseAbs2();
    }
    const Eigen::RowVector3d mean = sum / n;
    const Eigen::RowVector3d var = sum2 / n;
    for (int c = 0; c < 3; ++c) {
      // 5 standard errors of the sample mean
      CHECK(std::abs(mean(c) - std::sqrt(ab) * x0(0, c)) < 5.0 * std::sqrt((1.0 - ab) / n));
      CHECK(var(c) > (1.0 - ab) * 0.95);
      CHECK(var(c) < (1.0 - ab) * 1.05);
    }
  }
}

TEST_CASE("parameter count closed form")
{
  for (const DenoiserConfig c : { DenoiserConfig{ 40, 64, 4, 4 }, DenoiserConfig{ 7, 16, 2, 2 }, small_config() }) {
    const DenoiserT<float> den(c);
    std::size_t summed = 0;
    for (const auto& t : den.tensors())
      summed += static_cast<std::size_t>(t.value.size());
    const std::size_t v = c.vocab, e = c.embed, b = c.blocks;
    CHECK(summed == v * e + e * e + 21 * e + 3 + b * (8 * e * e + 11 * e));
    CHECK(c.parameter_count() == summed);
    CHECK(den.parameter_count() == summed);
  }
  CHECK(DenoiserConfig{ 40, 64, 4, 4 }.parameter_count() == DenoiserConfig{ 40, 64, 4, 1 }.parameter_count());
  CHECK_ERROR_KIND(DenoiserT<float>(DenoiserConfig{ 40, 30, 1, 4 }), ErrorKind::InvalidParams);
}

TEST_CASE("denoiser forward basics")
{
  const auto ex = examples(1, 96, 3)[0];
  const auto cond = GuidanceCondition::inpainting(ex.x0, ex.mask, ex.prompt);
  const Points xt = testutil::random_points(96, 4);

  SUBCASE("zero parameters give zero output")
  {
    const Denoiser den(small_config());
    CHECK(predict_noise(den, xt, 10, cond).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("deterministic and shaped K x 3")
  {
    const auto den = Denoiser::initialized(small_config(), 1);
    const Points a = predict_noise(den, xt, 10, cond);
    const Points b = predict_noise(den, xt, 10, cond);
    CHECK(a.rows() == 96);
    CHECK(a == b);
    CHECK(a.allFinite());
    CHECK(predict_noise(den, xt, 10, GuidanceCondition::reconstruction(ex.x0)).rows() == 96);
  }
  SUBCASE("shape mismatch")
  {
    const auto den = Denoiser::initialized(small_config(), 1);
    CHECK_ERROR_KIND(predict_noise(den, Points::Zero(95, 3), 10, cond), ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("denoiser permutation behaviour")
{
  const auto ex = examples(1, 64, 8)[0];
  const auto cond = GuidanceCondition::inpainting(ex.x0, ex.mask, ex.prompt);
  const Points xt = testutil::random_points(64, 9);
  const auto perm = random_permutation(64, 10);
  auto den = DenoiserT<double>::initialized(small_config(), 2);

  GuidanceCondition permuted = cond;
  permuted.cloud.coords = permute_rows(cond.cloud.coords, perm);
  permuted.cloud.flags = permute_rows(cond.cloud.flags, perm);

  SUBCASE("permuting noisy and condition points together permutes the output")
  {
    const Points out = den.forward(xt, 12, cond);
    const Points out_p = den.forward(permute_rows(xt, perm), 12, permuted);
    CHECK((out_p - permute_rows(out, perm)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("without the index coupling the condition order is irrelevant")
  {
    den.tensors()[tensor_index(den, "pair.w")].value.setZero();
    const Points out = den.forward(xt, 12, cond);
    const Points out_p = den.forward(xt, 12, permuted);
    CHECK((out_p - out).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("checkpoint round trip")
{
  const auto den = Denoiser::initialized(DenoiserConfig{ Vocabulary::builtin().size(), 16, 2, 2 }, 5);
  std::stringstream buf;
  write_checkpoint(buf, den, 1234);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "BPM1");

  std::stringstream in(bytes);
  const auto ck = read_checkpoint(in);
  CHECK(ck.step == 1234);
  CHECK(ck.model.config() == den.config());
  REQUIRE(ck.model.tensors().size() == den.tensors().size());
  for (std::size_t i = 0; i < den.tensors().size(); ++i) {
    CHECK(ck.model.tensors()[i].name == den.tensors()[i].name);
    CHECK(ck.model.tensors()[i].value == den.tensors()[i].value);
  }

  std::stringstream again;
  write_checkpoint(again, ck.model, ck.step);
  CHECK(again.str() == bytes);

  std::stringstream bad("BPM2" + bytes.substr(4));
  CHECK_ERROR_KIND(read_checkpoint(bad), ErrorKind::BadFormat);
  std::stringstream cut(bytes.substr(0, bytes.size() / 2));
  CHECK_ERROR_KIND(read_checkpoint(cut), ErrorKind::BadFormat);

  const auto other = Denoiser::initialized(DenoiserConfig{ 7, 16, 1, 2 }, 5);
  std::stringstream wrong_vocab;
  write_checkpoint(wrong_vocab, other, 0);
  CHECK_ERROR_KIND(read_checkpoint(wrong_vocab), ErrorKind::CheckpointMismatch);
}

TEST_CASE("training condition regimes")
{
  const auto data = examples(6, 80, 11);
  std::mt19937_64 rng(3);

  SUBCASE("p_recon = 1 always conditions on the full cloud with zero flags and the null prompt")
  {
    for (const auto& ex : data) {
      const auto draw = draw_noise(ex.x0.size(), 64, 0.5, 1.0, rng);
      const auto cond = training_condition(ex, draw);
      CHECK(cond.is_reconstruction());
      CHECK(cond.cloud.coords == ex.x0.points);
      CHECK(cond.cloud.flags.cwiseAbs().maxCoeff() == 0.0);
      CHECK(cond.prompt == kNullPrompt);
    }
  }
  SUBCASE("p_recon = 0 and p_text = 0 keep mask and prompt")
  {
    for (const auto& ex : data) {
      const auto draw = draw_noise(ex.x0.size(), 64, 0.0, 0.0, rng);
      CHECK(draw.t >= 1);
      CHECK(draw.t <= 64);
      const auto cond = training_condition(ex, draw);
      const auto expected = apply_mask(ex.x0, ex.mask);
      CHECK(cond.cloud.coords == expected.coords);
      CHECK(cond.cloud.flags == expected.flags);
      CHECK(cond.prompt == ex.prompt);
    }
  }
  SUBCASE("p_text = 1 drops the prompt but keeps the mask")
  {
    const auto draw = draw_noise(data[0].x0.size(), 64, 1.0, 0.0, rng);
    const auto cond = training_condition(data[0], draw);
    CHECK(cond.prompt == kNullPrompt);
    CHECK(cond.cloud.flags.cwiseAbs().maxCoeff() == 1.0);
  }
}

TEST_CASE("loss values")
{
  const auto data = examples(4, 64, 12);
  const auto schedule = make_schedule(64);
  std::mt19937_64 rng(7);
  const auto draws = draw_noise(data, 64, 0.5, 0.1, rng);

  SUBCASE("oracle predictor gives zero loss")
  {
    std::size_t call = 0;
    const NoisePredictor oracle = [&](const Points&, int, const GuidanceCondition&) { return draws[call++].eps; };
    CHECK(batch_loss(oracle, data, draws, schedule) == 0.0);
  }
  SUBCASE("a zero predictor gives the mean squared noise norm")
  {
    const NoisePredictor zero = [](const Points& x, int, const GuidanceCondition&) {
      return Points(Points::Zero(x.rows(), 3));
    };
    double expected = 0.0;
    for (const auto& d : draws)
      expected += d.eps.squaredNorm() / static_cast<double>(d.eps.rows());
    CHECK(batch_loss(zero, data, draws, schedule) == doctest::Approx(expected / 4.0).epsilon(1e-12));
  }
  SUBCASE("untrained model loss is at least 2")
  {
    const auto den = Denoiser::initialized(DenoiserConfig{ Vocabulary::builtin().size() }, 1);
    const auto many = examples(12, 128, 13);
    std::mt19937_64 r(1);
    CHECK(loss(den, many, schedule, TrainConfig{}, r) >= 2.0);
  }
  SUBCASE("loss is invariant to batch order for fixed per-sample draws")
  {
    const auto den = DenoiserT<double>::initialized(small_config(), 3);
    const double a = denoiser_loss(den, std::span<const TrainingExample>(data), draws, schedule);
    const std::vector<TrainingExample> rev(data.rbegin(), data.rend());
    const std::vector<NoiseDraw> rev_draws(draws.rbegin(), draws.rend());
    CHECK(denoiser_loss(den, std::span<const TrainingExample>(rev), rev_draws, schedule) ==
          doctest::Approx(a).epsilon(1e-13));
  }
  SUBCASE("model loss agrees with the generic predictor loss")
  {
    const auto den = Denoiser::initialized(small_config(), 3);
    const NoisePredictor predict = [&](const Points& x, int t, const GuidanceCondition& c) {
      return predict_noise(den, x, t, c);
    };
    CHECK(static_cast<double>(denoiser_loss(den, std::span<const TrainingExample>(data), draws, schedule)) ==
          doctest::Approx(batch_loss(predict, data, draws, schedule)).epsilon(1e-5));
  }
}

TEST_CASE("gradients match central finite differences")
{
  const auto schedule = make_schedule(64);
  const DenoiserConfig config{ Vocabulary::builtin().size(), 16, 2, 4 };
  const auto den = DenoiserT<double>::initialized(config, 21);
  const auto data = examples(3, 64, 22);
  std::mt19937_64 rng(23);
  const auto draws = draw_noise(data, 64, 0.5, 0.1, rng);
  const auto grads = gradients(den, std::span<const TrainingExample>(data), draws, schedule);

  // parameters the batch actually touches: skip unused token rows
  std::vector<std::pair<std::size_t, Eigen::Index>> candidates;
  for (std::size_t p = 0; p < grads.size(); ++p)
    for (Eigen::Index i = 0; i < grads[p].size(); ++i)
      if (grads[p].data()[i] != 0.0)
        candidates.emplace_back(p, i);
  REQUIRE(candidates.size() > 50);
  std::shuffle(candidates.begin(), candidates.end(), rng);

  constexpr double h = 1e-3;
  double worst = 0.0;
  for (std::size_t n = 0; n < 50; ++n) {
    const auto [p, i] = candidates[n];
    auto probe = den;
    double& w = probe.tensors()[p].value.data()[i];
    const double w0 = w;
    w = w0 + h;
    const double up = denoiser_loss(probe, std::span<const TrainingExample>(data), draws, schedule);
    w = w0 - h;
    const double down = denoiser_loss(probe, std::span<const TrainingExample>(data), draws, schedule);
    const double fd = (up - down) / (2.0 * h);
    const double g = grads[p].data()[i];
    const double rel = std::abs(fd - g) / std::max({ std::abs(fd), std::abs(g), 1e-6 });
    worst = std::max(worst, rel);
    CHECK_MESSAGE(rel < 1e-3, den.tensors()[p].name << "[" << i << "] analytic " << g << " numeric " << fd);
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("gradient linearity and zero upstream gradient")
{
  const auto schedule = make_schedule(64);
  const auto den = Denoiser::initialized(small_config(), 31);
  const auto data = examples(2, 64, 32);
  std::mt19937_64 rng(33);
  const auto draws = draw_noise(data, 64, 0.5, 0.1, rng);

  const auto g1 = gradients(den, std::span<const TrainingExample>(data), draws, schedule, 1.0f);
  const auto g2 = gradients(den, std::span<const TrainingExample>(data), draws, schedule, 2.0f);
  for (std::size_t p = 0; p < g1.size(); ++p)
    CHECK(g2[p] == (2.0f * g1[p]).eval());

  Denoiser::Tape tape;
  const auto cond = training_condition(data[0], draws[0]);
  const Matrix<float> out = den.forward(data[0].x0.points.cast<float>(), 5, cond, tape);
  auto zero = den.zero_grads();
  den.backward(tape, Matrix<float>::Zero(out.rows(), 3), zero);
  for (const auto& g : zero)
    CHECK(g.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("training: zero steps, determinism, validation")
{
  const auto data = examples(6, 64, 41);
  TrainConfig config;
  config.model = small_config();
  config.batch = 2;
  config.log_every = 5;
  config.seed = 4;

  SUBCASE("zero steps returns the initialization")
  {
    config.steps = 0;
    const auto r = train(config, data);
    const auto init = Denoiser::initialized(config.model, mix_seed(config.seed, 0x1417));
    CHECK(r.steps == 0);
    for (std::size_t i = 0; i < init.tensors().size(); ++i)
      CHECK(r.model.tensors()[i].value == init.tensors()[i].value);
  }
  SUBCASE("same seed gives identical runs")
  {
    config.steps = 12;
    std::vector<LossPoint> logged;
    const auto a = train(config, data, [&](const LossPoint& p) { logged.push_back(p); });
    const auto b = train(config, data);
    CHECK(a.step_losses.size() == 12);
    CHECK(a.step_losses == b.step_losses);
    CHECK(a.model.all_finite());
    REQUIRE(logged.size() >= 2);
    CHECK(logged[0].step == 5);
    CHECK(logged[1].step == 10);
    for (std::size_t i = 0; i < a.model.tensors().size(); ++i)
      CHECK(a.model.tensors()[i].value == b.model.tensors()[i].value);
    config.seed = 5;
    CHECK(train(config, data).step_losses != a.step_losses);
  }
  SUBCASE("invalid configurations")
  {
    CHECK_ERROR_KIND(train(config, {}), ErrorKind::InvalidParams);
    config.batch = 0;
    CHECK_ERROR_KIND(train(config, data), ErrorKind::InvalidParams);
    config.batch = 2;
    config.p_recon = 1.5;
    CHECK_ERROR_KIND(train(config, data), ErrorKind::InvalidParams);
  }
  SUBCASE("an exploding learning rate is reported as divergence")
  {
    config.steps = 50;
    config.grad_clip = 0.0;
    config.lr = 1e30;
    CHECK_ERROR_KIND(train(config, data), ErrorKind::Diverged);
  }
}
