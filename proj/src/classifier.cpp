#include "ptedit/classifier.hpp"

#include "ptedit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace ptedit {

namespace {

enum Param : std::size_t { kW1, kB1, kW2, kB2, kWh, kBh, kNumParams };

using RowMat = Matrix<double>;

} // namespace

struct PointClassifier::Tape {
  RowMat x, z1, a1, z2;
  std::vector<Eigen::Index> argmax; // per feature channel
  RowMat f;
};

PointClassifier::PointClassifier()
{
  constexpr auto h = static_cast<Eigen::Index>(kHidden);
  constexpr auto c = static_cast<Eigen::Index>(kClasses);
  tensors_ = {
    { "clf.l1.w", RowMat::Zero(3, h) }, { "clf.l1.b", RowMat::Zero(1, h) },   { "clf.l2.w", RowMat::Zero(h, h) },
    { "clf.l2.b", RowMat::Zero(1, h) }, { "clf.head.w", RowMat::Zero(h, c) }, { "clf.head.b", RowMat::Zero(1, c) },
  };
}

PointClassifier
PointClassifier::initialized(std::uint64_t seed)
{
  PointClassifier clf;
  std::mt19937_64 rng(seed);
  for (auto p : { kW1, kW2, kWh }) {
    auto& w = clf.tensors_[p].value;
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(w.rows())));
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w.data()[i] = n(rng);
  }
  return clf;
}

std::array<double, PointClassifier::kClasses>
PointClassifier::forward(const Points& cloud, Tape& tape) const
{
  const auto& P = tensors_;
  tape.x = cloud;
  tape.z1 = tape.x * P[kW1].value;
  tape.z1.rowwise() += P[kB1].value.row(0);
  tape.a1 = tape.z1.cwiseMax(0.0);
  tape.z2 = tape.a1 * P[kW2].value;
  tape.z2.rowwise() += P[kB2].value.row(0);
  // relu commutes with max, so pool the pre-activations
  tape.f.resize(1, tape.z2.cols());
  tape.argmax.resize(static_cast<std::size_t>(tape.z2.cols()));
  for (Eigen::Index j = 0; j < tape.z2.cols(); ++j) {
    Eigen::Index r = 0;
    tape.f(0, j) = std::max(tape.z2.col(j).maxCoeff(&r), 0.0);
    tape.argmax[static_cast<std::size_t>(j)] = r;
  }
  const RowMat logits = tape.f * P[kWh].value + P[kBh].value;
  std::array<double, kClasses> out{};
  for (std::size_t c = 0; c < kClasses; ++c)
    out[c] = logits(0, static_cast<Eigen::Index>(c));
  return out;
}

void
PointClassifier::backward(const Tape& tape, const std::array<double, kClasses>& d_logits,
                          std::vector<Matrix<double>>& grads) const
{
  const auto& P = tensors_;
  const Eigen::Map<const RowMat> dl(d_logits.data(), 1, static_cast<Eigen::Index>(kClasses));
  grads[kWh] += tape.f.transpose() * dl;
  grads[kBh] += dl;
  const RowMat df = dl * P[kWh].value.transpose();
  RowMat dz2 = RowMat::Zero(tape.z2.rows(), tape.z2.cols());
  for (Eigen::Index j = 0; j < dz2.cols(); ++j)
    if (tape.f(0, j) > 0.0)
      dz2(tape.argmax[static_cast<std::size_t>(j)], j) = df(0, j);
  grads[kW2] += tape.a1.transpose() * dz2;
  grads[kB2] += dz2.colwise().sum();
  RowMat dz1 = dz2 * P[kW2].value.transpose();
  dz1.array() *= (tape.z1.array() > 0.0).cast<double>();
  grads[kW1] += tape.x.transpose() * dz1;
  grads[kB1] += dz1.colwise().sum();
}

PointClassifier::Feature
PointClassifier::features(const Points& cloud) const
{
  Tape tape;
  forward(cloud, tape);
  return tape.f;
}

std::array<double, PointClassifier::kClasses>
PointClassifier::probabilities(const Points& cloud) const
{
  Tape tape;
  auto p = forward(cloud, tape);
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p)
    v /= sum;
  return p;
}

Category
PointClassifier::predict(const Points& cloud) const
{
  const auto p = probabilities(cloud);
  return static_cast<Category>(std::max_element(p.begin(), p.end()) - p.begin());
}

void
PointClassifier::save(const std::filesystem::path& path) const
{
  TensorFile file;
  for (const auto& t : tensors_)
    file.tensors.push_back({ t.name, t.value.cast<float>() });
  write_tensor_file(path, file);
}

PointClassifier
PointClassifier::load(const std::filesystem::path& path)
{
  const auto file = read_tensor_file(path);
  PointClassifier clf;
  if (file.tensors.size() != clf.tensors_.size())
    throw Error(ErrorKind::CheckpointMismatch, path.string() + " is not a classifier checkpoint");
  for (std::size_t i = 0; i < file.tensors.size(); ++i) {
    const auto& src = file.tensors[i];
    auto& dst = clf.tensors_[i];
    if (src.name != dst.name || src.value.rows() != dst.value.rows() || src.value.cols() != dst.value.cols())
      throw Error(ErrorKind::CheckpointMismatch, "classifier tensor " + src.name + " does not match");
    dst.value = src.value.cast<double>();
  }
  return clf;
}

ClassifierTrainResult
train_classifier(const std::vector<EditTriplet>& data, const ClassifierTrainConfig& config)
{
  std::vector<std::pair<const Points*, std::size_t>> train, test;
  std::set<Category> seen;
  for (const auto& t : data) {
    const auto c = static_cast<std::size_t>(t.descriptor.category);
    seen.insert(t.descriptor.category);
    if (t.split == Split::Train) {
      train.emplace_back(&t.source.points, c);
      train.emplace_back(&t.target.points, c);
    } else {
      test.emplace_back(&t.source.points, c);
    }
  }
  if (seen.size() < 2)
    throw Error(ErrorKind::InvalidParams, "classifier training needs at least two categories");

  ClassifierTrainResult result{ PointClassifier::initialized(mix_seed(config.seed, 0xc1f)), 0.0, 0.0 };
  auto& clf = result.model;
  std::mt19937_64 rng(mix_seed(config.seed, 0xc1e));
  std::vector<RowMat> m, v;
  for (const auto& t : clf.tensors()) {
    m.push_back(RowMat::Zero(t.value.rows(), t.value.cols()));
    v.push_back(RowMat::Zero(t.value.rows(), t.value.cols()));
  }
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  PointClassifier::Tape tape;
  std::size_t adam_t = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      std::vector<RowMat> grads = m;
      for (auto& g : grads)
        g.setZero();
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& [cloud, label] = train[order[i]];
        auto logits = clf.forward(*cloud, tape);
        const double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (auto l : logits)
          sum += std::exp(l - mx);
        std::array<double, PointClassifier::kClasses> d{};
        for (std::size_t c = 0; c < d.size(); ++c)
          d[c] = (std::exp(logits[c] - mx) / sum - (c == label ? 1.0 : 0.0)) / static_cast<double>(end - start);
        loss += mx + std::log(sum) - logits[label];
        clf.backward(tape, d, grads);
      }
      if (!std::isfinite(loss))
        throw Error(ErrorKind::Diverged, "classifier loss became non-finite");
      ++adam_t;
      const double c1 = 1.0 / (1.0 - std::pow(0.9, static_cast<double>(adam_t)));
      const double c2 = 1.0 / (1.0 - std::pow(0.999, static_cast<double>(adam_t)));
      for (std::size_t p = 0; p < grads.size(); ++p) {
        m[p] = 0.9 * m[p] + 0.1 * grads[p];
        v[p] = 0.999 * v[p] + 0.001 * grads[p].cwiseAbs2();
        clf.tensors()[p].value.array() -= config.lr * (m[p].array() * c1) / ((v[p].array() * c2).sqrt() + 1e-8);
      }
    }
  }
  for (auto& t : clf.tensors())
    t.value = t.value.cast<float>().cast<double>();

  const auto accuracy = [&](const auto& set) {
    if (set.empty())
      return 0.0;
    std::size_t ok = 0;
    for (const auto& [cloud, label] : set)
      ok += static_cast<std::size_t>(clf.predict(*cloud)) == label;
    return static_cast<double>(ok) / static_cast<double>(set.size());
  };
  result.train_accuracy = accuracy(train);
  result.test_accuracy = accuracy(test);
  return result;
}

} // namespace ptedit
