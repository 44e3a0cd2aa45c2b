#pragma once

#include "ptedit/schema.hpp"
#include "ptedit/synthgen.hpp"
#include "ptedit/tensor_io.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace ptedit {

/// Pointwise MLP 3 -> H -> H (ReLU), max-pool over points, linear head H -> C.
/// The pooled H-vector is the feature used by FPD and directional similarity.
class PointClassifier {
public:
  static constexpr std::size_t kHidden = 64;
  static constexpr std::size_t kClasses = kNumCategories;
  using Feature = Eigen::Matrix<double, 1, Eigen::Dynamic>;

  PointClassifier(); // zero parameters
  static PointClassifier initialized(std::uint64_t seed);

  Feature features(const Points& cloud) const;
  std::array<double, kClasses> probabilities(const Points& cloud) const;
  Category predict(const Points& cloud) const;

  std::vector<Tensor<double>>& tensors() { return tensors_; }
  const std::vector<Tensor<double>>& tensors() const { return tensors_; }

  void save(const std::filesystem::path& path) const;
  /// Throws CheckpointMismatch when the file is not a classifier of this shape.
  static PointClassifier load(const std::filesystem::path& path);

  struct Tape;
  std::array<double, kClasses> forward(const Points& cloud, Tape& tape) const;
  /// Adds d(loss)/d(params) given d(loss)/d(logits).
  void backward(const Tape& tape, const std::array<double, kClasses>& d_logits,
                std::vector<Matrix<double>>& grads) const;

private:
  std::vector<Tensor<double>> tensors_;
};

struct ClassifierTrainConfig {
  std::size_t epochs = 8;
  std::size_t batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct ClassifierTrainResult {
  PointClassifier model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Trains on source and target clouds of the train split and reports accuracy on
/// the test-split sources. Parameters are rounded to float32 so a saved and
/// reloaded classifier is identical to the returned one. Throws InvalidParams
/// when fewer than two categories occur and Diverged on non-finite loss.
ClassifierTrainResult train_classifier(const std::vector<EditTriplet>& data, const ClassifierTrainConfig& config);

} // namespace ptedit
