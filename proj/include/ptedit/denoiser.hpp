#pragma once

#include "ptedit/geometry.hpp"
#include "ptedit/prompts.hpp"
#include "ptedit/tensor_io.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ptedit {

/// Condition of one denoiser call: the (possibly masked) cloud plus a prompt.
struct GuidanceCondition {
  ConditionedCloud cloud;
  TokenIds prompt = kNullPrompt;

  /// Reconstruction regime: full cloud, zero flags, null prompt.
  static GuidanceCondition reconstruction(const PointCloud& x);
  /// Inpainting regime: x_M with flags plus the prompt.
  static GuidanceCondition inpainting(const PointCloud& x, const EditMask& mask, const TokenIds& prompt);
  bool is_reconstruction() const;
};

struct DenoiserConfig {
  std::size_t vocab = 0;
  std::size_t embed = 64;
  std::size_t blocks = 4;
  std::size_t heads = 4;

  /// |V|E + E^2 + 21E + 3 + B(8E^2 + 11E); independent of the head count.
  std::size_t parameter_count() const;
  bool operator==(const DenoiserConfig&) const = default;
};

/// ε-predictor. Noisy-cloud tokens run through pre-norm blocks of attention over
/// [noisy; condition cloud; prompt; time] followed by a GELU feedforward. The
/// context tokens are not updated between blocks. Token i of the noisy cloud also
/// receives a projection of condition point i, which ties output indices to input
/// indices.
template <typename S>
class DenoiserT {
public:
  struct Tape;

  explicit DenoiserT(const DenoiserConfig& config); // all parameters zero
  static DenoiserT initialized(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  std::vector<Tensor<S>>& tensors() { return tensors_; }
  const std::vector<Tensor<S>>& tensors() const { return tensors_; }
  std::size_t parameter_count() const;
  bool all_finite() const;

  /// K x 3 noise estimate. Throws ShapeMismatch when the condition does not match x_t.
  Matrix<S> forward(const Matrix<S>& x_t, int t, const GuidanceCondition& cond) const;
  Matrix<S> forward(const Matrix<S>& x_t, int t, const GuidanceCondition& cond, Tape& tape) const;
  /// Accumulates d(loss)/d(params) into `grads` (same layout as tensors()).
  void backward(const Tape& tape, const Matrix<S>& d_out, std::vector<Matrix<S>>& grads) const;

  std::vector<Matrix<S>> zero_grads() const;

  template <typename T>
  DenoiserT<T> cast() const
  {
    DenoiserT<T> out(config_);
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      out.tensors()[i].value = tensors_[i].value.template cast<T>();
    return out;
  }

private:
  DenoiserConfig config_;
  std::vector<Tensor<S>> tensors_;
};

using Denoiser = DenoiserT<float>;

/// Convenience wrapper over Denoiser::forward in double coordinates.
Points predict_noise(const Denoiser& den, const Points& x_t, int t, const GuidanceCondition& cond);

/// BPM1 checkpoint: tensors as float32 plus the training step counter.
struct Checkpoint {
  Denoiser model;
  std::uint64_t step = 0;
};
void write_checkpoint(std::ostream& out, const Denoiser& den, std::uint64_t step);
void write_checkpoint(const std::filesystem::path& path, const Denoiser& den, std::uint64_t step);
/// Throws BadFormat on malformed data and CheckpointMismatch when the tensor
/// names or shapes do not describe a model of the builtin vocabulary.
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

extern template class DenoiserT<float>;
extern template class DenoiserT<double>;

} // namespace ptedit
