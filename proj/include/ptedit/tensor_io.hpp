#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ptedit {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
struct Tensor {
  std::string name;
  Matrix<S> value;
};

/// Contents of a BPM1 file: named float32 tensors and a trailing step counter.
struct TensorFile {
  std::vector<Tensor<float>> tensors;
  std::uint64_t step = 0;
};

/// Layout: "BPM1", u32 count, per tensor (u16 name length, name, u8 rank,
/// u32 dims, little-endian float32 data), u64 step. Matrices are written with rank 2.
void write_tensor_file(std::ostream& out, const TensorFile& file);
void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
/// Throws BadFormat on malformed input; rank-1 tensors load as row vectors.
TensorFile read_tensor_file(std::istream& in);
TensorFile read_tensor_file(const std::filesystem::path& path);

} // namespace ptedit
