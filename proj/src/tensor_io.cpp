#include "ptedit/tensor_io.hpp"

#include "ptedit/binary_io.hpp"
#include "ptedit/error.hpp"

#include <fstream>

namespace ptedit {

void
write_tensor_file(std::ostream& out, const TensorFile& file)
{
  out.write("BPM1", 4);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    binio::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    binio::write_le<std::uint8_t>(out, 2);
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rows()));
    binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i)
      binio::write_f32(out, t.value.data()[i]);
  }
  binio::write_le<std::uint64_t>(out, file.step);
  if (!out)
    throw Error(ErrorKind::IoError, "failed to write tensor file");
}

void
write_tensor_file(const std::filesystem::path& path, const TensorFile& file)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  write_tensor_file(out, file);
}

TensorFile
read_tensor_file(std::istream& in)
{
  binio::expect_magic(in, "BPM1");
  TensorFile file;
  const auto count = binio::read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binio::read_le<std::uint16_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in)
      throw Error(ErrorKind::BadFormat, "truncated tensor name");
    const auto rank = binio::read_le<std::uint8_t>(in);
    if (rank < 1 || rank > 2)
      throw Error(ErrorKind::BadFormat, "tensor " + name + " has unsupported rank");
    std::uint32_t rows = 1, cols = binio::read_le<std::uint32_t>(in);
    if (rank == 2) {
      rows = cols;
      cols = binio::read_le<std::uint32_t>(in);
    }
    if (static_cast<std::uint64_t>(rows) * cols > (std::uint64_t{ 1 } << 28))
      throw Error(ErrorKind::BadFormat, "tensor " + name + " is implausibly large");
    Matrix<float> v(rows, cols);
    for (Eigen::Index j = 0; j < v.size(); ++j)
      v.data()[j] = binio::read_f32(in);
    file.tensors.push_back({ std::move(name), std::move(v) });
  }
  file.step = binio::read_le<std::uint64_t>(in);
  return file;
}

TensorFile
read_tensor_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return read_tensor_file(in);
}

} // namespace ptedit
