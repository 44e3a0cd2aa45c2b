#include "ptedit/pcb.hpp"

#include "ptedit/binary_io.hpp"
#include "ptedit/error.hpp"

#include <cmath>
#include <fstream>

namespace ptedit {

namespace {

constexpr std::uint8_t kHasLabels = 0x1;
constexpr std::uint8_t kHasMask = 0x2;

} // namespace

void
write_pcb(std::ostream& out, const PcbRecord& record)
{
  const auto& cloud = record.cloud;
  const auto k = cloud.size();
  if (cloud.has_labels() && cloud.labels.size() != k)
    throw Error(ErrorKind::LengthMismatch, "label count does not match point count");
  if (record.mask && record.mask->size() != k)
    throw Error(ErrorKind::LengthMismatch, "mask length does not match point count");

  std::uint8_t flags = 0;
  if (cloud.has_labels())
    flags |= kHasLabels;
  if (record.mask)
    flags |= kHasMask;

  out.write("PCB1", 4);
  binio::write_le(out, static_cast<std::uint32_t>(k));
  binio::write_le(out, static_cast<std::uint8_t>(3));
  binio::write_le(out, flags);
  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i)
    for (int c = 0; c < 3; ++c)
      binio::write_f32(out, static_cast<float>(cloud.points(i, c)));
  if (cloud.has_labels())
    out.write(reinterpret_cast<const char*>(cloud.labels.data()), static_cast<std::streamsize>(k));
  if (record.mask)
    for (auto b : record.mask->bits)
      binio::write_le(out, static_cast<std::uint8_t>(b ? 1 : 0));
  if (!out)
    throw Error(ErrorKind::IoError, "failed writing PCB1 stream");
}

PcbRecord
read_pcb(std::istream& in)
{
  binio::expect_magic(in, "PCB1");
  const auto k = binio::read_le<std::uint32_t>(in);
  const auto d = binio::read_le<std::uint8_t>(in);
  const auto flags = binio::read_le<std::uint8_t>(in);
  if (d != 3)
    throw Error(ErrorKind::BadFormat, "only d = 3 is supported");
  if ((flags & ~(kHasLabels | kHasMask)) != 0)
    throw Error(ErrorKind::BadFormat, "unknown PCB1 flag bits");

  PcbRecord record;
  record.cloud.points.resize(k, 3);
  for (std::uint32_t i = 0; i < k; ++i)
    for (int c = 0; c < 3; ++c) {
      const float v = binio::read_f32(in);
      if (!std::isfinite(v))
        throw Error(ErrorKind::BadFormat, "non-finite coordinate");
      record.cloud.points(i, c) = v;
    }
  if (flags & kHasLabels) {
    record.cloud.labels.resize(k);
    in.read(reinterpret_cast<char*>(record.cloud.labels.data()), k);
    if (!in)
      throw Error(ErrorKind::BadFormat, "truncated label block");
  }
  if (flags & kHasMask) {
    EditMask mask;
    mask.bits.resize(k);
    for (std::uint32_t i = 0; i < k; ++i) {
      const auto b = binio::read_le<std::uint8_t>(in);
      if (b > 1)
        throw Error(ErrorKind::BadFormat, "mask bytes must be 0 or 1");
      mask.bits[i] = b;
    }
    record.mask = std::move(mask);
  }
  return record;
}

void
write_pcb_file(const std::filesystem::path& path, const PcbRecord& record)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  write_pcb(out, record);
}

PcbRecord
read_pcb_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return read_pcb(in);
}

} // namespace ptedit
