#pragma once

#include "ptedit/geometry.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace ptedit {

/// Contents of a PCB1 point-cloud file.
///
/// Layout (all integers and floats little-endian):
///   "PCB1" | u32 K | u8 d (=3) | u8 flags (bit0 labels, bit1 mask)
///   | K*d f32 row-major | [K u8 labels] | [K u8 mask bits]
struct PcbRecord {
  PointCloud cloud;
  std::optional<EditMask> mask;
};

void write_pcb(std::ostream& out, const PcbRecord& record);
PcbRecord read_pcb(std::istream& in);

void write_pcb_file(const std::filesystem::path& path, const PcbRecord& record);
PcbRecord read_pcb_file(const std::filesystem::path& path);

} // namespace ptedit
