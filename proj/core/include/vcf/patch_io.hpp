#pragma once

#include <filesystem>
#include <string>

#include "vcf/segmentation.hpp"

namespace vcf {

/// Binary patch file, little-endian:
///   "VCFP", u16 version = 1, u32 n_patches, u16 h, u16 w,
///   then n records of [h*w float32 row-major, u8 label (0/1/255), 3 zero bytes].
/// Source rectangles are not stored.
std::string encode_patches(const seg::PatchSequence& seq);
seg::PatchSequence decode_patches(const std::string& bytes);

/// The study id is the file stem (`S0001.vcfp` -> `S0001`).
void write_patch_file(const std::filesystem::path& path, const seg::PatchSequence& seq);
seg::PatchSequence read_patch_file(const std::filesystem::path& path);

}  // namespace vcf
