#include "vcf/patch_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "vcf/error.hpp"
#include "vcf/volume.hpp"

namespace vcf {

namespace {

constexpr char kMagic[4] = {'V', 'C', 'F', 'P'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u(int width) {
    need(static_cast<std::size_t>(width));
    std::uint32_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("truncated patch file");
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { need(n); pos_ += n; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_patches(const seg::PatchSequence& seq) {
  const auto side = static_cast<std::uint16_t>(seq.size);
  const std::size_t per = static_cast<std::size_t>(side) * side;
  std::string out(kMagic, 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(seq.patches.size()));
  put_u16(out, side);
  put_u16(out, side);
  out.reserve(out.size() + seq.patches.size() * (per * 4 + 4));
  for (const auto& p : seq.patches) {
    if (p.pixels.size() != per) throw std::invalid_argument("patch pixel count does not match patch size");
    for (float f : p.pixels) put_u32(out, std::bit_cast<std::uint32_t>(f));
    out.push_back(static_cast<char>(p.label));
    out.append(3, '\0');
  }
  return out;
}

seg::PatchSequence decode_patches(const std::string& bytes) {
  Reader in(bytes);
  in.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not a patch file (bad magic)");
  in.skip(4);
  if (in.u(2) != kVersion) throw IoError("unsupported patch file version");
  const std::uint32_t n = in.u(4);
  const std::uint32_t h = in.u(2);
  const std::uint32_t w = in.u(2);
  if (h != w || h == 0) throw IoError("patch file requires square patches");
  const std::size_t per = static_cast<std::size_t>(h) * w;
  if (bytes.size() != in.pos() + n * (per * 4 + 4)) throw IoError("patch file size does not match header");

  seg::PatchSequence seq;
  seq.size = static_cast<int>(h);
  seq.patches.resize(n);
  for (auto& p : seq.patches) {
    p.pixels.resize(per);
    for (auto& f : p.pixels) f = std::bit_cast<float>(in.u(4));
    p.label = static_cast<std::uint8_t>(in.u(1));
    if (p.label != 0 && p.label != 1 && p.label != seg::kUnlabeled) throw IoError("invalid patch label");
    in.skip(3);
  }
  return seq;
}

void write_patch_file(const std::filesystem::path& path, const seg::PatchSequence& seq) {
  write_file_atomic(path, encode_patches(seq));
}

seg::PatchSequence read_patch_file(const std::filesystem::path& path) {
  auto seq = decode_patches(read_file(path));
  seq.study_id = path.stem().string();
  return seq;
}

}  // namespace vcf
