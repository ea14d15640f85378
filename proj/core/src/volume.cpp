#include "vcf/volume.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "vcf/error.hpp"

namespace vcf {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kHeaderSuffix = ".vvol.json";
constexpr std::string_view kRawSuffix = ".vvol.raw";

fs::path strip_suffix(const fs::path& p) {
  std::string s = p.string();
  for (auto suffix : {kHeaderSuffix, kRawSuffix}) {
    if (s.size() > suffix.size() && s.ends_with(suffix)) {
      s.resize(s.size() - suffix.size());
      break;
    }
  }
  return s;
}

void check_geometry(const Dims& d, const Spacing& s) {
  if (d.nx < kMinDim || d.ny < kMinDim || d.nz < kMinDim)
    throw std::invalid_argument("volume dims must all be >= 8");
  for (double v : s)
    if (!(v > 0.0)) throw std::invalid_argument("volume spacing must be positive");
}

}  // namespace

Volume::Volume(Dims dims, Spacing spacing, std::int16_t fill)
    : dims_(dims), spacing_(spacing), voxels_(dims.voxel_count(), fill) {}

Volume::Volume(Dims dims, Spacing spacing, std::vector<std::int16_t> voxels)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  if (voxels_.size() != dims_.voxel_count())
    throw std::invalid_argument("voxel count does not match dims");
}

void Volume::validate() const {
  check_geometry(dims_, spacing_);
  if (voxels_.size() != dims_.voxel_count())
    throw std::invalid_argument("voxel count does not match dims");
  const auto [lo, hi] = std::minmax_element(voxels_.begin(), voxels_.end());
  if (*lo < kMinHu || *hi > kMaxHu)
    throw std::invalid_argument("HU value outside [-1024, 3071]: " +
                                std::to_string(*lo < kMinHu ? *lo : *hi));
}

SliceView slice(const Volume& v, Plane plane, int index) {
  const Dims& d = v.dims();
  SliceView s;
  s.plane = plane;
  s.index = index;
  int extent = 0;
  switch (plane) {
    case Plane::Axial: extent = d.nz; s.rows = d.ny; s.cols = d.nx; break;
    case Plane::Coronal: extent = d.ny; s.rows = d.nz; s.cols = d.nx; break;
    case Plane::Sagittal: extent = d.nx; s.rows = d.nz; s.cols = d.ny; break;
  }
  if (index < 0 || index >= extent) throw std::out_of_range("slice index out of range");
  s.pixels.resize(static_cast<std::size_t>(s.rows) * s.cols);
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      std::int16_t hu = 0;
      switch (plane) {
        case Plane::Axial: hu = v.at(c, r, index); break;
        case Plane::Coronal: hu = v.at(c, index, r); break;
        case Plane::Sagittal: hu = v.at(index, c, r); break;
      }
      s.pixels[static_cast<std::size_t>(r) * s.cols + c] = hu;
    }
  }
  return s;
}

fs::path volume_header_path(const fs::path& base) {
  return strip_suffix(base).string() + std::string(kHeaderSuffix);
}
fs::path volume_raw_path(const fs::path& base) {
  return strip_suffix(base).string() + std::string(kRawSuffix);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into " + path.string() + ": " + ec.message());
}

Volume load_volume(const fs::path& path) {
  const fs::path header_path = volume_header_path(path);
  const fs::path raw_path = volume_raw_path(path);
  if (!fs::exists(header_path)) throw IoError("missing volume header " + header_path.string());
  if (!fs::exists(raw_path)) throw IoError("missing volume raw file " + raw_path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_file(header_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed volume header " + header_path.string() + ": " + e.what());
  }
  Dims dims;
  Spacing spacing{};
  try {
    if (header.at("version").get<int>() != 1) throw IoError("unsupported volume version");
    if (header.at("dtype").get<std::string>() != "int16le") throw IoError("unsupported dtype");
    if (header.at("order").get<std::string>() != "x-fastest") throw IoError("unsupported order");
    const auto& jd = header.at("dims");
    const auto& js = header.at("spacing_mm");
    if (jd.size() != 3 || js.size() != 3) throw IoError("dims and spacing_mm need 3 entries");
    dims = {jd[0].get<int>(), jd[1].get<int>(), jd[2].get<int>()};
    spacing = {js[0].get<double>(), js[1].get<double>(), js[2].get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid volume header " + header_path.string() + ": " + e.what());
  }
  try {
    check_geometry(dims, spacing);
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("invalid volume header: ") + e.what());
  }

  const std::string raw = read_file(raw_path);
  const std::size_t expected = dims.voxel_count() * 2;
  if (raw.size() != expected)
    throw IoError("raw size mismatch: header implies " + std::to_string(expected) +
                  " bytes, file has " + std::to_string(raw.size()));

  std::vector<std::int16_t> voxels(dims.voxel_count());
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    const auto u = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    voxels[i] = std::bit_cast<std::int16_t>(u);
  }
  Volume v(dims, spacing, std::move(voxels));
  try {
    v.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("invalid volume contents: ") + e.what());
  }
  return v;
}

void save_volume(const Volume& v, const fs::path& path) {
  v.validate();
  const Dims& d = v.dims();
  const Spacing& s = v.spacing();
  nlohmann::ordered_json header;
  header["version"] = 1;
  header["dims"] = {d.nx, d.ny, d.nz};
  header["spacing_mm"] = {s[0], s[1], s[2]};
  header["dtype"] = "int16le";
  header["order"] = "x-fastest";

  std::string raw(v.voxels().size() * 2, '\0');
  for (std::size_t i = 0; i < v.voxels().size(); ++i) {
    const auto u = std::bit_cast<std::uint16_t>(v.voxels()[i]);
    raw[2 * i] = static_cast<char>(u & 0xFF);
    raw[2 * i + 1] = static_cast<char>(u >> 8);
  }
  const fs::path header_path = volume_header_path(path);
  if (header_path.has_parent_path() && !fs::exists(header_path.parent_path()))
    throw IoError("output directory does not exist: " + header_path.parent_path().string());
  write_file_atomic(volume_raw_path(path), raw);
  write_file_atomic(header_path, header.dump() + "\n");
}

}  // namespace vcf
