#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vcf {

inline constexpr int kMinHu = -1024;
inline constexpr int kMaxHu = 3071;
inline constexpr int kMinDim = 8;

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Millimetres per voxel along x, y, z.
using Spacing = std::array<double, 3>;

/// A CT-like scan in Hounsfield units.
///
/// Axis convention is fixed: x runs subject left to right, y runs anterior to
/// posterior (larger y is the subject's back), z runs caudal to cranial.
/// Voxels are stored x fastest, then y, then z.
class Volume {
 public:
  Volume() = default;
  Volume(Dims dims, Spacing spacing, std::int16_t fill = -1000);
  Volume(Dims dims, Spacing spacing, std::vector<std::int16_t> voxels);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  const std::vector<std::int16_t>& voxels() const { return voxels_; }
  std::vector<std::int16_t>& voxels() { return voxels_; }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims_.ny + y) * dims_.nx + x;
  }
  std::int16_t at(int x, int y, int z) const { return voxels_[index(x, y, z)]; }
  std::int16_t& at(int x, int y, int z) { return voxels_[index(x, y, z)]; }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_.nx && y < dims_.ny && z < dims_.nz;
  }

  /// Throws std::invalid_argument if dims, spacing or any HU value is out of range.
  void validate() const;

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<std::int16_t> voxels_;
};

enum class Plane { Axial, Coronal, Sagittal };

/// A 2D copy of one plane of a volume.
///
/// Axial (z fixed): rows = y, cols = x. Coronal (y fixed): rows = z, cols = x.
/// Sagittal (x fixed): rows = z, cols = y. Row and column indices ascend with
/// the underlying voxel index.
struct SliceView {
  Plane plane = Plane::Axial;
  int index = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::int16_t> pixels;

  std::int16_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * cols + col]; }
};

SliceView slice(const Volume& v, Plane plane, int index);

/// Path helpers: `base` may be given with or without the `.vvol.json` suffix.
std::filesystem::path volume_header_path(const std::filesystem::path& base);
std::filesystem::path volume_raw_path(const std::filesystem::path& base);

Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& v, const std::filesystem::path& path);

/// Writes `bytes` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace vcf
