#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcf/phantom.hpp"
#include "vcf/volume.hpp"

namespace vcf::seg {

/// Binary 3D mask with the volume's voxel ordering.
struct Mask3 {
  Dims dims;
  std::vector<std::uint8_t> data;

  bool at(int x, int y, int z) const {
    return data[(static_cast<std::size_t>(z) * dims.ny + y) * dims.nx + x] != 0;
  }
  std::size_t slice_count(int z) const;
};

/// Per axial slice: HU > -300, largest 8-connected component, holes filled.
/// Throws SegmentationError("body_mask") when every slice is empty.
Mask3 compute_body_mask(const Volume& v);

struct CordConfig {
  double bone_hu_threshold = 200.0;
  /// Canal voxels are below this value.
  double gap_hu = 100.0;
  int min_bone_run = 2;
  int min_gap = 2;
  /// Plausible canal cross-section, in pixels; rejects noise pockets inside bone.
  int min_canal_area = 12;
  double max_canal_area_fraction = 0.05;
  /// Scan columns are tried outward from the body midline up to this fraction
  /// of the body's lateral extent on either side.
  double search_fraction = 0.25;
  int smoothing_window = 9;
  double max_step = 2.0;
};

/// Spinal-cord position for each axial slice in [z_min, z_max].
struct CordLine {
  int z_min = 0;
  int z_max = -1;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<bool> detected;  ///< false where the value was interpolated

  int length() const { return z_max - z_min + 1; }
  double x_at(int z) const { return x[static_cast<std::size_t>(z - z_min)]; }
  double y_at(int z) const { return y[static_cast<std::size_t>(z - z_min)]; }
};

/// Canal centroid on one axial slice, if the posterior scan finds one.
struct CanalHit {
  bool found = false;
  double x = 0.0;
  double y = 0.0;
  int area = 0;
};
CanalHit find_canal(const Volume& v, const Mask3& body, int z, const CordConfig& config);

/// Throws SegmentationError("cord") when the canal is found on < 30% of the
/// slices that contain body, or the body is present on < 50% of slices.
CordLine locate_spinal_cord(const Volume& v, const Mask3& body, const CordConfig& config = {});
CordLine locate_spinal_cord(const Volume& v, const CordConfig& config = {});

/// Curved reformation along the cord: pixel(row, y) = HU at
/// (round(x_cord(z)), y, z) with z = z0 + row. Rows ascend in z.
struct SagittalImage {
  int z0 = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::int16_t> pixels;
  std::vector<int> source_x;     ///< per row
  std::vector<double> cord_y;    ///< per row

  std::int16_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * cols + col]; }
};

SagittalImage build_virtual_sagittal(const Volume& v, const CordLine& cord);

/// Bone column on the sagittal image. Bounds are inclusive pixel indices in y.
struct ColumnSegment {
  int rows = 0;
  int cols = 0;
  std::vector<double> anterior;
  std::vector<double> posterior;
  std::vector<bool> detected;
  std::vector<std::uint8_t> mask;  ///< rows x cols, detected rows only
  double average_width = 0.0;
  int first_row = 0;  ///< first and last detected rows
  int last_row = -1;

  int height() const { return last_row - first_row + 1; }
  double midline(double row) const;
  std::size_t row_width(int row) const;
};

/// Throws SegmentationError("column") when bone is found on < 30% of rows.
ColumnSegment segment_column(const SagittalImage& s, double bone_hu_threshold = 200.0);

struct PatchConfig {
  double side_factor = 1.25;
  double stride_factor = 0.5;
  double hu_lo = -100.0;
  double hu_hi = 1000.0;
  int size = 32;
};

inline constexpr std::uint8_t kUnlabeled = 255;

/// Window in volume voxel coordinates: rows z in [z_lo, z_hi], y in [y_lo, y_hi].
struct SourceRect {
  double z_lo = 0, z_hi = 0, y_lo = 0, y_hi = 0;
};

struct Patch {
  std::vector<float> pixels;  ///< size x size, row-major, row 0 is cranial
  SourceRect rect;
  std::uint8_t label = kUnlabeled;
};

/// Patches ordered cranial to caudal.
struct PatchSequence {
  std::string study_id;
  int size = 32;
  std::vector<Patch> patches;
};

/// Number of windows for a column of the given height; 0 if shorter than a window.
int patch_count(double column_height, double window, double stride);

/// Throws SegmentationError("patches") if the column is shorter than one window.
PatchSequence extract_patches(const SagittalImage& s, const ColumnSegment& col,
                              const PatchConfig& config = {});

/// Positive iff the window covers at least half the z extent of a fractured
/// vertebra's box; negative otherwise.
void label_patches(PatchSequence& seq, const phantom::GroundTruth& truth);

/// Sagittal image in a [-100, 1000] HU window, cranial rows first.
std::string sagittal_pgm(const SagittalImage& s);

/// Everything the segmentation stage produces for one volume.
struct SegmentationResult {
  Mask3 body;
  CordLine cord;
  SagittalImage sagittal;
  ColumnSegment column;
  PatchSequence patches;
};

struct SegmentationConfig {
  CordConfig cord;
  PatchConfig patch;
};

SegmentationResult segment_volume(const Volume& v, const SegmentationConfig& config = {});

/// In-plane distance (voxels) between the estimated cord and the true cord,
/// over the slices both cover.
struct CordDeviation {
  double mean = 0.0;
  double max = 0.0;
  int compared = 0;
};
CordDeviation cord_deviation(const CordLine& cord, const phantom::GroundTruth& truth);

/// True when some patch's source rectangle contains the vertebra centre (z, y).
bool vertebra_covered(const PatchSequence& seq, const phantom::VertebraTruth& vertebra);

}  // namespace vcf::seg
