#include "vcf/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "vcf/error.hpp"
#include "vcf/image_io.hpp"

namespace vcf::seg {

namespace {

constexpr double kBodyHu = -300.0;

/// Marks pixels not reachable from the seed border through background
/// (4-connectivity) as foreground. `from_rows` also seeds the first and last row.
void fill_holes_2d(std::vector<std::uint8_t>& img, int rows, int cols, bool from_rows) {
  std::vector<std::uint8_t> outside(img.size(), 0);
  std::vector<int> stack;
  auto push = [&](int r, int c) {
    const auto i = static_cast<std::size_t>(r) * cols + c;
    if (!img[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back(static_cast<int>(i));
    }
  };
  for (int r = 0; r < rows; ++r) {
    push(r, 0);
    push(r, cols - 1);
  }
  if (from_rows) {
    for (int c = 0; c < cols; ++c) {
      push(0, c);
      push(rows - 1, c);
    }
  }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const int r = i / cols;
    const int c = i % cols;
    if (r > 0) push(r - 1, c);
    if (r + 1 < rows) push(r + 1, c);
    if (c > 0) push(r, c - 1);
    if (c + 1 < cols) push(r, c + 1);
  }
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = outside[i] ? 0 : 1;
}

/// Keeps only the largest 8-connected component; ties keep the first found in
/// raster order.
void keep_largest_component(std::vector<std::uint8_t>& img, int rows, int cols) {
  std::vector<int> label(img.size(), 0);
  std::vector<int> stack;
  int best_label = 0;
  std::size_t best_size = 0;
  int next = 0;
  for (std::size_t start = 0; start < img.size(); ++start) {
    if (!img[start] || label[start]) continue;
    ++next;
    std::size_t size = 0;
    label[start] = next;
    stack.push_back(static_cast<int>(start));
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      ++size;
      const int r = i / cols;
      const int c = i % cols;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
          const auto j = static_cast<std::size_t>(rr) * cols + cc;
          if (img[j] && !label[j]) {
            label[j] = next;
            stack.push_back(static_cast<int>(j));
          }
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best_label = next;
    }
  }
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = (label[i] == best_label && best_label) ? 1 : 0;
}

/// Linear interpolation over undetected entries; ends copy the nearest
/// detected value.
void interpolate_gaps(std::vector<double>& values, const std::vector<bool>& detected) {
  const int n = static_cast<int>(values.size());
  int prev = -1;
  for (int i = 0; i < n; ++i) {
    if (!detected[i]) continue;
    if (prev < 0) {
      for (int k = 0; k < i; ++k) values[k] = values[i];
    } else {
      for (int k = prev + 1; k < i; ++k) {
        const double t = static_cast<double>(k - prev) / (i - prev);
        values[k] = (1.0 - t) * values[prev] + t * values[i];
      }
    }
    prev = i;
  }
  if (prev >= 0)
    for (int k = prev + 1; k < n; ++k) values[k] = values[prev];
}

std::vector<double> moving_average(const std::vector<double>& v, int window) {
  const int n = static_cast<int>(v.size());
  const int half = window / 2;
  std::vector<double> out(v.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double sum = 0.0;
    for (int k = lo; k <= hi; ++k) sum += v[k];
    out[i] = sum / (hi - lo + 1);
  }
  return out;
}

void limit_steps(std::vector<double>& v, double max_step) {
  for (std::size_t i = 1; i < v.size(); ++i)
    v[i] = std::clamp(v[i], v[i - 1] - max_step, v[i - 1] + max_step);
}

double bilinear(const SagittalImage& s, double row, double col) {
  row = std::clamp(row, 0.0, static_cast<double>(s.rows - 1));
  col = std::clamp(col, 0.0, static_cast<double>(s.cols - 1));
  const int r0 = static_cast<int>(std::floor(row));
  const int c0 = static_cast<int>(std::floor(col));
  const int r1 = std::min(r0 + 1, s.rows - 1);
  const int c1 = std::min(c0 + 1, s.cols - 1);
  const double fr = row - r0;
  const double fc = col - c0;
  const double top = (1.0 - fc) * s.at(r0, c0) + fc * s.at(r0, c1);
  const double bottom = (1.0 - fc) * s.at(r1, c0) + fc * s.at(r1, c1);
  return (1.0 - fr) * top + fr * bottom;
}

}  // namespace

std::size_t Mask3::slice_count(int z) const {
  const auto plane = static_cast<std::size_t>(dims.nx) * dims.ny;
  const auto begin = data.begin() + static_cast<std::ptrdiff_t>(plane * z);
  return static_cast<std::size_t>(std::count(begin, begin + static_cast<std::ptrdiff_t>(plane), 1));
}

Mask3 compute_body_mask(const Volume& v) {
  const Dims& d = v.dims();
  Mask3 mask{d, std::vector<std::uint8_t>(d.voxel_count(), 0)};
  const auto plane = static_cast<std::size_t>(d.nx) * d.ny;
  std::vector<std::uint8_t> img(plane);
  bool any = false;
  for (int z = 0; z < d.nz; ++z) {
    const std::size_t offset = plane * z;
    for (std::size_t i = 0; i < plane; ++i) img[i] = v.voxels()[offset + i] > kBodyHu ? 1 : 0;
    if (std::find(img.begin(), img.end(), 1) == img.end()) continue;
    keep_largest_component(img, d.ny, d.nx);
    fill_holes_2d(img, d.ny, d.nx, true);
    std::copy(img.begin(), img.end(), mask.data.begin() + static_cast<std::ptrdiff_t>(offset));
    any = true;
  }
  if (!any) throw SegmentationError("body_mask", "no body found");
  return mask;
}

CanalHit find_canal(const Volume& v, const Mask3& body, int z, const CordConfig& cfg) {
  const Dims& d = v.dims();
  int xmin = d.nx;
  int xmax = -1;
  int area = 0;
  for (int y = 0; y < d.ny; ++y) {
    for (int x = 0; x < d.nx; ++x) {
      if (body.at(x, y, z)) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ++area;
      }
    }
  }
  if (xmax < 0) return {};

  const int mid = (xmin + xmax) / 2;
  const int reach = std::max(1, static_cast<int>(std::lround(cfg.search_fraction * (xmax - xmin))));
  const int max_area = std::max(cfg.min_canal_area, static_cast<int>(cfg.max_canal_area_fraction * area));
  auto hu = [&](int x, int y) { return static_cast<double>(v.at(x, y, z)); };
  auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < d.nx && y < d.ny && body.at(x, y, z); };

  // Returns the seed y of a canal candidate on column x, or -1.
  auto scan_column = [&](int x) -> int {
    int y = -1;
    for (int yy = d.ny - 1; yy >= 0; --yy) {
      if (body.at(x, yy, z)) {
        y = yy;
        break;
      }
    }
    if (y < 0) return -1;
    // posterior arch: first run of bone long enough
    for (;;) {
      while (y >= 0 && inside(x, y) && hu(x, y) < cfg.bone_hu_threshold) --y;
      if (y < 0 || !inside(x, y)) return -1;
      int run = 0;
      while (y >= 0 && inside(x, y) && hu(x, y) >= cfg.bone_hu_threshold) {
        ++run;
        --y;
      }
      if (run >= cfg.min_bone_run) break;
    }
    // canal: first sub-bone gap wide enough and closed anteriorly by bone
    for (;;) {
      while (y >= 0 && inside(x, y) && hu(x, y) >= cfg.gap_hu) --y;
      if (y < 0 || !inside(x, y)) return -1;
      const int gap_start = y;
      while (y >= 0 && inside(x, y) && hu(x, y) < cfg.gap_hu) --y;
      if (y < 0 || !inside(x, y)) return -1;
      const int gap = gap_start - y;
      if (gap < cfg.min_gap) continue;
      for (int k = 0; k < 3 && y - k >= 0 && inside(x, y - k); ++k)
        if (hu(x, y - k) >= cfg.bone_hu_threshold) return (gap_start + y + 1) / 2;
      return -1;
    }
  };

  std::vector<std::uint8_t> visited(static_cast<std::size_t>(d.nx) * d.ny, 0);
  std::vector<std::pair<int, int>> stack;
  auto grow = [&](int sx, int sy) -> CanalHit {
    std::fill(visited.begin(), visited.end(), 0);
    stack.clear();
    stack.emplace_back(sx, sy);
    visited[static_cast<std::size_t>(sy) * d.nx + sx] = 1;
    long sum_x = 0;
    long sum_y = 0;
    int count = 0;
    while (!stack.empty()) {
      const auto [x, y] = stack.back();
      stack.pop_back();
      ++count;
      sum_x += x;
      sum_y += y;
      if (count > max_area) return {};
      constexpr std::array<std::pair<int, int>, 4> steps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
      for (const auto& [dx, dy] : steps) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (!inside(nx, ny)) return {};  // leaks to the body surface
        auto& seen = visited[static_cast<std::size_t>(ny) * d.nx + nx];
        if (seen || hu(nx, ny) >= cfg.gap_hu) continue;
        seen = 1;
        stack.emplace_back(nx, ny);
      }
    }
    if (count < cfg.min_canal_area) return {};
    return {true, static_cast<double>(sum_x) / count, static_cast<double>(sum_y) / count, count};
  };

  for (int k = 0; k <= reach; ++k) {
    for (int sign : {-1, 1}) {
      if (k == 0 && sign > 0) continue;
      const int x = mid + sign * k;
      if (x < 0 || x >= d.nx) continue;
      const int seed_y = scan_column(x);
      if (seed_y < 0) continue;
      const CanalHit hit = grow(x, seed_y);
      if (hit.found) return hit;
    }
  }
  return {};
}

CordLine locate_spinal_cord(const Volume& v, const Mask3& body, const CordConfig& cfg) {
  const int nz = v.dims().nz;
  int body_slices = 0;
  for (int z = 0; z < nz; ++z)
    if (body.slice_count(z) > 0) ++body_slices;
  if (2 * body_slices < nz)
    throw SegmentationError("cord", "cord localization failed: body present on fewer than half the slices");

  std::vector<CanalHit> hits(static_cast<std::size_t>(nz));
  int found = 0;
  int z_min = nz;
  int z_max = -1;
  for (int z = 0; z < nz; ++z) {
    hits[z] = find_canal(v, body, z, cfg);
    if (hits[z].found) {
      ++found;
      z_min = std::min(z_min, z);
      z_max = std::max(z_max, z);
    }
  }
  if (found == 0 || static_cast<double>(found) < 0.3 * body_slices)
    throw SegmentationError("cord", "cord localization failed: canal found on " + std::to_string(found) +
                                        " of " + std::to_string(body_slices) + " slices");

  CordLine cord;
  cord.z_min = z_min;
  cord.z_max = z_max;
  for (int z = z_min; z <= z_max; ++z) {
    cord.x.push_back(hits[z].x);
    cord.y.push_back(hits[z].y);
    cord.detected.push_back(hits[z].found);
  }
  interpolate_gaps(cord.x, cord.detected);
  interpolate_gaps(cord.y, cord.detected);
  cord.x = moving_average(cord.x, cfg.smoothing_window);
  cord.y = moving_average(cord.y, cfg.smoothing_window);
  limit_steps(cord.x, cfg.max_step);
  limit_steps(cord.y, cfg.max_step);
  return cord;
}

CordLine locate_spinal_cord(const Volume& v, const CordConfig& cfg) {
  return locate_spinal_cord(v, compute_body_mask(v), cfg);
}

SagittalImage build_virtual_sagittal(const Volume& v, const CordLine& cord) {
  const Dims& d = v.dims();
  if (cord.length() <= 0 || cord.z_min < 0 || cord.z_max >= d.nz)
    throw std::invalid_argument("cord line range outside the volume");
  SagittalImage s;
  s.z0 = cord.z_min;
  s.rows = cord.length();
  s.cols = d.ny;
  s.pixels.resize(static_cast<std::size_t>(s.rows) * s.cols);
  for (int r = 0; r < s.rows; ++r) {
    const int z = cord.z_min + r;
    const int x = std::clamp(static_cast<int>(std::lround(cord.x_at(z))), 0, d.nx - 1);
    s.source_x.push_back(x);
    s.cord_y.push_back(cord.y_at(z));
    for (int y = 0; y < d.ny; ++y) s.pixels[static_cast<std::size_t>(r) * s.cols + y] = v.at(x, y, z);
  }
  return s;
}

double ColumnSegment::midline(double row) const {
  row = std::clamp(row, 0.0, static_cast<double>(rows - 1));
  const int r0 = static_cast<int>(std::floor(row));
  const int r1 = std::min(r0 + 1, rows - 1);
  const double t = row - r0;
  const double m0 = 0.5 * (anterior[r0] + posterior[r0]);
  const double m1 = 0.5 * (anterior[r1] + posterior[r1]);
  return (1.0 - t) * m0 + t * m1;
}

std::size_t ColumnSegment::row_width(int row) const {
  const auto begin = mask.begin() + static_cast<std::ptrdiff_t>(row) * cols;
  return static_cast<std::size_t>(std::count(begin, begin + cols, 1));
}

ColumnSegment segment_column(const SagittalImage& s, double bone_hu_threshold) {
  std::vector<std::uint8_t> bone(s.pixels.size());
  for (std::size_t i = 0; i < bone.size(); ++i) bone[i] = s.pixels[i] >= bone_hu_threshold ? 1 : 0;
  // vertebral bodies are cortical boxes around sub-threshold trabecular bone;
  // rows are not seeded so bodies cut by the first and last row still fill
  fill_holes_2d(bone, s.rows, s.cols, false);

  ColumnSegment col;
  col.rows = s.rows;
  col.cols = s.cols;
  col.anterior.assign(static_cast<std::size_t>(s.rows), 0.0);
  col.posterior.assign(static_cast<std::size_t>(s.rows), 0.0);
  col.detected.assign(static_cast<std::size_t>(s.rows), false);
  col.mask.assign(bone.size(), 0);

  int detected = 0;
  double width_sum = 0.0;
  for (int r = 0; r < s.rows; ++r) {
    const auto* row = &bone[static_cast<std::size_t>(r) * s.cols];
    const int cy = std::clamp(static_cast<int>(std::lround(s.cord_y[r])), 0, s.cols - 1);
    int best_start = -1;
    int best_end = -1;
    for (int y = 0; y < s.cols;) {
      if (!row[y]) {
        ++y;
        continue;
      }
      const int start = y;
      while (y < s.cols && row[y]) ++y;
      const int end = y - 1;
      if (start <= cy && cy <= end) {
        best_start = start;
        best_end = end;
        break;
      }
      if (end < cy && end - start + 1 >= 2) {
        best_start = start;
        best_end = end;
      }
      if (start > cy) break;
    }
    if (best_start < 0) continue;
    col.detected[r] = true;
    col.anterior[r] = best_start;
    col.posterior[r] = best_end;
    for (int y = best_start; y <= best_end; ++y) col.mask[static_cast<std::size_t>(r) * s.cols + y] = 1;
    width_sum += best_end - best_start + 1;
    ++detected;
  }
  if (detected == 0 || static_cast<double>(detected) < 0.3 * s.rows)
    throw SegmentationError("column", "column segmentation failed: bone on " + std::to_string(detected) +
                                          " of " + std::to_string(s.rows) + " rows");
  interpolate_gaps(col.anterior, col.detected);
  interpolate_gaps(col.posterior, col.detected);
  col.average_width = width_sum / detected;
  for (int r = 0; r < s.rows; ++r) {
    if (col.detected[r]) {
      if (col.first_row > col.last_row) col.first_row = r;
      col.last_row = r;
    }
  }
  return col;
}

int patch_count(double column_height, double window, double stride) {
  if (!(window > 0.0) || !(stride > 0.0) || column_height < window) return 0;
  return static_cast<int>(std::floor((column_height - window) / stride + 1e-9)) + 1;
}

PatchSequence extract_patches(const SagittalImage& s, const ColumnSegment& col, const PatchConfig& cfg) {
  const double w = col.average_width;
  const double window = cfg.side_factor * w;
  const double stride = cfg.stride_factor * w;
  const double height = col.height();
  const int n = patch_count(height, window, stride);
  if (n <= 0) throw SegmentationError("patches", "column shorter than one patch window");

  // the leftover below the last full stride is split evenly between both ends
  const double leftover = height - window - (n - 1) * stride;
  const double top = col.last_row + 0.5 - 0.5 * leftover;
  const int size = cfg.size;
  const double step = window / size;

  PatchSequence seq;
  seq.size = size;
  seq.patches.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double row_hi = top - k * stride;
    const double row_lo = row_hi - window;
    const double y_center = col.midline(0.5 * (row_lo + row_hi));
    const double y_lo = y_center - 0.5 * window;

    Patch p;
    p.pixels.resize(static_cast<std::size_t>(size) * size);
    for (int r = 0; r < size; ++r) {
      const double row = row_hi - (r + 0.5) * step;
      for (int c = 0; c < size; ++c) {
        const double y = y_lo + (c + 0.5) * step;
        const double hu = std::clamp(bilinear(s, row, y), cfg.hu_lo, cfg.hu_hi);
        p.pixels[static_cast<std::size_t>(r) * size + c] =
            static_cast<float>((hu - cfg.hu_lo) / (cfg.hu_hi - cfg.hu_lo));
      }
    }
    p.rect = {s.z0 + row_lo, s.z0 + row_hi, y_lo, y_lo + window};
    seq.patches.push_back(std::move(p));
  }
  return seq;
}

void label_patches(PatchSequence& seq, const phantom::GroundTruth& truth) {
  for (auto& p : seq.patches) {
    bool positive = false;
    for (const auto& vt : truth.vertebrae) {
      if (!vt.fractured) continue;
      const double overlap = std::min(p.rect.z_hi, vt.z_top) - std::max(p.rect.z_lo, vt.z_bottom);
      if (overlap >= 0.5 * (vt.z_top - vt.z_bottom)) positive = true;
    }
    p.label = positive ? 1 : 0;
  }
}

std::string sagittal_pgm(const SagittalImage& s) {
  std::vector<std::uint8_t> grey(s.pixels.size());
  for (int r = 0; r < s.rows; ++r) {
    const int src = s.rows - 1 - r;
    for (int c = 0; c < s.cols; ++c)
      grey[static_cast<std::size_t>(r) * s.cols + c] = to_grey(s.at(src, c), -100.0, 1000.0);
  }
  return encode_pgm(s.cols, s.rows, grey);
}

SegmentationResult segment_volume(const Volume& v, const SegmentationConfig& config) {
  SegmentationResult r;
  r.body = compute_body_mask(v);
  r.cord = locate_spinal_cord(v, r.body, config.cord);
  r.sagittal = build_virtual_sagittal(v, r.cord);
  r.column = segment_column(r.sagittal, config.cord.bone_hu_threshold);
  r.patches = extract_patches(r.sagittal, r.column, config.patch);
  return r;
}

}  // namespace vcf::seg

namespace vcf::seg {

CordDeviation cord_deviation(const CordLine& cord, const phantom::GroundTruth& truth) {
  CordDeviation d;
  double sum = 0.0;
  for (const auto& p : truth.cord_line) {
    if (p.z < cord.z_min || p.z > cord.z_max) continue;
    const double e = std::hypot(cord.x_at(p.z) - p.x, cord.y_at(p.z) - p.y);
    sum += e;
    d.max = std::max(d.max, e);
    ++d.compared;
  }
  if (d.compared) d.mean = sum / d.compared;
  return d;
}

bool vertebra_covered(const PatchSequence& seq, const phantom::VertebraTruth& vertebra) {
  const double z = vertebra.center[2], y = vertebra.center[1];
  return std::any_of(seq.patches.begin(), seq.patches.end(), [&](const Patch& p) {
    return z >= p.rect.z_lo && z <= p.rect.z_hi && y >= p.rect.y_lo && y <= p.rect.y_hi;
  });
}

}  // namespace vcf::seg
