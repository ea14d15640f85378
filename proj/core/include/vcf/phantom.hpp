#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vcf/volume.hpp"

namespace vcf::phantom {

/// Noiseless tissue intensities (HU).
namespace tissue {
inline constexpr std::int16_t kAir = -1000;
inline constexpr std::int16_t kSoftTissue = 40;
inline constexpr std::int16_t kCanal = 30;
inline constexpr std::int16_t kTrabecular = 150;
inline constexpr std::int16_t kCortical = 600;
inline constexpr std::int16_t kArch = 500;
}  // namespace tissue

inline constexpr double kMinHeightLoss = 0.20;
inline constexpr double kMaxHeightLoss = 0.60;

struct Fracture {
  int vertebra = 0;          ///< index, 0 = most caudal
  double height_loss = 0.4;  ///< anterior height-loss fraction
};

/// Parameters of one synthetic spine scan. Lengths are in millimetres.
///
/// The torso is an elliptic cylinder; each vertebra is a circular-section
/// body with a cortical shell, behind it a bony ring (pedicles and lamina)
/// around the spinal canal. Scoliosis shears the whole column laterally along
/// a sinusoid in z. A fracture is an anterior wedge: the top endplate drops
/// linearly from the intact posterior wall to (1 - f) of the height anteriorly.
struct PhantomSpec {
  Dims dims{96, 96, 192};
  Spacing spacing{1.5, 1.5, 1.5};
  int vertebra_count = 10;
  double vertebra_height_mm = 20.0;
  double disc_height_mm = 6.0;
  double body_radius_mm = 15.0;
  double canal_radius_mm = 7.5;
  double cortical_thickness_mm = 3.0;
  double arch_thickness_mm = 4.5;
  std::array<double, 2> torso_semi_axes_mm{63.0, 57.0};
  /// Soft tissue between the lamina and the skin of the back.
  double posterior_soft_tissue_mm = 15.0;
  double scoliosis_amplitude_mm = 0.0;
  double scoliosis_period_mm = 240.0;
  double scoliosis_phase_rad = 0.0;
  std::vector<Fracture> fracture_plan;
  double noise_sigma_hu = 20.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when the geometry does not fit the grid with
  /// a 4-voxel margin or a fracture entry is out of range.
  void validate() const;
};

struct VertebraTruth {
  int index = 0;
  std::array<double, 3> center{};  ///< voxel coordinates (x, y, z)
  double z_bottom = 0.0;           ///< voxel coordinates of the body's z extent
  double z_top = 0.0;
  double y_anterior = 0.0;
  double y_posterior = 0.0;
  bool fractured = false;
  double height_loss = 0.0;
};

struct CordPoint {
  int z = 0;
  double x = 0.0;
  double y = 0.0;
};

struct GroundTruth {
  std::vector<CordPoint> cord_line;  ///< one entry per z spanned by the column
  std::vector<VertebraTruth> vertebrae;
  bool study_label = false;

  std::string to_json() const;
  static GroundTruth from_json(const std::string& text);
};

struct Phantom {
  Volume volume;
  GroundTruth truth;
};

Phantom generate_phantom(const PhantomSpec& spec);

/// Two-class demographic model: per class, the female fraction and age
/// distribution per sex. Defaults are deliberately unbalanced
/// (positives older and more often female).
struct SexAgeModel {
  double female_fraction = 0.5;
  double female_age_mean = 60.0;
  double female_age_std = 15.0;
  double male_age_mean = 60.0;
  double male_age_std = 15.0;
};

struct DemographicsModel {
  SexAgeModel positive{0.61, 73.0, 12.4, 66.8, 16.8};
  SexAgeModel negative{0.47, 56.7, 17.4, 56.1, 17.9};
  int min_age = 18;
  int max_age = 110;
};

/// Ranges from which each study's PhantomSpec is drawn.
struct CohortVariation {
  std::array<double, 2> vertebra_height_mm{18.0, 21.0};
  std::array<double, 2> disc_height_mm{5.0, 6.5};
  std::array<double, 2> body_radius_mm{13.0, 17.0};
  std::array<double, 2> scoliosis_amplitude_mm{0.0, 10.0};
  std::array<double, 2> scoliosis_period_mm{150.0, 300.0};
  std::array<double, 2> noise_sigma_hu{10.0, 30.0};
  std::array<double, 2> height_loss{kMinHeightLoss, kMaxHeightLoss};
  int max_fractures = 2;
};

struct CohortSpec {
  int n_studies = 10;
  double fracture_prevalence = 0.5;
  std::uint64_t seed = 0;
  std::string id_prefix = "S";
  PhantomSpec base;
  CohortVariation variation;
  DemographicsModel demographics;
};

struct CohortStudy {
  std::string study_id;
  int age = 0;
  char sex = 'F';
  bool positive = false;
  PhantomSpec spec;
};

/// Draws the per-study specs and demographics without rendering volumes.
std::vector<CohortStudy> plan_cohort(const CohortSpec& spec);

/// Renders every planned study into `out_dir` as `<id>.vvol.json/.raw` plus
/// `<id>.ground_truth.json`, and writes `manifest.csv`. Returns the manifest path.
std::filesystem::path generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir,
                                      int jobs = 1);

std::filesystem::path ground_truth_path(const std::filesystem::path& volume_base);

}  // namespace vcf::phantom
