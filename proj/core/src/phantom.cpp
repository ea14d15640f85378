#include "vcf/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "vcf/cohort.hpp"
#include "vcf/error.hpp"
#include "vcf/parallel.hpp"
#include "vcf/rng.hpp"

namespace vcf::phantom {

namespace fs = std::filesystem;

namespace {

constexpr double kMarginVoxels = 4.0;

/// Derived geometry in millimetres. Voxel index k sits at k * spacing.
struct Geometry {
  double torso_x = 0, torso_y = 0, torso_a = 0, torso_b = 0;
  double body_y = 0, canal_y = 0;
  double radius = 0, canal_r = 0, cortex = 0, arch_t = 0;
  double z0 = 0, z_center = 0, height = 0, disc = 0, column_length = 0;
  int count = 0;
  double amplitude = 0, period = 1, phase = 0;
  std::vector<double> height_loss;

  explicit Geometry(const PhantomSpec& s) {
    const Dims& d = s.dims;
    torso_x = 0.5 * (d.nx - 1) * s.spacing[0];
    torso_y = 0.5 * (d.ny - 1) * s.spacing[1];
    torso_a = s.torso_semi_axes_mm[0];
    torso_b = s.torso_semi_axes_mm[1];
    radius = s.body_radius_mm;
    canal_r = s.canal_radius_mm;
    cortex = s.cortical_thickness_mm;
    arch_t = s.arch_thickness_mm;
    const double lamina_outer = torso_y + torso_b - s.posterior_soft_tissue_mm;
    canal_y = lamina_outer - arch_t - canal_r;
    body_y = canal_y - canal_r - radius;
    count = s.vertebra_count;
    height = s.vertebra_height_mm;
    disc = s.disc_height_mm;
    column_length = count * height + (count - 1) * disc;
    z_center = 0.5 * (d.nz - 1) * s.spacing[2];
    z0 = z_center - 0.5 * column_length;
    amplitude = s.scoliosis_amplitude_mm;
    period = s.scoliosis_period_mm;
    phase = s.scoliosis_phase_rad;
    height_loss.assign(static_cast<std::size_t>(std::max(count, 0)), 0.0);
    for (const auto& f : s.fracture_plan)
      if (f.vertebra >= 0 && f.vertebra < count) height_loss[f.vertebra] = f.height_loss;
  }

  double lateral_shift(double z) const {
    return amplitude * std::sin(2.0 * std::numbers::pi * (z - z_center) / period + phase);
  }
  double vertebra_bottom(int i) const { return z0 + i * (height + disc); }

  std::int16_t tissue_at(double x, double y, double z) const {
    const double tx = (x - torso_x) / torso_a;
    const double ty = (y - torso_y) / torso_b;
    if (tx * tx + ty * ty > 1.0) return tissue::kAir;

    const double u = x - (torso_x + lateral_shift(z));
    const double t = z - z0;
    if (t >= 0.0 && t <= column_length) {
      const int i = std::min(static_cast<int>(t / (height + disc)), count - 1);
      const double local = t - i * (height + disc);
      if (local <= height) {
        const double dy = y - body_y;
        const double rb = std::sqrt(u * u + dy * dy);
        if (rb <= radius) {
          // wedge: top endplate falls linearly from the posterior wall
          const double loss = height_loss[i] * (body_y + radius - y) / (2.0 * radius);
          const double limit = height * (1.0 - loss);
          if (local <= limit) {
            const bool shell = rb > radius - cortex || local < cortex || local > limit - cortex;
            return shell ? tissue::kCortical : tissue::kTrabecular;
          }
        }
        const double dk = y - canal_y;
        const double rk = std::sqrt(u * u + dk * dk);
        if (rk >= canal_r && rk <= canal_r + arch_t) return tissue::kArch;
      }
    }
    const double dk = y - canal_y;
    if (u * u + dk * dk < canal_r * canal_r) return tissue::kCanal;
    return tissue::kSoftTissue;
  }
};

std::string study_id_for(const std::string& prefix, int index, int n) {
  const int width = std::max(4, static_cast<int>(std::to_string(std::max(n - 1, 0)).size()));
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

}  // namespace

void PhantomSpec::validate() const {
  if (dims.nx < kMinDim || dims.ny < kMinDim || dims.nz < kMinDim)
    throw std::invalid_argument("phantom dims must all be >= 8");
  for (double s : spacing)
    if (!(s > 0.0)) throw std::invalid_argument("phantom spacing must be positive");
  if (vertebra_count < 3) throw std::invalid_argument("vertebra_count must be >= 3");
  if (!(vertebra_height_mm > 0.0) || !(disc_height_mm >= 0.0) || !(body_radius_mm > 0.0) ||
      !(canal_radius_mm > 0.0) || !(cortical_thickness_mm > 0.0) || !(arch_thickness_mm > 0.0))
    throw std::invalid_argument("phantom lengths must be positive");
  if (2.0 * cortical_thickness_mm >= std::min(vertebra_height_mm * (1.0 - kMaxHeightLoss),
                                              body_radius_mm))
    throw std::invalid_argument("cortical shell too thick for the vertebral body");
  if (!(scoliosis_period_mm > 0.0) || scoliosis_amplitude_mm < 0.0)
    throw std::invalid_argument("scoliosis period must be positive and amplitude non-negative");
  if (noise_sigma_hu < 0.0) throw std::invalid_argument("noise sigma must be non-negative");

  std::set<int> seen;
  for (const auto& f : fracture_plan) {
    if (f.vertebra < 0 || f.vertebra >= vertebra_count)
      throw std::invalid_argument("fracture vertebra index out of range");
    if (f.height_loss < kMinHeightLoss || f.height_loss > kMaxHeightLoss)
      throw std::invalid_argument("fracture height loss must lie in [0.20, 0.60]");
    if (!seen.insert(f.vertebra).second)
      throw std::invalid_argument("duplicate fracture vertebra index");
  }

  const Geometry g(*this);
  auto fits = [](double lo_mm, double hi_mm, int n, double s) {
    return lo_mm >= kMarginVoxels * s && hi_mm <= (n - 1 - kMarginVoxels) * s;
  };
  if (!fits(g.torso_x - g.torso_a, g.torso_x + g.torso_a, dims.nx, spacing[0]) ||
      !fits(g.torso_y - g.torso_b, g.torso_y + g.torso_b, dims.ny, spacing[1]))
    throw std::invalid_argument("torso does not fit inside dims with a 4-voxel margin");
  if (!fits(g.z0, g.z0 + g.column_length, dims.nz, spacing[2]))
    throw std::invalid_argument("vertebral column does not fit inside dims with a 4-voxel margin");
  const double lateral = scoliosis_amplitude_mm + std::max(body_radius_mm, canal_radius_mm + arch_thickness_mm);
  if (lateral > g.torso_a - kMarginVoxels * spacing[0])
    throw std::invalid_argument("scoliotic column leaves the torso");
  if (g.body_y - g.radius < g.torso_y - g.torso_b + kMarginVoxels * spacing[1] ||
      posterior_soft_tissue_mm < kMarginVoxels * spacing[1])
    throw std::invalid_argument("spine does not fit inside the torso along y");
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Geometry g(spec);
  const Dims& d = spec.dims;
  const Spacing& s = spec.spacing;

  Volume vol(d, s, tissue::kAir);
  Rng rng(spec.seed);
  const bool noisy = spec.noise_sigma_hu > 0.0;
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        double hu = g.tissue_at(x * s[0], y * s[1], z * s[2]);
        if (noisy) hu += std::round(spec.noise_sigma_hu * rng.normal());
        vol.at(x, y, z) = static_cast<std::int16_t>(std::clamp<double>(hu, kMinHu, kMaxHu));
      }
    }
  }

  GroundTruth truth;
  const int z_first = static_cast<int>(std::ceil(g.z0 / s[2]));
  const int z_last = static_cast<int>(std::floor((g.z0 + g.column_length) / s[2]));
  for (int z = z_first; z <= z_last; ++z) {
    const double zm = z * s[2];
    truth.cord_line.push_back({z, (g.torso_x + g.lateral_shift(zm)) / s[0], g.canal_y / s[1]});
  }
  for (int i = 0; i < g.count; ++i) {
    VertebraTruth vt;
    vt.index = i;
    const double bottom = g.vertebra_bottom(i);
    const double mid = bottom + 0.5 * g.height;
    vt.center = {(g.torso_x + g.lateral_shift(mid)) / s[0], g.body_y / s[1], mid / s[2]};
    vt.z_bottom = bottom / s[2];
    vt.z_top = (bottom + g.height) / s[2];
    vt.y_anterior = (g.body_y - g.radius) / s[1];
    vt.y_posterior = (g.body_y + g.radius) / s[1];
    vt.height_loss = g.height_loss[i];
    vt.fractured = vt.height_loss >= kMinHeightLoss;
    truth.study_label = truth.study_label || vt.fractured;
    truth.vertebrae.push_back(vt);
  }
  return {std::move(vol), std::move(truth)};
}

std::string GroundTruth::to_json() const {
  nlohmann::ordered_json j;
  j["study_label"] = study_label;
  auto& cord = j["cord_line"] = nlohmann::ordered_json::array();
  for (const auto& p : cord_line) cord.push_back({p.z, p.x, p.y});
  auto& verts = j["vertebrae"] = nlohmann::ordered_json::array();
  for (const auto& v : vertebrae) {
    nlohmann::ordered_json jv;
    jv["index"] = v.index;
    jv["center"] = v.center;
    jv["z_bottom"] = v.z_bottom;
    jv["z_top"] = v.z_top;
    jv["y_anterior"] = v.y_anterior;
    jv["y_posterior"] = v.y_posterior;
    jv["fractured"] = v.fractured;
    jv["height_loss"] = v.height_loss;
    verts.push_back(std::move(jv));
  }
  return j.dump(1) + "\n";
}

GroundTruth GroundTruth::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    GroundTruth g;
    g.study_label = j.at("study_label").get<bool>();
    for (const auto& p : j.at("cord_line"))
      g.cord_line.push_back({p.at(0).get<int>(), p.at(1).get<double>(), p.at(2).get<double>()});
    for (const auto& jv : j.at("vertebrae")) {
      VertebraTruth v;
      v.index = jv.at("index").get<int>();
      v.center = jv.at("center").get<std::array<double, 3>>();
      v.z_bottom = jv.at("z_bottom").get<double>();
      v.z_top = jv.at("z_top").get<double>();
      v.y_anterior = jv.at("y_anterior").get<double>();
      v.y_posterior = jv.at("y_posterior").get<double>();
      v.fractured = jv.at("fractured").get<bool>();
      v.height_loss = jv.at("height_loss").get<double>();
      g.vertebrae.push_back(v);
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed ground truth: ") + e.what());
  }
}

fs::path ground_truth_path(const fs::path& volume_base) {
  std::string s = volume_header_path(volume_base).string();
  s.resize(s.size() - std::string_view(".vvol.json").size());
  return s + ".ground_truth.json";
}

std::vector<CohortStudy> plan_cohort(const CohortSpec& spec) {
  if (spec.n_studies < 2) throw std::invalid_argument("cohort needs at least 2 studies");
  if (spec.fracture_prevalence < 0.0 || spec.fracture_prevalence > 1.0)
    throw std::invalid_argument("fracture prevalence must lie in [0, 1]");
  const auto& var = spec.variation;
  std::vector<CohortStudy> studies;
  studies.reserve(static_cast<std::size_t>(spec.n_studies));
  for (int i = 0; i < spec.n_studies; ++i) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
    CohortStudy st;
    st.study_id = study_id_for(spec.id_prefix, i, spec.n_studies);
    st.positive = rng.bernoulli(spec.fracture_prevalence);

    const SexAgeModel& m = st.positive ? spec.demographics.positive : spec.demographics.negative;
    const bool female = rng.bernoulli(m.female_fraction);
    st.sex = female ? 'F' : 'M';
    const double age = female ? rng.normal(m.female_age_mean, m.female_age_std)
                              : rng.normal(m.male_age_mean, m.male_age_std);
    st.age = std::clamp(static_cast<int>(std::lround(age)), spec.demographics.min_age,
                        spec.demographics.max_age);

    PhantomSpec p = spec.base;
    p.vertebra_height_mm = rng.uniform(var.vertebra_height_mm[0], var.vertebra_height_mm[1]);
    p.disc_height_mm = rng.uniform(var.disc_height_mm[0], var.disc_height_mm[1]);
    p.body_radius_mm = rng.uniform(var.body_radius_mm[0], var.body_radius_mm[1]);
    p.scoliosis_amplitude_mm = rng.uniform(var.scoliosis_amplitude_mm[0], var.scoliosis_amplitude_mm[1]);
    p.scoliosis_period_mm = rng.uniform(var.scoliosis_period_mm[0], var.scoliosis_period_mm[1]);
    p.scoliosis_phase_rad = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.noise_sigma_hu = rng.uniform(var.noise_sigma_hu[0], var.noise_sigma_hu[1]);
    p.fracture_plan.clear();
    if (st.positive) {
      // end vertebrae are excluded: they sit at the edge of the patch grid
      const int count = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(var.max_fractures, 1))));
      std::vector<int> candidates;
      for (int v = 1; v + 1 < p.vertebra_count; ++v) candidates.push_back(v);
      rng.shuffle(std::span<int>(candidates));
      for (int k = 0; k < count && k < static_cast<int>(candidates.size()); ++k)
        p.fracture_plan.push_back({candidates[k], rng.uniform(var.height_loss[0], var.height_loss[1])});
      std::sort(p.fracture_plan.begin(), p.fracture_plan.end(),
                [](const Fracture& a, const Fracture& b) { return a.vertebra < b.vertebra; });
    }
    p.seed = rng.next_u64();
    p.validate();
    st.spec = std::move(p);
    studies.push_back(std::move(st));
  }
  return studies;
}

fs::path generate_cohort(const CohortSpec& spec, const fs::path& out_dir, int jobs) {
  const auto studies = plan_cohort(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw IoError("cannot create output directory " + out_dir.string());

  parallel_for(studies.size(), resolve_jobs(jobs), [&](std::size_t i) {
    const auto& st = studies[i];
    const Phantom ph = generate_phantom(st.spec);
    const fs::path base = out_dir / st.study_id;
    save_volume(ph.volume, base);
    write_file_atomic(ground_truth_path(base), ph.truth.to_json());
  });

  std::vector<cohort::StudyRecord> records;
  for (const auto& st : studies)
    records.push_back({st.study_id, st.age, st.sex, st.positive, st.study_id + ".vvol.json"});
  const fs::path manifest = out_dir / "manifest.csv";
  cohort::write_manifest(manifest, records);
  return manifest;
}

}  // namespace vcf::phantom
