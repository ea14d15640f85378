#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vcf/cnn.hpp"
#include "vcf/cohort.hpp"
#include "vcf/nn/checkpoint.hpp"
#include "vcf/rnn.hpp"
#include "vcf/segmentation.hpp"

namespace vcf::pipeline {

struct PatchScore {
  double probability = 0.0;
  seg::SourceRect rect;
};

struct SegmentationSummary {
  int cord_slices = 0;
  double cord_detected_fraction = 0.0;
  int column_rows = 0;
  double column_average_width = 0.0;
  /// Present when a ground-truth file sits next to the volume.
  std::optional<seg::CordDeviation> cord_deviation;
};

struct StageTimings {
  double load_ms = 0.0;
  double segment_ms = 0.0;
  double cnn_ms = 0.0;
  double rnn_ms = 0.0;
};

struct StudyReport {
  std::string study_id;
  double probability = 0.0;
  bool decision = false;  ///< probability >= 0.5
  std::vector<PatchScore> patches;
  SegmentationSummary segmentation;
  StageTimings timings;
};

struct RunConfig {
  seg::SegmentationConfig segmentation;
  /// Timings vary between runs, so they are left out of the JSON unless asked for.
  bool include_timings = false;
};

/// Loaded and validated models; loading copies, so each worker gets its own.
struct Models {
  nn::Checkpoint cnn;
  nn::Checkpoint rnn;
};
Models load_models(const std::filesystem::path& cnn_dir, const std::filesystem::path& rnn_dir);

/// Segmentation, patch scoring and sequence classification for one volume.
/// The study id is the volume file name without its `.vvol.json` suffix.
/// Errors keep their type: IoError, SegmentationError (with stage) or InferenceError.
StudyReport run_study(const std::filesystem::path& volume_path, const Models& models, const RunConfig& config = {});

std::string report_json(const StudyReport& r, bool include_timings = false);

struct StudyOutcome {
  std::string study_id;
  bool label = false;
  double probability = 0.0;
  bool decision = false;
};

struct CohortEvaluation {
  cohort::Metrics metrics;
  std::vector<StudyOutcome> studies;  ///< manifest order
  std::vector<StudyReport> reports;
};

/// Runs every manifest study (up to `jobs` at once), then writes
/// `<out>/metrics.json` and `<out>/reports/<id>.json`. The first failing study
/// in manifest order aborts the run; its id is prefixed to the error message.
CohortEvaluation evaluate_cohort(const std::filesystem::path& manifest, const Models& models,
                                 const std::filesystem::path& out_dir, int jobs = 1, const RunConfig& config = {});

std::string metrics_json(const CohortEvaluation& e);

/// Segmented patch sequence for one volume, labelled from the ground-truth file
/// next to it when there is one.
seg::PatchSequence study_patches(const std::filesystem::path& volume_path, const RunConfig& config = {});

/// study_patches for every manifest entry, in manifest order; ids come from the manifest.
std::vector<seg::PatchSequence> cohort_patches(const std::filesystem::path& manifest, int jobs = 1,
                                               const RunConfig& config = {});

/// Labelled patches of the listed studies, in sequence order. Unlabelled patches are skipped.
std::vector<cls::PatchSample> patch_samples(const std::vector<seg::PatchSequence>& sequences,
                                            const std::vector<std::string>& study_ids);

/// Study label from patch labels: positive if any patch is, negative if every
/// patch is labelled negative, unknown otherwise.
std::optional<int> sequence_label(const seg::PatchSequence& seq);

}  // namespace vcf::pipeline
