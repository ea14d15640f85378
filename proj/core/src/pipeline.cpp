#include "vcf/pipeline.hpp"

#include <chrono>
#include <exception>

#include <json.hpp>

#include "vcf/error.hpp"
#include "vcf/parallel.hpp"
#include "vcf/phantom.hpp"
#include "vcf/volume.hpp"

namespace vcf::pipeline {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string study_id_of(const fs::path& volume_path) {
  std::string name = volume_header_path(volume_path).filename().string();
  name.resize(name.size() - std::string_view(".vvol.json").size());
  return name;
}

}  // namespace

Models load_models(const fs::path& cnn_dir, const fs::path& rnn_dir) {
  Models m{nn::load_checkpoint(cnn_dir), nn::load_checkpoint(rnn_dir)};
  // Fail early on the wrong kind or shapes.
  cls::CnnModel::from_checkpoint(m.cnn);
  cls::RnnModel::from_checkpoint(m.rnn);
  return m;
}

StudyReport run_study(const fs::path& volume_path, const Models& models, const RunConfig& config) {
  StudyReport r;
  r.study_id = study_id_of(volume_path);

  auto t0 = Clock::now();
  const Volume v = load_volume(volume_path);
  std::optional<phantom::GroundTruth> truth;
  if (const auto gt = phantom::ground_truth_path(volume_path); fs::exists(gt)) {
    try {
      truth = phantom::GroundTruth::from_json(read_file(gt));
    } catch (const std::exception& e) {
      throw IoError("bad ground truth " + gt.string() + ": " + e.what());
    }
  }
  r.timings.load_ms = ms_since(t0);

  t0 = Clock::now();
  auto seg = seg::segment_volume(v, config.segmentation);
  seg.patches.study_id = r.study_id;
  r.timings.segment_ms = ms_since(t0);

  auto& s = r.segmentation;
  s.cord_slices = seg.cord.length();
  int detected = 0;
  for (bool d : seg.cord.detected) detected += d;
  s.cord_detected_fraction = s.cord_slices ? static_cast<double>(detected) / s.cord_slices : 0.0;
  s.column_rows = seg.column.height();
  s.column_average_width = seg.column.average_width;
  if (truth) s.cord_deviation = seg::cord_deviation(seg.cord, *truth);

  t0 = Clock::now();
  auto cnn = cls::CnnModel::from_checkpoint(models.cnn);
  const auto vec = cls::score_sequence(cnn, seg.patches);
  r.timings.cnn_ms = ms_since(t0);

  t0 = Clock::now();
  auto rnn = cls::RnnModel::from_checkpoint(models.rnn);
  r.probability = cls::predict_study(rnn, vec.values);
  r.decision = r.probability >= 0.5;
  r.timings.rnn_ms = ms_since(t0);

  for (std::size_t i = 0; i < vec.values.size(); ++i) r.patches.push_back({vec.values[i], seg.patches.patches[i].rect});
  return r;
}

std::string report_json(const StudyReport& r, bool include_timings) {
  nlohmann::ordered_json j;
  j["study_id"] = r.study_id;
  j["probability"] = r.probability;
  j["decision"] = r.decision ? "positive" : "negative";
  auto& patches = j["patches"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.patches.size(); ++i) {
    const auto& p = r.patches[i];
    nlohmann::ordered_json jp;
    jp["index"] = i;
    jp["probability"] = p.probability;
    jp["rect"] = {{"z_lo", p.rect.z_lo}, {"z_hi", p.rect.z_hi}, {"y_lo", p.rect.y_lo}, {"y_hi", p.rect.y_hi}};
    patches.push_back(std::move(jp));
  }
  nlohmann::ordered_json js;
  js["cord_slices"] = r.segmentation.cord_slices;
  js["cord_detected_fraction"] = r.segmentation.cord_detected_fraction;
  js["column_rows"] = r.segmentation.column_rows;
  js["column_average_width"] = r.segmentation.column_average_width;
  if (const auto& d = r.segmentation.cord_deviation)
    js["cord_deviation"] = {{"mean", d->mean}, {"max", d->max}, {"slices", d->compared}};
  j["segmentation"] = std::move(js);
  if (include_timings)
    j["timings_ms"] = {{"load", r.timings.load_ms},
                       {"segment", r.timings.segment_ms},
                       {"cnn", r.timings.cnn_ms},
                       {"rnn", r.timings.rnn_ms}};
  return j.dump(2) + "\n";
}

namespace {

[[noreturn]] void rethrow_with_id(std::exception_ptr ep, const std::string& id) {
  const std::string prefix = "study " + id + ": ";
  try {
    std::rethrow_exception(ep);
  } catch (const SegmentationError& e) {
    throw SegmentationError(e.stage(), prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const InferenceError& e) {
    throw InferenceError(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

}  // namespace

CohortEvaluation evaluate_cohort(const fs::path& manifest, const Models& models, const fs::path& out_dir, int jobs,
                                 const RunConfig& config) {
  const auto records = cohort::read_manifest(manifest);
  if (records.empty()) throw IoError("manifest " + manifest.string() + " lists no studies");

  std::vector<StudyReport> reports(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  parallel_for(records.size(), resolve_jobs(jobs), [&](std::size_t i) {
    try {
      reports[i] = run_study(cohort::resolve_volume(manifest, records[i]), models, config);
      reports[i].study_id = records[i].study_id;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (std::size_t i = 0; i < records.size(); ++i)
    if (errors[i]) rethrow_with_id(errors[i], records[i].study_id);

  CohortEvaluation e;
  std::vector<double> probs;
  std::vector<bool> labels;
  for (std::size_t i = 0; i < records.size(); ++i) {
    e.studies.push_back({records[i].study_id, records[i].positive, reports[i].probability, reports[i].decision});
    probs.push_back(reports[i].probability);
    labels.push_back(records[i].positive);
  }
  e.metrics = cohort::compute_metrics(probs, labels);
  e.reports = std::move(reports);

  std::error_code ec;
  fs::create_directories(out_dir / "reports", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "reports").string() + ": " + ec.message());
  for (const auto& r : e.reports)
    write_file_atomic(out_dir / "reports" / (r.study_id + ".json"), report_json(r, config.include_timings));
  write_file_atomic(out_dir / "metrics.json", metrics_json(e));
  return e;
}

std::string metrics_json(const CohortEvaluation& e) {
  nlohmann::ordered_json j;
  const auto& m = e.metrics;
  j["studies"] = m.total();
  j["threshold"] = 0.5;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["tn"] = m.tn;
  j["fn"] = m.fn;
  j["accuracy"] = m.accuracy;
  j["sensitivity"] = m.sensitivity;
  j["specificity"] = m.specificity;
  auto& per = j["per_study"] = nlohmann::ordered_json::array();
  for (const auto& s : e.studies)
    per.push_back({{"study_id", s.study_id},
                   {"label", s.label ? "positive" : "negative"},
                   {"probability", s.probability},
                   {"decision", s.decision ? "positive" : "negative"}});
  return j.dump(2) + "\n";
}

seg::PatchSequence study_patches(const fs::path& volume_path, const RunConfig& config) {
  const Volume v = load_volume(volume_path);
  auto seq = seg::segment_volume(v, config.segmentation).patches;
  seq.study_id = study_id_of(volume_path);
  if (const auto gt = phantom::ground_truth_path(volume_path); fs::exists(gt))
    seg::label_patches(seq, phantom::GroundTruth::from_json(read_file(gt)));
  return seq;
}

std::vector<seg::PatchSequence> cohort_patches(const fs::path& manifest, int jobs, const RunConfig& config) {
  const auto records = cohort::read_manifest(manifest);
  std::vector<seg::PatchSequence> out(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  parallel_for(records.size(), resolve_jobs(jobs), [&](std::size_t i) {
    try {
      out[i] = study_patches(cohort::resolve_volume(manifest, records[i]), config);
      out[i].study_id = records[i].study_id;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (std::size_t i = 0; i < records.size(); ++i)
    if (errors[i]) rethrow_with_id(errors[i], records[i].study_id);
  return out;
}

std::vector<cls::PatchSample> patch_samples(const std::vector<seg::PatchSequence>& sequences,
                                            const std::vector<std::string>& study_ids) {
  std::vector<cls::PatchSample> out;
  for (const auto& id : study_ids) {
    for (const auto& seq : sequences) {
      if (seq.study_id != id) continue;
      for (const auto& p : seq.patches)
        if (p.label != seg::kUnlabeled) out.push_back({p.pixels, static_cast<int>(p.label), seq.study_id});
    }
  }
  return out;
}

std::optional<int> sequence_label(const seg::PatchSequence& seq) {
  bool all_labelled = true;
  for (const auto& p : seq.patches) {
    if (p.label == 1) return 1;
    if (p.label == seg::kUnlabeled) all_labelled = false;
  }
  if (all_labelled && !seq.patches.empty()) return 0;
  return std::nullopt;
}

}  // namespace vcf::pipeline
