#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "test_support.hpp"
#include "vcf/cnn.hpp"
#include "vcf/cohort.hpp"
#include "vcf/error.hpp"
#include "vcf/heatmap.hpp"
#include "vcf/nn/checkpoint.hpp"
#include "vcf/patch_io.hpp"
#include "vcf/phantom.hpp"
#include "vcf/pipeline.hpp"
#include "vcf/rnn.hpp"
#include "vcf/volume.hpp"

namespace fs = std::filesystem;
using namespace vcf;
using vcf::testing::TempDir;

namespace {

nn::Checkpoint cnn_checkpoint(std::uint64_t seed) {
  cls::CnnModel m;
  m.initialize(seed);
  return m.to_checkpoint({}, 0);
}

/// RNN whose output ignores its input: head weights zero, bias favouring one class.
nn::Checkpoint constant_rnn(bool positive) {
  cls::RnnModel m;
  m.initialize(1);
  auto params = m.params();
  auto* w = params[params.size() - 2];
  auto* b = params.back();
  w->value.fill(0.0f);
  b->value[0] = positive ? -5.0f : 5.0f;
  b->value[1] = positive ? 5.0f : -5.0f;
  return m.to_checkpoint({}, 0);
}

nn::Checkpoint rnn_checkpoint(std::uint64_t seed) {
  cls::RnnModel m;
  m.initialize(seed);
  return m.to_checkpoint({}, 0);
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(VCF_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return read_file(p); }

/// Small phantom cohort shared by the tests in this file.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = std::make_unique<TempDir>("pipeline");
    phantom::CohortSpec spec;
    spec.n_studies = 8;
    spec.fracture_prevalence = 0.5;
    spec.seed = 4;
    manifest_ = phantom::generate_cohort(spec, dir_->path() / "cohort", 2);
    records_ = cohort::read_manifest(manifest_);
  }
  static void TearDownTestSuite() { dir_.reset(); }

  static fs::path volume(std::size_t i) { return cohort::resolve_volume(manifest_, records_.at(i)); }

  /// Manifest holding only the studies of one class.
  static fs::path class_manifest(bool positive, const fs::path& where) {
    std::vector<cohort::StudyRecord> subset;
    for (const auto& r : records_) {
      if (r.positive != positive) continue;
      auto copy = r;
      copy.volume_path = cohort::resolve_volume(manifest_, r).string();
      subset.push_back(copy);
    }
    cohort::write_manifest(where, subset);
    return where;
  }

  static inline std::unique_ptr<TempDir> dir_;
  static inline fs::path manifest_;
  static inline std::vector<cohort::StudyRecord> records_;
};

}  // namespace

TEST_F(PipelineTest, CohortHasBothClasses) {
  int pos = 0;
  for (const auto& r : records_) pos += r.positive;
  EXPECT_GE(pos, 2);
  EXPECT_GE(static_cast<int>(records_.size()) - pos, 2);
}

TEST_F(PipelineTest, ReportIsDeterministicAndConsistent) {
  const pipeline::Models models{cnn_checkpoint(1), rnn_checkpoint(2)};
  const auto a = pipeline::run_study(volume(0), models);
  const auto b = pipeline::run_study(volume(0), models);
  EXPECT_EQ(pipeline::report_json(a), pipeline::report_json(b));
  EXPECT_EQ(a.study_id, records_[0].study_id);
  EXPECT_EQ(a.decision, a.probability >= 0.5);
  EXPECT_EQ(a.patches.size(), pipeline::study_patches(volume(0)).patches.size());
  ASSERT_TRUE(a.segmentation.cord_deviation.has_value());
  EXPECT_LE(a.segmentation.cord_deviation->mean, 2.0);

  const auto j = nlohmann::json::parse(pipeline::report_json(a));
  EXPECT_EQ(j.at("study_id"), a.study_id);
  EXPECT_FALSE(j.contains("timings_ms"));
  EXPECT_TRUE(nlohmann::json::parse(pipeline::report_json(a, true)).contains("timings_ms"));
}

TEST_F(PipelineTest, AllAirVolumeFailsAtBodyMask) {
  TempDir dir("air");
  const Volume air({64, 64, 64}, {1.5, 1.5, 1.5}, -1000);
  save_volume(air, dir / "air.vvol.json");
  const pipeline::Models models{cnn_checkpoint(1), rnn_checkpoint(2)};
  try {
    pipeline::run_study(dir / "air.vvol.json", models);
    FAIL() << "expected a segmentation error";
  } catch (const SegmentationError& e) {
    EXPECT_EQ(e.stage(), "body_mask");
  }
}

TEST_F(PipelineTest, MissingVolumeIsIoError) {
  const pipeline::Models models{cnn_checkpoint(1), rnn_checkpoint(2)};
  EXPECT_THROW(pipeline::run_study(dir_->path() / "nope.vvol.json", models), IoError);
}

TEST_F(PipelineTest, LoadModelsChecksKinds) {
  TempDir dir("models");
  nn::save_checkpoint(dir / "cnn", cnn_checkpoint(1));
  nn::save_checkpoint(dir / "rnn", rnn_checkpoint(2));
  EXPECT_NO_THROW(pipeline::load_models(dir / "cnn", dir / "rnn"));
  EXPECT_THROW(pipeline::load_models(dir / "rnn", dir / "cnn"), InferenceError);
  EXPECT_THROW(pipeline::load_models(dir / "missing", dir / "rnn"), IoError);
}

TEST_F(PipelineTest, InverseDecisionsGiveZeroAccuracy) {
  TempDir dir("inverse");
  const auto negatives = class_manifest(false, dir / "neg.csv");
  const auto e1 = pipeline::evaluate_cohort(negatives, {cnn_checkpoint(1), constant_rnn(true)}, dir / "a");
  EXPECT_EQ(e1.metrics.accuracy, 0.0);
  EXPECT_EQ(e1.metrics.fp, e1.studies.size());
  const auto positives = class_manifest(true, dir / "pos.csv");
  const auto e2 = pipeline::evaluate_cohort(positives, {cnn_checkpoint(1), constant_rnn(false)}, dir / "b");
  EXPECT_EQ(e2.metrics.accuracy, 0.0);
  EXPECT_EQ(e2.metrics.fn, e2.studies.size());
}

TEST_F(PipelineTest, EvaluateWritesArtifactsAndConservesCounts) {
  TempDir dir("eval");
  const pipeline::Models models{cnn_checkpoint(1), rnn_checkpoint(2)};
  const auto e = pipeline::evaluate_cohort(manifest_, models, dir / "one", 1);
  EXPECT_EQ(e.metrics.total(), records_.size());
  ASSERT_EQ(e.studies.size(), records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    EXPECT_EQ(e.studies[i].study_id, records_[i].study_id);
    EXPECT_EQ(e.studies[i].label, records_[i].positive);
    EXPECT_TRUE(fs::exists(dir / "one" / "reports" / (records_[i].study_id + ".json")));
  }
  const auto metrics = nlohmann::json::parse(slurp(dir / "one" / "metrics.json"));
  EXPECT_EQ(metrics.at("tp").get<int>() + metrics.at("fp").get<int>() + metrics.at("tn").get<int>() +
                metrics.at("fn").get<int>(),
            static_cast<int>(records_.size()));
  EXPECT_EQ(metrics.at("studies").get<int>(), static_cast<int>(records_.size()));

  pipeline::evaluate_cohort(manifest_, models, dir / "two", 3);
  EXPECT_EQ(slurp(dir / "one" / "metrics.json"), slurp(dir / "two" / "metrics.json"));
  EXPECT_EQ(slurp(dir / "one" / "reports" / (records_[0].study_id + ".json")),
            slurp(dir / "two" / "reports" / (records_[0].study_id + ".json")));
}

TEST_F(PipelineTest, UnreadableStudyAbortsWithItsId) {
  TempDir dir("broken");
  auto recs = records_;
  for (auto& r : recs) r.volume_path = cohort::resolve_volume(manifest_, r).string();
  recs[1].volume_path = (dir / "missing.vvol.json").string();
  cohort::write_manifest(dir / "m.csv", recs);
  try {
    pipeline::evaluate_cohort(dir / "m.csv", {cnn_checkpoint(1), rnn_checkpoint(2)}, dir / "out", 2);
    FAIL() << "expected an I/O error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(recs[1].study_id), std::string::npos);
  }
}

TEST_F(PipelineTest, SequenceLabelsAndSamples) {
  const auto seqs = pipeline::cohort_patches(manifest_, 2);
  ASSERT_EQ(seqs.size(), records_.size());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    EXPECT_EQ(seqs[i].study_id, records_[i].study_id);
    const auto label = pipeline::sequence_label(seqs[i]);
    ASSERT_TRUE(label.has_value());
    EXPECT_EQ(*label, records_[i].positive ? 1 : 0) << seqs[i].study_id;
    ids.push_back(seqs[i].study_id);
  }
  const auto samples = pipeline::patch_samples(seqs, {ids[0]});
  EXPECT_EQ(samples.size(), seqs[0].patches.size());
  for (const auto& s : samples) EXPECT_EQ(s.study_id, ids[0]);

  seg::PatchSequence mixed;
  mixed.patches.resize(2);
  mixed.patches[0].label = 0;
  mixed.patches[1].label = seg::kUnlabeled;
  EXPECT_FALSE(pipeline::sequence_label(mixed).has_value());
  mixed.patches[1].label = 1;
  EXPECT_EQ(pipeline::sequence_label(mixed), 1);
}

// heatmap

TEST(Heatmap, ConstantModelGivesZeroMap) {
  cls::CnnModel model;
  for (auto* p : model.params()) p->value.fill(0.0f);
  std::vector<float> patch(32 * 32, 0.4f);
  const auto h = occlusion_heatmap(model, patch);
  EXPECT_EQ(h.size, 32);
  ASSERT_EQ(h.values.size(), 32u * 32u);
  for (float v : h.values) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(h.method, "occlusion");
  EXPECT_DOUBLE_EQ(h.base_probability, 0.5);
}

TEST(Heatmap, ShapeAndRangeForAnyWindow) {
  cls::CnnModel model;
  model.initialize(4);
  Rng rng(4);
  std::vector<float> patch(32 * 32);
  for (auto& v : patch) v = static_cast<float>(rng.uniform());
  for (auto [window, stride] : {std::pair{8, 4}, std::pair{5, 3}, std::pair{32, 1}, std::pair{1, 7}}) {
    const auto h = occlusion_heatmap(model, patch, window, stride);
    ASSERT_EQ(h.values.size(), 32u * 32u);
    float mx = 0.0f;
    for (float v : h.values) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
      mx = std::max(mx, v);
    }
    EXPECT_TRUE(mx == 0.0f || mx == 1.0f);
    EXPECT_LT(h.argmax(), 32u * 32u);
  }
  EXPECT_THROW(occlusion_heatmap(model, patch, 0, 4), std::invalid_argument);
  EXPECT_THROW(occlusion_heatmap(model, patch, 8, 0), std::invalid_argument);
  EXPECT_THROW(occlusion_heatmap(model, std::vector<float>(10), 8, 4), std::invalid_argument);
}

TEST(Heatmap, WritesPgmAndJson) {
  cls::CnnModel model;
  model.initialize(5);
  const auto h = occlusion_heatmap(model, std::vector<float>(32 * 32, 0.3f));
  TempDir dir("heat");
  write_heatmap(dir / "h", h);
  const auto pgm = read_file(dir / "h.pgm");
  EXPECT_EQ(pgm.rfind("P5\n32 32\n255\n", 0), 0u);
  EXPECT_EQ(pgm.size(), std::string("P5\n32 32\n255\n").size() + 32 * 32);
  const auto j = nlohmann::json::parse(read_file(dir / "h.json"));
  EXPECT_EQ(j.at("method"), "occlusion");
  EXPECT_EQ(j.at("window"), 8);
  EXPECT_EQ(j.at("stride"), 4);
}

// command line

TEST_F(PipelineTest, CliExitCodes) {
  TempDir dir("cli_codes");
  const auto log = dir / "log.txt";
  EXPECT_EQ(run_cli("--help", log), 0);
  EXPECT_EQ(run_cli("no-such-command", log), 1);
  EXPECT_EQ(run_cli("balance --manifest", log), 1);

  nn::save_checkpoint(dir / "cnn", cnn_checkpoint(1));
  nn::save_checkpoint(dir / "rnn", rnn_checkpoint(2));
  const std::string models = " --cnn " + (dir / "cnn").string() + " --rnn " + (dir / "rnn").string();

  EXPECT_EQ(run_cli("infer --volume " + (dir / "missing.vvol.json").string() + models + " --report " +
                        (dir / "r.json").string(),
                    log),
            2);

  save_volume(Volume({48, 48, 48}, {1.5, 1.5, 1.5}, -1000), dir / "air.vvol.json");
  EXPECT_EQ(run_cli("infer --volume " + (dir / "air.vvol.json").string() + models + " --report " +
                        (dir / "r.json").string(),
                    log),
            3);
  EXPECT_NE(slurp(log).find("body_mask"), std::string::npos);

  // checkpoint of the wrong kind
  EXPECT_EQ(run_cli("infer --volume " + volume(0).string() + " --cnn " + (dir / "rnn").string() + " --rnn " +
                        (dir / "rnn").string() + " --report " + (dir / "r.json").string(),
                    log),
            4);
  EXPECT_FALSE(fs::exists(dir / "r.json"));
}

TEST_F(PipelineTest, CliEndToEndSmoke) {
  TempDir dir("cli_flow");
  const auto log = dir / "log.txt";
  const auto d = [&](const std::string& p) { return (dir / p).string(); };

  ASSERT_EQ(run_cli("phantom gen --n 6 --prevalence 0.5 --seed 5 --out " + d("cohort"), log), 0) << slurp(log);
  ASSERT_TRUE(fs::exists(dir / "cohort" / "manifest.csv"));
  const auto recs = cohort::read_manifest(dir / "cohort" / "manifest.csv");
  ASSERT_EQ(recs.size(), 6u);
  const auto vol = cohort::resolve_volume(dir / "cohort" / "manifest.csv", recs[0]).string();

  ASSERT_EQ(run_cli("segment --volume " + vol + " --out " + d("seg"), log), 0) << slurp(log);
  EXPECT_TRUE(fs::exists(dir / "seg" / "sagittal.pgm"));
  EXPECT_TRUE(fs::exists(dir / "seg" / "segmentation.json"));

  ASSERT_EQ(run_cli("patches --manifest " + d("cohort/manifest.csv") + " --out " + d("patches"), log), 0)
      << slurp(log);
  ASSERT_EQ(run_cli("patches --volume " + vol + " --out " + d("one.vcfp"), log), 0) << slurp(log);
  EXPECT_EQ(read_patch_file(dir / "one.vcfp").patches.size(),
            read_patch_file(dir / "patches" / (recs[0].study_id + ".vcfp")).patches.size());

  ASSERT_EQ(run_cli("train-cnn --patches-dir " + d("patches") + " --val-frac 0.4 --epochs 1 --seed 1 --out " +
                        d("cnn"),
                    log),
            0)
      << slurp(log);
  EXPECT_TRUE(fs::exists(dir / "cnn" / "model.json"));
  EXPECT_TRUE(fs::exists(dir / "cnn" / "model.bin"));
  EXPECT_EQ(slurp(dir / "cnn" / "history.csv").rfind("epoch,train_loss,val_acc\n", 0), 0u);
  const auto split = nlohmann::json::parse(slurp(dir / "cnn" / "split.json"));
  for (const auto& id : split.at("val")) {
    for (const auto& t : split.at("train")) EXPECT_NE(id, t);
  }

  ASSERT_EQ(run_cli("score --cnn " + d("cnn") + " --patches " + d("patches") + " --out " + d("vectors.csv"), log),
            0)
      << slurp(log);
  const auto vectors = cls::read_probability_csv(dir / "vectors.csv");
  EXPECT_EQ(vectors.size(), recs.size());

  ASSERT_EQ(run_cli("train-rnn --vectors " + d("vectors.csv") + " --epochs 1 --seed 1 --out " + d("rnn"), log), 0)
      << slurp(log);
  const std::string models = " --cnn " + d("cnn") + " --rnn " + d("rnn");

  ASSERT_EQ(run_cli("infer --volume " + vol + models + " --report " + d("report.json"), log), 0) << slurp(log);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(report.at("study_id"), recs[0].study_id);

  ASSERT_EQ(run_cli("eval --manifest " + d("cohort/manifest.csv") + models + " --out " + d("eval"), log), 0)
      << slurp(log);
  EXPECT_TRUE(fs::exists(dir / "eval" / "metrics.json"));

  ASSERT_EQ(run_cli("heatmap --cnn " + d("cnn") + " --patch-file " + d("one.vcfp") + " --index 0 --out " + d("heat"),
                    log),
            0)
      << slurp(log);
  EXPECT_TRUE(fs::exists(dir / "heat.pgm"));
  EXPECT_TRUE(fs::exists(dir / "heat.json"));
  EXPECT_EQ(run_cli("heatmap --cnn " + d("cnn") + " --patch-file " + d("one.vcfp") + " --index 999 --out " +
                        d("heat2"),
                    log),
            1);

  ASSERT_EQ(run_cli("balance --manifest " + d("cohort/manifest.csv") + " --out " + d("balanced.csv"), log), 0)
      << slurp(log);
  const auto balanced = cohort::read_manifest(dir / "balanced.csv");
  EXPECT_EQ(balanced.size() % 2, 0u);
  for (const auto& r : balanced) EXPECT_TRUE(fs::exists(cohort::resolve_volume(dir / "balanced.csv", r)));
}
