// vcf: command-line front end for phantom generation, segmentation, training,
// inference, evaluation, heatmaps and cohort balancing.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vcf/cnn.hpp"
#include "vcf/cohort.hpp"
#include "vcf/error.hpp"
#include "vcf/heatmap.hpp"
#include "vcf/nn/checkpoint.hpp"
#include "vcf/patch_io.hpp"
#include "vcf/phantom.hpp"
#include "vcf/pipeline.hpp"
#include "vcf/probability_io.hpp"
#include "vcf/rnn.hpp"
#include "vcf/segmentation.hpp"
#include "vcf/split.hpp"
#include "vcf/volume.hpp"

namespace fs = std::filesystem;
using namespace vcf;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kSegmentation = 3, kInference = 4 };

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::vector<fs::path> patch_files(const fs::path& where) {
  if (fs::is_regular_file(where)) return {where};
  if (!fs::is_directory(where)) throw IoError("no patch file or directory at " + where.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(where))
    if (e.is_regular_file() && e.path().extension() == ".vcfp") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no .vcfp files in " + where.string());
  return out;
}

std::string study_id_of(const fs::path& volume) {
  std::string name = volume_header_path(volume).filename().string();
  return name.substr(0, name.size() - std::string_view(".vvol.json").size());
}

std::string segmentation_json(const seg::SegmentationResult& r) {
  nlohmann::ordered_json j;
  const auto& c = r.cord;
  auto& cord = j["cord"] = nlohmann::ordered_json::array();
  for (int z = c.z_min; z <= c.z_max; ++z) {
    const auto i = static_cast<std::size_t>(z - c.z_min);
    cord.push_back({{"z", z}, {"x", c.x[i]}, {"y", c.y[i]}, {"detected", static_cast<bool>(c.detected[i])}});
  }
  const auto& col = r.column;
  j["sagittal"] = {{"z0", r.sagittal.z0}, {"rows", r.sagittal.rows}, {"cols", r.sagittal.cols}};
  j["column"] = {{"first_row", col.first_row}, {"last_row", col.last_row}, {"average_width", col.average_width}};
  auto& bounds = j["column"]["rows"] = nlohmann::ordered_json::array();
  for (int row = col.first_row; row <= col.last_row; ++row)
    bounds.push_back({{"row", row},
                      {"anterior", col.anterior[static_cast<std::size_t>(row)]},
                      {"posterior", col.posterior[static_cast<std::size_t>(row)]}});
  j["patch_count"] = r.patches.patches.size();
  return j.dump(2) + "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  write_file_atomic(path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertebral compression fracture detection on CT-like volumes"};
  app.require_subcommand(1);
  std::function<void()> action;

  // phantom gen
  auto* phantom_cmd = app.add_subcommand("phantom", "Synthetic spine phantoms");
  phantom_cmd->require_subcommand(1);
  auto* gen = phantom_cmd->add_subcommand("gen", "Generate a phantom cohort with a manifest");
  phantom::CohortSpec cohort_spec;
  std::string gen_out;
  int jobs = 0;
  gen->add_option("--n", cohort_spec.n_studies, "Number of studies")->required()->check(CLI::Range(2, 100000));
  gen->add_option("--prevalence", cohort_spec.fracture_prevalence, "Fraction of fractured studies")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", cohort_spec.seed, "Random seed")->required();
  gen->add_option("--prefix", cohort_spec.id_prefix, "Study id prefix");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  gen->callback([&] {
    action = [&] {
      const auto manifest = phantom::generate_cohort(cohort_spec, gen_out, jobs);
      std::cout << manifest.string() << "\n";
    };
  });

  // segment
  auto* segment = app.add_subcommand("segment", "Segment one volume; writes sagittal.pgm and segmentation.json");
  std::string volume_path, seg_out;
  segment->add_option("--volume", volume_path, "Volume (.vvol.json)")->required();
  segment->add_option("--out", seg_out, "Output directory")->required();
  segment->callback([&] {
    action = [&] {
      const auto v = load_volume(volume_path);
      const auto r = seg::segment_volume(v);
      ensure_dir(seg_out);
      write_file_atomic(fs::path(seg_out) / "sagittal.pgm", seg::sagittal_pgm(r.sagittal));
      write_file_atomic(fs::path(seg_out) / "segmentation.json", segmentation_json(r));
    };
  });

  // patches
  auto* patches = app.add_subcommand("patches", "Extract labelled patch files");
  std::string patches_volume, patches_manifest, patches_out;
  auto* pv = patches->add_option("--volume", patches_volume, "Volume (.vvol.json)");
  auto* pm = patches->add_option("--manifest", patches_manifest, "Process every study in a manifest");
  pv->excludes(pm);
  patches->add_option("--out", patches_out, "Output .vcfp file, or directory")->required();
  patches->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  patches->callback([&] {
    action = [&] {
      if (!patches_manifest.empty()) {
        ensure_dir(patches_out);
        for (const auto& seq : pipeline::cohort_patches(patches_manifest, jobs))
          write_patch_file(fs::path(patches_out) / (seq.study_id + ".vcfp"), seq);
        return;
      }
      if (patches_volume.empty()) throw CLI::RequiredError("--volume or --manifest");
      const auto seq = pipeline::study_patches(patches_volume);
      fs::path out(patches_out);
      if (out.extension() != ".vcfp") {
        ensure_dir(out);
        out /= study_id_of(patches_volume) + ".vcfp";
      }
      write_text(out, encode_patches(seq));
    };
  });

  // train-cnn
  auto* train_cnn = app.add_subcommand("train-cnn", "Train the patch CNN");
  std::string patches_dir, cnn_out;
  double val_frac = 0.15;
  cls::CnnConfig cnn_config;
  train_cnn->add_option("--patches-dir", patches_dir, "Directory of .vcfp files")->required();
  train_cnn->add_option("--val-frac", val_frac, "Validation fraction of studies")->check(CLI::Range(0.0, 1.0));
  train_cnn->add_option("--epochs", cnn_config.epochs, "Epochs")->check(CLI::Range(0, 10000));
  train_cnn->add_option("--lr", cnn_config.learning_rate, "Learning rate");
  train_cnn->add_option("--batch", cnn_config.batch_size, "Batch size")->check(CLI::Range(1, 100000));
  train_cnn->add_option("--seed", cnn_config.seed, "Random seed")->required();
  train_cnn->add_option("--out", cnn_out, "Checkpoint directory")->required();
  train_cnn->callback([&] {
    action = [&] {
      std::vector<seg::PatchSequence> seqs;
      std::vector<cohort::StudyRecord> records;
      for (const auto& f : patch_files(patches_dir)) {
        auto seq = read_patch_file(f);
        const auto label = pipeline::sequence_label(seq);
        if (!label) throw IoError("patch file " + f.string() + " has unlabelled patches");
        records.push_back({seq.study_id, 50, 'F', *label == 1, ""});
        seqs.push_back(std::move(seq));
      }
      const auto split = cls::split_by_study(records, val_frac, cnn_config.seed);
      const auto train = pipeline::patch_samples(seqs, split.train);
      const auto val = pipeline::patch_samples(seqs, split.val);
      std::cerr << "training on " << train.size() << " patches from " << split.train.size() << " studies, validating on "
                << val.size() << " patches from " << split.val.size() << " studies\n";
      auto result = cls::train_cnn(train, val, cnn_config, [](const cls::EpochStats& s) {
        std::cerr << "epoch " << s.epoch << " loss " << s.train_loss << " val_acc " << s.val_accuracy << "\n";
      });
      nn::save_checkpoint(cnn_out, result.model.to_checkpoint(cnn_config, cnn_config.epochs));
      write_file_atomic(fs::path(cnn_out) / "history.csv", cls::history_csv(result.history));
      nlohmann::ordered_json js;
      js["train"] = split.train;
      js["val"] = split.val;
      write_file_atomic(fs::path(cnn_out) / "split.json", js.dump(2) + "\n");
    };
  });

  // score
  auto* score = app.add_subcommand("score", "Score patch files into probability vectors");
  std::string cnn_dir, score_patches, score_out;
  score->add_option("--cnn", cnn_dir, "CNN checkpoint directory")->required();
  score->add_option("--patches", score_patches, ".vcfp file or directory")->required();
  score->add_option("--out", score_out, "Output CSV")->required();
  score->callback([&] {
    action = [&] {
      auto model = cls::CnnModel::from_checkpoint(nn::load_checkpoint(cnn_dir));
      std::vector<cls::ProbabilityVector> vectors;
      for (const auto& f : patch_files(score_patches)) {
        const auto seq = read_patch_file(f);
        auto v = cls::score_sequence(model, seq);
        v.label = pipeline::sequence_label(seq);
        vectors.push_back(std::move(v));
      }
      write_text(score_out, cls::format_probability_csv(vectors));
    };
  });

  // train-rnn
  auto* train_rnn = app.add_subcommand("train-rnn", "Train the sequence LSTM on probability vectors");
  std::string vectors_path, val_vectors_path, rnn_out;
  cls::RnnConfig rnn_config;
  train_rnn->add_option("--vectors", vectors_path, "Probability-vector CSV")->required();
  train_rnn->add_option("--val-vectors", val_vectors_path, "Optional validation CSV");
  train_rnn->add_option("--epochs", rnn_config.epochs, "Epochs")->check(CLI::Range(0, 10000));
  train_rnn->add_option("--lr", rnn_config.learning_rate, "Learning rate");
  train_rnn->add_option("--seed", rnn_config.seed, "Random seed")->required();
  train_rnn->add_option("--out", rnn_out, "Checkpoint directory")->required();
  train_rnn->callback([&] {
    action = [&] {
      const auto train = cls::read_probability_csv(vectors_path);
      const auto val = val_vectors_path.empty() ? std::vector<cls::ProbabilityVector>{}
                                                : cls::read_probability_csv(val_vectors_path);
      auto result = cls::train_rnn(train, val, rnn_config, [](const cls::EpochStats& s) {
        std::cerr << "epoch " << s.epoch << " loss " << s.train_loss << " val_acc " << s.val_accuracy << "\n";
      });
      nn::save_checkpoint(rnn_out, result.model.to_checkpoint(rnn_config, rnn_config.epochs));
      write_file_atomic(fs::path(rnn_out) / "history.csv", cls::history_csv(result.history));
    };
  });

  // infer
  auto* infer = app.add_subcommand("infer", "Run the full pipeline on one volume");
  std::string rnn_dir, report_path;
  bool timings = false;
  infer->add_option("--volume", volume_path, "Volume (.vvol.json)")->required();
  infer->add_option("--cnn", cnn_dir, "CNN checkpoint directory")->required();
  infer->add_option("--rnn", rnn_dir, "RNN checkpoint directory")->required();
  infer->add_option("--report", report_path, "Report JSON path")->required();
  infer->add_flag("--timings", timings, "Include per-stage timings in the report");
  infer->callback([&] {
    action = [&] {
      const auto models = pipeline::load_models(cnn_dir, rnn_dir);
      pipeline::RunConfig rc;
      rc.include_timings = timings;
      const auto r = pipeline::run_study(volume_path, models, rc);
      write_text(report_path, pipeline::report_json(r, timings));
      std::cout << r.study_id << " " << (r.decision ? "positive" : "negative") << " " << r.probability << "\n";
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a manifest; writes metrics.json and reports/");
  std::string manifest_path, eval_out;
  eval->add_option("--manifest", manifest_path, "Manifest CSV")->required();
  eval->add_option("--cnn", cnn_dir, "CNN checkpoint directory")->required();
  eval->add_option("--rnn", rnn_dir, "RNN checkpoint directory")->required();
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  eval->add_flag("--timings", timings, "Include per-stage timings in reports");
  eval->callback([&] {
    action = [&] {
      const auto models = pipeline::load_models(cnn_dir, rnn_dir);
      pipeline::RunConfig rc;
      rc.include_timings = timings;
      const auto e = pipeline::evaluate_cohort(manifest_path, models, eval_out, jobs, rc);
      std::cout << "accuracy " << e.metrics.accuracy << " sensitivity " << e.metrics.sensitivity << " specificity "
                << e.metrics.specificity << "\n";
    };
  });

  // heatmap
  auto* heat = app.add_subcommand("heatmap", "Occlusion heatmap for one patch; writes <out>.pgm and <out>.json");
  std::string patch_file, heat_out;
  std::size_t index = 0;
  int window = 8, stride = 4;
  heat->add_option("--cnn", cnn_dir, "CNN checkpoint directory")->required();
  heat->add_option("--patch-file", patch_file, ".vcfp file")->required();
  heat->add_option("--index", index, "Patch index")->required();
  heat->add_option("--window", window, "Occluder side in pixels")->check(CLI::Range(1, 32));
  heat->add_option("--stride", stride, "Occluder stride in pixels")->check(CLI::Range(1, 32));
  heat->add_option("--out", heat_out, "Output base path")->required();
  heat->callback([&] {
    action = [&] {
      auto model = cls::CnnModel::from_checkpoint(nn::load_checkpoint(cnn_dir));
      const auto seq = read_patch_file(patch_file);
      if (index >= seq.patches.size())
        throw CLI::ValidationError("--index", "patch file holds " + std::to_string(seq.patches.size()) + " patches");
      const auto h = occlusion_heatmap(model, seq.patches[index].pixels, window, stride);
      const fs::path base(heat_out);
      if (base.has_parent_path()) ensure_dir(base.parent_path());
      write_heatmap(base, h);
    };
  });

  // balance
  auto* balance = app.add_subcommand("balance", "Age/sex-matched subset of a manifest");
  std::string balance_out;
  cohort::BalanceConfig balance_config;
  balance->add_option("--manifest", manifest_path, "Manifest CSV")->required();
  balance->add_option("--out", balance_out, "Balanced manifest CSV")->required();
  balance->add_option("--caliper", balance_config.caliper_years, "Maximum age difference within a pair")
      ->check(CLI::Range(0, 100));
  balance->add_option("--max-gap", balance_config.max_mean_age_gap, "Bound on the class mean-age gap");
  balance->callback([&] {
    action = [&] {
      const auto records = cohort::read_manifest(manifest_path);
      auto balanced = cohort::balance_cohort(records, balance_config);
      // Relative volume paths stay valid next to the new manifest.
      const fs::path out(balance_out);
      for (auto& r : balanced) {
        const fs::path abs = fs::absolute(cohort::resolve_volume(manifest_path, r));
        r.volume_path = fs::path(r.volume_path).is_absolute()
                            ? r.volume_path
                            : abs.lexically_relative(fs::absolute(out).parent_path()).generic_string();
      }
      write_text(out, cohort::format_manifest(balanced));
      std::cout << "before\n" << cohort::demographics_json(cohort::demographics(records)) << "after\n"
                << cohort::demographics_json(cohort::demographics(balanced));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  try {
    if (action) action();
    return kOk;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const SegmentationError& e) {
    std::cerr << "segmentation error [" << e.stage() << "]: " << e.what() << "\n";
    return kSegmentation;
  } catch (const InferenceError& e) {
    std::cerr << "inference error: " << e.what() << "\n";
    return kInference;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
}
