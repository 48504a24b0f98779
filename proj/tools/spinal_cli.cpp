#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "spinal/dataset.hpp"
#include "spinal/gradcheck.hpp"
#include "spinal/landmarks.hpp"
#include "spinal/render.hpp"
#include "spinal/synthgen.hpp"
#include "spinal/train.hpp"

namespace {

namespace fs = std::filesystem;
using namespace spinal;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

nn::ModelConfig model_for(const Dataset& dataset) {
  nn::ModelConfig cfg;
  cfg.input_height = dataset.height();
  cfg.input_width = dataset.width();
  cfg.n_landmarks = dataset.n_landmarks();
  cfg.fc_sizes.back() = 2 * cfg.n_landmarks;
  return cfg;
}

struct GenerateArgs {
  std::uint64_t seed = 0;
  std::string out;
  int train = 80, test = 15, val = 5;
  int width = 64, height = 128;
  double severity_min = 0.0, severity_max = 0.2;
};

int run_generate(const GenerateArgs& a) {
  generate_dataset(a.seed, {a.train, a.test, a.val}, a.height, a.width,
                   a.severity_min, a.severity_max, a.out);
  std::cout << "wrote " << (a.train + a.test + a.val) << " samples to " << a.out
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, log, loss = "mse-bpd";
  double alpha = 0.01, lr = 1e-4;
  int batch = 4, epochs = 200;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  Dataset dataset = Dataset::open(a.data);
  TrainConfig cfg;
  cfg.alpha = a.alpha;
  cfg.lr = a.lr;
  cfg.batch_size = a.batch;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.loss_kind = a.loss == "mse" ? LossKind::kMse : LossKind::kMseBpd;
  cfg.model = model_for(dataset);

  const std::string log_path = a.log.empty() ? a.out + ".log.jsonl" : a.log;
  std::ofstream log(log_path);
  if (!log) throw IoError("train: cannot open log file " + log_path);
  TrainResult result = train(cfg, dataset, &log);
  save_checkpoint(a.out, result.checkpoint);
  std::cout << "checkpoint: " << a.out << "\nloss log: " << log_path << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string data, ckpt, split = "test", out;
};

int run_evaluate(const EvaluateArgs& a) {
  Dataset dataset = Dataset::open(a.data);
  EvalReport report = a.ckpt == "oracle"
                          ? evaluate_oracle(dataset, a.split)
                          : evaluate(load_checkpoint(a.ckpt), dataset, a.split);
  const std::string json = report.to_json();
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw IoError("evaluate: cannot open " + a.out);
    out << json << "\n";
  }
  std::cout << json << "\n";
  return 0;
}

struct RenderArgs {
  std::string data, ckpt, sample, out, svg;
};

int run_render(const RenderArgs& a) {
  Dataset dataset = Dataset::open(a.data);
  DatasetSample sample = dataset.load_sample(a.sample);
  LandmarkMatrix pred;
  if (a.ckpt == "oracle") {
    pred = sample.landmarks;
  } else {
    Checkpoint ckpt = load_checkpoint(a.ckpt);
    pred = predict(ckpt.config, ckpt.params, {sample}).front();
  }
  write_pgm(a.out, render_overlay(sample.image, sample.landmarks, pred));
  if (!a.svg.empty()) {
    std::ofstream out(a.svg);
    if (!out) throw IoError("render: cannot open " + a.svg);
    out << render_overlay_svg(dataset.height(), dataset.width(),
                              sample.landmarks, pred);
  }
  std::cout << "overlay: " << a.out << "\n";
  return 0;
}

struct ExtractArgs {
  std::string mask, out;
  int n_vertebrae = kNumVertebrae;
};

int run_extract(const ExtractArgs& a) {
  PgmImage pgm = read_pgm(a.mask);
  MaskImage mask;
  mask.width = pgm.width;
  mask.height = pgm.height;
  mask.labels = std::move(pgm.pixels);
  LandmarkMatrix lm = extract_vertebra_corners(mask, a.n_vertebrae);
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index k = 0; k < lm.rows(); ++k)
    j.push_back({lm(k, 0), lm(k, 1)});
  std::ofstream out(a.out);
  if (!out) throw IoError("extract-landmarks: cannot open " + a.out);
  out << j.dump(2) << "\n";
  std::cout << "landmarks: " << a.out << "\n";
  return 0;
}

int run_gradcheck(std::uint64_t seed, bool corrupt_bpd) {
  gradcheck::Report report = gradcheck::run_suite(seed, corrupt_bpd);
  for (const auto& c : report.checks)
    std::printf("%-22s max rel err %.3e  (tol %.0e)  %s\n", c.name.c_str(),
                c.max_rel_error, c.tolerance, c.pass ? "ok" : "FAIL");
  std::printf("suite: %s in %.1f s\n", report.all_pass ? "pass" : "FAIL",
              report.seconds);
  return report.all_pass ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape-aware vertebral landmark detection"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* cmd_gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  cmd_gen->add_option("--seed", gen.seed);
  cmd_gen->add_option("--out", gen.out)->required();
  cmd_gen->add_option("--train", gen.train);
  cmd_gen->add_option("--test", gen.test);
  cmd_gen->add_option("--val", gen.val);
  cmd_gen->add_option("--width", gen.width);
  cmd_gen->add_option("--height", gen.height);
  cmd_gen->add_option("--severity-min", gen.severity_min);
  cmd_gen->add_option("--severity-max", gen.severity_max);

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Train a landmark model");
  cmd_train->add_option("--data", tr.data)->required();
  cmd_train->add_option("--out", tr.out)->required();
  cmd_train->add_option("--log", tr.log);
  cmd_train->add_option("--loss", tr.loss)
      ->check(CLI::IsMember({"mse", "mse-bpd"}));
  cmd_train->add_option("--alpha", tr.alpha);
  cmd_train->add_option("--lr", tr.lr);
  cmd_train->add_option("--batch", tr.batch);
  cmd_train->add_option("--epochs", tr.epochs);
  cmd_train->add_option("--seed", tr.seed);

  EvaluateArgs ev;
  auto* cmd_eval = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  cmd_eval->add_option("--data", ev.data)->required();
  cmd_eval->add_option("--ckpt", ev.ckpt)->required();
  cmd_eval->add_option("--split", ev.split)
      ->check(CLI::IsMember({"train", "val", "test"}));
  cmd_eval->add_option("--out", ev.out);

  RenderArgs rd;
  auto* cmd_render = app.add_subcommand("render", "Render an overlay image");
  cmd_render->add_option("--data", rd.data)->required();
  cmd_render->add_option("--ckpt", rd.ckpt)->required();
  cmd_render->add_option("--sample", rd.sample)->required();
  cmd_render->add_option("--out", rd.out)->required();
  cmd_render->add_option("--svg", rd.svg);

  ExtractArgs ex;
  auto* cmd_extract =
      app.add_subcommand("extract-landmarks", "Extract corners from a mask");
  cmd_extract->add_option("--mask", ex.mask)->required();
  cmd_extract->add_option("--out", ex.out)->required();
  cmd_extract->add_option("--vertebrae", ex.n_vertebrae);

  std::uint64_t gc_seed = 42;
  bool gc_corrupt = false;
  auto* cmd_gc =
      app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  cmd_gc->add_option("--seed", gc_seed);
  cmd_gc->add_flag("--corrupt-bpd", gc_corrupt)->group("");  // test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*cmd_gen) return run_generate(gen);
    if (*cmd_train) return run_train(tr);
    if (*cmd_eval) return run_evaluate(ev);
    if (*cmd_render) return run_render(rd);
    if (*cmd_extract) return run_extract(ex);
    if (*cmd_gc) return run_gradcheck(gc_seed, gc_corrupt);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const GenerationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ExtractionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
