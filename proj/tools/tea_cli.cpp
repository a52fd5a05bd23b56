// tea: command-line front end (gen, train, eval, check, inspect-bias, dump-attn).
//
// Exit codes: 0 success, 1 usage or configuration error, 2 invalid data,
// 3 failed checks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "tea/checkpoint.hpp"
#include "tea/checks.hpp"
#include "tea/evaluation.hpp"
#include "tea/run_config.hpp"
#include "tea/synth_data.hpp"
#include "tea/trainer.hpp"

#ifndef TEA_BUILD_TYPE
#define TEA_BUILD_TYPE "unknown"
#endif

namespace {

using namespace tea;

enum ExitCode { kOk = 0, kUsage = 1, kInvalid = 2, kCheckFailed = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Options shared by every subcommand.
struct Common {
  std::string config_file;
  std::vector<std::string> assignments;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "TOML or JSON run config")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.assignments, "override one config value, e.g. --set model.d=32");
  cmd->add_option("--threads", c.threads, "worker threads (default 1, bit-reproducible for any value)")
      ->check(CLI::PositiveNumber);
}

/// defaults -> config file -> --set -> dedicated flags (applied by the caller).
RunConfig base_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_file.empty()) cfg.apply_file(c.config_file);
  for (const auto& a : c.assignments) cfg.apply_assignment(a);
  if (c.threads) cfg.train.threads = *c.threads;
  return cfg;
}

void require(const std::string& value, const char* what) {
  if (value.empty()) throw UsageError(std::string("missing ") + what);
}

void refuse_overwrite(const std::string& out, const std::vector<std::string>& inputs) {
  namespace fs = std::filesystem;
  for (const auto& in : inputs) {
    if (!in.empty() && !out.empty() && fs::exists(in) && fs::exists(out) && fs::equivalent(in, out)) {
      throw UsageError("output '" + out + "' would overwrite input '" + in + "'");
    }
  }
}

std::vector<VideoSample> load(const std::string& path) {
  if (!std::filesystem::exists(path)) throw UsageError("no such file '" + path + "'");
  IngestWarnings warnings;
  auto samples = load_annotations(path, &warnings);
  for (const auto& w : warnings.messages) std::cerr << "warning: " << w << '\n';
  return samples;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("error while writing '" + path + "'");
}

std::string stem_of(const std::string& path) {
  const auto dot = path.rfind(".json");
  return dot != std::string::npos && dot + 5 == path.size() ? path.substr(0, dot) : path;
}

// --- gen -------------------------------------------------------------------

struct GenArgs {
  Common common;
  std::optional<std::string> task;
  std::optional<int> num_samples;
  std::optional<std::uint64_t> seed;
  std::optional<double> corruption;
  std::string out;
  std::string answer_key;
  bool split = false;
};

int run_gen(const GenArgs& a) {
  RunConfig cfg = base_config(a.common);
  if (a.task) cfg.apply_assignment("synth.task=" + *a.task);
  if (a.num_samples) cfg.synth.num_samples = *a.num_samples;
  if (a.seed) cfg.synth.seed = *a.seed;
  if (a.corruption) cfg.synth.corruption_rate = *a.corruption;
  const std::string out = a.out.empty() ? cfg.paths.out : a.out;
  require(out, "--out");
  try {
    cfg.synth.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto data = generate_task(cfg.synth);
  write_text(out, dump_annotations(data.samples));
  const std::string key_path = a.answer_key.empty() ? stem_of(out) + ".answers.json" : a.answer_key;
  write_text(key_path, dump_answer_key(data.answer_key));
  std::cout << "wrote " << data.samples.size() << " " << to_string(cfg.synth.task) << " samples to " << out << '\n';
  if (a.split) {
    const auto split = split_dataset(data.samples, cfg.synth.seed);
    write_text(stem_of(out) + ".train.json", dump_annotations(split.train));
    write_text(stem_of(out) + ".val.json", dump_annotations(split.val));
    std::cout << "split " << split.train.size() << " train / " << split.val.size() << " val\n";
  }
  return kOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data, val_data, checkpoint, loss_csv;
  std::optional<int> epochs, steps, batch_size;
  std::optional<double> lr, time_budget;
  std::optional<std::uint64_t> seed;
  bool no_spatial = false, no_adapter = false, no_clues = false, word_only = false, global_attention = false;
  std::optional<std::string> clue_source;
};

void apply_switches(RunConfig& cfg, const TrainArgs& a) {
  if (a.no_spatial) cfg.model.enable_spatial_bias = false;
  if (a.no_adapter) cfg.model.enable_temporal_adapter = false;
  if (a.no_clues) cfg.model.enable_clues = false;
  if (a.word_only) cfg.model.spatial.multi_granularity = false;
  if (a.global_attention) cfg.model.frame_local_attention = false;
  if (a.clue_source) cfg.apply_assignment("model.clues.fine_grained_source=" + *a.clue_source);
}

int run_train(const TrainArgs& a) {
  RunConfig cfg = base_config(a.common);
  apply_switches(cfg, a);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.steps) cfg.train.max_steps = *a.steps;
  if (a.batch_size) cfg.train.batch_size = *a.batch_size;
  if (a.lr) cfg.train.learning_rate = *a.lr;
  if (a.time_budget) cfg.train.time_budget_s = *a.time_budget;
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.model_seed = *a.seed;
  }
  const std::string data_path = a.data.empty() ? cfg.paths.data : a.data;
  const std::string val_path = a.val_data.empty() ? cfg.paths.val_data : a.val_data;
  const std::string ckpt = a.checkpoint.empty() ? cfg.paths.checkpoint : a.checkpoint;
  const std::string loss_path = a.loss_csv.empty() ? cfg.paths.loss_csv : a.loss_csv;
  require(data_path, "--data");
  require(ckpt, "--checkpoint");
  refuse_overwrite(ckpt, {data_path, val_path});
  refuse_overwrite(loss_path, {data_path, val_path});

  const auto train = load(data_path);
  Model<float> model(cfg.model, TokenVocab::build(train), cfg.model_seed);
  std::vector<Model<float>::Prepared> prepared;
  prepared.reserve(train.size());
  for (const auto& s : train) prepared.push_back(model.prepare(s));

  std::ofstream loss_out, timing_out;
  if (!loss_path.empty()) {
    loss_out.open(loss_path, std::ios::trunc);
    timing_out.open(loss_path + ".timing.csv", std::ios::trunc);
    if (!loss_out || !timing_out) throw std::runtime_error("cannot write '" + loss_path + "'");
    loss_out << "step,loss\n" << std::setprecision(9);
    timing_out << "step,wall_ms\n" << std::fixed << std::setprecision(3);
  }
  const auto log = fit(model, prepared, cfg.train, [&](const TrainLogEntry& e) {
    if (loss_out.is_open()) {
      loss_out << e.step << ',' << e.loss << '\n';
      timing_out << e.step << ',' << e.wall_ms << '\n';
    }
  });
  save_checkpoint(model, ckpt);
  std::cout << "trained " << log.size() << " steps";
  if (!log.empty()) std::cout << ", final loss " << log.back().loss << ", " << log.back().wall_ms / 1000.0 << " s";
  std::cout << "; checkpoint " << ckpt << '\n';
  if (!val_path.empty()) {
    const auto report = evaluate(model, load(val_path));
    std::cout << "val accuracy " << report.accuracy << ", anls " << report.anls << " (" << report.num_samples
              << " samples)\n";
  }
  return kOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string data, checkpoint, report;
};

int run_eval(const EvalArgs& a) {
  const RunConfig cfg = base_config(a.common);
  const std::string data_path = a.data.empty() ? cfg.paths.data : a.data;
  const std::string ckpt = a.checkpoint.empty() ? cfg.paths.checkpoint : a.checkpoint;
  const std::string report_path = a.report.empty() ? cfg.paths.report : a.report;
  require(data_path, "--data");
  require(ckpt, "--checkpoint");
  refuse_overwrite(report_path, {data_path, ckpt});
  if (!std::filesystem::exists(ckpt)) throw UsageError("no such file '" + ckpt + "'");
  const auto model = load_checkpoint<float>(ckpt);
  const auto report = evaluate(model, load(data_path));
  if (!report_path.empty()) write_text(report_path, report.to_json());
  std::cout << "accuracy " << report.accuracy << ", anls " << report.anls << " over " << report.num_samples
            << " samples";
  if (report.num_failures > 0) std::cout << " (" << report.num_failures << " generation failures)";
  std::cout << '\n';
  return kOk;
}

// --- check -----------------------------------------------------------------

struct CheckArgs {
  Common common;
  std::string module = "all";
  std::uint64_t seed = 0;
};

int run_check(const CheckArgs& a) {
  if (a.module != "all" && std::find(check_modules().begin(), check_modules().end(), a.module) == check_modules().end()) {
    throw UsageError("unknown module '" + a.module + "'");
  }
  const auto results = run_checks(a.module, a.seed);
  std::vector<std::string> failed;
  for (const auto& r : results) {
    std::cout << r.name << ": " << (r.passed ? "PASS" : "FAIL");
    if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
    std::cout << '\n';
    if (!r.passed) failed.push_back(r.name);
  }
  if (!failed.empty()) {
    std::cerr << failed.size() << " check(s) failed:";
    for (const auto& f : failed) std::cerr << ' ' << f;
    std::cerr << '\n';
    return kCheckFailed;
  }
  return kOk;
}

// --- inspect-bias / dump-attn ---------------------------------------------

struct SampleArgs {
  Common common;
  std::string data, checkpoint, out, clue_out;
  int index = 0;
};

const VideoSample& pick(const std::vector<VideoSample>& samples, int index) {
  if (index < 0 || index >= static_cast<int>(samples.size())) {
    throw UsageError("--index " + std::to_string(index) + " out of range (" + std::to_string(samples.size()) +
                     " samples)");
  }
  return samples[index];
}

int run_inspect_bias(const SampleArgs& a) {
  const RunConfig cfg = base_config(a.common);
  const std::string data_path = a.data.empty() ? cfg.paths.data : a.data;
  const std::string out = a.out.empty() ? cfg.paths.out : a.out;
  require(data_path, "--data");
  require(out, "--out");
  refuse_overwrite(out, {data_path, a.checkpoint});
  const auto samples = load(data_path);
  const auto& sample = pick(samples, a.index);
  std::optional<Model<float>> model;
  if (!a.checkpoint.empty()) {
    model.emplace(load_checkpoint<float>(a.checkpoint));
  } else {
    model.emplace(cfg.model, TokenVocab::build(samples), cfg.model_seed);
  }
  const auto& mc = model->config();
  SpatialBiasParams<float> params;
  params.config = mc.spatial;
  const std::string prefix = mc.per_layer_spatial_bias ? "enc.0.spatial." : "spatial.";
  const char* names[] = {"word", "line", "para"};
  for (int g = 0; g < kNumGranularities; ++g) {
    params.projection[g] = model->params().value(model->param_index(prefix + names[g]));
  }
  const auto seq = build_entity_sequence(sample, mc.text_slots, mc.object_slots);
  const auto bias = bias_tensor(seq, params);
  std::ofstream csv(out, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write '" + out + "'");
  csv << "head,i,j,value\n" << std::setprecision(9);
  for (int h = 0; h < bias.heads(); ++h) {
    for (Eigen::Index i = 0; i < bias.length(); ++i) {
      for (Eigen::Index j = 0; j < bias.length(); ++j) csv << h << ',' << i << ',' << j << ',' << bias(h, i, j) << '\n';
    }
  }
  std::cout << "wrote " << bias.heads() << "x" << bias.length() << "x" << bias.length() << " bias to " << out << '\n';
  return kOk;
}

int run_dump_attn(const SampleArgs& a) {
  const RunConfig cfg = base_config(a.common);
  const std::string data_path = a.data.empty() ? cfg.paths.data : a.data;
  const std::string ckpt = a.checkpoint.empty() ? cfg.paths.checkpoint : a.checkpoint;
  const std::string out = a.out.empty() ? cfg.paths.out : a.out;
  require(data_path, "--data");
  require(ckpt, "--checkpoint");
  require(out, "--out");
  refuse_overwrite(out, {data_path, ckpt});
  if (!std::filesystem::exists(ckpt)) throw UsageError("no such file '" + ckpt + "'");
  const auto model = load_checkpoint<float>(ckpt);
  const auto samples = load(data_path);
  GenerationTrace trace;
  const auto rows = dump_cross_attention(model, pick(samples, a.index), out, &trace);
  if (!a.clue_out.empty()) write_clue_attention_csv(trace, a.clue_out);
  std::cout << "wrote " << rows.size() << " cross-attention rows over " << trace.cross_weights.size()
            << " decode steps to " << out << '\n';
  return kOk;
}

std::string version_string() {
  std::ostringstream os;
  os << "tea " << TEA_VERSION << " (Eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
     << EIGEN_MINOR_VERSION << ", C++ " << __cplusplus << ", " <<
#if defined(__clang__)
      "clang " << __clang_version__
#elif defined(__GNUC__)
      "g++ " << __VERSION__
#else
      "unknown compiler"
#endif
     << ", " << TEA_BUILD_TYPE << " build)";
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal video text question answering toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset and its answer key");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--task", gen.task, "spatial | tracking | redundancy");
  gen_cmd->add_option("-n,--num-samples", gen.num_samples);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--corruption-rate", gen.corruption);
  gen_cmd->add_option("-o,--out", gen.out, "annotation JSON to write");
  gen_cmd->add_option("--answer-key", gen.answer_key, "default: <out>.answers.json");
  gen_cmd->add_flag("--split", gen.split, "also write <out>.train.json and <out>.val.json (80/20)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model, write a checkpoint and a loss CSV");
  add_common(train_cmd, train.common);
  train_cmd->add_option("-d,--data", train.data);
  train_cmd->add_option("--val-data", train.val_data, "evaluate on this set after training");
  train_cmd->add_option("--checkpoint", train.checkpoint);
  train_cmd->add_option("--loss-csv", train.loss_csv, "step,loss per update; wall time goes to <csv>.timing.csv");
  train_cmd->add_option("--epochs", train.epochs);
  train_cmd->add_option("--steps", train.steps, "stop after this many updates");
  train_cmd->add_option("--batch-size", train.batch_size);
  train_cmd->add_option("--lr", train.lr);
  train_cmd->add_option("--time-budget", train.time_budget, "seconds");
  train_cmd->add_option("--seed", train.seed, "model init and shuffling seed");
  train_cmd->add_flag("--no-spatial-bias", train.no_spatial);
  train_cmd->add_flag("--no-temporal-adapter", train.no_adapter);
  train_cmd->add_flag("--no-clues", train.no_clues);
  train_cmd->add_flag("--word-only", train.word_only, "word-level spatial bias only");
  train_cmd->add_flag("--global-attention", train.global_attention, "entities attend across frames");
  train_cmd->add_option("--clue-source", train.clue_source, "scene_text | scene_text_and_objects");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint and write an EvalReport JSON");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("-d,--data", ev.data);
  eval_cmd->add_option("--checkpoint", ev.checkpoint);
  eval_cmd->add_option("--report", ev.report);

  CheckArgs chk;
  auto* check_cmd = app.add_subcommand("check", "run the invariant and gradient suites");
  add_common(check_cmd, chk.common);
  check_cmd->add_option("--module", chk.module, "all | entities | spatial_bias | temporal_adapter | encoder_decoder | "
                                                "clues_aggregation | evaluation");
  check_cmd->add_option("--seed", chk.seed);

  SampleArgs bias;
  auto* bias_cmd = app.add_subcommand("inspect-bias", "write one sample's spatial bias as head,i,j,value CSV");
  add_common(bias_cmd, bias.common);
  bias_cmd->add_option("-d,--data", bias.data);
  bias_cmd->add_option("--checkpoint", bias.checkpoint, "fresh parameters from the config when omitted");
  bias_cmd->add_option("--index", bias.index, "sample index");
  bias_cmd->add_option("-o,--out", bias.out);

  SampleArgs attn;
  auto* attn_cmd = app.add_subcommand("dump-attn", "write decoder cross-attention of one sample as CSV");
  add_common(attn_cmd, attn.common);
  attn_cmd->add_option("-d,--data", attn.data);
  attn_cmd->add_option("--checkpoint", attn.checkpoint);
  attn_cmd->add_option("--index", attn.index, "sample index");
  attn_cmd->add_option("-o,--out", attn.out);
  attn_cmd->add_option("--clue-out", attn.clue_out, "also write clue cross-attention CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(ev);
    if (*check_cmd) return run_check(chk);
    if (*bias_cmd) return run_inspect_bias(bias);
    if (*attn_cmd) return run_dump_attn(attn);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigurationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "invalid data: " << e.what() << '\n';
    return kInvalid;
  } catch (const ParseError& e) {
    std::cerr << "invalid data: " << e.what() << '\n';
    return kInvalid;
  } catch (const CheckpointError& e) {
    std::cerr << "invalid data: " << e.what() << '\n';
    return kInvalid;
  } catch (const CapacityError& e) {
    std::cerr << "invalid data: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kUsage;
}
