// speedy: generate synthetic corpora, train anytime segmentation models,
// run budgeted inference, and report accuracy-vs-cost profiles.
//
// Exit codes: 0 success, 2 I/O, 3 config/data mismatch, 4 invalid argument.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "speedy/config.hpp"
#include "speedy/corpus_io.hpp"
#include "speedy/model_io.hpp"
#include "speedy/runtime.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace speedy;

namespace {

constexpr int kExitIo = 2;
constexpr int kExitMismatch = 3;
constexpr int kExitInvalid = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string budget;
  std::string out;
  std::optional<std::size_t> jobs;
  std::string data;
  std::string model;
  std::optional<std::size_t> count;
  bool wall_clock = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double parse_budget(const std::string& text) {
  if (text.empty() || text == "unlimited") return kUnlimitedBudget;
  std::size_t used = 0;
  double b = 0.0;
  try {
    b = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InvalidInput("--budget must be a number or 'unlimited', got '" + text + "'");
  }
  if (used != text.size() || std::isnan(b)) throw InvalidInput("--budget must be a number or 'unlimited'");
  if (b < 0.0) throw InvalidInput("--budget must be >= 0");
  return b;
}

RunConfig load_config(const Options& o) {
  std::string text;
  if (!o.config.empty()) text = read_file(o.config);
  RunConfig c = parse_run_config(text, environment_overrides());
  if (o.jobs) c.train.jobs = *o.jobs;
  if (!o.data.empty()) c.data = o.data;
  if (!o.model.empty()) c.model = o.model;
  if (o.count) c.count = *o.count;
  c.validate();
  return c;
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw InvalidInput("--out DIR is required");
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec || !fs::is_directory(o.out)) throw IoError("cannot create output directory " + o.out);
  return o.out;
}

fs::path require_data(const RunConfig& c) {
  if (c.data.empty()) throw InvalidInput("--data DIR is required");
  if (!fs::is_regular_file(fs::path(c.data) / "manifest.json"))
    throw IoError("no corpus manifest in " + c.data);
  return c.data;
}

fs::path require_model(const RunConfig& c) {
  if (c.model.empty()) throw InvalidInput("--model FILE is required");
  if (!fs::is_regular_file(c.model)) throw IoError("cannot read model " + c.model);
  return c.model;
}

std::string label_grid(std::span<const std::uint32_t> labels, std::size_t width) {
  std::string out;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    out += std::to_string(labels[p]);
    out += (p + 1) % width == 0 ? '\n' : ' ';
  }
  return out;
}

std::vector<std::uint32_t> predicted_labels(const ScoreField& scores) {
  std::vector<std::uint32_t> out(scores.num_elements());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<std::uint32_t>(argmax(scores.element(j)));
  return out;
}

std::string ppm(std::span<const std::uint32_t> values, std::size_t width, std::size_t height) {
  static const unsigned char kPalette[][3] = {{230, 25, 75},   {60, 180, 75},  {255, 225, 25}, {0, 130, 200},
                                              {245, 130, 48},  {145, 30, 180}, {70, 240, 240}, {240, 50, 230},
                                              {210, 245, 60},  {250, 190, 212}, {0, 128, 128}, {170, 110, 40}};
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (std::uint32_t v : values)
    for (int c = 0; c < 3; ++c) out += static_cast<char>(kPalette[v % 12][c]);
  return out;
}

std::string stem(const std::string& name) { return fs::path(name).stem().string(); }

json metrics_json(const Metrics& m) {
  json recall = json::array();
  for (double r : m.class_recall) recall.push_back(std::isnan(r) ? json(nullptr) : json(r));
  return {{"pixel_accuracy", m.pixel_accuracy}, {"class_accuracy", m.class_accuracy}, {"class_recall", recall}};
}

int cmd_generate(const Options& o) {
  RunConfig c = load_config(o);
  const fs::path out = require_out(o);
  const std::uint64_t seed = o.seed.value_or(c.scene.rng_seed);
  if (c.count == 0) std::cerr << "warning: count is 0, writing an empty corpus\n";
  const RenderedCorpus corpus = render_corpus(c.scene, c.count, seed);
  write_corpus(out, corpus);
  std::cout << "wrote " << c.count << " scenes and manifest.json to " << out.string() << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  RunConfig c = load_config(o);
  if (o.seed) c.train.seed = *o.seed;
  const fs::path data = require_data(c);
  const fs::path out = require_out(o);
  const LoadedCorpus corpus = load_corpus(data);
  if (corpus.instances.size() < c.train.folds)
    throw DimensionMismatch("corpus has " + std::to_string(corpus.instances.size()) + " instances but " +
                            std::to_string(c.train.folds) + " stacking folds were requested");
  const auto start = Clock::now();
  const TrainResult r = train(corpus.instances, c.train);
  const double seconds = seconds_since(start);
  save_model(r.model, out / "model.json");

  std::string log = "iteration,selector,tree_depth,max_depth,lambda,alpha,delta_risk,cost,ratio,risk,pixel_acc,class_acc\n";
  char buf[512];
  for (const IterationLog& l : r.log) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", l.iteration,
                  l.selector.c_str(), l.tree_depth, l.learner.max_depth, l.learner.lambda, l.alpha, l.delta_risk,
                  l.cost, l.ratio, l.risk, l.pixel_accuracy, l.class_accuracy);
    log += buf;
  }
  write_file(out / "train_log.csv", log);
  json summary = {{"stages", r.model.stages.size()},
                  {"requested_iterations", c.train.iterations},
                  {"termination", r.model.metadata.termination},
                  {"config_hash", r.model.metadata.config_hash},
                  {"initial_risk", r.initial_risk},
                  {"initial_pixel_accuracy", r.initial_pixel_accuracy},
                  {"total_stage_cost", r.model.total_cost()}};
  if (!r.log.empty()) {
    summary["final_risk"] = r.log.back().risk;
    summary["final_pixel_accuracy"] = r.log.back().pixel_accuracy;
    summary["final_class_accuracy"] = r.log.back().class_accuracy;
  }
  if (o.wall_clock) summary["wall_seconds"] = seconds;
  write_file(out / "train_summary.json", summary.dump(1) + "\n");
  if (r.model.stages.size() < c.train.iterations)
    std::cerr << "training stopped early: " << r.model.metadata.termination << "\n";
  std::cout << "trained " << r.model.stages.size() << " stages in " << seconds << " s; model written to "
            << (out / "model.json").string() << "\n";
  return 0;
}

int cmd_infer(const Options& o) {
  const RunConfig c = load_config(o);
  const double budget = parse_budget(o.budget);
  const fs::path data = require_data(c);
  const fs::path model_path = require_model(c);
  const fs::path out = require_out(o);
  const AdditiveModel model = load_model(model_path);
  const LoadedCorpus corpus = load_corpus(data);

  json summary = json::array();
  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    const StructuredInstance& inst = corpus.instances[i];
    const std::string name = stem(corpus.names[i]);
    const auto start = Clock::now();
    const InferenceResult r = infer(model, inst, budget);
    const double seconds = seconds_since(start);
    const auto labels = predicted_labels(r.scores);
    write_file(out / (name + ".labels.txt"), label_grid(labels, inst.width));

    std::string masks;
    json ledger = json::array();
    for (const StageCharge& e : r.ledger.entries()) {
      std::vector<std::uint32_t> mask(inst.num_pixels(), 0);
      json selected = json::array();
      for (const SegmentRef& ref : e.selected) {
        for (std::size_t p : inst.hierarchy->segment(ref).pixels) mask[p] = 1;
        selected.push_back({ref.level, ref.index});
      }
      masks += "stage " + std::to_string(e.stage) + "\n" + label_grid(mask, inst.width);
      json centers = json::array();
      for (const FeatureRef& f : e.centers) centers.push_back({f.group, f.center});
      ledger.push_back({{"stage", e.stage},
                        {"selector_cost", e.selector_cost},
                        {"predictor_cost", e.predictor_cost},
                        {"group_cost", e.group_cost},
                        {"center_cost", e.center_cost},
                        {"total", e.total()},
                        {"groups", e.groups},
                        {"centers", centers},
                        {"selected", selected}});
      if (c.images) {
        char suffix[32];
        std::snprintf(suffix, sizeof suffix, ".mask_%03zu.ppm", e.stage);
        write_file(out / (name + suffix), ppm(mask, inst.width, inst.height));
      }
    }
    write_file(out / (name + ".masks.txt"), masks);
    write_file(out / (name + ".ledger.json"), json({{"total", r.ledger.total()}, {"stages", ledger}}).dump(1) + "\n");
    if (c.images) write_file(out / (name + ".labels.ppm"), ppm(labels, inst.width, inst.height));

    const Metrics m = evaluate(r.scores, inst.labels);
    summary.push_back({{"name", name},
                       {"stages_executed", r.stages_executed},
                       {"cost", r.ledger.total()},
                       {"metrics", metrics_json(m)}});
    if (o.wall_clock) summary.back()["wall_seconds"] = seconds;
  }
  write_file(out / "infer_summary.json", summary.dump(1) + "\n");
  std::cout << "inferred " << corpus.instances.size() << " instances into " << out.string() << "\n";
  return 0;
}

int cmd_profile(const Options& o) {
  const RunConfig c = load_config(o);
  const fs::path data = require_data(c);
  const fs::path model_path = require_model(c);
  std::optional<double> single;
  if (!o.budget.empty()) single = parse_budget(o.budget);
  const fs::path out = require_out(o);
  const AdditiveModel model = load_model(model_path);
  const LoadedCorpus corpus = load_corpus(data);

  std::vector<double> budgets = c.budgets;
  if (single) {
    budgets = {*single};
  } else if (budgets.empty()) {
    const double full = evaluate_corpus(model, corpus.instances).mean_cost;
    for (double f : c.budget_fractions) budgets.push_back(f * full);
  }
  const auto rows = profile_corpus(model, corpus.instances, budgets);
  write_file(out / "profile.csv", profile_csv(rows));
  std::cout << profile_csv(rows);
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig c = load_config(o);
  const double budget = parse_budget(o.budget);
  const fs::path data = require_data(c);
  const fs::path model_path = require_model(c);
  const fs::path out = require_out(o);
  const AdditiveModel model = load_model(model_path);
  const LoadedCorpus corpus = load_corpus(data);
  const auto start = Clock::now();
  const CorpusEvaluation ev = evaluate_corpus(model, corpus.instances, budget);
  const double seconds = seconds_since(start);

  const std::string budget_text = std::isinf(budget) ? "unlimited" : std::to_string(budget);
  char buf[256];
  std::string table = "budget       class_acc  pixel_acc  risk        mean_cost\n";
  std::snprintf(buf, sizeof buf, "%-12s %-10.4f %-10.4f %-11.3f %.3f\n", budget_text.c_str(),
                ev.metrics.class_accuracy, ev.metrics.pixel_accuracy, ev.risk, ev.mean_cost);
  table += buf;
  table += "\nclass  recall\n";
  for (std::size_t k = 0; k < ev.metrics.class_recall.size(); ++k) {
    const double r = ev.metrics.class_recall[k];
    if (std::isnan(r))
      std::snprintf(buf, sizeof buf, "%-6zu absent\n", k);
    else
      std::snprintf(buf, sizeof buf, "%-6zu %.4f\n", k, r);
    table += buf;
  }
  write_file(out / "eval.txt", table);
  json j = metrics_json(ev.metrics);
  j["budget"] = std::isinf(budget) ? json("unlimited") : json(budget);
  j["risk"] = ev.risk;
  j["mean_cost"] = ev.mean_cost;
  if (o.wall_clock) j["wall_seconds"] = seconds;
  write_file(out / "eval.json", j.dump(1) + "\n");
  std::cout << table;
  return 0;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "RNG seed (corpus seed for generate, training seed for train)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--jobs", o.jobs, "Worker threads for candidate evaluation")->check(CLI::PositiveNumber);
  cmd->add_flag("--wall-clock", o.wall_clock,
                "Record measured wall_seconds in the written summaries (makes them non-reproducible)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "speedy: anytime structured prediction with cost-greedy boosting.\n"
      "Configuration keys can be overridden with SPEEDY_<KEY> environment variables;\n"
      "nested keys join with '__', e.g. SPEEDY_TRAIN__ITERATIONS=20.\n"
      "Exit codes: 0 success, 2 I/O error, 3 config/data mismatch, 4 invalid argument."};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "Write a synthetic scene corpus and its manifest");
  add_common(gen, o);
  gen->add_option("--count", o.count, "Number of scenes (default from config: 200)");

  auto* tr = app.add_subcommand("train", "Train a model on a corpus directory");
  add_common(tr, o);
  tr->add_option("--data", o.data, "Corpus directory");

  auto* inf = app.add_subcommand("infer", "Budgeted inference: label maps, per-stage masks, cost ledgers");
  add_common(inf, o);
  inf->add_option("--data", o.data, "Corpus directory");
  inf->add_option("--model", o.model, "Model file");
  inf->add_option("--budget", o.budget, "Cost budget: a number >= 0 or 'unlimited' (default)");

  auto* prof = app.add_subcommand("profile", "Accuracy-vs-cost curve as CSV");
  add_common(prof, o);
  prof->add_option("--data", o.data, "Corpus directory");
  prof->add_option("--model", o.model, "Model file");
  prof->add_option("--budget", o.budget, "Profile a single budget instead of the configured grid");

  auto* ev = app.add_subcommand("eval", "Pixel and class accuracy at one budget");
  add_common(ev, o);
  ev->add_option("--data", o.data, "Corpus directory");
  ev->add_option("--model", o.model, "Model file");
  ev->add_option("--budget", o.budget, "Cost budget: a number >= 0 or 'unlimited' (default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*tr) return cmd_train(o);
    if (*inf) return cmd_infer(o);
    if (*prof) return cmd_profile(o);
    if (*ev) return cmd_eval(o);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DimensionMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitInvalid;
}
