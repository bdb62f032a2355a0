// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "json.hpp"
#include "oracles.hpp"
#include "speedy/config.hpp"
#include "speedy/corpus_io.hpp"
#include "speedy/runtime.hpp"

using namespace speedy;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = u(rng);
  return m;
}

Matrix random_distributions(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::exponential_distribution<double> e(1.0);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += (m(r, c) = e(rng) + 1e-3);
    for (std::size_t c = 0; c < cols; ++c) m(r, c) /= s;
  }
  return m;
}

std::vector<StructuredInstance> corpus(std::size_t count, std::uint64_t seed, std::size_t size, std::size_t levels,
                                       std::size_t classes) {
  SyntheticSceneConfig c;
  c.width = c.height = size;
  c.num_classes = classes;
  c.hierarchy_levels = levels;
  for (auto& g : c.groups)
    if (g.merged_class >= static_cast<int>(classes)) g.merged_class = -1;
  return generate_corpus(c, count, seed);
}

TrainConfig quick_config(std::size_t iterations, std::size_t folds) {
  TrainConfig c;
  c.iterations = iterations;
  c.folds = folds;
  c.dictionary_size = 6;
  c.kmeans_samples = 5000;
  c.seed = 3;
  c.jobs = std::max(1u, std::thread::hardware_concurrency());
  return c;
}

/// Risk after every accepted stage strictly below the previous one.
bool risk_strictly_decreasing(const TrainResult& r, std::string& detail) {
  double prev = r.initial_risk;
  for (const auto& row : r.log) {
    if (!(row.risk < prev)) {
      detail = fmt("risk rose or stalled at iteration %zu (%.12g -> %.12g)", row.iteration, prev, row.risk);
      return false;
    }
    prev = row.risk;
  }
  return true;
}

// 1. Descent direction against central finite differences.
Outcome gradient_check() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t J = 1 + rng() % 8, K = 2 + rng() % 4;
    ScoreField y(random_matrix(rng, J, K, -3, 3));
    const Matrix p = random_distributions(rng, J, K);
    const Matrix d = descent_direction(y, p);
    double diff = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) {
        const double h = 1e-5;
        ScoreField up = y, down = y;
        up.matrix()(j, k) += h;
        down.matrix()(j, k) -= h;
        const double fd = -(cross_entropy_risk(up, p) - cross_entropy_risk(down, p)) / (2 * h);
        diff += (fd - d(j, k)) * (fd - d(j, k));
        norm += d(j, k) * d(j, k);
      }
    worst = std::max(worst, std::sqrt(diff / norm));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return {worst < 1e-6 && secs < 5.0, fmt("max relative error %.2e over 100 cases in %.3f s", worst, secs)};
}

// 2. Expanded soft-VQ codes against explicit distances.
Outcome soft_vq_check() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 2 + rng() % 15, dim = 1 + rng() % 8;
    const Matrix centers = random_matrix(rng, k, dim, -2, 2);
    const auto dict = Dictionary::from_centers(centers);
    const Matrix v = random_matrix(rng, 1, dim, -3, 3);
    const std::size_t i = rng() % k;
    worst = std::max(worst, std::abs(soft_vq_code(v.row(0), dict, i) - oracle::soft_vq_code(v.row(0), centers, i)));
  }
  return {worst <= 1e-9, fmt("max abs difference %.2e over 1000 cases", worst)};
}

// 3. Region-weighted and per-pixel objectives give the same tree.
Outcome lsq_reduction_check() {
  std::mt19937_64 rng(3);
  std::size_t mismatched = 0, nodes = 0;
  double worst_leaf = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto insts = corpus(1, 100 + t, 16, 3, 4);
    const auto& inst = insts[0];
    TrainConfig cfg;
    cfg.dictionary_size = 3;
    cfg.kmeans_samples = 200;
    cfg.seed = static_cast<std::uint64_t>(t);
    const auto groups = fit_feature_groups(insts, cfg);
    const auto layout = full_layout(4, groups);
    const std::vector<ScoreField> scores{ScoreField(random_matrix(rng, inst.num_pixels(), 4, -1.5, 1.5))};
    const EntropySelector sel{t % 4 == 3 ? std::nullopt : std::optional<std::size_t>(t % 4), 0.0, 1.0};
    const auto region = build_gradient_dataset(insts, scores, sel, groups, layout);
    if (!region) {
      ++mismatched;
      continue;
    }
    const Matrix grad = descent_direction(scores[0], inst.labels);
    TreeDataset pixel;
    std::size_t rows = 0;
    for (const auto& o : region->origins) rows += inst.hierarchy->segment(o.segment).size();
    pixel.features = Matrix(rows, layout.size());
    pixel.targets = Matrix(rows, 4);
    std::size_t r = 0;
    for (std::size_t i = 0; i < region->origins.size(); ++i)
      for (std::size_t p : inst.hierarchy->segment(region->origins[i].segment).pixels) {
        std::copy(region->data.features.row(i).begin(), region->data.features.row(i).end(), pixel.features.row(r).begin());
        std::copy(grad.row(p).begin(), grad.row(p).end(), pixel.targets.row(r).begin());
        pixel.weights.push_back(1.0);
        ++r;
      }
    SplitCostModel costs{layout.cost_refs(), groups, {}};
    const TreeParams params{4, t % 2 == 0 ? 0.0 : 0.01, 1.0};
    const auto a = train_tree(region->data, params, costs), b = train_tree(pixel, params, costs);
    if (a.nodes().size() != b.nodes().size()) {
      ++mismatched;
      continue;
    }
    for (std::size_t n = 0; n < a.nodes().size(); ++n) {
      ++nodes;
      const auto &x = a.nodes()[n], &y = b.nodes()[n];
      if (x.feature != y.feature || x.threshold != y.threshold || x.left != y.left || x.right != y.right) ++mismatched;
      for (std::size_t k = 0; k < 4; ++k) worst_leaf = std::max(worst_leaf, std::abs(x.value[k] - y.value[k]));
    }
  }
  return {mismatched == 0 && worst_leaf < 1e-12,
          fmt("%zu split mismatches over %zu nodes in 20 instances, max leaf difference %.2e", mismatched, nodes,
              worst_leaf)};
}

struct Run {
  std::vector<StructuredInstance> instances;
  TrainConfig config;
  TrainTrace trace;
  TrainResult result;
};

// 4. Accepted stages against the brute-force ratio argmax.
Outcome greedy_check(Run& run) {
  std::size_t wrong = 0, total = 0;
  for (std::size_t t = 0; t < run.trace.iterations.size(); ++t) {
    const auto& it = run.trace.iterations[t];
    std::vector<CandidateScore> c;
    for (const auto& x : it.candidates) c.push_back({x.delta_risk, x.cost, x.active});
    total += c.size();
    const auto best = oracle::best_ratio(c, run.config.min_improvement);
    const auto& stage = run.result.model.stages[t];
    if (!best || *best != it.chosen || !(stage.predictor == it.candidates[*best].tree) ||
        !(stage.selector == it.candidates[*best].selector) || stage.alpha != it.candidates[*best].alpha)
      ++wrong;
  }
  const bool ran = run.trace.iterations.size() == 10;
  return {ran && wrong == 0, fmt("%zu of %zu iterations disagree (%zu candidates checked)", wrong,
                                 run.trace.iterations.size(), total)};
}

// 6 and 7 share the models and budgets.
struct InferenceChecks {
  Outcome ledger, prefix;
};

InferenceChecks inference_checks(const std::vector<const AdditiveModel*>& models,
                                 const std::vector<const std::vector<StructuredInstance>*>& pools) {
  std::mt19937_64 rng(6);
  std::size_t ledger_bad = 0, double_charges = 0, prefix_bad = 0, prefix_runs = 0;
  double worst_gap = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = static_cast<std::size_t>(t) % models.size();
    const AdditiveModel& model = *models[m];
    const auto& pool = *pools[m];
    const auto& inst = pool[rng() % pool.size()];
    const auto full = infer(model, inst);
    const double budget =
        t % 5 == 0 ? kUnlimitedBudget : std::uniform_real_distribution<double>(0.0, full.ledger.total() * 1.05)(rng);
    const auto r = infer(model, inst, budget);
    const auto o = oracle::replay(model, inst, budget);
    if (r.ledger.total() != o.total || r.stages_executed != o.stages) ++ledger_bad;
    worst_gap = std::max(worst_gap, std::abs(r.ledger.total() - o.total));
    std::set<std::uint32_t> groups;
    std::set<FeatureRef> centers;
    for (std::size_t s = 0; s < r.ledger.entries().size(); ++s) {
      const auto& e = r.ledger.entries()[s];
      for (auto g : e.groups) double_charges += !groups.insert(g).second;
      for (auto c : e.centers) double_charges += !centers.insert(c).second;
      if (s < o.charged.size() && std::set<FeatureRef>(e.centers.begin(), e.centers.end()) != o.charged[s])
        ++ledger_bad;
    }
    // Prefix property against the truncated unlimited run.
    ++prefix_runs;
    std::size_t k = 0;
    while (k < full.profile.checkpoints.size() && full.profile.checkpoints[k].cost <= budget) ++k;
    const auto truncated = infer(model.prefix(k), inst);
    bool same = r.stages_executed == k && r.scores == truncated.scores &&
                r.ledger.total() == truncated.ledger.total() && r.ledger.entries().size() == k;
    for (std::size_t s = 0; same && s < k; ++s)
      same = r.ledger.entries()[s].centers == full.ledger.entries()[s].centers &&
             r.ledger.entries()[s].total() == full.ledger.entries()[s].total();
    prefix_bad += !same;
  }
  return {{ledger_bad == 0 && double_charges == 0,
           fmt("%zu ledger mismatches, %zu repeated charges over 50 runs (max gap %.2e)", ledger_bad, double_charges,
               worst_gap)},
          {prefix_bad == 0, fmt("%zu of %zu budgeted runs differ from the truncated unlimited run", prefix_bad,
                                prefix_runs)}};
}

// 8. No gradient sample computed from a model that saw its instance.
Outcome stacking_check() {
  Run run;
  run.instances = corpus(20, 8, 32, 4, 5);
  run.config = quick_config(6, 10);
  run.result = train(run.instances, run.config, &run.trace);
  std::size_t leaks = 0;
  for (const auto& p : run.trace.provenance) {
    leaks += p.producer_fold != run.trace.fold_of[p.instance];
    const auto& seen = run.trace.aux_trained_on[p.producer_fold];
    leaks += static_cast<std::size_t>(std::count(seen.begin(), seen.end(), p.instance));
    leaks += p.consumer >= 0 && static_cast<std::size_t>(p.consumer) == p.producer_fold;
  }
  std::string mono;
  const bool ok = !run.trace.provenance.empty() && leaks == 0 && risk_strictly_decreasing(run.result, mono);
  return {ok, fmt("%zu leaks in %zu provenance records (20 instances, 10 folds)", leaks, run.trace.provenance.size()) +
                  (mono.empty() ? "" : "; " + mono)};
}

// 10. Cost regularizer extremes.
Outcome regularizer_check() {
  const auto insts = corpus(6, 10, 32, 4, 5);
  TrainConfig cfg = quick_config(3, 3);
  cfg.lambda0 = 1e12;
  cfg.lambda_multipliers = {1.0};
  cfg.shape_features = false;
  cfg.context_features = false;
  TrainTrace trace;
  train(insts, cfg, &trace);
  std::size_t trees = 0, deep = 0;
  for (const auto& it : trace.iterations)
    for (const auto& c : it.candidates)
      if (c.active) {
        ++trees;
        deep += c.tree.depth() > 0;
      }

  std::mt19937_64 rng(10);
  std::size_t mismatched = 0;
  for (int t = 0; t < 20; ++t) {
    TreeDataset d;
    const std::size_t n = 30 + rng() % 40;
    d.features = random_matrix(rng, n, 5, 0, 1);
    d.targets = random_matrix(rng, n, 3, -1, 1);
    for (std::size_t i = 0; i < n; ++i) d.weights.push_back(std::uniform_real_distribution<double>(0.5, 4.0)(rng));
    const std::size_t depth = 1 + t % 4;
    mismatched += !oracle::same_tree(train_tree(d, {depth, 0.0, 1.0}, {}), 0, *oracle::reference_tree(d, depth), 1e-10);
  }
  return {trees > 0 && deep == 0 && mismatched == 0,
          fmt("huge lambda: %zu of %zu candidate trees deeper than 0; lambda 0: %zu of 20 trees differ from the "
              "reference",
              deep, trees, mismatched)};
}

// 9. Pinned synthetic benchmark.
struct Benchmark {
  Outcome accuracy, cheap, shape;
  TrainResult result;
};

Benchmark benchmark_check() {
  std::ifstream in(std::string(SPEEDY_FIXTURES) + "/benchmark.json");
  const auto fx = nlohmann::json::parse(in);
  const SyntheticSceneConfig scene;
  Benchmark b;
  const auto start = Clock::now();
  const auto train_files = render_corpus(scene, fx["train"]["count"], fx["train"]["seed"]);
  const auto test_files = render_corpus(scene, fx["test"]["count"], fx["test"]["seed"]);
  const auto manifest_hash = [](const RenderedCorpus& c) { return hex64(fnv1a(c.manifest)); };
  const bool pinned = manifest_hash(train_files) == fx["train"]["manifest_hash"] &&
                      manifest_hash(test_files) == fx["test"]["manifest_hash"];
  std::vector<StructuredInstance> train_set, test_set;
  for (const auto& f : train_files.files) train_set.push_back(instance_from_text(f.text));
  for (const auto& f : test_files.files) test_set.push_back(instance_from_text(f.text));

  TrainConfig cfg;
  cfg.iterations = fx["iterations"];
  cfg.seed = 0;
  cfg.jobs = std::max(1u, std::thread::hardware_concurrency());
  b.result = train(train_set, cfg);
  const AdditiveModel& model = b.result.model;

  const auto full = evaluate_corpus(model, test_set);
  const double min_acc = fx["min_test_pixel_accuracy"];
  // Majority class of the training labels, scored on the test set.
  std::vector<double> mass(model.num_classes, 0.0);
  for (const auto& inst : train_set)
    for (std::size_t p = 0; p < inst.num_pixels(); ++p) ++mass[argmax(inst.labels.row(p))];
  const std::size_t majority = argmax(mass);
  double hits = 0.0, pixels = 0.0;
  for (const auto& inst : test_set)
    for (std::size_t p = 0; p < inst.num_pixels(); ++p) {
      hits += argmax(inst.labels.row(p)) == majority;
      ++pixels;
    }
  // The stronger of two baselines: training majority, and the test set's own majority.
  std::vector<double> test_mass(model.num_classes, 0.0);
  for (const auto& inst : test_set)
    for (std::size_t p = 0; p < inst.num_pixels(); ++p) ++test_mass[argmax(inst.labels.row(p))];
  const double majority_acc = std::max(hits / pixels, test_mass[argmax(test_mass)] / pixels);

  std::vector<double> budgets;
  for (double f : fx["budget_fractions"]) budgets.push_back(f * full.mean_cost);
  const auto rows = profile_corpus(model, test_set, budgets);
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();

  std::printf("benchmark profile (test set, budgets as fractions of the mean full cost %.2f):\n", full.mean_cost);
  std::printf("%s", profile_csv(rows).c_str());
  double at10 = 0.0, worst_drop = 0.0;
  const std::vector<double> fractions = fx["budget_fractions"];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (fractions[i] == 0.1) at10 = rows[i].pixel_accuracy;
    if (i > 0) worst_drop = std::max(worst_drop, rows[i - 1].pixel_accuracy - rows[i].pixel_accuracy);
  }
  const double min_gain = fx["min_gain_over_majority_at_10pct"], max_drop = fx["max_accuracy_drop_per_step"];
  std::string mono;
  const bool monotone = risk_strictly_decreasing(b.result, mono);
  b.accuracy = {pinned && monotone && full.metrics.pixel_accuracy >= min_acc && secs < 900.0,
                fmt("test pixel accuracy %.4f (class %.4f) at full budget, threshold %.2f; corpus hashes %s; %zu "
                    "stages; %.0f s",
                    full.metrics.pixel_accuracy, full.metrics.class_accuracy, min_acc, pinned ? "match" : "DIFFER",
                    model.stages.size(), secs) +
                    (mono.empty() ? "" : "; " + mono)};
  b.cheap = {at10 >= majority_acc + min_gain,
             fmt("accuracy %.4f at 10%% of full cost vs majority baseline %.4f + %.2f", at10, majority_acc, min_gain)};
  b.shape = {worst_drop <= max_drop,
             fmt("largest accuracy drop between budget steps %.4f (allowed %.2f)", worst_drop, max_drop)};
  return b;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, Outcome>> lines;
  const auto report = [&](const std::string& name, const Outcome& o) {
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    lines.emplace_back(name, o);
  };

  report("1 gradient vs finite differences", gradient_check());
  report("2 soft-VQ expanded form", soft_vq_check());
  report("3 weighted least-squares reduction", lsq_reduction_check());

  Run greedy;
  greedy.instances = corpus(12, 4, 32, 4, 5);
  greedy.config = quick_config(10, 4);
  greedy.config.lambda0 = 0.002;
  greedy.result = train(greedy.instances, greedy.config, &greedy.trace);
  report("4 greedy selection", greedy_check(greedy));

  const Outcome stacking = stacking_check();
  Benchmark bench = benchmark_check();

  std::string why;
  bool mono = risk_strictly_decreasing(greedy.result, why) && stacking.pass;
  std::string why_bench;
  mono = mono && risk_strictly_decreasing(bench.result, why_bench);
  report("5 risk monotonicity",
         {mono, fmt("%zu + %zu accepted stages checked across the greedy and benchmark runs",
                    greedy.result.log.size(), bench.result.log.size()) +
                    (why.empty() ? "" : "; " + why) + (why_bench.empty() ? "" : "; " + why_bench)});

  const auto test_pool = corpus(10, 66, 32, 4, 5);
  std::vector<StructuredInstance> bench_pool;
  {
    SyntheticSceneConfig scene;
    bench_pool = generate_corpus(scene, 10, 2);
  }
  const AdditiveModel greedy_half = greedy.result.model.prefix(greedy.result.model.stages.size() / 2);
  const auto inf = inference_checks({&greedy.result.model, &bench.result.model, &greedy_half},
                                    {&test_pool, &bench_pool, &greedy.instances});
  report("6 cost-ledger exactness", inf.ledger);
  report("7 anytime prefix property", inf.prefix);
  report("8 stacking hygiene", stacking);
  report("9a benchmark accuracy", bench.accuracy);
  report("9b benchmark accuracy at 10% cost", bench.cheap);
  report("9c benchmark anytime curve", bench.shape);
  report("10 cost regularizer", regularizer_check());

  std::size_t failed = 0;
  for (const auto& [name, o] : lines) failed += !o.pass;
  std::printf("%zu of %zu criteria passed\n", lines.size() - failed, lines.size());
  return failed == 0 ? 0 : 1;
}
