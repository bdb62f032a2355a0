#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "speedy/runtime.hpp"

using namespace speedy;

namespace {

struct Fixture {
  std::vector<StructuredInstance> train_set = test::small_corpus(8, 21);
  std::vector<StructuredInstance> test_set = test::small_corpus(4, 22);
  AdditiveModel model;
  Fixture() {
    auto config = test::small_train_config(12);
    config.lambda0 = 0.002;  // cheap enough that trees buy a few features
    model = train(train_set, config).model;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("budget zero returns f_0") {
  const auto& f = fixture();
  REQUIRE(!f.model.stages.empty());
  const auto r = infer(f.model, f.test_set[0], 0.0);
  CHECK(r.stages_executed == 0);
  CHECK(r.ledger.total() == 0.0);
  CHECK(r.ledger.entries().empty());
  CHECK(r.profile.checkpoints.empty());
  CHECK(r.scores == ScoreField::constant(f.test_set[0].num_pixels(), f.model.initial_scores));
}

TEST_CASE("unlimited runs match the replay oracle") {
  const auto& f = fixture();
  for (const auto* set : {&f.train_set, &f.test_set})
    for (const auto& inst : *set) {
      const auto r = infer(f.model, inst);
      CHECK(r.stages_executed == f.model.stages.size());
      CHECK(r.profile.checkpoints.size() == f.model.stages.size());
      const auto oracle = oracle::replay(f.model, inst);
      CHECK(r.ledger.total() == oracle.total);
      for (std::size_t e = 0; e < oracle.scores.matrix().data().size(); ++e)
        CHECK(r.scores.matrix().data()[e] == doctest::Approx(oracle.scores.matrix().data()[e]).epsilon(1e-9));
      // Each group and center charged at most once, and only when needed.
      std::set<std::uint32_t> groups;
      std::set<FeatureRef> centers;
      double sum = 0.0;
      for (std::size_t t = 0; t < r.ledger.entries().size(); ++t) {
        const auto& e = r.ledger.entries()[t];
        for (auto g : e.groups) CHECK(groups.insert(g).second);
        for (auto c : e.centers) CHECK(centers.insert(c).second);
        CHECK(std::set<FeatureRef>(e.centers.begin(), e.centers.end()) == oracle.charged[t]);
        sum += e.total();
      }
      CHECK(sum == doctest::Approx(r.ledger.total()).epsilon(1e-12));
      // Never more than the training-time stage costs.
      CHECK(r.ledger.total() <= f.model.total_cost() + 1e-9);
      for (const auto& c : centers) CHECK(f.model.features_used(f.model.stages.size()).has(c));
      // Checkpoint costs strictly increase.
      for (std::size_t t = 1; t < r.profile.checkpoints.size(); ++t)
        CHECK(r.profile.checkpoints[t].cost > r.profile.checkpoints[t - 1].cost);
    }
}

TEST_CASE("budgeted runs are prefixes of the unlimited run") {
  const auto& f = fixture();
  std::mt19937_64 rng(211);
  for (const auto& inst : f.test_set) {
    const auto full = infer(f.model, inst);
    std::uniform_real_distribution<double> u(0.0, full.ledger.total() * 1.1);
    std::vector<double> budgets{0.0, full.ledger.total()};
    for (const auto& c : full.profile.checkpoints) budgets.push_back(c.cost);
    for (int i = 0; i < 10; ++i) budgets.push_back(u(rng));
    for (double b : budgets) {
      const auto r = infer(f.model, inst, b);
      std::size_t k = 0;
      while (k < full.profile.checkpoints.size() && full.profile.checkpoints[k].cost <= b) ++k;
      CHECK(r.stages_executed == k);
      CHECK(r.ledger.total() <= b);
      CHECK(r.scores == infer(f.model.prefix(k), inst).scores);
      REQUIRE(r.ledger.entries().size() == k);
      for (std::size_t t = 0; t < k; ++t) {
        CHECK(r.ledger.entries()[t].centers == full.ledger.entries()[t].centers);
        CHECK(r.ledger.entries()[t].total() == full.ledger.entries()[t].total());
      }
      CHECK(r.ledger.total() == (k == 0 ? 0.0 : full.profile.checkpoints[k - 1].cost));
    }
  }
}

TEST_CASE("every prefix is well formed and stages touch only selected pixels") {
  const auto& f = fixture();
  const auto& inst = f.test_set[1];
  const auto full = infer(f.model, inst);
  ScoreField prev = infer(f.model.prefix(0), inst).scores;
  for (std::size_t t = 0; t < f.model.stages.size(); ++t) {
    const ScoreField cur = infer(f.model.prefix(t + 1), inst).scores;
    CHECK(cur.all_finite());
    CHECK(cur.num_elements() == inst.num_pixels());
    CHECK(cur.num_classes() == f.model.num_classes);
    std::vector<bool> inside(inst.num_pixels(), false);
    for (const auto& ref : full.ledger.entries()[t].selected)
      for (std::size_t p : inst.hierarchy->segment(ref).pixels) inside[p] = true;
    for (std::size_t p = 0; p < inst.num_pixels(); ++p)
      if (!inside[p])
        for (std::size_t k = 0; k < f.model.num_classes; ++k) CHECK(cur.matrix()(p, k) == prev.matrix()(p, k));
    prev = cur;
  }
}

TEST_CASE("incompatible inputs") {
  const auto& f = fixture();
  CHECK_THROWS_AS(infer(f.model, f.test_set[0], -1.0), InvalidInput);
  CHECK_THROWS_AS(infer(f.model, test::small_scene(1, 16, 3, 4)), DimensionMismatch);
  CHECK_THROWS_AS(infer(f.model, test::small_scene(1, 16, 2, 3)), DimensionMismatch);
}

TEST_CASE("evaluate") {
  Matrix truth(4, 2);
  truth(0, 0) = truth(1, 0) = truth(2, 1) = truth(3, 1) = 1.0;
  ScoreField perfect(4, 2);
  for (std::size_t j = 0; j < 4; ++j) perfect.matrix()(j, argmax(truth.row(j))) = 1.0;
  CHECK(evaluate(perfect, truth).pixel_accuracy == 1.0);
  CHECK(evaluate(perfect, truth).class_accuracy == 1.0);
  const auto one_class = evaluate(ScoreField(4, 2), truth);
  CHECK(one_class.pixel_accuracy == 0.5);
  CHECK(one_class.class_accuracy == 0.5);

  std::mt19937_64 rng(223);
  for (int t = 0; t < 20; ++t) {
    const std::size_t K = 4;
    const ScoreField s = test::random_scores(rng, 50, K);
    Matrix p(50, K);
    for (std::size_t j = 0; j < 50; ++j) p(j, rng() % 3) = 1.0;  // class 3 never appears
    std::vector<std::vector<double>> conf(K, std::vector<double>(K, 0));
    for (std::size_t j = 0; j < 50; ++j) {
      std::size_t a = 0, b = 0;
      for (std::size_t k = 1; k < K; ++k) {
        if (p(j, k) > p(j, a)) a = k;
        if (s.matrix()(j, k) > s.matrix()(j, b)) b = k;
      }
      conf[a][b] += 1;
    }
    double correct = 0, recall = 0;
    int present = 0;
    for (std::size_t a = 0; a < K; ++a) {
      double row = 0;
      for (double v : conf[a]) row += v;
      correct += conf[a][a];
      if (row > 0) {
        recall += conf[a][a] / row;
        ++present;
      }
    }
    const auto m = evaluate(s, p);
    CHECK(m.pixel_accuracy == doctest::Approx(correct / 50));
    CHECK(m.class_accuracy == doctest::Approx(recall / present));
    CHECK(std::isnan(m.class_recall[3]));
  }
  CHECK_THROWS_AS(evaluate(ScoreField(3, 2), truth), DimensionMismatch);
}

TEST_CASE("profiles") {
  const auto& f = fixture();
  const std::vector<double> zero{0.0};
  const auto rows = profile_corpus(f.model, f.train_set, zero);
  REQUIRE(rows.size() == 1);
  double f0 = 0.0;
  for (const auto& inst : f.train_set)
    f0 += evaluate(ScoreField::constant(inst.num_pixels(), f.model.initial_scores), inst.labels).pixel_accuracy;
  CHECK(rows[0].pixel_accuracy == doctest::Approx(f0 / static_cast<double>(f.train_set.size())));
  CHECK(rows[0].mean_cost == 0.0);

  const std::vector<double> ends{0.0, kUnlimitedBudget};
  const auto two = profile_corpus(f.model, f.train_set, ends);
  REQUIRE(two.size() == 2);
  CHECK(two[1].pixel_accuracy >= two[0].pixel_accuracy);
  CHECK(two[1].risk < two[0].risk);

  const std::vector<double> dup{30.0, 30.0};
  const auto d = profile_corpus(f.model, f.test_set, dup);
  CHECK(d[0].pixel_accuracy == d[1].pixel_accuracy);
  CHECK(d[0].risk == d[1].risk);

  // Rows agree with direct budgeted runs.
  for (double b : {5.0, 40.0, 120.0}) {
    double acc = 0.0;
    for (const auto& inst : f.test_set) acc += evaluate(infer(f.model, inst, b).scores, inst.labels).pixel_accuracy;
    const std::vector<double> one{b};
    const auto row = profile_corpus(f.model, f.test_set, one)[0];
    CHECK(row.pixel_accuracy == doctest::Approx(acc / static_cast<double>(f.test_set.size())).epsilon(1e-12));
    const auto direct = evaluate_corpus(f.model, f.test_set, b);
    CHECK(row.class_accuracy == direct.metrics.class_accuracy);
    CHECK(row.risk == doctest::Approx(direct.risk).epsilon(1e-12));
    CHECK(row.mean_cost == doctest::Approx(direct.mean_cost).epsilon(1e-12));
  }

  const auto csv = profile_csv(two);
  CHECK(csv.rfind("budget,pixel_acc,class_acc,risk\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
