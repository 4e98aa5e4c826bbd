#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "vacscreen/classify.hpp"
#include "vacscreen/util/random.hpp"

using namespace vacscreen;

namespace {

struct Data {
  FeatureMatrix X;
  std::vector<bool> y;
};

// Sparse-ish random data with a planted linear signal.
Data make_data(Rng& rng, std::size_t n, std::size_t d, double density = 0.4, double noise = 0.5) {
  std::vector<double> w(d);
  for (auto& x : w) x = rng.uniform() * 4 - 2;
  Data out{FeatureMatrix(d), {}};
  for (std::size_t i = 0; i < n; ++i) {
    SparseVector v;
    double z = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (rng.uniform() >= density) continue;
      double x = std::round((rng.uniform() * 4 - 2) * 4) / 4;
      if (x == 0) continue;
      v.indices.push_back(static_cast<std::uint32_t>(j));
      v.values.push_back(x);
      z += w[j] * x;
    }
    out.X.add_row(v);
    out.y.push_back(z + noise * (rng.uniform() * 2 - 1) > 0.3);
  }
  if (std::count(out.y.begin(), out.y.end(), true) == 0) out.y[0] = true;
  if (std::count(out.y.begin(), out.y.end(), false) == 0) out.y[0] = false;
  return out;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

FeatureMatrix column(const std::vector<double>& xs) {
  FeatureMatrix m(1);
  for (double x : xs) m.add_dense_row(std::vector<double>{x});
  return m;
}

double norm(const std::vector<double>& w) {
  double s = 0;
  for (double x : w) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(ClassWeights, BalancedAtQuarterPositives) {
  std::vector<bool> y(100, false);
  for (int i = 0; i < 25; ++i) y[static_cast<std::size_t>(i)] = true;
  auto cw = balanced_class_weights(y);
  EXPECT_DOUBLE_EQ(cw.positive, 2.0);
  EXPECT_DOUBLE_EQ(cw.negative, 100.0 / 150.0);
  EXPECT_THROW(balanced_class_weights(std::vector<bool>(4, true)), InputError);
}

TEST(Logistic, GradientMatchesCentralDifferences) {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    auto data = make_data(rng, 5 + rng.below(40), 1 + rng.below(8));
    bool balanced = trial % 2 == 0;
    auto s = row_weights(data.y, balanced ? balanced_class_weights(data.y) : ClassWeights{});
    double C = std::pow(10.0, rng.uniform() * 4 - 2);
    std::vector<double> theta(data.X.cols() + 1);
    for (auto& t : theta) t = rng.uniform() * 2 - 1;
    std::vector<double> grad;
    logistic_objective(data.X, data.y, s, C, theta, &grad);
    std::vector<double> fd(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
      double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
      auto plus = theta, minus = theta;
      plus[j] += h;
      minus[j] -= h;
      fd[j] = (logistic_objective(data.X, data.y, s, C, plus) - logistic_objective(data.X, data.y, s, C, minus)) / (2 * h);
    }
    EXPECT_LE(rel_error(grad, fd), 1e-4) << "trial " << trial;
  }
}

TEST(Logistic, SeparableToyIsFitExactly) {
  FeatureMatrix X(2);
  std::vector<bool> y;
  for (double a : {-2.0, -1.5, -1.0, 1.0, 1.5, 2.0})
    for (double b : {-1.0, 0.0, 1.0}) {
      X.add_dense_row(std::vector<double>{a, b});
      y.push_back(a > 0);
    }
  auto m = train_logistic(X, y);
  auto p = predict(m, X);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(p[i] >= 0.5, y[i]);
}

TEST(Logistic, ConvergesToStationaryPoint) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto data = make_data(rng, 200, 10);
    for (double C : {0.01, 1.0, 100.0}) {
      LogisticParams p;
      p.C = C;
      auto fit = train_logistic_weights(data.X, data.y, p);
      EXPECT_TRUE(fit.converged) << "C=" << C;
      auto theta = fit.weights;
      theta.push_back(fit.bias);
      std::vector<double> grad;
      logistic_objective(data.X, data.y, row_weights(data.y, balanced_class_weights(data.y)), C, theta, &grad);
      for (double g : grad) EXPECT_LE(std::abs(g), 1e-8);
    }
  }
}

TEST(Logistic, DuplicatedRowsWithHalvedCKeepOptimum) {
  Rng rng(8);
  auto data = make_data(rng, 80, 6);
  FeatureMatrix X2(data.X.cols());
  std::vector<bool> y2;
  for (int rep = 0; rep < 2; ++rep)
    for (std::size_t i = 0; i < data.X.rows(); ++i) {
      auto idx = data.X.row_indices(i);
      auto val = data.X.row_values(i);
      SparseVector v;
      v.indices.assign(idx.begin(), idx.end());
      v.values.assign(val.begin(), val.end());
      X2.add_row(v);
      y2.push_back(data.y[i]);
    }
  LogisticParams p;
  p.C = 2.0;
  auto a = train_logistic_weights(data.X, data.y, p);
  p.C = 1.0;
  auto b = train_logistic_weights(X2, y2, p);
  for (std::size_t j = 0; j < a.weights.size(); ++j) EXPECT_NEAR(a.weights[j], b.weights[j], 1e-7);
  EXPECT_NEAR(a.bias, b.bias, 1e-7);
}

TEST(Logistic, RegularizationPathIsMonotone) {
  Rng rng(9);
  auto grid = default_grid(ModelKind::logistic).expand();
  for (int trial = 0; trial < 5; ++trial) {
    auto data = make_data(rng, 150, 8);
    double prev = std::numeric_limits<double>::infinity();
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {  // decreasing C, growing 1/C
      auto fit = train_logistic_weights(data.X, data.y, std::get<LogisticParams>(*it));
      double n = norm(fit.weights);
      EXPECT_LE(n, prev * (1 + 1e-9));
      prev = n;
    }
  }
}

TEST(Logistic, ZeroModelScoresHalf) {
  TrainedModel m;
  m.kind = ModelKind::logistic;
  m.dimension = 3;
  m.weights.assign(3, 0.0);
  FeatureMatrix X(3);
  X.add_row({{0, 2}, {5.0, -1.0}});
  X.add_row({});
  for (double p : predict(m, X)) EXPECT_EQ(p, 0.5);
}

TEST(Classify, InputErrors) {
  FeatureMatrix X = column({1, 2, 3});
  EXPECT_THROW(train_logistic(X, {true, true, true}), InputError);
  EXPECT_THROW(train_gbt(X, {true, false}), InputError);
  EXPECT_THROW(train_forest(FeatureMatrix(1), {}), InputError);
  auto m = train_logistic(X, {true, false, true});
  EXPECT_THROW(predict(m, FeatureMatrix(2)), InputError);
  m.feature_space = "bow:3:abc";
  EXPECT_THROW(predict(m, X, "bow:3:def"), InputError);
  EXPECT_NO_THROW(predict(m, X, "bow:3:abc"));
}

TEST(Gbt, ZeroTreesScoreHalf) {
  TrainedModel m;
  m.kind = ModelKind::gbt;
  m.dimension = 1;
  for (double p : predict(m, column({-3, 0, 7}))) EXPECT_EQ(p, 0.5);
}

TEST(Gbt, RecoversThresholdSplit) {
  auto X = column({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  std::vector<bool> y;
  for (int i = 1; i <= 10; ++i) y.push_back(i > 6);
  GbtParams p;
  p.n_rounds = 1;
  p.max_depth = 1;
  p.learning_rate = 1.0;
  p.min_child_weight = 0.0;
  p.scale_pos_weight = 1.0;
  auto m = train_gbt(X, y, p);
  ASSERT_EQ(m.trees.size(), 1u);
  EXPECT_EQ(m.trees[0].feature[0], 0);
  EXPECT_DOUBLE_EQ(m.trees[0].threshold[0], 6.5);
  auto s = predict(m, X);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(s[i] > 0.5, y[i]);
}

// Brute-force oracle: every midpoint between distinct values, gain recomputed
// from scratch for each candidate.
TEST(Gbt, StumpMatchesEnumeratedSplits) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 4 + rng.below(30);
    std::vector<double> xs(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = static_cast<double>(rng.below(8)) - 3;
      y[i] = rng.below(3) == 0;
    }
    y[0] = true;
    y[1] = false;
    GbtParams p;
    p.n_rounds = 1;
    p.max_depth = 1;
    p.learning_rate = 1.0;
    p.min_child_weight = 0.5;
    auto m = train_gbt(column(xs), y, p);
    std::vector<double> distinct = xs;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    double best_gain = 0, best_thr = 0;
    bool found = false;
    auto stats = [&](auto pred) {
      double G = 0, H = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (pred(xs[i])) {
          double s = y[i] ? p.scale_pos_weight : 1.0;
          G += s * (0.5 - (y[i] ? 1 : 0));
          H += s * 0.25;
        }
      return std::pair{G, H};
    };
    auto [G, H] = stats([](double) { return true; });
    for (std::size_t k = 0; k + 1 < distinct.size(); ++k) {
      double thr = (distinct[k] + distinct[k + 1]) / 2;
      auto [GL, HL] = stats([&](double x) { return x <= thr; });
      auto [GR, HR] = stats([&](double x) { return x > thr; });
      if (HL < p.min_child_weight || HR < p.min_child_weight) continue;
      double gain = 0.5 * (GL * GL / (HL + 1) + GR * GR / (HR + 1) - G * G / (H + 1));
      if (gain > best_gain + 1e-12) {
        best_gain = gain;
        best_thr = thr;
        found = true;
      }
    }
    if (!found || H < 2 * p.min_child_weight) {
      EXPECT_EQ(m.trees[0].feature[0], -1) << "trial " << trial;
    } else {
      ASSERT_EQ(m.trees[0].feature[0], 0) << "trial " << trial;
      EXPECT_DOUBLE_EQ(m.trees[0].threshold[0], best_thr) << "trial " << trial;
    }
  }
}

TEST(Gbt, ScalePosWeightMultipliesPositiveContributions) {
  auto X = column({1, 1, 1, 1, 1, 1, 1, 1});
  std::vector<bool> y = {true, true, true, false, false, false, false, false};
  GbtParams p;
  p.n_rounds = 1;
  p.learning_rate = 1.0;
  p.scale_pos_weight = 2.5;
  // G = 2.5*3*(0.5-1) + 5*0.5 = -1.25; H = 0.25*(2.5*3 + 5) = 3.125
  auto m = train_gbt(X, y, p);
  ASSERT_EQ(m.trees[0].size(), 1u);
  EXPECT_DOUBLE_EQ(m.trees[0].value[0], 1.25 / 4.125);
  p.scale_pos_weight = 1.0;
  // G = -1.5 + 2.5 = 1; H = 2
  EXPECT_DOUBLE_EQ(train_gbt(X, y, p).trees[0].value[0], -1.0 / 3.0);
}

TEST(Gbt, TrainingLossNonIncreasing) {
  Rng rng(41);
  for (int trial = 0; trial < 6; ++trial) {
    auto data = make_data(rng, 120, 6, 0.5, 2.0);
    GbtParams p;
    p.n_rounds = 60;
    p.early_stopping_rounds = 0;
    p.learning_rate = trial % 2 ? 0.3 : 1.0;
    p.min_child_weight = 0.5;
    p.max_depth = 6;
    auto m = train_gbt(data.X, data.y, p);
    ASSERT_EQ(m.info.loss_history.size(), 61u);
    for (std::size_t r = 1; r < m.info.loss_history.size(); ++r)
      EXPECT_LE(m.info.loss_history[r], m.info.loss_history[r - 1]) << "round " << r;
    for (const auto& t : m.trees) EXPECT_LE(t.depth(), 6u);
  }
}

TEST(Gbt, EarlyStopping) {
  auto X = column({1, 2, 3, 4});
  GbtParams p;
  p.min_child_weight = 100;  // no splits: loss plateaus
  p.learning_rate = 1.0;
  p.early_stopping_rounds = 3;
  auto m = train_gbt(X, {true, false, true, false}, p);
  EXPECT_LT(m.info.iterations, 200);
}

TEST(Forest, FullDepthTreeFitsItsSample) {
  Rng rng(51);
  auto data = make_data(rng, 60, 5, 0.8, 0.0);
  std::vector<std::size_t> sample(60);
  std::iota(sample.begin(), sample.end(), 0);
  ForestParams p;
  p.max_depth = 100;
  Rng tree_rng(1);
  auto t = grow_forest_tree(data.X, data.y, balanced_class_weights(data.y), p, sample, tree_rng);
  std::size_t distinct_conflicts = 0;
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (data.y[i] != data.y[k] && data.X.row_indices(i).size() == data.X.row_indices(k).size() &&
          std::equal(data.X.row_indices(i).begin(), data.X.row_indices(i).end(), data.X.row_indices(k).begin()) &&
          std::equal(data.X.row_values(i).begin(), data.X.row_values(i).end(), data.X.row_values(k).begin()))
        ++distinct_conflicts;
  ASSERT_EQ(distinct_conflicts, 0u);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(t.predict(data.X, i), data.y[i] ? 1.0 : 0.0);

  p.n_estimators = 1;
  auto m = train_forest(data.X, data.y, p, 3);
  const auto& t0 = m.trees[0];
  for (std::size_t k = 0; k < t0.size(); ++k)
    if (t0.feature[k] < 0) {
      EXPECT_TRUE(t0.value[k] == 0.0 || t0.value[k] == 1.0);
    }
}

TEST(Forest, DeterministicAndRowOrderInvariant) {
  Rng rng(52);
  auto data = make_data(rng, 80, 12, 0.3, 1.0);
  auto probe = make_data(rng, 40, 12, 0.3, 1.0);
  ForestParams p;
  p.n_estimators = 15;
  p.max_depth = 10;
  auto a = predict(train_forest(data.X, data.y, p, 99), probe.X);
  auto b = predict(train_forest(data.X, data.y, p, 99), probe.X);
  EXPECT_EQ(a, b);
  std::vector<std::size_t> perm(80);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<bool> y2;
  for (auto r : perm) y2.push_back(data.y[r]);
  auto c = predict(train_forest(data.X.select_rows(perm), y2, p, 99), probe.X);
  EXPECT_EQ(a, c);
  auto d = predict(train_forest(data.X, data.y, p, 100), probe.X);
  EXPECT_NE(a, d);
  for (double s : a) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Model, JsonRoundTripIsBitExact) {
  Rng rng(61);
  auto data = make_data(rng, 100, 7);
  GbtParams gp;
  gp.n_rounds = 20;
  ForestParams fp;
  fp.n_estimators = 5;
  std::vector<TrainedModel> models = {train(LogisticParams{}, data.X, data.y, 1, "bow:7:x"),
                                      train(gp, data.X, data.y, 2, "bow:7:x"), train(fp, data.X, data.y, 3, "bow:7:x")};
  auto path = std::filesystem::temp_directory_path() / "vacscreen_model_test.json";
  for (const auto& m : models) {
    auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(predict(back, data.X), predict(m, data.X));
    EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
    save_model(m, path);
    EXPECT_EQ(predict(load_model(path), data.X), predict(m, data.X));
  }
  auto j = to_json(models[0]);
  j["version"] = 99;
  EXPECT_THROW(model_from_json(j), ParseError);
  j = to_json(models[0]);
  j["weights"].erase(0);
  EXPECT_THROW(model_from_json(j), ParseError);
}

TEST(Grid, DefaultsAndOrder) {
  EXPECT_EQ(default_grid(ModelKind::logistic).expand().size(), 9u);
  EXPECT_EQ(default_grid(ModelKind::gbt).expand().size(), 54u);
  EXPECT_EQ(default_grid(ModelKind::forest).expand().size(), 60u);
  auto g = default_grid(ModelKind::gbt).expand();
  auto first = std::get<GbtParams>(g[0]);
  auto second = std::get<GbtParams>(g[1]);
  EXPECT_EQ(first.min_child_weight, 2.0);
  EXPECT_EQ(first.learning_rate, 0.3);
  EXPECT_EQ(first.max_depth, 10);
  EXPECT_EQ(second.max_depth, 50);
  EXPECT_EQ(first.scale_pos_weight, 2.5);
  for (const auto& pt : default_grid(ModelKind::forest).expand()) EXPECT_TRUE(std::get<ForestParams>(pt).balanced);
  auto parsed = grid_from_json(to_json(default_grid(ModelKind::forest)));
  EXPECT_EQ(parsed.expand().size(), 60u);
  EXPECT_THROW(grid_from_json({{"kind", "logistic"}, {"axes", {{"gamma", {1}}}}}), ConfigError);
  EXPECT_THROW(grid_from_json({{"kind", "logistic"}, {"axes", {{"C", nlohmann::json::array()}}}}), ConfigError);
  EXPECT_THROW(grid_from_json({{"kind", "svm"}}), ConfigError);
}
