#pragma once

// Class-imbalance-aware binary classifiers: L2-regularized logistic
// regression, gradient-boosted trees and a random forest, plus their
// hyperparameter grids and a JSON model container.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vacscreen/error.hpp"
#include "vacscreen/matrix.hpp"
#include "vacscreen/tree.hpp"
#include "vacscreen/util/jsonl.hpp"
#include "vacscreen/util/random.hpp"

namespace vacscreen {

enum class ModelKind { logistic, gbt, forest };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::gbt: return "gbt";
    case ModelKind::forest: return "forest";
  }
  return "";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "logistic") return ModelKind::logistic;
  if (s == "gbt") return ModelKind::gbt;
  if (s == "forest") return ModelKind::forest;
  throw ConfigError("classify", "unknown model kind '" + std::string(s) + "' (expected logistic, gbt or forest)");
}

// ---------------------------------------------------------------------------
// Hyperparameters

struct LogisticParams {
  double C = 1.0;
  bool balanced = true;
  double tolerance = 1e-8;
  int max_iterations = 100;
};

struct GbtParams {
  double min_child_weight = 2.0;
  double learning_rate = 0.3;
  int max_depth = 10;
  double scale_pos_weight = 2.5;
  int n_rounds = 200;
  int early_stopping_rounds = 10;  // 0 disables
  double lambda = 1.0;
};

struct ForestParams {
  int max_depth = 10;
  int n_estimators = 200;
  int min_samples_split = 2;
  bool balanced = true;
};

using ModelParams = std::variant<LogisticParams, GbtParams, ForestParams>;

inline ModelKind kind_of(const ModelParams& p) { return static_cast<ModelKind>(p.index()); }

inline nlohmann::json to_json(const ModelParams& p) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LogisticParams>)
          return {{"C", v.C}, {"class_weight", v.balanced ? "balanced" : "none"}, {"tolerance", v.tolerance},
                  {"max_iterations", v.max_iterations}};
        else if constexpr (std::is_same_v<T, GbtParams>)
          return {{"min_child_weight", v.min_child_weight},
                  {"learning_rate", v.learning_rate},
                  {"max_depth", v.max_depth},
                  {"scale_pos_weight", v.scale_pos_weight},
                  {"n_rounds", v.n_rounds},
                  {"early_stopping_rounds", v.early_stopping_rounds},
                  {"lambda", v.lambda}};
        else
          return {{"max_depth", v.max_depth},
                  {"n_estimators", v.n_estimators},
                  {"min_samples_split", v.min_samples_split},
                  {"class_weight", v.balanced ? "balanced" : "none"}};
      },
      p);
}

// Missing keys keep their defaults; unknown keys are rejected.
inline ModelParams params_from_json(ModelKind kind, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("classify", "hyperparameters must be an object");
  auto check_keys = [&](std::initializer_list<const char*> known) {
    for (const auto& [k, v] : j.items())
      if (std::find_if(known.begin(), known.end(), [&](const char* s) { return k == s; }) == known.end())
        throw ConfigError("classify", "unknown " + to_string(kind) + " hyperparameter '" + k + "'");
  };
  auto balanced = [&](bool def) {
    if (!j.contains("class_weight")) return def;
    auto s = j.at("class_weight").get<std::string>();
    if (s != "balanced" && s != "none") throw ConfigError("classify", "class_weight must be balanced or none");
    return s == "balanced";
  };
  try {
    switch (kind) {
      case ModelKind::logistic: {
        check_keys({"C", "class_weight", "tolerance", "max_iterations"});
        LogisticParams p;
        p.C = j.value("C", p.C);
        p.balanced = balanced(p.balanced);
        p.tolerance = j.value("tolerance", p.tolerance);
        p.max_iterations = j.value("max_iterations", p.max_iterations);
        if (!(p.C > 0) || !(p.tolerance > 0) || p.max_iterations < 1)
          throw ConfigError("classify", "logistic C, tolerance and max_iterations must be positive");
        return p;
      }
      case ModelKind::gbt: {
        check_keys({"min_child_weight", "learning_rate", "max_depth", "scale_pos_weight", "n_rounds",
                    "early_stopping_rounds", "lambda"});
        GbtParams p;
        p.min_child_weight = j.value("min_child_weight", p.min_child_weight);
        p.learning_rate = j.value("learning_rate", p.learning_rate);
        p.max_depth = j.value("max_depth", p.max_depth);
        p.scale_pos_weight = j.value("scale_pos_weight", p.scale_pos_weight);
        p.n_rounds = j.value("n_rounds", p.n_rounds);
        p.early_stopping_rounds = j.value("early_stopping_rounds", p.early_stopping_rounds);
        p.lambda = j.value("lambda", p.lambda);
        if (!(p.min_child_weight >= 0) || !(p.learning_rate > 0) || p.max_depth < 1 || !(p.scale_pos_weight > 0) ||
            p.n_rounds < 0 || p.early_stopping_rounds < 0 || !(p.lambda >= 0))
          throw ConfigError("classify", "invalid gbt hyperparameters");
        return p;
      }
      case ModelKind::forest: {
        check_keys({"max_depth", "n_estimators", "min_samples_split", "class_weight"});
        ForestParams p;
        p.max_depth = j.value("max_depth", p.max_depth);
        p.n_estimators = j.value("n_estimators", p.n_estimators);
        p.min_samples_split = j.value("min_samples_split", p.min_samples_split);
        p.balanced = balanced(p.balanced);
        if (p.max_depth < 1 || p.n_estimators < 1 || p.min_samples_split < 2)
          throw ConfigError("classify", "invalid forest hyperparameters");
        return p;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("classify", std::string("invalid hyperparameter value: ") + e.what());
  }
  return LogisticParams{};
}

// Axis values of a grid; expand() enumerates the Cartesian product with the
// first axis varying slowest.
struct HyperparameterGrid {
  ModelKind kind = ModelKind::logistic;
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
  nlohmann::json fixed = nlohmann::json::object();

  std::vector<ModelParams> expand() const {
    if (axes.empty()) return {params_from_json(kind, fixed)};
    for (const auto& [name, values] : axes)
      if (values.empty()) throw ConfigError("classify", "grid axis '" + name + "' is empty");
    std::vector<ModelParams> out;
    std::vector<std::size_t> pos(axes.size(), 0);
    while (true) {
      nlohmann::json j = fixed;
      for (std::size_t a = 0; a < axes.size(); ++a) j[axes[a].first] = axes[a].second[pos[a]];
      out.push_back(params_from_json(kind, j));
      std::size_t a = axes.size();
      while (a > 0) {
        --a;
        if (++pos[a] < axes[a].second.size()) break;
        pos[a] = 0;
        if (a == 0) return out;
      }
    }
  }

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& [name, values] : axes) n *= values.size();
    return n;
  }
};

inline HyperparameterGrid default_grid(ModelKind kind) {
  HyperparameterGrid g;
  g.kind = kind;
  using J = nlohmann::json;
  switch (kind) {
    case ModelKind::logistic:
      g.axes = {{"C", {J(0.01), J(0.05), J(0.1), J(0.5), J(1.0), J(5.0), J(10.0), J(50.0), J(100.0)}}};
      g.fixed = {{"class_weight", "balanced"}};
      break;
    case ModelKind::gbt:
      g.axes = {{"min_child_weight", {J(2.0), J(5.0), J(10.0)}},
                {"learning_rate", {J(0.3), J(0.2), J(0.1), J(0.05), J(0.01), J(0.005)}},
                {"max_depth", {J(10), J(50), J(100)}}};
      g.fixed = {{"scale_pos_weight", 2.5}};
      break;
    case ModelKind::forest:
      g.axes = {{"max_depth", {J(10), J(50), J(100)}},
                {"n_estimators", {J(200), J(600), J(1000), J(1400), J(2000)}},
                {"min_samples_split", {J(2), J(5), J(10), J(50)}}};
      g.fixed = {{"class_weight", "balanced"}};
      break;
  }
  return g;
}

inline nlohmann::json to_json(const HyperparameterGrid& g) {
  nlohmann::json axes = nlohmann::json::object();
  for (const auto& [name, values] : g.axes) axes[name] = values;
  return {{"kind", to_string(g.kind)}, {"axes", axes}, {"axis_order", [&] {
             std::vector<std::string> names;
             for (const auto& [name, values] : g.axes) names.push_back(name);
             return names;
           }()},
          {"fixed", g.fixed}};
}

// {"kind": ..., "axes": {name: [values]}, "axis_order": [...], "fixed": {...}}.
// Without axis_order, axes are taken in the order of the default grid, then
// alphabetically.
inline HyperparameterGrid grid_from_json(const nlohmann::json& j) {
  try {
    HyperparameterGrid g;
    g.kind = parse_model_kind(j.at("kind").get<std::string>());
    if (j.contains("fixed")) g.fixed = j.at("fixed");
    const auto& axes = j.contains("axes") ? j.at("axes") : nlohmann::json::object();
    std::vector<std::string> order;
    if (j.contains("axis_order")) {
      order = j.at("axis_order").get<std::vector<std::string>>();
    } else {
      for (const auto& [name, v] : default_grid(g.kind).axes)
        if (axes.contains(name)) order.push_back(name);
      for (const auto& [name, v] : axes.items())
        if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
    }
    for (const auto& name : order) {
      if (!axes.contains(name)) throw ConfigError("classify", "axis_order names unknown axis '" + name + "'");
      g.axes.emplace_back(name, axes.at(name).get<std::vector<nlohmann::json>>());
    }
    if (order.size() != axes.size()) throw ConfigError("classify", "axis_order must list every axis");
    g.expand();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("classify", std::string("malformed grid: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Shared checks

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
};

inline void check_training_data(const FeatureMatrix& X, const std::vector<bool>& y) {
  if (X.rows() != y.size())
    throw InputError("classify", "feature matrix has " + std::to_string(X.rows()) + " rows but " +
                                     std::to_string(y.size()) + " labels");
  if (y.empty()) throw InputError("classify", "empty training set");
  std::size_t pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), true));
  if (pos == 0 || pos == y.size()) throw InputError("classify", "training labels contain a single class");
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (double v : X.row_values(r))
      if (!std::isfinite(v)) throw InputError("classify", "non-finite feature value in row " + std::to_string(r));
}

// w_c = N / (2 N_c)
inline ClassWeights balanced_class_weights(const std::vector<bool>& y) {
  double n = static_cast<double>(y.size());
  double pos = static_cast<double>(std::count(y.begin(), y.end(), true));
  if (pos == 0 || pos == n) throw InputError("classify", "training labels contain a single class");
  return {n / (2 * (n - pos)), n / (2 * pos)};
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// ---------------------------------------------------------------------------
// Logistic regression
//
// Objective: 0.5 ||w||^2 + C * sum_i s_i * logloss(y_i, x_i.w + b), with the
// bias unpenalized and s_i the class weight of row i.

struct LogisticFit {
  std::vector<double> weights;
  double bias = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;  // max-norm at the returned point
  double objective = 0.0;
};

inline std::vector<double> row_weights(const std::vector<bool>& y, const ClassWeights& cw) {
  std::vector<double> s(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) s[i] = y[i] ? cw.positive : cw.negative;
  return s;
}

// theta = (w_0 .. w_{d-1}, b). Returns the objective; fills grad when given.
inline double logistic_objective(const FeatureMatrix& X, const std::vector<bool>& y, const std::vector<double>& s,
                                 double C, const std::vector<double>& theta, std::vector<double>* grad = nullptr) {
  const std::size_t d = X.cols();
  std::span<const double> w(theta.data(), d);
  const double b = theta[d];
  double f = 0.0;
  for (std::size_t j = 0; j < d; ++j) f += 0.5 * w[j] * w[j];
  if (grad) {
    grad->assign(d + 1, 0.0);
    for (std::size_t j = 0; j < d; ++j) (*grad)[j] = w[j];
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double z = X.dot(i, w) + b;
    loss += s[i] * softplus(y[i] ? -z : z);
    if (grad) {
      double r = C * s[i] * (sigmoid(z) - (y[i] ? 1.0 : 0.0));
      auto idx = X.row_indices(i);
      auto val = X.row_values(i);
      for (std::size_t k = 0; k < idx.size(); ++k) (*grad)[idx[k]] += r * val[k];
      (*grad)[d] += r;
    }
  }
  return f + C * loss;
}

namespace detail {

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// Truncated Newton (conjugate gradient inner solve) with Armijo backtracking.
inline LogisticFit train_logistic_weights(const FeatureMatrix& X, const std::vector<bool>& y, const LogisticParams& p) {
  check_training_data(X, y);
  const std::size_t d = X.cols();
  const std::size_t n = X.rows();
  auto s = row_weights(y, p.balanced ? balanced_class_weights(y) : ClassWeights{});
  std::vector<double> theta(d + 1, 0.0), grad, z(n), D(n);
  double f = logistic_objective(X, y, s, p.C, theta, &grad);
  LogisticFit fit;
  auto hess_vec = [&](const std::vector<double>& v, std::vector<double>& out) {
    out.assign(d + 1, 0.0);
    std::span<const double> vw(v.data(), d);
    for (std::size_t j = 0; j < d; ++j) out[j] = v[j];
    for (std::size_t i = 0; i < n; ++i) {
      double t = p.C * D[i] * (X.dot(i, vw) + v[d]);
      auto idx = X.row_indices(i);
      auto val = X.row_values(i);
      for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] += t * val[k];
      out[d] += t;
    }
  };
  const std::size_t max_cg = std::min<std::size_t>(d + 1, 2000);
  while (true) {
    fit.gradient_norm = detail::max_abs(grad);
    if (fit.gradient_norm <= p.tolerance) {
      fit.converged = true;
      break;
    }
    if (fit.iterations >= p.max_iterations) break;
    ++fit.iterations;
    std::span<const double> w(theta.data(), d);
    for (std::size_t i = 0; i < n; ++i) {
      double q = sigmoid(X.dot(i, w) + theta[d]);
      D[i] = s[i] * q * (1 - q);
    }
    // CG on H step = -grad
    std::vector<double> step(d + 1, 0.0), r(d + 1), dir, Hd;
    for (std::size_t j = 0; j <= d; ++j) r[j] = -grad[j];
    dir = r;
    double rr = detail::dot(r, r);
    double gnorm = std::sqrt(rr);
    double target = std::min(0.5, std::sqrt(gnorm)) * gnorm;
    for (std::size_t it = 0; it < max_cg && std::sqrt(rr) > target; ++it) {
      hess_vec(dir, Hd);
      double curvature = detail::dot(dir, Hd);
      if (!(curvature > 0)) break;
      double alpha = rr / curvature;
      for (std::size_t j = 0; j <= d; ++j) {
        step[j] += alpha * dir[j];
        r[j] -= alpha * Hd[j];
      }
      double rr_new = detail::dot(r, r);
      double beta = rr_new / rr;
      rr = rr_new;
      for (std::size_t j = 0; j <= d; ++j) dir[j] = r[j] + beta * dir[j];
    }
    double slope = detail::dot(grad, step);
    if (!(slope < 0)) {
      step.assign(d + 1, 0.0);
      for (std::size_t j = 0; j <= d; ++j) step[j] = -grad[j];
      slope = -detail::dot(grad, grad);
    }
    double a = 1.0;
    std::vector<double> trial(d + 1), trial_grad;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, a *= 0.5) {
      for (std::size_t j = 0; j <= d; ++j) trial[j] = theta[j] + a * step[j];
      double ft = logistic_objective(X, y, s, p.C, trial, &trial_grad);
      bool sufficient = ft <= f + 1e-4 * a * slope;
      // A step that leaves the objective unchanged up to rounding is also
      // accepted when it lowers the gradient max-norm.
      bool flat = std::abs(ft - f) <= 1e-12 * std::max(1.0, std::abs(f)) &&
                  detail::max_abs(trial_grad) < fit.gradient_norm;
      if (sufficient || flat) {
        theta.swap(trial);
        grad.swap(trial_grad);
        f = ft;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      fit.gradient_norm = detail::max_abs(grad);
      break;
    }
  }
  fit.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  fit.bias = theta[d];
  fit.objective = f;
  return fit;
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees
//
// Second-order boosting of the logistic loss from a zero margin. Positive
// rows carry weight scale_pos_weight in gradients and hessians. Each leaf
// value -eta * G / (H + lambda) is halved until it does not raise the leaf's
// weighted loss, so the training loss never increases between rounds.

struct GbtFit {
  std::vector<tree::Tree> trees;
  std::vector<double> loss_history;  // weighted mean log-loss, entry 0 before any round
  int rounds = 0;
  bool early_stopped = false;
};

namespace detail {

struct GradStats {
  double G = 0, H = 0;
  GradStats& operator+=(const GradStats& o) {
    G += o.G;
    H += o.H;
    return *this;
  }
  GradStats operator-(const GradStats& o) const { return {G - o.G, H - o.H}; }
};

inline double weighted_logloss(const std::vector<bool>& y, const std::vector<double>& s,
                               const std::vector<double>& margin) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += s[i] * softplus(y[i] ? -margin[i] : margin[i]);
    den += s[i];
  }
  return num / den;
}

}  // namespace detail

inline GbtFit train_gbt_trees(const FeatureMatrix& X, const std::vector<bool>& y, const GbtParams& p) {
  check_training_data(X, y);
  const std::size_t n = X.rows();
  std::vector<double> s(n), margin(n, 0.0), g(n), h(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = y[i] ? p.scale_pos_weight : 1.0;
  GbtFit fit;
  fit.loss_history.push_back(detail::weighted_logloss(y, s, margin));
  double best = fit.loss_history.back();
  int since_best = 0;

  auto leaf_loss = [&](const std::vector<std::size_t>& rows, double delta) {
    double l = 0.0;
    for (auto r : rows) {
      double m = margin[r] + delta;
      l += s[r] * softplus(y[r] ? -m : m);
    }
    return l;
  };

  for (int round = 0; round < p.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      double q = sigmoid(margin[i]);
      g[i] = s[i] * (q - (y[i] ? 1.0 : 0.0));
      h[i] = s[i] * q * (1 - q);
    }
    tree::Tree t;
    std::vector<std::pair<std::int32_t, std::vector<std::size_t>>> leaves;
    std::function<std::int32_t(std::vector<std::size_t>, int)> grow = [&](std::vector<std::size_t> rows,
                                                                         int depth) -> std::int32_t {
      detail::GradStats total;
      for (auto r : rows) total += {g[r], h[r]};
      auto make_leaf = [&] {
        auto id = t.add_leaf(0.0);
        leaves.emplace_back(id, std::move(rows));
        return id;
      };
      if (depth >= p.max_depth || total.H < 2 * p.min_child_weight) return make_leaf();
      auto score = [&](const detail::GradStats& L, const detail::GradStats& R) -> std::optional<double> {
        if (L.H < p.min_child_weight || R.H < p.min_child_weight) return std::nullopt;
        return 0.5 * (L.G * L.G / (L.H + p.lambda) + R.G * R.G / (R.H + p.lambda) -
                      total.G * total.G / (total.H + p.lambda));
      };
      auto split = tree::best_split<detail::GradStats>(
          X, rows, [&](std::size_t r) { return detail::GradStats{g[r], h[r]}; }, [](auto&) {}, score);
      if (!split.found || !(split.gain > 0)) return make_leaf();
      std::vector<std::size_t> lrows, rrows;
      tree::partition(X, rows, split.feature, split.threshold, lrows, rrows);
      auto id = t.add_leaf(0.0);
      t.feature[static_cast<std::size_t>(id)] = static_cast<std::int32_t>(split.feature);
      t.threshold[static_cast<std::size_t>(id)] = split.threshold;
      auto l = grow(std::move(lrows), depth + 1);
      auto r = grow(std::move(rrows), depth + 1);
      t.left[static_cast<std::size_t>(id)] = l;
      t.right[static_cast<std::size_t>(id)] = r;
      return id;
    };
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    grow(std::move(all), 0);

    for (auto& [id, rows] : leaves) {
      detail::GradStats st;
      for (auto r : rows) st += {g[r], h[r]};
      double v = -p.learning_rate * st.G / (st.H + p.lambda);
      double before = leaf_loss(rows, 0.0);
      int halvings = 0;
      while (v != 0.0 && !(leaf_loss(rows, v) < before - 1e-12 * before)) {
        v = ++halvings > 40 ? 0.0 : v / 2;
      }
      t.value[static_cast<std::size_t>(id)] = v;
      for (auto r : rows) margin[r] += v;
    }
    fit.trees.push_back(std::move(t));
    fit.rounds = round + 1;
    double loss = detail::weighted_logloss(y, s, margin);
    fit.loss_history.push_back(loss);
    if (loss < best) {
      best = loss;
      since_best = 0;
    } else if (p.early_stopping_rounds > 0 && ++since_best >= p.early_stopping_rounds) {
      fit.early_stopped = true;
      break;
    }
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Random forest
//
// Rows are first put in a canonical order by content so the model does not
// depend on input order. Each tree sees a bootstrap sample drawn from its own
// derived seed, splits by class-weighted Gini impurity over sqrt(d) features
// drawn from the node's non-constant features, and stores the class-weighted
// positive fraction at each leaf.

struct ForestFit {
  std::vector<tree::Tree> trees;
};

namespace detail {

struct ClassStats {
  double w0 = 0, w1 = 0;
  double n = 0;
  ClassStats& operator+=(const ClassStats& o) {
    w0 += o.w0;
    w1 += o.w1;
    n += o.n;
    return *this;
  }
  ClassStats operator-(const ClassStats& o) const { return {w0 - o.w0, w1 - o.w1, n - o.n}; }
};

inline double gini_mass(const ClassStats& s) {
  double w = s.w0 + s.w1;
  if (w <= 0) return 0.0;
  return w - (s.w0 * s.w0 + s.w1 * s.w1) / w;
}

inline std::vector<std::size_t> canonical_row_order(const FeatureMatrix& X, const std::vector<bool>& y) {
  std::vector<std::uint64_t> hash(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    std::uint64_t h = fnv1a64(y[r] ? "1" : "0");
    auto idx = X.row_indices(r);
    auto val = X.row_values(r);
    h = fnv1a64({reinterpret_cast<const char*>(idx.data()), idx.size_bytes()}, h);
    h = fnv1a64({reinterpret_cast<const char*>(val.data()), val.size_bytes()}, h);
    hash[r] = h;
  }
  std::vector<std::size_t> order(X.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (hash[a] != hash[b]) return hash[a] < hash[b];
    if (y[a] != y[b]) return y[b];
    auto ia = X.row_indices(a), ib = X.row_indices(b);
    if (!std::equal(ia.begin(), ia.end(), ib.begin(), ib.end()))
      return std::lexicographical_compare(ia.begin(), ia.end(), ib.begin(), ib.end());
    auto va = X.row_values(a), vb = X.row_values(b);
    return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
  });
  return order;
}

}  // namespace detail

inline tree::Tree grow_forest_tree(const FeatureMatrix& X, const std::vector<bool>& y, const ClassWeights& cw,
                                   const ForestParams& p, std::vector<std::size_t> sample, Rng& rng) {
  const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(X.cols())))));
  tree::Tree t;
  auto stat_of = [&](std::size_t r) {
    return y[r] ? detail::ClassStats{0, cw.positive, 1} : detail::ClassStats{cw.negative, 0, 1};
  };
  std::function<std::int32_t(std::vector<std::size_t>, int)> grow = [&](std::vector<std::size_t> rows,
                                                                       int depth) -> std::int32_t {
    detail::ClassStats total;
    for (auto r : rows) total += stat_of(r);
    double leaf = total.w1 / (total.w0 + total.w1);
    bool pure = total.w0 == 0 || total.w1 == 0;
    if (pure || depth >= p.max_depth || total.n < p.min_samples_split) return t.add_leaf(leaf);
    auto select = [&](std::vector<std::uint32_t>& features) {
      if (features.size() <= m) return;
      for (std::size_t i = 0; i < m; ++i) std::swap(features[i], features[i + rng.below(features.size() - i)]);
      features.resize(m);
      std::sort(features.begin(), features.end());
    };
    const double parent = detail::gini_mass(total);
    auto score = [&](const detail::ClassStats& L, const detail::ClassStats& R) -> std::optional<double> {
      return parent - detail::gini_mass(L) - detail::gini_mass(R);
    };
    auto split = tree::best_split<detail::ClassStats>(X, rows, stat_of, select, score);
    if (!split.found) return t.add_leaf(leaf);
    std::vector<std::size_t> lrows, rrows;
    tree::partition(X, rows, split.feature, split.threshold, lrows, rrows);
    auto id = t.add_leaf(leaf);
    t.feature[static_cast<std::size_t>(id)] = static_cast<std::int32_t>(split.feature);
    t.threshold[static_cast<std::size_t>(id)] = split.threshold;
    auto l = grow(std::move(lrows), depth + 1);
    auto r = grow(std::move(rrows), depth + 1);
    t.left[static_cast<std::size_t>(id)] = l;
    t.right[static_cast<std::size_t>(id)] = r;
    return id;
  };
  grow(std::move(sample), 0);
  return t;
}

inline ForestFit train_forest_trees(const FeatureMatrix& X, const std::vector<bool>& y, const ForestParams& p,
                                    std::uint64_t seed) {
  check_training_data(X, y);
  auto cw = p.balanced ? balanced_class_weights(y) : ClassWeights{};
  auto order = detail::canonical_row_order(X, y);
  ForestFit fit;
  for (int k = 0; k < p.n_estimators; ++k) {
    Rng rng(derive_seed(seed, "forest-tree", static_cast<std::uint64_t>(k)));
    std::vector<std::size_t> sample(order.size());
    for (auto& r : sample) r = order[rng.below(order.size())];
    std::sort(sample.begin(), sample.end());
    fit.trees.push_back(grow_forest_tree(X, y, cw, p, std::move(sample), rng));
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Trained model container

inline constexpr int kModelFormatVersion = 1;

struct TrainingInfo {
  int iterations = 0;
  bool converged = true;
  double gradient_norm = 0.0;
  std::vector<double> loss_history;
};

struct TrainedModel {
  ModelKind kind = ModelKind::logistic;
  ModelParams params;
  std::string feature_space;
  std::size_t dimension = 0;
  std::uint64_t seed = 0;
  std::vector<double> weights;  // logistic
  double bias = 0.0;            // logistic
  std::vector<tree::Tree> trees;
  TrainingInfo info;
};

inline TrainedModel train(const ModelParams& params, const FeatureMatrix& X, const std::vector<bool>& y,
                          std::uint64_t seed, std::string feature_space = "") {
  TrainedModel m;
  m.kind = kind_of(params);
  m.params = params;
  m.feature_space = std::move(feature_space);
  m.dimension = X.cols();
  m.seed = seed;
  if (auto* lp = std::get_if<LogisticParams>(&params)) {
    auto fit = train_logistic_weights(X, y, *lp);
    m.weights = std::move(fit.weights);
    m.bias = fit.bias;
    m.info.iterations = fit.iterations;
    m.info.converged = fit.converged;
    m.info.gradient_norm = fit.gradient_norm;
  } else if (auto* gp = std::get_if<GbtParams>(&params)) {
    auto fit = train_gbt_trees(X, y, *gp);
    m.trees = std::move(fit.trees);
    m.info.iterations = fit.rounds;
    m.info.loss_history = std::move(fit.loss_history);
  } else {
    auto fit = train_forest_trees(X, y, std::get<ForestParams>(params), seed);
    m.trees = std::move(fit.trees);
    m.info.iterations = static_cast<int>(m.trees.size());
  }
  return m;
}

inline TrainedModel train_logistic(const FeatureMatrix& X, const std::vector<bool>& y, const LogisticParams& p = {},
                                   std::uint64_t seed = 0) {
  return train(p, X, y, seed);
}
inline TrainedModel train_gbt(const FeatureMatrix& X, const std::vector<bool>& y, const GbtParams& p = {},
                              std::uint64_t seed = 0) {
  return train(p, X, y, seed);
}
inline TrainedModel train_forest(const FeatureMatrix& X, const std::vector<bool>& y, const ForestParams& p = {},
                                 std::uint64_t seed = 0) {
  return train(p, X, y, seed);
}

inline double decision_value(const TrainedModel& m, const FeatureMatrix& X, std::size_t r) {
  switch (m.kind) {
    case ModelKind::logistic: return X.dot(r, m.weights) + m.bias;
    case ModelKind::gbt: {
      double z = 0.0;
      for (const auto& t : m.trees) z += t.predict(X, r);
      return z;
    }
    case ModelKind::forest: {
      double s = 0.0;
      for (const auto& t : m.trees) s += t.predict(X, r);
      return s / static_cast<double>(m.trees.size());
    }
  }
  return 0.0;
}

inline std::vector<double> predict(const TrainedModel& m, const FeatureMatrix& X) {
  if (X.cols() != m.dimension)
    throw InputError("classify", "feature dimension " + std::to_string(X.cols()) + " does not match model dimension " +
                                     std::to_string(m.dimension));
  std::vector<double> out(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double v = decision_value(m, X, r);
    out[r] = m.kind == ModelKind::forest ? std::clamp(v, 0.0, 1.0) : sigmoid(v);
  }
  return out;
}

// Refuses features from a different feature space than the model was trained on.
inline std::vector<double> predict(const TrainedModel& m, const FeatureMatrix& X, const std::string& feature_space) {
  if (!m.feature_space.empty() && m.feature_space != feature_space)
    throw InputError("classify", "feature space mismatch: model trained on " + m.feature_space + ", given " +
                                     feature_space);
  return predict(m, X);
}

inline nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json j{{"format", "vacscreen-model"},
                   {"version", kModelFormatVersion},
                   {"kind", to_string(m.kind)},
                   {"hyperparameters", to_json(m.params)},
                   {"feature_space", m.feature_space},
                   {"dimension", m.dimension},
                   {"seed", m.seed},
                   {"training", {{"iterations", m.info.iterations},
                                 {"converged", m.info.converged},
                                 {"gradient_norm", m.info.gradient_norm},
                                 {"loss_history", m.info.loss_history}}}};
  if (m.kind == ModelKind::logistic) {
    j["weights"] = m.weights;
    j["bias"] = m.bias;
  } else {
    auto trees = nlohmann::json::array();
    for (const auto& t : m.trees) trees.push_back(tree::to_json(t));
    j["trees"] = trees;
  }
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "vacscreen-model") throw ParseError("classify", "not a model file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw ParseError("classify", "unsupported model format version " + std::to_string(j.at("version").get<int>()));
    TrainedModel m;
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.params = params_from_json(m.kind, j.at("hyperparameters"));
    m.feature_space = j.at("feature_space").get<std::string>();
    m.dimension = j.at("dimension").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& tr = j.at("training");
    m.info.iterations = tr.at("iterations").get<int>();
    m.info.converged = tr.at("converged").get<bool>();
    m.info.gradient_norm = tr.at("gradient_norm").get<double>();
    m.info.loss_history = tr.at("loss_history").get<std::vector<double>>();
    if (m.kind == ModelKind::logistic) {
      m.weights = j.at("weights").get<std::vector<double>>();
      m.bias = j.at("bias").get<double>();
      if (m.weights.size() != m.dimension) throw ParseError("classify", "weight vector does not match dimension");
    } else {
      for (const auto& t : j.at("trees")) m.trees.push_back(tree::tree_from_json(t));
      if (m.kind == ModelKind::forest && m.trees.empty()) throw ParseError("classify", "forest without trees");
      for (const auto& t : m.trees)
        for (auto f : t.feature)
          if (f >= static_cast<std::int32_t>(m.dimension)) throw ParseError("classify", "tree feature out of range");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("classify", std::string("malformed model: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError("classify", std::string("malformed model: ") + e.what());
  }
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  io::write_file(path, to_json(m).dump() + "\n", "classify");
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  auto content = io::read_file(path, "classify");
  try {
    return model_from_json(nlohmann::json::parse(content));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("classify", path.filename().string() + ": " + e.what());
  }
}

}  // namespace vacscreen
