#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wxhome/data.hpp"
#include "wxhome/error.hpp"
#include "wxhome/features.hpp"

namespace wxhome {

inline constexpr int kModelFormatVersion = 1;

struct TrainOptions {
  double C = 0.025;
  double tol = 1e-3;
  std::size_t max_iter = 1000;
  std::uint64_t seed = 1;
  /// Scale C per class by n / (2 n_class). Off by default.
  bool balance_classes = false;
};

/// Linear classifier over a binary vocabulary space; rain is the positive class.
struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  double C = 0.025;
  std::size_t iterations = 0;
  double kkt_residual = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t vocab_hash = 0;
  /// Dual variables of the training run; not persisted.
  std::vector<double> duals;
};

namespace detail {

inline double sparse_dot(const std::vector<double>& w, double bias, const FeatureVector& v) {
  double s = bias;
  for (auto j : v.active) s += w[j];
  return s;
}

inline void check_training_set(std::span<const FeatureVector> xs, const std::vector<bool>& labels) {
  if (xs.empty()) throw DataError("training set is empty");
  if (xs.size() != labels.size()) {
    throw DataError("training set has " + std::to_string(xs.size()) + " vectors but " +
                    std::to_string(labels.size()) + " labels");
  }
  const std::size_t dim = xs.front().dim;
  for (const auto& x : xs) {
    if (x.dim != dim) throw DataError("feature dimension mismatch in training set");
    for (auto j : x.active) {
      if (j >= dim) throw DataError("feature index out of range");
    }
  }
  const auto pos = std::count(labels.begin(), labels.end(), true);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
    throw DataError("training set contains a single class; both rain and no-rain are required");
  }
}

} // namespace detail

/// L1-hinge linear SVM solved in the dual by coordinate descent over examples.
/// The bias is an extra always-on feature, so it is regularized like any weight.
///
/// Dual:  min_a  1/2 sum_ij a_i a_j y_i y_j (x_i.x_j + 1) - sum_i a_i,  0 <= a_i <= C.
/// Stops when the largest projected-gradient magnitude at the current iterate falls below tol.
inline LinearModel train(std::span<const FeatureVector> xs, const std::vector<bool>& labels,
                         const TrainOptions& opt = {}) {
  if (!(opt.C > 0.0) || !std::isfinite(opt.C)) throw UsageError("C must be positive");
  if (!(opt.tol > 0.0)) throw UsageError("tol must be positive");
  detail::check_training_set(xs, labels);

  const std::size_t n = xs.size();
  const std::size_t dim = xs.front().dim;
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double c_pos = opt.balance_classes ? opt.C * static_cast<double>(n) / (2.0 * n_pos) : opt.C;
  const double c_neg =
      opt.balance_classes ? opt.C * static_cast<double>(n) / (2.0 * (static_cast<double>(n) - n_pos))
                          : opt.C;

  LinearModel model;
  model.weights.assign(dim, 0.0);
  model.C = opt.C;
  model.seed = opt.seed;
  model.duals.assign(n, 0.0);

  std::vector<double> y(n), upper(n), qdiag(n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = labels[i] ? 1.0 : -1.0;
    upper[i] = labels[i] ? c_pos : c_neg;
    qdiag[i] = static_cast<double>(xs[i].active.size()) + 1.0;
    order[i] = i;
  }

  std::mt19937_64 rng(opt.seed);
  auto& alpha = model.duals;
  auto& w = model.weights;
  double& b = model.bias;

  auto projected_gradient = [&](std::size_t i, double g) {
    if (alpha[i] <= 0.0) return std::min(g, 0.0);
    if (alpha[i] >= upper[i]) return std::max(g, 0.0);
    return g;
  };

  auto kkt_residual = [&] {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = y[i] * detail::sparse_dot(w, b, xs[i]) - 1.0;
      r = std::max(r, std::abs(projected_gradient(i, g)));
    }
    return r;
  };

  std::size_t epoch = 0;
  double residual = kkt_residual();
  while (epoch < opt.max_iter && residual >= opt.tol) {
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    double max_violation = 0.0;
    for (std::size_t i : order) {
      const double g = y[i] * detail::sparse_dot(w, b, xs[i]) - 1.0;
      const double pg = projected_gradient(i, g);
      max_violation = std::max(max_violation, std::abs(pg));
      if (std::abs(pg) > 1e-12) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / qdiag[i], 0.0, upper[i]);
        const double delta = (alpha[i] - old) * y[i];
        for (auto j : xs[i].active) w[j] += delta;
        b += delta;
      }
    }
    ++epoch;
    // in-sweep violations use stale gradients; confirm against the final iterate
    if (max_violation < opt.tol) residual = kkt_residual();
  }
  model.iterations = epoch;
  if (epoch == opt.max_iter) residual = kkt_residual();
  model.kkt_residual = residual;
  return model;
}

inline double decision(const LinearModel& model, const FeatureVector& v) {
  if (v.dim != model.weights.size()) {
    throw UsageError("feature dimension " + std::to_string(v.dim) + " does not match model " +
                     std::to_string(model.weights.size()));
  }
  for (auto j : v.active) {
    if (j >= v.dim) throw UsageError("feature index out of range");
  }
  return detail::sparse_dot(model.weights, model.bias, v);
}

/// Rain iff the score is strictly positive.
inline bool predict(const LinearModel& model, const FeatureVector& v) {
  return decision(model, v) > 0.0;
}

/// Dual objective (to be minimized) evaluated at `duals`, recomputing the
/// weight vector from scratch.
inline double dual_objective(std::span<const double> duals, std::span<const FeatureVector> xs,
                             const std::vector<bool>& labels) {
  if (xs.empty()) return 0.0;
  std::vector<double> w(xs.front().dim, 0.0);
  double b = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double ay = duals[i] * (labels[i] ? 1.0 : -1.0);
    for (auto j : xs[i].active) w[j] += ay;
    b += ay;
    sum += duals[i];
  }
  double sq = b * b;
  for (double v : w) sq += v * v;
  return 0.5 * sq - sum;
}

/// Primal objective 1/2 |w|^2 + 1/2 b^2 + C sum hinge.
inline double primal_objective(const LinearModel& model, std::span<const FeatureVector> xs,
                               const std::vector<bool>& labels) {
  double sq = model.bias * model.bias;
  for (double v : model.weights) sq += v * v;
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double margin = (labels[i] ? 1.0 : -1.0) * decision(model, xs[i]);
    loss += std::max(0.0, 1.0 - margin);
  }
  return 0.5 * sq + model.C * loss;
}

// ---------------------------------------------------------------------------
// Model file

inline void write_model(std::ostream& out, const LinearModel& model) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(model.vocab_hash));
  out << "wxhome-linear-svm " << kModelFormatVersion << '\n'
      << "vocab_hash " << hash << '\n'
      << "dim " << model.weights.size() << '\n'
      << "cost " << csv::format_double(model.C) << '\n'
      << "bias " << csv::format_double(model.bias) << '\n'
      << "iterations " << model.iterations << '\n'
      << "kkt_residual " << csv::format_double(model.kkt_residual) << '\n'
      << "seed " << model.seed << '\n';
  std::size_t nnz = 0;
  for (double v : model.weights) nnz += v != 0.0;
  out << "nonzero " << nnz << '\n';
  for (std::size_t j = 0; j < model.weights.size(); ++j) {
    if (model.weights[j] != 0.0) out << j << ' ' << csv::format_double(model.weights[j]) << '\n';
  }
}

/// Reads a model and refuses it unless it was trained on `vocab`.
inline LinearModel parse_model(std::istream& in, const Vocabulary& vocab,
                               const std::string& source = "<model>") {
  auto fail = [&](const std::string& what) { return DataError(source + ": " + what); };
  auto expect = [&](const char* key) {
    std::string k, v;
    if (!(in >> k >> v) || k != key) throw fail(std::string("expected '") + key + "'");
    return v;
  };
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "wxhome-linear-svm") throw fail("not a model file");
  if (version != kModelFormatVersion) throw fail("unsupported model version " + std::to_string(version));

  LinearModel m;
  const std::string hash = expect("vocab_hash");
  m.vocab_hash = std::stoull(hash, nullptr, 16);
  if (m.vocab_hash != vocab.hash()) throw fail("vocabulary hash mismatch");
  std::size_t dim = 0;
  if (!csv::parse_number(expect("dim"), dim) || dim != vocab.size()) throw fail("dimension mismatch");
  if (!csv::parse_number(expect("cost"), m.C)) throw fail("bad cost");
  if (!csv::parse_number(expect("bias"), m.bias)) throw fail("bad bias");
  if (!csv::parse_number(expect("iterations"), m.iterations)) throw fail("bad iterations");
  if (!csv::parse_number(expect("kkt_residual"), m.kkt_residual)) throw fail("bad kkt_residual");
  if (!csv::parse_number(expect("seed"), m.seed)) throw fail("bad seed");
  std::size_t nnz = 0;
  if (!csv::parse_number(expect("nonzero"), nnz)) throw fail("bad nonzero count");
  m.weights.assign(dim, 0.0);
  for (std::size_t k = 0; k < nnz; ++k) {
    std::string js, ws;
    std::size_t j = 0;
    double wv = 0.0;
    if (!(in >> js >> ws) || !csv::parse_number(js, j) || !csv::parse_number(ws, wv) || j >= dim) {
      throw fail("bad weight entry " + std::to_string(k));
    }
    m.weights[j] = wv;
  }
  return m;
}

inline LinearModel load_model(const std::filesystem::path& path, const Vocabulary& vocab) {
  auto in = open_input(path);
  return parse_model(in, vocab, path.string());
}

} // namespace wxhome
