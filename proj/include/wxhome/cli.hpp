#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wxhome/baselines.hpp"
#include "wxhome/data.hpp"
#include "wxhome/error.hpp"
#include "wxhome/estimator.hpp"
#include "wxhome/eval.hpp"
#include "wxhome/features.hpp"
#include "wxhome/lexicon.hpp"
#include "wxhome/pipeline.hpp"
#include "wxhome/svm.hpp"
#include "wxhome/synth.hpp"
#include "wxhome/workflow.hpp"

namespace wxhome::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

inline std::string version_string() {
  std::ostringstream s;
  s << "wxhome " << kToolVersion << " (model-format " << kModelFormatVersion
    << ", corpus-format 1, estimates-format 1, world-format 1)";
  return s.str();
}

enum ExitCode { kOk = 0, kUsage = 1, kData = 2 };

// ---------------------------------------------------------------------------
// Config files: `key = value` lines, `#` comments, `[section]` headers ignored.
// Keys are option names without the leading dashes (`_` and `-` both accepted).

inline std::vector<std::string> config_to_flags(const fs::path& path) {
  auto in = open_input(path);
  std::vector<std::string> flags;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s.front() == '#' || s.front() == '[') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError(at_line(path.string(), lineno) + "expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"') {
      const auto close = value.find('"', 1);
      value = value.substr(1, close == std::string::npos ? std::string::npos : close - 1);
    } else {
      if (auto hash = value.find('#'); hash != std::string::npos) value = trim(value.substr(0, hash));
      if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
        value = value.substr(1, value.size() - 2);
        std::string joined;
        std::stringstream parts(value);
        std::string part;
        while (std::getline(parts, part, ',')) {
          part = trim(part);
          if (part.empty()) continue;
          if (!joined.empty()) joined += ',';
          joined += part;
        }
        value = joined;
      }
    }
    for (char& c : key) {
      if (c == '_') c = '-';
    }
    flags.push_back("--" + key + "=" + value);
  }
  return flags;
}

/// Replaces `--config FILE` after the subcommand with the flags it defines;
/// a key also given explicitly on the command line is dropped from the file.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  if (args.size() < 2) return args;
  for (std::size_t i = 2; i < args.size(); ++i) {
    std::string file;
    std::size_t consumed = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
      consumed = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      consumed = 1;
    }
    if (consumed == 0) continue;
    auto flags = config_to_flags(file);
    auto name_of = [](const std::string& a) { return a.substr(0, a.find('=')); };
    std::set<std::string> explicit_names;
    for (std::size_t j = 2; j < args.size(); ++j) {
      if (j != i && args[j].rfind("--", 0) == 0) explicit_names.insert(name_of(args[j]));
    }
    std::erase_if(flags, [&](const std::string& f) { return explicit_names.contains(name_of(f)); });
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
               args.begin() + static_cast<std::ptrdiff_t>(i + consumed));
    args.insert(args.begin() + 2, flags.begin(), flags.end());
    break;
  }
  return args;
}

// ---------------------------------------------------------------------------
// Shared helpers

inline std::vector<double> parse_sweep(const std::string& spec) {
  std::vector<double> out;
  std::stringstream s(spec);
  std::string a, b, c;
  if (!std::getline(s, a, ':') || !std::getline(s, b, ':') || !std::getline(s, c)) {
    throw UsageError("sweep must look like start:stop:step");
  }
  double lo = 0, hi = 0, step = 0;
  if (!csv::parse_number(a, lo) || !csv::parse_number(b, hi) || !csv::parse_number(c, step) ||
      !(step > 0.0) || !(lo > 0.0) || hi < lo) {
    throw UsageError("bad sweep '" + spec + "'");
  }
  for (int i = 0;; ++i) {
    const double d = lo + step * i;
    if (d > hi + 1e-9) break;
    out.push_back(d);
  }
  return out;
}

inline Denominator parse_denominator(const std::string& s) {
  if (s == "paper") return Denominator::all_users;
  if (s == "per-group" || s == "per_group") return Denominator::per_group;
  throw UsageError("denominator must be paper or per-group");
}

inline MissingPolicy parse_policy(const std::string& s) {
  if (s == "strict") return MissingPolicy::strict;
  if (s == "allow-missing" || s == "allow_missing") return MissingPolicy::allow_missing;
  throw UsageError("policy must be strict or allow-missing");
}

inline std::set<std::string> load_bots(const std::string& path) {
  if (path.empty()) return {};
  return load_word_list(path);
}

inline std::optional<std::set<std::string>> optional_word_list(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_word_list(path);
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  write_atomically(path, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

inline void write_text(const fs::path& path, const std::string& text) {
  write_atomically(path, [&](std::ostream& o) { o << text; });
}

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

inline std::string weather_estimates(const std::map<std::string, RankedAreas>& ranked, std::size_t top_k) {
  std::ostringstream s;
  for (const auto& [user, r] : ranked) {
    s << nlohmann::json{{"user_id", user}, {"method", "weather"}, {"ranked", ranked_to_json(r, top_k)}}.dump()
      << '\n';
  }
  return s.str();
}

inline std::string baseline_estimates(const std::string& method,
                                      const std::map<std::string, std::vector<ScoredArea>>& ranked,
                                      std::size_t top_k) {
  std::ostringstream s;
  for (const auto& [user, r] : ranked) {
    nlohmann::json arr = nlohmann::json::array();
    const std::size_t n = top_k == 0 ? r.size() : std::min(top_k, r.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (method == "baseline_b") {
        arr.push_back({{"station_id", r[i].station_id}, {"votes", static_cast<std::int64_t>(r[i].score)}});
      } else {
        arr.push_back({{"station_id", r[i].station_id}, {"score", r[i].score}});
      }
    }
    s << nlohmann::json{{"user_id", user}, {"method", method}, {"ranked", arr}}.dump() << '\n';
  }
  return s.str();
}

inline void write_report_files(const fs::path& dir, const EvalReport& r) {
  write_json(dir / ("report_" + r.method + ".json"), r.to_json());
  write_text(dir / ("sweep_" + r.method + ".csv"), render([&](std::ostream& o) { write_sweep_csv(o, r); }));
  write_text(dir / ("prefectures_" + r.method + ".csv"),
             render([&](std::ostream& o) { write_prefecture_csv(o, r); }));
}

// ---------------------------------------------------------------------------
// Knobs shared by several subcommands

struct Knobs {
  double radius_km = 10.0;
  int utc_offset = kDefaultUtcOffsetMinutes;
  std::string bots;
  bool lenient = false;
  std::uint64_t min_freq = 10;
  std::uint64_t min_users = 10;
  std::size_t top = 2000;
  std::size_t min_messages = 10;
  double home_threshold = 0.9;
  std::string home_order = "after-filter";
  double C = 0.025;
  double tol = 1e-3;
  std::size_t max_iter = 1000;
  bool balance = false;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 1;
  double train_fraction = 0.8;
  std::string policy = "strict";
  std::vector<std::size_t> ks{1, 3, 5};
  std::string d_sweep = "10:160:10";
  std::vector<double> ds;
  std::size_t pref_k = 1;
  double pref_d = 10.0;
  std::string denominator = "paper";
  std::size_t top_k = 0;

  PhaseAOptions phase_a() const { return {radius_km, load_bots(bots), utc_offset}; }
  CandidateOptions candidates() const { return {min_freq, min_users, top, false}; }
  HomeRule home() const { return {min_messages, home_threshold}; }
  TrainOptions train() const { return {C, tol, max_iter, seed, balance}; }
  UserSplit split() const { return {split_seed, train_fraction}; }
  bool home_after_filter() const {
    if (home_order == "after-filter") return true;
    if (home_order == "before-filter") return false;
    throw UsageError("home-order must be after-filter or before-filter");
  }
  EvalPlan eval() const {
    EvalPlan p;
    p.ks = ks;
    p.ds = ds.empty() ? parse_sweep(d_sweep) : ds;
    p.pref_k = pref_k;
    p.pref_d = pref_d;
    p.denominator = parse_denominator(denominator);
    return p;
  }
};

inline void add_phase_a_knobs(CLI::App* c, Knobs& k) {
  c->add_option("--radius", k.radius_km, "Nearest-station search radius (km)")->capture_default_str();
  c->add_option("--utc-offset", k.utc_offset, "Minutes east of UTC for local dates")->capture_default_str();
  c->add_option("--bots", k.bots, "File of bot client names, one per line");
  c->add_flag("--lenient", k.lenient, "Skip malformed message lines instead of failing");
}

inline void add_lexicon_knobs(CLI::App* c, Knobs& k) {
  c->add_option("--min-freq", k.min_freq, "Candidates need more occurrences than this")->capture_default_str();
  c->add_option("--min-users", k.min_users, "Candidates need at least this many users")->capture_default_str();
  c->add_option("--top", k.top, "Candidates kept per label before the user filter")->capture_default_str();
}

inline void add_home_knobs(CLI::App* c, Knobs& k) {
  c->add_option("--min-messages", k.min_messages, "Users need more messages than this")->capture_default_str();
  c->add_option("--home-threshold", k.home_threshold, "Share of messages from the home station")
      ->capture_default_str();
  c->add_option("--home-order", k.home_order, "after-filter | before-filter")->capture_default_str();
}

inline void add_split_knobs(CLI::App* c, Knobs& k) {
  c->add_option("--split-seed", k.split_seed, "Seed of the user hash split")->capture_default_str();
  c->add_option("--train-fraction", k.train_fraction, "Share of users used for training")->capture_default_str();
}

inline void add_train_knobs(CLI::App* c, Knobs& k) {
  c->add_option("--C,--cost", k.C, "SVM cost parameter")->capture_default_str();
  c->add_option("--tol", k.tol, "Stop when the largest KKT violation is below this")->capture_default_str();
  c->add_option("--max-iter", k.max_iter, "Maximum solver epochs")->capture_default_str();
  c->add_option("--seed", k.seed, "Seed of the example visiting order")->capture_default_str();
  c->add_flag("--balance", k.balance, "Weight C by inverse class frequency");
}

inline void add_eval_knobs(CLI::App* c, Knobs& k) {
  c->add_option("--k", k.ks, "Values of k")->delimiter(',')->capture_default_str();
  c->add_option("--d", k.ds, "Correct distances (km); overrides --d-sweep")->delimiter(',');
  c->add_option("--d-sweep", k.d_sweep, "start:stop:step in km")->capture_default_str();
  c->add_option("--pref-k", k.pref_k, "k for the per-prefecture table")->capture_default_str();
  c->add_option("--pref-d", k.pref_d, "Correct distance for the per-prefecture table")->capture_default_str();
  c->add_option("--denominator", k.denominator, "paper | per-group")->capture_default_str();
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }

  CLI::App app{"Home location estimation from weather-bearing messages"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  Knobs k;

  // synth
  SynthConfig synth_cfg;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic world");
  synth->add_option("--config", "Key/value config file (flags override it)");
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n-stations", synth_cfg.n_stations)->capture_default_str();
  synth->add_option("--origin-lat", synth_cfg.origin_lat)->capture_default_str();
  synth->add_option("--origin-lon", synth_cfg.origin_lon)->capture_default_str();
  synth->add_option("--extent-deg", synth_cfg.extent_deg)->capture_default_str();
  synth->add_option("--jitter", synth_cfg.jitter)->capture_default_str();
  synth->add_option("--n-days", synth_cfg.n_days)->capture_default_str();
  synth->add_option("--start-date", synth_cfg.start_date)->capture_default_str();
  synth->add_option("--p-rain", synth_cfg.p_rain)->capture_default_str();
  synth->add_option("--corr-km", synth_cfg.corr_km)->capture_default_str();
  synth->add_option("--noise-share", synth_cfg.noise_share)->capture_default_str();
  synth->add_option("--n-users", synth_cfg.n_users)->capture_default_str();
  synth->add_option("--messages-per-user", synth_cfg.messages_per_user)->capture_default_str();
  synth->add_option("--fidelity", synth_cfg.fidelity)->capture_default_str();
  synth->add_option("--label-noise", synth_cfg.label_noise)->capture_default_str();
  synth->add_option("--rain-words", synth_cfg.rain_words)->capture_default_str();
  synth->add_option("--dry-words", synth_cfg.dry_words)->capture_default_str();
  synth->add_option("--neutral-words", synth_cfg.neutral_words)->capture_default_str();
  synth->add_option("--neutral-min", synth_cfg.neutral_min)->capture_default_str();
  synth->add_option("--neutral-max", synth_cfg.neutral_max)->capture_default_str();
  synth->add_option("--away-rate", synth_cfg.away_rate)->capture_default_str();
  synth->add_option("--utc-offset", synth_cfg.utc_offset_minutes)->capture_default_str();

  // preprocess
  std::string phase = "a", stations_path, obs_path, messages_path, corpus_path, out_path, summary_path,
              truth_out, rain_words_path, norain_words_path;
  auto* pre = app.add_subcommand("preprocess", "Phase a: raw messages to labeled corpus; phase b: weather-word filter and home truth");
  pre->add_option("--config", "Key/value config file");
  pre->add_option("--phase", phase, "a | b")->capture_default_str();
  pre->add_option("--stations", stations_path);
  pre->add_option("--observations", obs_path);
  pre->add_option("--messages", messages_path);
  pre->add_option("--corpus", corpus_path, "Phase-a corpus (phase b input)");
  pre->add_option("--rain-words", rain_words_path);
  pre->add_option("--norain-words", norain_words_path);
  pre->add_option("--out", out_path, "Output corpus JSONL")->required();
  pre->add_option("--summary", summary_path, "Drop-counter JSON");
  pre->add_option("--truth-out", truth_out, "Home truth CSV (phase b)");
  add_phase_a_knobs(pre, k);
  add_home_knobs(pre, k);

  // lexicon
  std::string curated_rain, curated_norain, out_dir, split_which = "all";
  auto* lex = app.add_subcommand("lexicon", "Select weather words by PMI");
  lex->add_option("--config", "Key/value config file");
  lex->add_option("--corpus", corpus_path, "Phase-a corpus")->required();
  lex->add_option("--curated-rain", curated_rain, "Curated rain words (absent: automatic)");
  lex->add_option("--curated-norain", curated_norain, "Curated no-rain words (absent: automatic)");
  lex->add_option("--out-dir", out_dir)->required();
  lex->add_option("--split", split_which, "all | train | test")->capture_default_str();
  add_lexicon_knobs(lex, k);
  add_split_knobs(lex, k);

  // train
  std::string model_out, vocab_out;
  auto* trn = app.add_subcommand("train", "Train the rain classifier");
  trn->add_option("--config", "Key/value config file");
  trn->add_option("--corpus", corpus_path, "Weather-word filtered corpus")->required();
  trn->add_option("--model-out", model_out)->required();
  trn->add_option("--vocab-out", vocab_out)->required();
  trn->add_option("--split", split_which, "all | train | test")->capture_default_str();
  add_train_knobs(trn, k);
  add_split_knobs(trn, k);

  // estimate
  std::string model_path, vocab_path, method = "weather", fit_corpus;
  auto* est = app.add_subcommand("estimate", "Rank candidate home stations per user");
  est->add_option("--config", "Key/value config file");
  est->add_option("--corpus", corpus_path, "Corpus of users to estimate")->required();
  est->add_option("--stations", stations_path)->required();
  est->add_option("--observations", obs_path);
  est->add_option("--model", model_path);
  est->add_option("--vocab", vocab_path);
  est->add_option("--method", method, "weather | baseline_a | baseline_b")->capture_default_str();
  est->add_option("--fit-corpus", fit_corpus, "Corpus for the baselines' area word model (default: training split of --corpus)");
  est->add_option("--policy", k.policy, "strict | allow-missing")->capture_default_str();
  est->add_option("--top-k", k.top_k, "Entries per user (0 = full ranking)")->capture_default_str();
  est->add_option("--split", split_which, "all | train | test")->capture_default_str();
  est->add_option("--out", out_path)->required();
  add_split_knobs(est, k);

  // evaluate
  std::string estimates_path, truth_path, report_path, sweep_path, pref_path;
  auto* evl = app.add_subcommand("evaluate", "Precision@k report");
  evl->add_option("--config", "Key/value config file");
  evl->add_option("--estimates", estimates_path)->required();
  evl->add_option("--truth", truth_path)->required();
  evl->add_option("--stations", stations_path)->required();
  evl->add_option("--report", report_path, "Report JSON");
  evl->add_option("--sweep-csv", sweep_path, "k,d,precision CSV (default: stdout)");
  evl->add_option("--prefecture-csv", pref_path, "prefecture,users,precision CSV");
  add_eval_knobs(evl, k);

  // pipeline
  std::string world_dir;
  auto* pipe = app.add_subcommand("pipeline", "Run every stage on one dataset");
  pipe->add_option("--config", "Key/value config file");
  pipe->add_option("--world", world_dir, "Directory with stations.csv, observations.csv, messages.jsonl");
  pipe->add_option("--stations", stations_path);
  pipe->add_option("--observations", obs_path);
  pipe->add_option("--messages", messages_path);
  pipe->add_option("--curated-rain", curated_rain);
  pipe->add_option("--curated-norain", curated_norain);
  pipe->add_option("--policy", k.policy, "strict | allow-missing")->capture_default_str();
  pipe->add_option("--top-k", k.top_k, "Entries per user in estimate files (0 = full)")->capture_default_str();
  pipe->add_option("--out", out_dir)->required();
  add_phase_a_knobs(pipe, k);
  add_lexicon_knobs(pipe, k);
  add_home_knobs(pipe, k);
  add_train_knobs(pipe, k);
  add_split_knobs(pipe, k);
  add_eval_knobs(pipe, k);

  std::vector<const char*> cargv;
  for (const auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  auto keep_split = [&](const Corpus& c) {
    if (split_which == "all") return c;
    if (split_which != "train" && split_which != "test") throw UsageError("split must be all, train or test");
    const UserSplit sp = k.split();
    const bool want_train = split_which == "train";
    return c.filter([&](const LabeledMessage& m) { return sp.is_train(m.user_id) == want_train; });
  };

  try {
    if (*synth) {
      const SynthWorld w = generate(synth_cfg, synth_seed);
      write_world(w, synth_out);
      out << "synth: " << w.stations.size() << " stations, " << w.observations.size() << " observations, "
          << w.truth.size() << " users, " << w.messages.size() << " messages -> " << synth_out << '\n';
    } else if (*pre) {
      PreprocessSummary summary;
      if (phase == "a") {
        if (stations_path.empty() || obs_path.empty() || messages_path.empty()) {
          throw UsageError("phase a needs --stations, --observations and --messages");
        }
        const StationIndex idx = load_stations(stations_path);
        const ObservationTable obs = load_observations(obs_path, idx);
        const MessageLoad msgs = load_messages(messages_path, k.lenient ? ParseMode::lenient : ParseMode::strict);
        auto res = preprocess_phase_a(msgs.messages, idx, obs, k.phase_a());
        summary = res.summary;
        write_atomically(out_path, [&](std::ostream& o) { write_corpus(o, res.corpus); });
        auto j = summary.to_json();
        j["skipped_lines"] = msgs.skipped;
        if (!summary_path.empty()) write_json(summary_path, j);
      } else if (phase == "b") {
        if (corpus_path.empty() || (rain_words_path.empty() && norain_words_path.empty())) {
          throw UsageError("phase b needs --corpus and --rain-words/--norain-words");
        }
        const Corpus corpus = load_corpus(corpus_path);
        WeatherLexicon lexicon;
        if (!rain_words_path.empty()) lexicon.rain_words = load_word_list(rain_words_path);
        if (!norain_words_path.empty()) lexicon.norain_words = load_word_list(norain_words_path);
        summary.input = corpus.size();
        Corpus result;
        HomeTruth truth;
        if (k.home_after_filter()) {
          auto home = assign_home_truth(preprocess_phase_b(corpus, lexicon, &summary), k.home(), &summary);
          truth = std::move(home.truth);
          result = std::move(home.corpus);
        } else {
          auto home = assign_home_truth(corpus, k.home(), &summary);
          truth = std::move(home.truth);
          result = preprocess_phase_b(home.corpus, lexicon, &summary);
        }
        summary.kept = result.size();
        write_atomically(out_path, [&](std::ostream& o) { write_corpus(o, result); });
        if (!truth_out.empty()) write_atomically(truth_out, [&](std::ostream& o) { write_home_truth(o, truth); });
        if (!summary_path.empty()) write_json(summary_path, summary.to_json());
      } else {
        throw UsageError("phase must be a or b");
      }
      out << "preprocess(" << phase << "): " << summary.input << " in, " << summary.kept << " kept -> "
          << out_path << '\n';
    } else if (*lex) {
      const Corpus corpus = keep_split(load_corpus(corpus_path));
      const LexiconBuild b = build_weather_lexicon(corpus, k.candidates(), optional_word_list(curated_rain),
                                                   optional_word_list(curated_norain));
      const fs::path dir = out_dir;
      write_atomically(dir / "rain_words.txt", [&](std::ostream& o) { write_word_list(o, b.lexicon.rain_words); });
      write_atomically(dir / "norain_words.txt", [&](std::ostream& o) { write_word_list(o, b.lexicon.norain_words); });
      write_atomically(dir / "candidates_rain.csv", [&](std::ostream& o) { write_candidates(o, b.rain_candidates); });
      write_atomically(dir / "candidates_norain.csv",
                       [&](std::ostream& o) { write_candidates(o, b.norain_candidates); });
      out << "lexicon: " << b.lexicon.rain_words.size() << " rain words, " << b.lexicon.norain_words.size()
          << " no-rain words -> " << out_dir << '\n';
    } else if (*trn) {
      const Corpus corpus = keep_split(load_corpus(corpus_path));
      const Vocabulary vocab = build_vocabulary(corpus);
      const LinearModel model = train_weather_model(corpus.messages(), vocab, k.train());
      write_atomically(vocab_out, [&](std::ostream& o) { write_vocabulary(o, vocab); });
      write_atomically(model_out, [&](std::ostream& o) { write_model(o, model); });
      out << "train: " << corpus.size() << " messages, |W|=" << vocab.size() << ", " << model.iterations
          << " epochs, kkt " << model.kkt_residual << " -> " << model_out << '\n';
    } else if (*est) {
      const StationIndex idx = load_stations(stations_path);
      const Corpus all = load_corpus(corpus_path);
      const Corpus corpus = keep_split(all);
      std::string text;
      std::size_t users = 0;
      if (method == "weather") {
        if (obs_path.empty() || model_path.empty() || vocab_path.empty()) {
          throw UsageError("weather method needs --observations, --model and --vocab");
        }
        const ObservationTable obs = load_observations(obs_path, idx);
        const Vocabulary vocab = load_vocabulary(vocab_path);
        const LinearModel model = load_model(model_path, vocab);
        std::map<std::string, RankedAreas> ranked;
        for (const auto& [user, msgs] : corpus.by_user()) {
          ranked[user] = rank_areas(msgs, model, vocab, obs, idx, parse_policy(k.policy));
        }
        users = ranked.size();
        text = weather_estimates(ranked, k.top_k);
      } else if (method == "baseline_a" || method == "baseline_b") {
        Corpus fit;
        if (fit_corpus.empty()) {
          const UserSplit sp = k.split();
          fit = all.filter([&](const LabeledMessage& m) { return sp.is_train(m.user_id); });
        } else {
          fit = load_corpus(fit_corpus);
        }
        const AreaWordModel area_model = fit_area_word_model(fit.messages(), idx);
        std::map<std::string, std::vector<ScoredArea>> ranked;
        for (const auto& [user, msgs] : corpus.by_user()) {
          ranked[user] = method == "baseline_a" ? baseline_a_rank(msgs, area_model, idx)
                                                : baseline_b_rank(msgs, area_model, idx);
        }
        users = ranked.size();
        text = baseline_estimates(method, ranked, k.top_k);
      } else {
        throw UsageError("method must be weather, baseline_a or baseline_b");
      }
      write_text(out_path, text);
      out << "estimate(" << method << "): " << users << " users -> " << out_path << '\n';
    } else if (*evl) {
      const StationIndex idx = load_stations(stations_path);
      std::string m = "unknown";
      const EstimationResult results = load_estimates(estimates_path, &m);
      const HomeTruth truth = load_home_truth(truth_path);
      const EvalReport r = evaluate(m, results, truth, idx, k.eval());
      if (!report_path.empty()) write_json(report_path, r.to_json());
      if (!pref_path.empty()) {
        write_text(pref_path, render([&](std::ostream& o) { write_prefecture_csv(o, r); }));
      }
      if (!sweep_path.empty()) {
        write_text(sweep_path, render([&](std::ostream& o) { write_sweep_csv(o, r); }));
        out << "evaluate(" << m << "): " << r.users << " users, macro " << r.macro << " -> " << sweep_path << '\n';
      } else {
        write_sweep_csv(out, r);
      }
    } else if (*pipe) {
      const fs::path world = world_dir;
      auto pick = [&](const std::string& explicit_path, const char* name) {
        if (!explicit_path.empty()) return fs::path(explicit_path);
        if (world_dir.empty()) throw UsageError(std::string("pipeline needs --world or --") + name);
        return world / (std::string(name) == "messages" ? "messages.jsonl" : std::string(name) + ".csv");
      };
      const StationIndex idx = load_stations(pick(stations_path, "stations"));
      const ObservationTable obs = load_observations(pick(obs_path, "observations"), idx);
      const MessageLoad msgs =
          load_messages(pick(messages_path, "messages"), k.lenient ? ParseMode::lenient : ParseMode::strict);

      WorkflowOptions opt;
      opt.phase_a = k.phase_a();
      opt.split = k.split();
      opt.candidates = k.candidates();
      opt.curated_rain = optional_word_list(curated_rain);
      opt.curated_norain = optional_word_list(curated_norain);
      opt.home = k.home();
      opt.home_after_filter = k.home_after_filter();
      opt.train = k.train();
      opt.policy = parse_policy(k.policy);
      opt.eval = k.eval();
      const WorkflowResult r = run_workflow(msgs.messages, idx, obs, opt);

      const fs::path dir = out_dir;
      fs::create_directories(dir);
      write_atomically(dir / "corpus_a.jsonl", [&](std::ostream& o) { write_corpus(o, r.phase_a.corpus); });
      write_atomically(dir / "corpus.jsonl", [&](std::ostream& o) { write_corpus(o, r.evaluated); });
      write_atomically(dir / "truth.csv", [&](std::ostream& o) { write_home_truth(o, r.truth); });
      auto summary = r.summary.to_json();
      summary["skipped_lines"] = msgs.skipped;
      summary["train_users"] = r.train_users.size();
      write_json(dir / "preprocess_summary.json", summary);
      write_atomically(dir / "rain_words.txt", [&](std::ostream& o) { write_word_list(o, r.lexicon.lexicon.rain_words); });
      write_atomically(dir / "norain_words.txt",
                       [&](std::ostream& o) { write_word_list(o, r.lexicon.lexicon.norain_words); });
      write_atomically(dir / "candidates_rain.csv",
                       [&](std::ostream& o) { write_candidates(o, r.lexicon.rain_candidates); });
      write_atomically(dir / "candidates_norain.csv",
                       [&](std::ostream& o) { write_candidates(o, r.lexicon.norain_candidates); });
      write_atomically(dir / "vocab.txt", [&](std::ostream& o) { write_vocabulary(o, r.vocab); });
      write_atomically(dir / "model.txt", [&](std::ostream& o) { write_model(o, r.model); });
      write_text(dir / "estimates_weather.jsonl", weather_estimates(r.weather, k.top_k));
      write_text(dir / "estimates_baseline_a.jsonl", baseline_estimates("baseline_a", r.baseline_a, k.top_k));
      write_text(dir / "estimates_baseline_b.jsonl", baseline_estimates("baseline_b", r.baseline_b, k.top_k));
      for (const auto& [name, report] : r.reports) write_report_files(dir, report);

      const auto& w = r.reports.at("weather");
      const double p1 = w.overall.begin()->second;
      out << "pipeline: " << r.evaluated.users().size() << " users with home truth, " << r.weather.size()
          << " evaluated, |W|=" << r.vocab.size() << ", weather P@" << w.overall.begin()->first.first << "(d="
          << w.overall.begin()->first.second << ")=" << p1 << ", macro " << w.macro << " -> " << out_dir << '\n';
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}

} // namespace wxhome::cli
