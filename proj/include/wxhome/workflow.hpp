#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "wxhome/baselines.hpp"
#include "wxhome/data.hpp"
#include "wxhome/estimator.hpp"
#include "wxhome/eval.hpp"
#include "wxhome/features.hpp"
#include "wxhome/lexicon.hpp"
#include "wxhome/pipeline.hpp"
#include "wxhome/svm.hpp"

namespace wxhome {

struct LexiconBuild {
  std::vector<Candidate> rain_candidates;
  std::vector<Candidate> norain_candidates;
  WeatherLexicon lexicon;
};

/// PMI candidates for both labels, then curation (or automatic mode for a
/// side whose curated list is absent).
inline LexiconBuild build_weather_lexicon(const Corpus& corpus, CandidateOptions opt,
                                          const std::optional<std::set<std::string>>& curated_rain,
                                          const std::optional<std::set<std::string>>& curated_norain) {
  const CountTable ct = count_statistics(corpus);
  LexiconBuild b;
  CandidateOptions rain_opt = opt, norain_opt = opt;
  rain_opt.positive_only = opt.positive_only || !curated_rain;
  norain_opt.positive_only = opt.positive_only || !curated_norain;
  b.rain_candidates = select_candidates(ct, true, rain_opt);
  b.norain_candidates = select_candidates(ct, false, norain_opt);
  b.lexicon = build_lexicon(b.rain_candidates, b.norain_candidates, curated_rain, curated_norain);
  return b;
}

struct TrainingSet {
  std::vector<FeatureVector> vectors;
  std::vector<bool> labels;
};

inline TrainingSet make_training_set(std::span<const LabeledMessage> messages, const Vocabulary& vocab) {
  TrainingSet t;
  for (const auto& m : messages) {
    t.vectors.push_back(vectorize(m.tokens, vocab));
    t.labels.push_back(m.rain);
  }
  return t;
}

/// Trains on `messages` and stamps the model with the vocabulary hash.
inline LinearModel train_weather_model(std::span<const LabeledMessage> messages, const Vocabulary& vocab,
                                       const TrainOptions& opt) {
  const TrainingSet t = make_training_set(messages, vocab);
  LinearModel m = train(t.vectors, t.labels, opt);
  m.vocab_hash = vocab.hash();
  return m;
}

template <typename Ranking>
EstimationResult to_estimation_result(const std::map<std::string, Ranking>& rankings) {
  EstimationResult out;
  for (const auto& [user, ranked] : rankings) {
    auto& ids = out[user];
    for (const auto& e : ranked) ids.push_back(e.station_id);
  }
  return out;
}

struct WorkflowOptions {
  PhaseAOptions phase_a;
  UserSplit split;
  CandidateOptions candidates;
  std::optional<std::set<std::string>> curated_rain;
  std::optional<std::set<std::string>> curated_norain;
  HomeRule home;
  /// Apply the home rule after the weather-word filter (default) or before it.
  bool home_after_filter = true;
  TrainOptions train;
  MissingPolicy policy = MissingPolicy::strict;
  EvalPlan eval;
};

struct WorkflowResult {
  PhaseAResult phase_a;
  std::set<std::string> train_users;
  LexiconBuild lexicon;
  PreprocessSummary summary;
  /// Weather-word filtered corpus for every user (training input).
  Corpus filtered;
  /// Filtered corpus restricted to users with a home truth.
  Corpus evaluated;
  HomeTruth truth;
  Vocabulary vocab;
  LinearModel model;
  std::map<std::string, RankedAreas> weather;
  std::map<std::string, std::vector<ScoredArea>> baseline_a;
  std::map<std::string, std::vector<ScoredArea>> baseline_b;
  std::map<std::string, EvalReport> reports;
};

/// Whole chain: preprocess, split users, select weather words on the training
/// users, filter, assign home truth, train, estimate held-out users with all
/// three methods and evaluate them.
inline WorkflowResult run_workflow(std::span<const RawMessage> messages, const StationIndex& idx,
                                   const ObservationTable& obs, const WorkflowOptions& opt) {
  WorkflowResult r;
  r.phase_a = preprocess_phase_a(messages, idx, obs, opt.phase_a);
  r.summary = r.phase_a.summary;
  const Corpus& corpus_a = r.phase_a.corpus;
  for (const auto& u : corpus_a.users()) {
    if (opt.split.is_train(u)) r.train_users.insert(u);
  }
  auto is_train = [&](const LabeledMessage& m) { return r.train_users.contains(m.user_id); };

  const Corpus lexicon_input = corpus_a.filter(is_train);
  if (lexicon_input.empty()) throw DataError("training split is empty");
  r.lexicon = build_weather_lexicon(lexicon_input, opt.candidates, opt.curated_rain, opt.curated_norain);

  if (opt.home_after_filter) {
    r.filtered = preprocess_phase_b(corpus_a, r.lexicon.lexicon, &r.summary);
    auto home = assign_home_truth(r.filtered, opt.home, &r.summary);
    r.truth = std::move(home.truth);
    r.evaluated = std::move(home.corpus);
  } else {
    auto home = assign_home_truth(corpus_a, opt.home, &r.summary);
    r.truth = std::move(home.truth);
    r.filtered = preprocess_phase_b(corpus_a, r.lexicon.lexicon);
    r.evaluated = preprocess_phase_b(home.corpus, r.lexicon.lexicon);
    r.summary.no_weather_words = home.corpus.size() - r.evaluated.size();
    r.summary.kept = r.evaluated.size();
  }

  const Corpus training = r.filtered.filter(is_train);
  if (training.empty()) throw DataError("no training messages left after weather-word filtering");
  r.vocab = build_vocabulary(training);
  r.model = train_weather_model(training.messages(), r.vocab, opt.train);
  const AreaWordModel area_model = fit_area_word_model(training.messages(), idx);

  for (const auto& [user, msgs] : r.evaluated.by_user()) {
    if (r.train_users.contains(user)) continue;
    r.weather[user] = rank_areas(msgs, r.model, r.vocab, obs, idx, opt.policy);
    r.baseline_a[user] = baseline_a_rank(msgs, area_model, idx);
    r.baseline_b[user] = baseline_b_rank(msgs, area_model, idx);
  }
  if (r.weather.empty()) throw DataError("no held-out users with a home truth to evaluate");

  r.reports["weather"] = evaluate("weather", to_estimation_result(r.weather), r.truth, idx, opt.eval);
  r.reports["baseline_a"] = evaluate("baseline_a", to_estimation_result(r.baseline_a), r.truth, idx, opt.eval);
  r.reports["baseline_b"] = evaluate("baseline_b", to_estimation_result(r.baseline_b), r.truth, idx, opt.eval);
  return r;
}

} // namespace wxhome
