#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wxhome/data.hpp"
#include "wxhome/error.hpp"
#include "wxhome/pipeline.hpp"

namespace wxhome {

/// Words seen more than once in the training messages, indexed in
/// code-point (byte) order.
class Vocabulary {
public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    std::sort(words_.begin(), words_.end());
    words_.erase(std::unique(words_.begin(), words_.end()), words_.end());
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::size_t i) const { return words_.at(i); }

  std::optional<std::uint32_t> index_of(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return static_cast<std::uint32_t>(it->second);
  }

  /// FNV-1a over the newline-terminated word list; tags model files.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](unsigned char c) {
      h ^= c;
      h *= 0x100000001b3ULL;
    };
    for (const auto& w : words_) {
      for (unsigned char c : w) mix(c);
      mix('\n');
    }
    return h;
  }

private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline Vocabulary build_vocabulary(std::span<const LabeledMessage> messages) {
  if (messages.empty()) throw DataError("cannot build a vocabulary from no messages");
  std::map<std::string, std::uint64_t> counts;
  for (const auto& m : messages) {
    for (const auto& t : m.tokens) ++counts[t];
  }
  std::vector<std::string> words;
  for (const auto& [w, c] : counts) {
    if (c >= 2) words.push_back(w);
  }
  if (words.empty()) throw DataError("vocabulary is empty: no word occurs more than once");
  return Vocabulary(std::move(words));
}

inline Vocabulary build_vocabulary(const Corpus& corpus) {
  return build_vocabulary(std::span<const LabeledMessage>(corpus.messages()));
}

/// Binary bag-of-words vector: sorted, unique active indices below `dim`.
struct FeatureVector {
  std::vector<std::uint32_t> active;
  std::size_t dim = 0;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline FeatureVector vectorize(std::span<const std::string> tokens, const Vocabulary& vocab) {
  FeatureVector v;
  v.dim = vocab.size();
  for (const auto& t : tokens) {
    if (auto i = vocab.index_of(t)) v.active.push_back(*i);
  }
  std::sort(v.active.begin(), v.active.end());
  v.active.erase(std::unique(v.active.begin(), v.active.end()), v.active.end());
  return v;
}

inline void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  for (const auto& w : vocab.words()) out << w << '\n';
}

inline Vocabulary parse_vocabulary(std::istream& in, const std::string& source = "<vocab>") {
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view v = csv::trim_cr(line);
    if (v.empty()) continue;
    if (!words.empty() && !(words.back() < v)) {
      throw DataError(source + ": vocabulary not strictly sorted at '" + std::string(v) + "'");
    }
    words.emplace_back(v);
  }
  if (words.empty()) throw DataError(source + ": empty vocabulary");
  return Vocabulary(std::move(words));
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_vocabulary(in, path.string());
}

} // namespace wxhome
