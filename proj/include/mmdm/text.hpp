#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "mmdm/autodiff.hpp"

namespace mmdm {

/// Word-level tokenizer over a fixed vocabulary; index 0 is the OOV token.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> words);

  /// Vocabulary of the synthetic caption grammar.
  static Vocabulary captions();

  std::vector<int> tokenize(const std::string& caption) const;
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  static constexpr int kUnknown = 0;

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

/// Tokenized caption; empty captions are the null (unconditional) condition.
struct TextCondition {
  std::vector<int> tokens;
  bool is_null = true;

  static TextCondition null() { return {}; }
};

struct ConditionEmbedding {
  RowVec vector;
  bool is_null = true;
};

/// Mean-pooled token embeddings followed by a linear projection. Parameters
/// live in the owning ParameterSet under "text.*".
class TextEncoder {
 public:
  TextEncoder(ad::ParameterSet& params, Vocabulary vocab, int hidden, std::mt19937_64& rng);

  TextCondition tokenize(const std::string& caption) const;
  ad::Var encode(ad::Graph& g, const TextCondition& condition) const;
  ConditionEmbedding encode(const std::string& caption) const;

  const Vocabulary& vocabulary() const { return vocab_; }

 private:
  ad::ParameterSet* params_;
  Vocabulary vocab_;
};

/// Standard sinusoidal embedding of an integer step, width `dim`.
RowVec timestep_embedding(int t, int dim);

}  // namespace mmdm
