#include "mmdm/text.hpp"

#include <cctype>
#include <cmath>

#include "mmdm/error.hpp"
#include "mmdm/nn.hpp"
#include "mmdm/synthetic.hpp"

namespace mmdm {

Vocabulary::Vocabulary(std::vector<std::string> words) {
  words_.push_back("<unk>");
  for (auto& w : words)
    if (!index_.count(w) && w != "<unk>") {
      index_[w] = static_cast<int>(words_.size());
      words_.push_back(std::move(w));
    }
}

Vocabulary Vocabulary::captions() { return Vocabulary(caption_vocabulary()); }

std::vector<int> Vocabulary::tokenize(const std::string& caption) const {
  std::vector<int> ids;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    auto it = index_.find(word);
    ids.push_back(it == index_.end() ? kUnknown : it->second);
    word.clear();
  };
  for (unsigned char ch : caption) {
    if (std::isalnum(ch) || ch == '_')
      word.push_back(static_cast<char>(std::tolower(ch)));
    else
      flush();
  }
  flush();
  return ids;
}

TextEncoder::TextEncoder(ad::ParameterSet& params, Vocabulary vocab, int hidden, std::mt19937_64& rng)
    : params_(&params), vocab_(std::move(vocab)) {
  params.add("text.embed", nn::normal_init(vocab_.size(), hidden, 0.02, rng));
  nn::add_linear(params, "text.proj", hidden, hidden, rng);
  params.add("text.null", nn::normal_init(1, hidden, 0.02, rng));
}

TextCondition TextEncoder::tokenize(const std::string& caption) const {
  TextCondition c;
  c.tokens = vocab_.tokenize(caption);
  c.is_null = c.tokens.empty();
  return c;
}

ad::Var TextEncoder::encode(ad::Graph& g, const TextCondition& condition) const {
  if (condition.is_null) return nn::param(g, *params_, "text.null");
  ad::Var words = ad::gather_rows(nn::param(g, *params_, "text.embed"), condition.tokens);
  return nn::linear(g, *params_, "text.proj", ad::mean_rows(words));
}

ConditionEmbedding TextEncoder::encode(const std::string& caption) const {
  ad::Graph g(false);
  const TextCondition c = tokenize(caption);
  return {RowVec(encode(g, c).value().row(0)), c.is_null};
}

RowVec timestep_embedding(int t, int dim) {
  RowVec e(dim);
  const int half = dim / 2;
  for (int k = 0; k < dim; ++k) {
    const int i = k % std::max(half, 1);
    const double freq = std::exp(-std::log(10000.0) * i / std::max(half, 1));
    e(k) = k < half ? std::sin(t * freq) : std::cos(t * freq);
  }
  return e;
}

}  // namespace mmdm
