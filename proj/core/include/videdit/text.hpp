#pragma once

#include <string>
#include <vector>

#include "videdit/tensor.hpp"

namespace videdit {

// Toy whitespace tokenizer over a closed caption vocabulary. Reserved ids:
// 0 = PAD, 1 = BOS, 2 = UNK. Tokens are lower-cased before lookup.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kUnk = 2;

    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> words);

    // The caption-grammar vocabulary shipped with the synthetic generator.
    static Vocabulary default_vocab();

    int id_of(const std::string& word) const;  // kUnk when unknown
    const std::string& word_of(int id) const;
    int size() const { return static_cast<int>(words_.size()); }

    // BOS + words + PAD padding, truncated to max_tokens.
    std::vector<int> tokenize(const std::string& prompt, int max_tokens) const;

    const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
};

struct TextEmbedding {
    std::vector<int> token_ids;  // length L
    Tensor embeddings;           // [L, d_text]
    bool null_flag = false;      // true for the empty-prompt embedding
};

// Tokenize and look rows up in the embedding table [vocab, d_text].
TextEmbedding encode_text(const std::string& prompt, const Vocabulary& vocab, const Tensor& token_table,
                          int max_tokens);

}  // namespace videdit
