#include "videdit/text.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

namespace videdit {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    require(words_.size() >= 3 && words_[0] == "<pad>" && words_[1] == "<bos>" && words_[2] == "<unk>",
            "Vocabulary: first three entries must be <pad>, <bos>, <unk>");
}

Vocabulary Vocabulary::default_vocab() {
    return Vocabulary({
        "<pad>", "<bos>", "<unk>",
        "a",
        // colors
        "red", "green", "blue", "yellow", "purple", "orange", "white",
        // shapes
        "square", "circle", "triangle",
        // motion
        "moving", "left", "right", "up", "down", "still",
    });
}

static std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

int Vocabulary::id_of(const std::string& word) const {
    std::string w = lower(word);
    for (size_t i = 0; i < words_.size(); ++i)
        if (words_[i] == w) return static_cast<int>(i);
    return kUnk;
}

const std::string& Vocabulary::word_of(int id) const {
    require(id >= 0 && id < size(), "Vocabulary: id out of range");
    return words_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::tokenize(const std::string& prompt, int max_tokens) const {
    std::vector<int> ids;
    ids.reserve(static_cast<size_t>(max_tokens));
    ids.push_back(kBos);
    std::istringstream is(prompt);
    std::string word;
    while (is >> word && static_cast<int>(ids.size()) < max_tokens) ids.push_back(id_of(word));
    while (static_cast<int>(ids.size()) < max_tokens) ids.push_back(kPad);
    return ids;
}

TextEmbedding encode_text(const std::string& prompt, const Vocabulary& vocab, const Tensor& token_table,
                          int max_tokens) {
    require(token_table.ndim() == 2 && token_table.dim(0) == vocab.size(),
            "encode_text: table rows must match vocabulary size");
    TextEmbedding e;
    e.token_ids = vocab.tokenize(prompt, max_tokens);
    int d = token_table.dim(1);
    e.embeddings = Tensor({max_tokens, d});
    for (int i = 0; i < max_tokens; ++i)
        for (int j = 0; j < d; ++j) e.embeddings.at(i, j) = token_table.at(e.token_ids[static_cast<size_t>(i)], j);
    // empty prompt (whitespace only) is the null embedding
    std::istringstream is(prompt);
    std::string w;
    e.null_flag = !(is >> w);
    return e;
}

}  // namespace videdit
