#include "ssmg/text_encoder.hpp"

#include <cctype>

#include "ssmg/error.hpp"
#include "ssmg/random.hpp"

namespace ssmg {

std::vector<std::string> caption_words(std::string_view caption) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : caption) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

std::vector<double> text_table_row(std::size_t slot, std::uint64_t seed, std::size_t text_dim) {
    Rng rng(derive_seed(seed, 0x74657874ULL, slot));
    std::vector<double> row(text_dim);
    for (auto& v : row) v = 0.02 * standard_normal(rng);
    return row;
}

template <typename T>
Tensor<T> encode_text(std::string_view caption, std::uint64_t seed, std::size_t text_dim) {
    if (text_dim == 0) throw ArgumentError("encode_text: text_dim must be positive");
    const auto words = caption_words(caption);
    if (words.empty()) throw EmptyConditionError("caption has no words: '" + std::string(caption) + "'");
    std::vector<T> out(words.size() * text_dim);
    std::vector<double> ema;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto row = text_table_row(fnv1a64(words[i]) % kTextSlots, seed, text_dim);
        if (i == 0) {
            ema = row;
        } else {
            for (std::size_t j = 0; j < text_dim; ++j) ema[j] = kTextEmaDecay * ema[j] + (1.0 - kTextEmaDecay) * row[j];
        }
        for (std::size_t j = 0; j < text_dim; ++j) out[i * text_dim + j] = static_cast<T>(ema[j]);
    }
    return Tensor<T>({words.size(), text_dim}, std::move(out));
}

template Tensor<float> encode_text<float>(std::string_view, std::uint64_t, std::size_t);
template Tensor<double> encode_text<double>(std::string_view, std::uint64_t, std::size_t);

}  // namespace ssmg
