#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssmg/rvq.hpp"
#include "ssmg/tensor.hpp"

namespace ssmg {

enum class Tempo { Slow, Medium, Fast };
enum class Scale { Major, Minor, Pentatonic };
enum class Register { Low, Mid, High };
enum class Density { Sparse, Dense };

inline constexpr std::size_t kFrameDim = 16;
inline constexpr std::size_t kPitchDims = 14;
inline constexpr std::size_t kAttributeCombos = 54;
// Pitches are semitone indices 0..35 across three octaves.
inline constexpr int kPitchCount = 36;
inline constexpr int kRest = -1;

struct PieceAttributes {
    Tempo tempo = Tempo::Slow;
    Scale scale = Scale::Major;
    Register reg = Register::Low;
    Density density = Density::Sparse;

    // Dense index in [0, 54).
    std::size_t index() const;
    static PieceAttributes from_index(std::size_t index);
    bool operator==(const PieceAttributes&) const = default;
};

// Per-head class labels in the fixed head order (tempo, scale, register, density).
inline constexpr std::array<std::size_t, 4> kHeadClasses = {3, 3, 3, 2};
std::array<int, 4> attribute_labels(const PieceAttributes& attrs);

std::string_view tempo_name(Tempo t);
std::string_view scale_name(Scale s);
std::string_view register_name(Register r);
std::string_view density_name(Density d);
std::string describe(const PieceAttributes& attrs);

// Sorted pitch indices a piece with this scale and register may use.
std::vector<int> pitch_set(Scale scale, Register reg);

// Fixed sinusoidal embedding of a pitch (kPitchDims values).
std::array<double, kPitchDims> pitch_embedding(int pitch);

// Per-frame probability that the current note ends.
double note_change_rate(Tempo tempo);

// [L x 16] frame features: pitch embedding, envelope, attack, plus N(0, 0.01^2) noise.
// Rest frames carry only noise. Deterministic in (attrs, L, seed).
Tensor<double> sample_piece(const PieceAttributes& attrs, std::size_t length, std::uint64_t seed);

// Nearest pitch per frame, kRest when the all-zero rest vector is nearer.
std::vector<int> decode_pitches(const Tensor<double>& frames);

// Caption from one of eight templates with seeded synonym choices.
std::string render_caption(const PieceAttributes& attrs, std::uint64_t seed);

// Keyword recovery; nullopt when an attribute is missing or stated twice differently.
std::optional<PieceAttributes> parse_caption(std::string_view caption);

// Rule-based recovery from frames: nearest-pitch decoding picks the smallest
// (scale, register) pitch set covering the observed pitches; onset rate gives the
// tempo and rest fraction the density.
PieceAttributes classify_piece(const Tensor<double>& frames);

enum class Split { Train, Valid, Test };
std::string_view split_name(Split s);

struct Example {
    std::size_t id = 0;
    Split split = Split::Train;
    PieceAttributes attrs;
    std::string caption;
    Tensor<double> frames;    // [L x 16]; undefined when loaded without the sidecar
    std::vector<int> tokens;  // layer-1 codec tokens, empty before tokenization
};

struct Corpus {
    std::size_t length = 0;
    std::uint64_t seed = 0;
    std::vector<Example> examples;

    std::vector<const Example*> split(Split s) const;
};

// Attributes uniform over the 54 combinations; splits of exactly n/10 validation and
// n/10 test examples chosen by ranking a seeded hash of the example index.
Corpus sample_corpus(std::size_t n, std::size_t length, std::uint64_t seed);

// Fills every example's tokens with layer 1 of the greedy codec encoding.
void tokenize(Corpus& corpus, const RvqCodebooks& books);

// sample_corpus followed by tokenize.
Corpus make_dataset(std::size_t n, std::size_t length, std::uint64_t seed, const RvqCodebooks& books);

// Up to max_frames training-split frames, sampled without replacement by seed, as [M x 16].
Tensor<double> codec_training_frames(const Corpus& corpus, std::size_t max_frames, std::uint64_t seed);

// Dataset text file: a header line, then one tab-separated record per example:
//   id  split  tempo  scale  register  density  caption  tokens (space-separated)
// Frames live in a binary sidecar: "FRM1", u64 count, u64 length, u64 dim, then per
// example u64 id and length*dim f32, then a u64 FNV-1a checksum of all preceding bytes.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dataset_path,
                 const std::filesystem::path& frames_path);
// The sidecar is optional; pass an empty path to load tokens and captions only.
Corpus load_corpus(const std::filesystem::path& dataset_path, const std::filesystem::path& frames_path = {});

}  // namespace ssmg
