#include "ssmg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "ssmg/binary_io.hpp"
#include "ssmg/error.hpp"
#include "ssmg/random.hpp"
#include "ssmg/text_encoder.hpp"

namespace ssmg {

namespace {

constexpr std::array<double, kPitchDims / 2> kPeriods = {36, 18, 12, 9, 6, 4, 3};
constexpr double kNoiseSigma = 0.01;
// Fraction of each note left silent; every note of two or more frames keeps at least one rest frame.
constexpr double kSparseGap = 0.4;
constexpr double kDenseGap = 0.0;
constexpr double kEnvelopeFloor = 0.25;
constexpr double kEnvelopeFrames = 6.0;
constexpr double kAttackFrames = 1.5;
// Classifier thresholds: geometric means of neighbouring onset rates, midpoint of rest fractions.
constexpr double kRestThreshold = 0.27;

struct Words {
    std::string_view canonical;
    std::array<std::string_view, 3> synonyms;
};

constexpr std::array<Words, 3> kTempoWords = {{
    {"slow", {"slow", "leisurely", "unhurried"}},
    {"medium", {"moderate", "steady", "walking"}},
    {"fast", {"fast", "quick", "uptempo"}},
}};
constexpr std::array<Words, 3> kScaleWords = {{
    {"major", {"major", "bright", "sunny"}},
    {"minor", {"minor", "dark", "melancholic"}},
    {"pentatonic", {"pentatonic", "gapped", "folk"}},
}};
constexpr std::array<Words, 3> kRegisterWords = {{
    {"low", {"low", "deep", "bass"}},
    {"mid", {"mid", "middle", "centered"}},
    {"high", {"high", "lofty", "treble"}},
}};
constexpr std::array<Words, 2> kDensityWords = {{
    {"sparse", {"sparse", "airy", "spacious"}},
    {"dense", {"dense", "busy", "packed"}},
}};

// {T} tempo, {S} scale, {R} register, {D} density.
constexpr std::array<std::string_view, 8> kTemplates = {
    "a {T} {S} melody in a {R} register with a {D} texture",
    "{D} {T} tune built on a {S} scale, played in the {R} range",
    "this {S} piece moves at a {T} pace with {D} notes in the {R} range",
    "{R} {S} line, {T} and {D}",
    "a {D} arrangement of a {T} {S} theme sitting in the {R} register",
    "{T} {R} {S} phrase with a {D} feel",
    "an instrumental in {S} mode, {T} tempo, {D} rhythm, {R} pitch",
    "solo {S} motif, {R} and {T}, {D} throughout",
};

template <std::size_t N>
std::string_view pick(const std::array<Words, N>& table, std::size_t value, Rng& rng) {
    return table[value].synonyms[uniform_index(rng, 3)];
}

template <std::size_t N>
int lookup(const std::array<Words, N>& table, const std::string& word) {
    for (std::size_t v = 0; v < N; ++v) {
        for (auto s : table[v].synonyms) {
            if (word == s) return static_cast<int>(v);
        }
    }
    return -1;
}

// "a" before a vowel-initial word becomes "an".
std::string fix_articles(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::string w = words[i];
        if (w == "a" && i + 1 < words.size() && std::string_view("aeiou").find(words[i + 1][0]) != std::string_view::npos) {
            w = "an";
        }
        if (i) out += ' ';
        out += w;
    }
    return out;
}

const std::vector<std::array<double, kPitchDims>>& embedding_table() {
    static const auto table = [] {
        std::vector<std::array<double, kPitchDims>> t(kPitchCount);
        for (int p = 0; p < kPitchCount; ++p) t[p] = pitch_embedding(p);
        return t;
    }();
    return table;
}

}  // namespace

std::size_t PieceAttributes::index() const {
    return ((static_cast<std::size_t>(tempo) * 3 + static_cast<std::size_t>(scale)) * 3 +
            static_cast<std::size_t>(reg)) * 2 + static_cast<std::size_t>(density);
}

PieceAttributes PieceAttributes::from_index(std::size_t index) {
    if (index >= kAttributeCombos) throw ArgumentError("attribute index " + std::to_string(index) + " out of range");
    PieceAttributes a;
    a.density = static_cast<Density>(index % 2);
    index /= 2;
    a.reg = static_cast<Register>(index % 3);
    index /= 3;
    a.scale = static_cast<Scale>(index % 3);
    a.tempo = static_cast<Tempo>(index / 3);
    return a;
}

std::array<int, 4> attribute_labels(const PieceAttributes& a) {
    return {static_cast<int>(a.tempo), static_cast<int>(a.scale), static_cast<int>(a.reg), static_cast<int>(a.density)};
}

std::string_view tempo_name(Tempo t) { return kTempoWords[static_cast<std::size_t>(t)].canonical; }
std::string_view scale_name(Scale s) { return kScaleWords[static_cast<std::size_t>(s)].canonical; }
std::string_view register_name(Register r) { return kRegisterWords[static_cast<std::size_t>(r)].canonical; }
std::string_view density_name(Density d) { return kDensityWords[static_cast<std::size_t>(d)].canonical; }

std::string describe(const PieceAttributes& a) {
    return std::string(tempo_name(a.tempo)) + "/" + std::string(scale_name(a.scale)) + "/" +
           std::string(register_name(a.reg)) + "/" + std::string(density_name(a.density));
}

std::vector<int> pitch_set(Scale scale, Register reg) {
    static const std::array<std::vector<int>, 3> classes = {{
        {0, 2, 4, 5, 7, 9, 11},
        {0, 2, 3, 5, 7, 8, 10},
        {0, 2, 4, 7, 9},
    }};
    std::vector<int> out = classes[static_cast<std::size_t>(scale)];
    for (auto& p : out) p += 12 * static_cast<int>(reg);
    return out;
}

std::array<double, kPitchDims> pitch_embedding(int pitch) {
    if (pitch < 0 || pitch >= kPitchCount) throw ArgumentError("pitch " + std::to_string(pitch) + " out of range");
    std::array<double, kPitchDims> e{};
    for (std::size_t i = 0; i < kPeriods.size(); ++i) {
        const double angle = 2.0 * std::numbers::pi * pitch / kPeriods[i];
        e[2 * i] = std::sin(angle);
        e[2 * i + 1] = std::cos(angle);
    }
    return e;
}

double note_change_rate(Tempo tempo) {
    constexpr std::array<double, 3> rates = {0.02, 0.06, 0.18};
    return rates[static_cast<std::size_t>(tempo)];
}

Tensor<double> sample_piece(const PieceAttributes& attrs, std::size_t length, std::uint64_t seed) {
    if (length < 16) throw ArgumentError("sample_piece: length must be at least 16, got " + std::to_string(length));
    Rng rng(derive_seed(seed, attrs.index()));
    const auto pitches = pitch_set(attrs.scale, attrs.reg);
    const std::size_t degrees = pitches.size();
    const double rate = note_change_rate(attrs.tempo);
    const double gap_fraction = attrs.density == Density::Sparse ? kSparseGap : kDenseGap;

    std::vector<double> data(length * kFrameDim, 0.0);
    std::size_t degree = uniform_index(rng, degrees);
    std::size_t t = 0;
    while (t < length) {
        const std::size_t duration = 1 + static_cast<std::size_t>(std::geometric_distribution<int>(rate)(rng));
        std::size_t gap = 0;
        if (duration >= 2) {
            gap = static_cast<std::size_t>(std::lround(gap_fraction * static_cast<double>(duration)));
            gap = std::clamp<std::size_t>(gap, 1, duration - 1);
        }
        const auto& emb = embedding_table()[static_cast<std::size_t>(pitches[degree])];
        for (std::size_t age = 0; age < duration - gap && t + age < length; ++age) {
            double* f = &data[(t + age) * kFrameDim];
            std::copy(emb.begin(), emb.end(), f);
            f[kPitchDims] = kEnvelopeFloor + (1.0 - kEnvelopeFloor) * std::exp(-double(age) / kEnvelopeFrames);
            f[kPitchDims + 1] = std::exp(-double(age) / kAttackFrames);
        }
        t += duration;
        // Order-1 walk that never repeats a degree: a reflected step or a uniform jump.
        if (degrees > 1) {
            if (uniform01(rng) < 0.5) {
                const bool up = uniform01(rng) < 0.5;
                if (degree == 0) degree = 1;
                else if (degree + 1 == degrees) degree = degrees - 2;
                else degree = up ? degree + 1 : degree - 1;
            } else {
                const std::size_t jump = 1 + uniform_index(rng, degrees - 1);
                degree = (degree + jump) % degrees;
            }
        }
    }
    for (auto& v : data) v += kNoiseSigma * standard_normal(rng);
    return Tensor<double>({length, kFrameDim}, std::move(data));
}

std::vector<int> decode_pitches(const Tensor<double>& frames) {
    if (frames.rank() != 2 || frames.dim(1) != kFrameDim) {
        throw DimensionError("decode_pitches: expected [L x 16] frames, got " + shape_to_string(frames.shape()));
    }
    const std::size_t L = frames.dim(0);
    auto x = frames.data();
    const auto& table = embedding_table();
    std::vector<int> out(L);
    for (std::size_t t = 0; t < L; ++t) {
        const double* f = &x[t * kFrameDim];
        double best = 0.0;
        for (std::size_t j = 0; j < kPitchDims; ++j) best += f[j] * f[j];
        int best_pitch = kRest;
        for (int p = 0; p < kPitchCount; ++p) {
            double d = 0.0;
            for (std::size_t j = 0; j < kPitchDims; ++j) {
                const double diff = f[j] - table[static_cast<std::size_t>(p)][j];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_pitch = p;
            }
        }
        out[t] = best_pitch;
    }
    return out;
}

std::string render_caption(const PieceAttributes& attrs, std::uint64_t seed) {
    Rng rng(derive_seed(seed, attrs.index(), 0x63617074));
    std::string text(kTemplates[uniform_index(rng, kTemplates.size())]);
    const std::array<std::pair<std::string_view, std::string_view>, 4> fills = {{
        {"{T}", pick(kTempoWords, static_cast<std::size_t>(attrs.tempo), rng)},
        {"{S}", pick(kScaleWords, static_cast<std::size_t>(attrs.scale), rng)},
        {"{R}", pick(kRegisterWords, static_cast<std::size_t>(attrs.reg), rng)},
        {"{D}", pick(kDensityWords, static_cast<std::size_t>(attrs.density), rng)},
    }};
    for (const auto& [slot, word] : fills) {
        const auto at = text.find(slot);
        text.replace(at, slot.size(), word);
    }
    return fix_articles(text);
}

std::optional<PieceAttributes> parse_caption(std::string_view caption) {
    std::array<int, 4> found = {-1, -1, -1, -1};
    auto note = [&](std::size_t head, int value) {
        if (value < 0) return true;
        if (found[head] >= 0 && found[head] != value) return false;
        found[head] = value;
        return true;
    };
    for (const auto& w : caption_words(caption)) {
        if (!note(0, lookup(kTempoWords, w)) || !note(1, lookup(kScaleWords, w)) ||
            !note(2, lookup(kRegisterWords, w)) || !note(3, lookup(kDensityWords, w))) {
            return std::nullopt;
        }
    }
    if (std::any_of(found.begin(), found.end(), [](int v) { return v < 0; })) return std::nullopt;
    return PieceAttributes{static_cast<Tempo>(found[0]), static_cast<Scale>(found[1]), static_cast<Register>(found[2]),
                           static_cast<Density>(found[3])};
}

PieceAttributes classify_piece(const Tensor<double>& frames) {
    const auto pitches = decode_pitches(frames);
    const std::size_t L = pitches.size();
    std::vector<bool> seen(kPitchCount, false);
    std::size_t onsets = 0, rests = 0;
    for (std::size_t t = 0; t < L; ++t) {
        const int p = pitches[t];
        if (p == kRest) {
            ++rests;
            continue;
        }
        seen[static_cast<std::size_t>(p)] = true;
        if (t == 0 || pitches[t - 1] != p) ++onsets;
    }

    PieceAttributes out;
    // Smallest covering pitch set; when nothing covers (noise), the largest overlap.
    std::size_t best_size = std::numeric_limits<std::size_t>::max();
    long best_overlap = -1;
    bool covered = false;
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t s = 0; s < 3; ++s) {
            const auto set = pitch_set(static_cast<Scale>(s), static_cast<Register>(r));
            long inside = 0, total = 0;
            for (int p = 0; p < kPitchCount; ++p) {
                if (!seen[static_cast<std::size_t>(p)]) continue;
                ++total;
                if (std::binary_search(set.begin(), set.end(), p)) ++inside;
            }
            const bool covers = inside == total;
            if (covers && (!covered || set.size() < best_size)) {
                covered = true;
                best_size = set.size();
                out.scale = static_cast<Scale>(s);
                out.reg = static_cast<Register>(r);
            } else if (!covered && inside > best_overlap) {
                best_overlap = inside;
                out.scale = static_cast<Scale>(s);
                out.reg = static_cast<Register>(r);
            }
        }
    }

    const double onset_rate = double(onsets) / double(L);
    const double slow_medium = std::sqrt(note_change_rate(Tempo::Slow) * note_change_rate(Tempo::Medium));
    const double medium_fast = std::sqrt(note_change_rate(Tempo::Medium) * note_change_rate(Tempo::Fast));
    out.tempo = onset_rate < slow_medium ? Tempo::Slow : onset_rate < medium_fast ? Tempo::Medium : Tempo::Fast;
    out.density = double(rests) / double(L) > kRestThreshold ? Density::Sparse : Density::Dense;
    return out;
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    return "train";
}

std::vector<const Example*> Corpus::split(Split s) const {
    std::vector<const Example*> out;
    for (const auto& e : examples) {
        if (e.split == s) out.push_back(&e);
    }
    return out;
}

Corpus sample_corpus(std::size_t n, std::size_t length, std::uint64_t seed) {
    if (n < 10) throw InsufficientDataError("corpus needs at least 10 examples, got " + std::to_string(n));
    Corpus corpus;
    corpus.length = length;
    corpus.seed = seed;
    corpus.examples.resize(n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rank = [seed](std::size_t i) { return derive_seed(seed, fnv1a64("split"), i); };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ra = rank(a), rb = rank(b);
        return ra != rb ? ra < rb : a < b;
    });
    const std::size_t held = n / 10;
    for (std::size_t pos = 0; pos < n; ++pos) {
        corpus.examples[order[pos]].split = pos < held ? Split::Valid : pos < 2 * held ? Split::Test : Split::Train;
    }

    for (std::size_t i = 0; i < n; ++i) {
        auto& e = corpus.examples[i];
        e.id = i;
        Rng attr_rng(derive_seed(seed, fnv1a64("attributes"), i));
        e.attrs = PieceAttributes::from_index(uniform_index(attr_rng, kAttributeCombos));
        e.caption = render_caption(e.attrs, derive_seed(seed, fnv1a64("caption"), i));
        e.frames = sample_piece(e.attrs, length, derive_seed(seed, fnv1a64("piece"), i));
    }
    return corpus;
}

void tokenize(Corpus& corpus, const RvqCodebooks& books) {
    for (auto& e : corpus.examples) {
        if (!e.frames.defined()) throw DataError("tokenize: example " + std::to_string(e.id) + " has no frames");
        e.tokens = rvq_encode(e.frames, books).layer(0);
    }
}

Corpus make_dataset(std::size_t n, std::size_t length, std::uint64_t seed, const RvqCodebooks& books) {
    Corpus corpus = sample_corpus(n, length, seed);
    tokenize(corpus, books);
    return corpus;
}

Tensor<double> codec_training_frames(const Corpus& corpus, std::size_t max_frames, std::uint64_t seed) {
    const auto train = corpus.split(Split::Train);
    std::vector<std::pair<const Example*, std::size_t>> all;
    for (const auto* e : train) {
        for (std::size_t t = 0; t < e->frames.dim(0); ++t) all.emplace_back(e, t);
    }
    if (all.empty()) throw InsufficientDataError("no training frames in corpus");
    const std::size_t m = std::min(max_frames, all.size());
    Rng rng(seed);
    // Partial Fisher-Yates, then restore corpus order.
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    std::vector<double> data;
    data.reserve(m * kFrameDim);
    for (auto i : idx) {
        const auto [e, t] = all[i];
        auto f = e->frames.data().subspan(t * kFrameDim, kFrameDim);
        data.insert(data.end(), f.begin(), f.end());
    }
    return Tensor<double>({m, kFrameDim}, std::move(data));
}

namespace {

constexpr std::string_view kDatasetHeader = "id\tsplit\ttempo\tscale\tregister\tdensity\tcaption\ttokens";

template <std::size_t N>
int canonical_index(const std::array<Words, N>& table, const std::string& word) {
    for (std::size_t v = 0; v < N; ++v) {
        if (table[v].canonical == word) return static_cast<int>(v);
    }
    return -1;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dataset_path,
                 const std::filesystem::path& frames_path) {
    std::ostringstream text;
    text << "# ssmg corpus length=" << corpus.length << " seed=" << corpus.seed << '\n' << kDatasetHeader << '\n';
    ByteWriter frames;
    frames.bytes("FRM1");
    frames.u64(corpus.examples.size());
    frames.u64(corpus.length);
    frames.u64(kFrameDim);
    for (const auto& e : corpus.examples) {
        if (e.caption.find_first_of("\t\n") != std::string::npos) {
            throw DataError("caption of example " + std::to_string(e.id) + " contains a tab or newline");
        }
        text << e.id << '\t' << split_name(e.split) << '\t' << tempo_name(e.attrs.tempo) << '\t'
             << scale_name(e.attrs.scale) << '\t' << register_name(e.attrs.reg) << '\t'
             << density_name(e.attrs.density) << '\t' << e.caption << '\t';
        for (std::size_t t = 0; t < e.tokens.size(); ++t) text << (t ? " " : "") << e.tokens[t];
        text << '\n';
        if (!e.frames.defined() || e.frames.dim(0) != corpus.length) {
            throw DataError("example " + std::to_string(e.id) + " lacks frames of length " + std::to_string(corpus.length));
        }
        frames.u64(e.id);
        std::vector<float> f(e.frames.data().begin(), e.frames.data().end());
        frames.f32_array(f);
    }
    frames.u64(fnv1a64(frames.buffer()));
    write_file(dataset_path, text.str());
    write_file(frames_path, frames.buffer());
}

Corpus load_corpus(const std::filesystem::path& dataset_path, const std::filesystem::path& frames_path) {
    std::istringstream in(read_file(dataset_path));
    Corpus corpus;
    std::string line;
    auto bad = [&](const std::string& why) {
        return IntegrityError("dataset " + dataset_path.string() + ": " + why);
    };
    if (!std::getline(in, line) || line.rfind("# ssmg corpus ", 0) != 0) throw bad("missing corpus header");
    {
        std::istringstream meta(line.substr(14));
        std::string field;
        while (meta >> field) {
            const auto eq = field.find('=');
            if (eq == std::string::npos) throw bad("malformed header field '" + field + "'");
            const auto key = field.substr(0, eq), value = field.substr(eq + 1);
            try {
                if (key == "length") corpus.length = std::stoull(value);
                else if (key == "seed") corpus.seed = std::stoull(value);
            } catch (const std::exception&) {
                throw bad("malformed header value '" + field + "'");
            }
        }
    }
    if (!std::getline(in, line) || line != kDatasetHeader) throw bad("missing column header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cols = split_tabs(line);
        if (cols.size() != 8) throw bad("record with " + std::to_string(cols.size()) + " columns");
        Example e;
        try {
            e.id = std::stoull(cols[0]);
        } catch (const std::exception&) {
            throw bad("bad id '" + cols[0] + "'");
        }
        if (cols[1] == "train") e.split = Split::Train;
        else if (cols[1] == "valid") e.split = Split::Valid;
        else if (cols[1] == "test") e.split = Split::Test;
        else throw bad("unknown split '" + cols[1] + "'");
        const int tempo = canonical_index(kTempoWords, cols[2]), scale = canonical_index(kScaleWords, cols[3]),
                  reg = canonical_index(kRegisterWords, cols[4]), density = canonical_index(kDensityWords, cols[5]);
        if (tempo < 0 || scale < 0 || reg < 0 || density < 0) throw bad("unknown attribute label in record " + cols[0]);
        e.attrs = {static_cast<Tempo>(tempo), static_cast<Scale>(scale), static_cast<Register>(reg),
                   static_cast<Density>(density)};
        e.caption = cols[6];
        std::istringstream toks(cols[7]);
        for (int tok; toks >> tok;) e.tokens.push_back(tok);
        if (!toks.eof()) throw bad("bad token list in record " + cols[0]);
        if (!e.tokens.empty() && e.tokens.size() != corpus.length) throw bad("token count mismatch in record " + cols[0]);
        corpus.examples.push_back(std::move(e));
    }

    if (frames_path.empty()) return corpus;
    const std::string bytes = read_file(frames_path);
    if (bytes.size() < 8) throw IntegrityError("frames file " + frames_path.string() + " is truncated");
    ByteReader tail(std::string_view(bytes).substr(bytes.size() - 8));
    if (tail.u64() != fnv1a64(std::string_view(bytes).substr(0, bytes.size() - 8))) {
        throw IntegrityError("frames file " + frames_path.string() + " fails its checksum");
    }
    ByteReader r(std::string_view(bytes).substr(0, bytes.size() - 8));
    r.expect_magic("FRM1", "frames file");
    const auto count = r.u64(), length = r.u64(), dim = r.u64();
    if (count != corpus.examples.size() || length != corpus.length || dim != kFrameDim) {
        throw IntegrityError("frames file " + frames_path.string() + " does not match the dataset");
    }
    std::vector<float> buf(length * dim);
    for (auto& e : corpus.examples) {
        if (r.u64() != e.id) throw IntegrityError("frames file " + frames_path.string() + " is out of order");
        r.f32_array(buf);
        e.frames = Tensor<double>({length, dim}, std::vector<double>(buf.begin(), buf.end()));
    }
    if (r.remaining() != 0) throw IntegrityError("frames file " + frames_path.string() + " has trailing bytes");
    return corpus;
}

}  // namespace ssmg
