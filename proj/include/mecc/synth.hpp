#pragma once
// Synthetic speech translation corpus: each source token is "spoken" as a few
// noisy copies of a per-token prototype frame, with blank frames in between,
// and its translation comes from a fixed deterministic rule.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mecc/tensor.hpp"
#include "mecc/types.hpp"

namespace mecc {

// Source-text distribution. Token ids are ranked by a permutation drawn from
// rank_seed and sampled with probability proportional to (rank + 1)^-zipf,
// so zipf = 0 is uniform and two profiles with different rank seeds favour
// different tokens.
struct TextProfile {
  std::size_t min_len = 3;
  std::size_t max_len = 12;
  double zipf = 0.0;
  std::uint64_t rank_seed = 0;
};

struct SynthConfig {
  std::size_t src_vocab = 21;  // id 0 is the blank
  std::size_t tgt_vocab = 24;  // PAD, BOS, EOS, then mapped source ids
  std::size_t frames_per_token = 3;
  std::size_t frame_jitter = 1;
  std::size_t frame_dim = 16;
  double prototype_scale = 1.0;
  double min_prototype_distance = 0.5;
  double noise_sigma = 0.3;
  double blank_prob = 0.2;
  std::string rule = "map_reverse";
  TokenId offset = 3;
  TextProfile base_text{3, 9, 1.0, 11};
  TextProfile task_speech{3, 12, 1.0, 29};
  std::uint64_t seed = 1;

  // Throws std::invalid_argument on probabilities outside [0, 1], empty
  // ranges, an unknown rule, or mapped ids that do not fit tgt_vocab.
  void validate() const;
};

struct Example {
  Tensor frames{Shape{0, 0}, DType::kF32};  // [T, frame_dim]; [0, frame_dim] for text-only
  Tokens src;
  Tokens tgt;  // BOS ... EOS
  bool operator==(const Example& o) const {
    return src == o.src && tgt == o.tgt && frames.bitwise_equal(o.frames);
  }
};

// map_reverse: id i -> i + offset, reversed. map_shift: the same mapping
// without reversal. Both wrap the result in BOS/EOS. Unknown rule names throw
// std::invalid_argument.
Tokens translation_rule(std::span<const TokenId> src, const std::string& rule, TokenId offset);

// Prototype frame of every source id (row 0 is the blank), drawn from
// config.seed with the configured minimum pairwise distance.
Tensor make_prototypes(const SynthConfig& config);

class Synthesizer {
 public:
  explicit Synthesizer(SynthConfig config);

  Tokens sample_tokens(std::mt19937_64& rng, const TextProfile& profile) const;
  Tensor render(std::span<const TokenId> src, std::mt19937_64& rng) const;
  Example generate(std::mt19937_64& rng, const TextProfile& profile, bool with_frames) const;

  const SynthConfig& config() const { return config_; }
  const Tensor& prototypes() const { return prototypes_; }

 private:
  SynthConfig config_;
  Tensor prototypes_;
};

enum class Distribution { kBaseText, kTaskSpeech };
enum class Split { kTrain, kDev, kTest };

const char* distribution_name(Distribution d);
const char* split_name(Split s);
Split parse_split(const std::string& s);  // throws std::invalid_argument

struct SplitSizes {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
  std::size_t at(Split s) const;
};

struct CorpusSpec {
  SplitSizes base_text{20000, 500, 500};
  SplitSizes task_speech{4000, 500, 500};
  // Per-split generator seeds; must be pairwise distinct.
  std::array<std::uint64_t, 3> split_seeds{101, 202, 303};
};

struct Corpus {
  std::array<std::vector<Example>, 6> parts;

  std::vector<Example>& at(Distribution d, Split s) { return parts[index(d, s)]; }
  const std::vector<Example>& at(Distribution d, Split s) const { return parts[index(d, s)]; }
  static std::size_t index(Distribution d, Split s) {
    return static_cast<std::size_t>(d) * 3 + static_cast<std::size_t>(s);
  }
};

// Generates every split. Held-out examples whose source sequence already
// occurs in an earlier split are redrawn, so train, dev and test are
// disjoint. Overlapping split seeds throw std::invalid_argument.
Corpus make_corpus(const SynthConfig& config, const CorpusSpec& spec);

}  // namespace mecc
