#include "mecc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mecc/models.hpp"

namespace mecc {
namespace {

void check_profile(const TextProfile& p, const char* name) {
  if (p.min_len > p.max_len) {
    throw std::invalid_argument(std::string("synth: ") + name + " min_len > max_len");
  }
  if (p.zipf < 0.0 || !std::isfinite(p.zipf)) {
    throw std::invalid_argument(std::string("synth: ") + name + " zipf must be >= 0");
  }
}

std::mt19937_64 seeded(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

void SynthConfig::validate() const {
  if (src_vocab < 2) throw std::invalid_argument("synth: src_vocab must be >= 2");
  if (frame_dim == 0) throw std::invalid_argument("synth: frame_dim must be positive");
  if (frames_per_token == 0) throw std::invalid_argument("synth: frames_per_token must be >= 1");
  if (frame_jitter >= frames_per_token) {
    throw std::invalid_argument("synth: frame_jitter must be < frames_per_token");
  }
  if (!(blank_prob >= 0.0 && blank_prob <= 1.0)) {
    throw std::invalid_argument("synth: blank_prob must be in [0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synth: noise_sigma must be >= 0");
  if (!(prototype_scale > 0.0)) throw std::invalid_argument("synth: prototype_scale must be > 0");
  if (rule != "map_reverse" && rule != "map_shift") {
    throw std::invalid_argument("synth: unknown translation rule '" + rule + "'");
  }
  if (offset <= kEos) throw std::invalid_argument("synth: offset must move ids past EOS");
  if (static_cast<std::size_t>(offset) + src_vocab - 1 >= tgt_vocab) {
    throw std::invalid_argument("synth: src id " + std::to_string(src_vocab - 1) + " + offset " +
                                std::to_string(offset) + " does not fit tgt_vocab " +
                                std::to_string(tgt_vocab));
  }
  check_profile(base_text, "base_text");
  check_profile(task_speech, "task_speech");
}

Tokens translation_rule(std::span<const TokenId> src, const std::string& rule, TokenId offset) {
  bool reverse;
  if (rule == "map_reverse") {
    reverse = true;
  } else if (rule == "map_shift") {
    reverse = false;
  } else {
    throw std::invalid_argument("translation_rule: unknown rule '" + rule + "'");
  }
  Tokens out;
  out.reserve(src.size() + 2);
  out.push_back(kBos);
  for (TokenId t : src) out.push_back(t + offset);
  if (reverse) std::reverse(out.begin() + 1, out.end());
  out.push_back(kEos);
  return out;
}

Tensor make_prototypes(const SynthConfig& config) {
  const std::size_t V = config.src_vocab, D = config.frame_dim;
  auto rng = seeded({config.seed, 0x70726f746fULL});
  std::normal_distribution<double> normal(0.0, config.prototype_scale);
  Tensor protos({V, D}, DType::kF32);
  auto data = protos.data<float>();
  for (std::size_t v = 0; v < V; ++v) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000) {
        throw std::invalid_argument("synth: cannot place prototypes min_prototype_distance apart");
      }
      for (std::size_t d = 0; d < D; ++d) data[v * D + d] = static_cast<float>(normal(rng));
      double closest = INFINITY;
      for (std::size_t u = 0; u < v; ++u) {
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
          const double diff = double(data[v * D + d]) - double(data[u * D + d]);
          s += diff * diff;
        }
        closest = std::min(closest, std::sqrt(s));
      }
      if (closest >= config.min_prototype_distance) break;
    }
  }
  return protos;
}

Synthesizer::Synthesizer(SynthConfig config)
    : config_((config.validate(), std::move(config))), prototypes_(make_prototypes(config_)) {}

Tokens Synthesizer::sample_tokens(std::mt19937_64& rng, const TextProfile& profile) const {
  const std::size_t n_tokens = config_.src_vocab - 1;
  // rank permutation of ids 1..n_tokens
  std::vector<TokenId> by_rank(n_tokens);
  std::iota(by_rank.begin(), by_rank.end(), 1);
  auto perm_rng = seeded({profile.rank_seed, 0x72616e6bULL});
  std::shuffle(by_rank.begin(), by_rank.end(), perm_rng);
  std::vector<double> weights(n_tokens);
  for (std::size_t r = 0; r < n_tokens; ++r) {
    weights[r] = std::pow(static_cast<double>(r + 1), -profile.zipf);
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> len(profile.min_len, profile.max_len);
  Tokens out(len(rng));
  for (auto& t : out) t = by_rank[pick(rng)];
  return out;
}

Tensor Synthesizer::render(std::span<const TokenId> src, std::mt19937_64& rng) const {
  const std::size_t D = config_.frame_dim;
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution blank(config_.blank_prob);
  std::uniform_int_distribution<std::size_t> jitter(0, 2 * config_.frame_jitter);
  std::vector<TokenId> frame_ids;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const bool repeat = i > 0 && src[i] == src[i - 1];
    if (repeat || blank(rng)) frame_ids.push_back(kBlank);
    const std::size_t n = config_.frames_per_token + jitter(rng) - config_.frame_jitter;
    frame_ids.insert(frame_ids.end(), n, src[i]);
  }
  if (blank(rng)) frame_ids.push_back(kBlank);
  if (frame_ids.empty()) frame_ids.push_back(kBlank);

  Tensor frames({frame_ids.size(), D}, DType::kF32);
  auto out = frames.data<float>();
  auto proto = prototypes_.data<float>();
  for (std::size_t t = 0; t < frame_ids.size(); ++t) {
    const auto id = static_cast<std::size_t>(frame_ids[t]);
    for (std::size_t d = 0; d < D; ++d) {
      const double n = config_.noise_sigma > 0.0 ? config_.noise_sigma * noise(rng) : 0.0;
      out[t * D + d] = static_cast<float>(double(proto[id * D + d]) + n);
    }
  }
  return frames;
}

Example Synthesizer::generate(std::mt19937_64& rng, const TextProfile& profile,
                              bool with_frames) const {
  Example ex;
  ex.src = sample_tokens(rng, profile);
  ex.tgt = translation_rule(ex.src, config_.rule, config_.offset);
  ex.frames = with_frames ? render(ex.src, rng) : Tensor({0, config_.frame_dim}, DType::kF32);
  return ex;
}

const char* distribution_name(Distribution d) {
  return d == Distribution::kBaseText ? "base_text" : "task_speech";
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + s + "' (train|dev|test)");
}

std::size_t SplitSizes::at(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kDev: return dev;
    case Split::kTest: return test;
  }
  return 0;
}

Corpus make_corpus(const SynthConfig& config, const CorpusSpec& spec) {
  const auto& seeds = spec.split_seeds;
  if (seeds[0] == seeds[1] || seeds[0] == seeds[2] || seeds[1] == seeds[2]) {
    throw std::invalid_argument("make_corpus: split seeds must be pairwise distinct");
  }
  Synthesizer synth(config);
  Corpus corpus;
  std::set<Tokens> seen;
  for (Split split : {Split::kTrain, Split::kDev, Split::kTest}) {
    std::set<Tokens> added;
    for (Distribution dist : {Distribution::kBaseText, Distribution::kTaskSpeech}) {
      const TextProfile& profile =
          dist == Distribution::kBaseText ? config.base_text : config.task_speech;
      const SplitSizes& sizes =
          dist == Distribution::kBaseText ? spec.base_text : spec.task_speech;
      const std::size_t want = sizes.at(split);
      auto rng = seeded({config.seed, seeds[static_cast<std::size_t>(split)],
                         static_cast<std::uint64_t>(dist)});
      auto& out = corpus.at(dist, split);
      out.reserve(want);
      std::size_t rejected = 0;
      while (out.size() < want) {
        Example ex = synth.generate(rng, profile, dist == Distribution::kTaskSpeech);
        if (split != Split::kTrain && seen.count(ex.src)) {
          if (++rejected > 100 * want + 1000) {
            throw std::invalid_argument(std::string("make_corpus: cannot draw enough unseen ") +
                                        split_name(split) + " sentences");
          }
          continue;
        }
        added.insert(ex.src);
        out.push_back(std::move(ex));
      }
    }
    seen.insert(added.begin(), added.end());
  }
  return corpus;
}

}  // namespace mecc
