#pragma once
// Corpus record stream and manifest.
//
// File: "MECR" | u32 version | u64 record count | records.
// Record: u64 payload length | payload, where payload is
//   u32 T | u32 F | f32 frames[T*F] | u32 n_src | i32 src[n_src] |
//   u32 n_tgt | i32 tgt[n_tgt]
// All little-endian. A directory holds one file per (distribution, split),
// named "<distribution>_<split>.mecr", plus manifest.json with the SHA-256
// and record count of every file.

#include <stdexcept>
#include <string>
#include <vector>

#include "mecc/synth.hpp"

namespace mecc {

inline constexpr std::uint32_t kCorpusVersion = 1;

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_examples(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> read_examples(const std::string& path);  // throws CorpusError

std::string corpus_file_name(Distribution d, Split s);

// Writes all six parts and manifest.json; returns the hex SHA-256 of the
// manifest, which identifies the corpus content.
std::string save_corpus(const std::string& dir, const Corpus& corpus);

// Reads one part after checking its hash against the manifest.
std::vector<Example> load_part(const std::string& dir, Distribution d, Split s);

std::string manifest_hash(const std::string& dir);

}  // namespace mecc
