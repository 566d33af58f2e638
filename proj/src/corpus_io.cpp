#include "mecc/corpus_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "byte_io.hpp"
#include "json.hpp"
#include "mecc/hash.hpp"

namespace mecc {
namespace {

constexpr char kMagic[4] = {'M', 'E', 'C', 'R'};

void put_tokens(detail::ByteWriter& w, const Tokens& tokens) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tokens.size()));
  for (TokenId t : tokens) w.put<std::int32_t>(t);
}

Tokens get_tokens(detail::ByteReader& r) {
  const auto n = r.get<std::uint32_t>();
  if (n > r.remaining() / 4) throw CorpusError("token count exceeds record");
  Tokens out(n);
  for (auto& t : out) t = r.get<std::int32_t>();
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_examples(const std::string& path, const std::vector<Example>& examples) {
  detail::ByteWriter w;
  w.put_bytes(std::as_bytes(std::span<const char>(kMagic, 4)));
  w.put<std::uint32_t>(kCorpusVersion);
  w.put<std::uint64_t>(examples.size());
  for (const auto& ex : examples) {
    detail::ByteWriter rec;
    const auto T = ex.frames.rank() == 2 ? ex.frames.dim(0) : 0;
    const auto F = ex.frames.rank() == 2 ? ex.frames.dim(1) : 0;
    rec.put<std::uint32_t>(static_cast<std::uint32_t>(T));
    rec.put<std::uint32_t>(static_cast<std::uint32_t>(F));
    rec.put_bytes(ex.frames.to(DType::kF32).bytes());
    put_tokens(rec, ex.src);
    put_tokens(rec, ex.tgt);
    w.put<std::uint64_t>(rec.buffer().size());
    w.put_bytes(rec.buffer());
  }
  detail::write_file_atomic(path, w.buffer());
}

std::vector<Example> read_examples(const std::string& path) {
  std::vector<std::byte> bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const std::runtime_error& e) {
    throw CorpusError(e.what());
  }
  try {
    detail::ByteReader r(bytes);
    if (std::memcmp(r.take(4).data(), kMagic, 4) != 0) throw CorpusError(path + ": bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kCorpusVersion) {
      throw CorpusError(path + ": corpus version " + std::to_string(version));
    }
    const auto count = r.get<std::uint64_t>();
    std::vector<Example> out;
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto len = r.get<std::uint64_t>();
      detail::ByteReader rec(r.take(len));
      const auto T = rec.get<std::uint32_t>();
      const auto F = rec.get<std::uint32_t>();
      if (F != 0 && T > rec.remaining() / (4 * F)) throw CorpusError(path + ": bad frame dims");
      Example ex;
      ex.frames = Tensor({T, F}, DType::kF32);
      auto raw = rec.take(std::size_t{T} * F * 4);
      std::memcpy(ex.frames.data<float>().data(), raw.data(), raw.size());
      ex.src = get_tokens(rec);
      ex.tgt = get_tokens(rec);
      if (rec.remaining() != 0) throw CorpusError(path + ": trailing bytes in record");
      out.push_back(std::move(ex));
    }
    if (r.remaining() != 0) throw CorpusError(path + ": trailing bytes");
    return out;
  } catch (const detail::TruncatedInput& e) {
    throw CorpusError(path + ": truncated: " + e.what());
  }
}

std::string corpus_file_name(Distribution d, Split s) {
  return std::string(distribution_name(d)) + "_" + split_name(s) + ".mecr";
}

std::string save_corpus(const std::string& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for (Distribution d : {Distribution::kBaseText, Distribution::kTaskSpeech}) {
    for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
      const std::string name = corpus_file_name(d, s);
      const std::string path = dir + "/" + name;
      write_examples(path, corpus.at(d, s));
      files[name] = {{"records", corpus.at(d, s).size()},
                     {"sha256", to_hex(sha256(detail::read_file(path)))}};
    }
  }
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kCorpusVersion;
  manifest["files"] = files;
  const std::string text = manifest.dump(2) + "\n";
  detail::write_file_atomic(dir + "/manifest.json",
                            std::as_bytes(std::span<const char>(text.data(), text.size())));
  return to_hex(sha256(text));
}

std::vector<Example> load_part(const std::string& dir, Distribution d, Split s) {
  const std::string name = corpus_file_name(d, s);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(dir + "/manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError(dir + "/manifest.json: " + e.what());
  }
  if (!manifest.contains("files") || !manifest["files"].contains(name)) {
    throw CorpusError(dir + "/manifest.json has no entry for " + name);
  }
  const std::string path = dir + "/" + name;
  std::vector<std::byte> bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const std::runtime_error& e) {
    throw CorpusError(e.what());
  }
  if (to_hex(sha256(bytes)) != manifest["files"][name]["sha256"].get<std::string>()) {
    throw CorpusError(path + ": content does not match manifest hash");
  }
  return read_examples(path);
}

std::string manifest_hash(const std::string& dir) {
  return to_hex(sha256(read_text(dir + "/manifest.json")));
}

}  // namespace mecc
