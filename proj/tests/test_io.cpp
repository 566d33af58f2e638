#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "mecc/checkpoint.hpp"
#include "mecc/config.hpp"
#include "mecc/corpus_io.hpp"
#include "mecc/hash.hpp"

using namespace mecc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mecc_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::byte> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> c((std::istreambuf_iterator<char>(in)), {});
  std::vector<std::byte> out(c.size());
  std::memcpy(out.data(), c.data(), c.size());
  return out;
}

void put_bytes(const fs::path& p, const std::vector<std::byte>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

struct Fixture {
  ParamSet params{DType::kF32};
  Checkpoint ckpt;
  Fixture() {
    std::mt19937_64 rng(1);
    params.add_glorot("asr.w", 3, 4, rng);
    params.add_uniform("mt.b", {5}, 1.0, rng).set_frozen(true);
    params.add("exporter.s", Tensor::scalar(2.5, DType::kF32));
    ckpt = capture(params, {"matcher", 17, 9, sha256(std::string_view("cfg"))});
  }
};

}  // namespace

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(to_hex(sha256(std::string_view(""))),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(to_hex(sha256(std::string_view("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  h.update(std::string_view("a")).update(std::string_view("bc"));
  EXPECT_EQ(to_hex(h.finish()), to_hex(sha256(std::string_view("abc"))));
}

TEST(Sha256, TensorDigestSeesShapeAndDtype) {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, DType::kF32);
  EXPECT_EQ(tensor_sha256(a), tensor_sha256(a.reshaped({2, 2})));
  EXPECT_NE(tensor_sha256(a), tensor_sha256(a.reshaped({4})));
  EXPECT_NE(tensor_sha256(a), tensor_sha256(a.to(DType::kF64)));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  Fixture f;
  const auto dir = scratch("ckpt_rt");
  save_checkpoint((dir / "a.ckpt").string(), f.ckpt);
  Checkpoint loaded = load_checkpoint((dir / "a.ckpt").string());
  save_checkpoint((dir / "b.ckpt").string(), loaded);
  EXPECT_EQ(bytes_of(dir / "a.ckpt"), bytes_of(dir / "b.ckpt"));
  EXPECT_EQ(loaded.meta, f.ckpt.meta);
  ASSERT_EQ(loaded.entries.size(), 3u);
  EXPECT_EQ(loaded.entries[1].name, "mt.b");
  EXPECT_TRUE(loaded.entries[1].frozen);
  EXPECT_FALSE(loaded.entries[0].frozen);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(loaded.entries[i].value.bitwise_equal(f.ckpt.entries[i].value));
  }
}

TEST(Checkpoint, LayoutHeader) {
  Fixture f;
  auto bytes = serialize(f.ckpt);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(std::memcmp(bytes.data(), "MECC", 4), 0);
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  EXPECT_EQ(version, kCheckpointVersion);
  // checksum trailer covers everything before it
  std::span<const std::byte> body(bytes.data(), bytes.size() - 32);
  Digest tail;
  std::memcpy(tail.data(), bytes.data() + bytes.size() - 32, 32);
  EXPECT_EQ(sha256(body), tail);
}

TEST(Checkpoint, PrefixCapture) {
  Fixture f;
  Checkpoint only = capture(f.params, {}, {"mt.", "exporter."});
  ASSERT_EQ(only.entries.size(), 2u);
  EXPECT_EQ(only.entries[0].name, "mt.b");
  EXPECT_EQ(only.find("exporter.s")->value.item(), 2.5);
  EXPECT_EQ(only.find("asr.w"), nullptr);
}

TEST(Checkpoint, RejectsEveryTruncation) {
  Fixture f;
  const auto bytes = serialize(f.ckpt);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    ASSERT_THROW(deserialize(std::span(bytes.data(), n)), CheckpointError) << n;
  }
}

TEST(Checkpoint, RejectsCorruption) {
  Fixture f;
  const auto good = serialize(f.ckpt);
  for (std::size_t i = 0; i < good.size(); ++i) {
    auto bad = good;
    bad[i] ^= std::byte{0x01};
    ASSERT_THROW(deserialize(bad), CheckpointError) << "flipped byte " << i;
  }
  auto extra = good;
  extra.push_back(std::byte{0});
  EXPECT_THROW(deserialize(extra), CheckpointError);
}

TEST(Checkpoint, RejectsOtherVersionWithMessage) {
  Fixture f;
  auto bytes = serialize(f.ckpt);
  bytes[4] = std::byte{2};
  try {
    deserialize(bytes);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, MissingFile) {
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), CheckpointError);
}

TEST(Checkpoint, ApplyCopiesValuesOnly) {
  Fixture f;
  ParamSet other(DType::kF32);
  other.add_filled("asr.w", {3, 4}, 0.0);
  other.add_filled("mt.b", {5}, 0.0);
  other.add_filled("exporter.s", {}, 0.0);
  apply(f.ckpt, other);
  EXPECT_TRUE(other.at("asr.w").value().bitwise_equal(f.params.at("asr.w").value()));
  EXPECT_FALSE(other.at("mt.b").frozen());

  ParamSet wrong_shape(DType::kF32);
  wrong_shape.add_filled("asr.w", {4, 3}, 0.0);
  EXPECT_THROW(apply(capture(f.params, {}, {"asr."}), wrong_shape), CheckpointError);
  ParamSet missing(DType::kF32);
  EXPECT_THROW(apply(f.ckpt, missing), CheckpointError);
}

TEST(CorpusIo, RoundTrip) {
  Synthesizer s(SynthConfig{});
  std::mt19937_64 rng(3);
  std::vector<Example> ex;
  for (int i = 0; i < 20; ++i) ex.push_back(s.generate(rng, s.config().task_speech, i % 2 == 0));
  const auto dir = scratch("corpus_rt");
  write_examples((dir / "x.mecr").string(), ex);
  EXPECT_EQ(read_examples((dir / "x.mecr").string()), ex);
}

TEST(CorpusIo, RejectsTruncationAndBadMagic) {
  Synthesizer s(SynthConfig{});
  std::mt19937_64 rng(4);
  std::vector<Example> ex = {s.generate(rng, s.config().task_speech, true)};
  const auto dir = scratch("corpus_bad");
  const auto path = dir / "x.mecr";
  write_examples(path.string(), ex);
  const auto good = bytes_of(path);
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{10}, good.size() / 2,
                        good.size() - 1}) {
    put_bytes(path, std::vector<std::byte>(good.begin(), good.begin() + n));
    EXPECT_THROW(read_examples(path.string()), CorpusError) << n;
  }
  auto bad = good;
  bad[0] = std::byte{'X'};
  put_bytes(path, bad);
  EXPECT_THROW(read_examples(path.string()), CorpusError);
}

TEST(CorpusIo, ManifestHashStableAndChecked) {
  CorpusSpec spec;
  spec.base_text = {30, 5, 5};
  spec.task_speech = {20, 5, 5};
  const auto a = scratch("corpus_a"), b = scratch("corpus_b");
  const std::string ha = save_corpus(a.string(), make_corpus(SynthConfig{}, spec));
  const std::string hb = save_corpus(b.string(), make_corpus(SynthConfig{}, spec));
  EXPECT_EQ(ha, hb);
  EXPECT_EQ(manifest_hash(a.string()), ha);
  EXPECT_EQ(load_part(a.string(), Distribution::kTaskSpeech, Split::kDev).size(), 5u);

  const auto part = a / corpus_file_name(Distribution::kBaseText, Split::kTrain);
  auto bytes = bytes_of(part);
  bytes.back() ^= std::byte{0x40};
  put_bytes(part, bytes);
  EXPECT_THROW(load_part(a.string(), Distribution::kBaseText, Split::kTrain), CorpusError);
}

TEST(Config, ShippedDefaultMatchesBuiltIn) {
  const RunConfig shipped = load_config(MECC_SOURCE_DIR "/configs/default.json");
  EXPECT_EQ(dump_config(shipped), dump_config(RunConfig{}));
}

TEST(Config, DumpParseRoundTrip) {
  RunConfig c;
  c.synth.noise_sigma = 0.7;
  c.stages.matcher.l2_targets = "reference";
  c.corpus.split_seeds = {7, 8, 9};
  c.model.dtype = DType::kF64;
  EXPECT_EQ(dump_config(parse_config(dump_config(c))), dump_config(c));
}

TEST(Config, PartialDocumentKeepsDefaults) {
  RunConfig c = parse_config(R"({"stages": {"asr": {"steps": 7}}})");
  EXPECT_EQ(c.stages.asr.steps, 7u);
  EXPECT_EQ(c.stages.asr.batch_size, RunConfig{}.stages.asr.batch_size);
  EXPECT_EQ(c.synth.noise_sigma, RunConfig{}.synth.noise_sigma);
}

TEST(Config, RejectsUnknownKeysAtAnyDepth) {
  EXPECT_THROW(parse_config(R"({"sed": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"stages": {"asr": {"step": 7}}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"synth": {"base_text": {"zipff": 1}}})"), ConfigError);
  try {
    parse_config(R"({"model": {"heads": 2}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.heads"), std::string::npos);
  }
}

TEST(Config, RejectsBadTypesAndValues) {
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config("[]"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seed": -1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seed": "1"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"exporter_projection": 1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"dtype": "bf16"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"src_vocab": 30}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"stages": {"mt": {"peak_lr": 0}}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"corpus": {"split_seeds": [1, 1, 2]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"matcher_tau": 0})"), ConfigError);
}

TEST(Config, HashIgnoresPaths) {
  RunConfig a, b;
  b.paths.out = "/elsewhere";
  b.paths.data = "/data2";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.stages.finetune.steps += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}
