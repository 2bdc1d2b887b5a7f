#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "mtcrf/error.hpp"
#include "mtcrf/model.hpp"
#include "support/support.hpp"

using namespace mtcrf;
namespace fs = std::filesystem;

namespace {

class TempFile {
 public:
  TempFile()
      : path_(fs::temp_directory_path() /
              ("mtcrf_model_" + std::to_string(std::random_device{}()) + ".bin")) {}
  ~TempFile() { fs::remove(path_); }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ErrorKind load_error(const std::string& path) {
  try {
    load_tagger(path);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kInvalidArgument;
}

bool same_parameters(Tagger& a, Tagger& b) {
  TensorSpans sa, sb;
  append_spans(a, sa);
  append_spans(b, sb);
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (!std::equal(sa[i].begin(), sa[i].end(), sb[i].begin(), sb[i].end())) return false;
  }
  return true;
}

}  // namespace

TEST(ModelKind, NamesRoundTrip) {
  for (auto kind : {ModelKind::kSingleTask, ModelKind::kMultiHead, ModelKind::kFactorial,
                    ModelKind::kWeightedFactorial, ModelKind::kCascadedFactorial}) {
    EXPECT_EQ(parse_model_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_model_kind("FAC"), Error);
  EXPECT_FALSE(has_couplings(ModelKind::kMultiHead));
  EXPECT_TRUE(has_couplings(ModelKind::kCascadedFactorial));
}

TEST(SaveLoad, RoundTripIsExactForEveryKind) {
  std::mt19937_64 rng(1);
  for (auto kind : {ModelKind::kSingleTask, ModelKind::kMultiHead, ModelKind::kFactorial,
                    ModelKind::kWeightedFactorial, ModelKind::kCascadedFactorial}) {
    for (int layers : {1, 3}) {
      const std::vector<int> counts =
          kind == ModelKind::kSingleTask ? std::vector<int>{3} : std::vector<int>{2, 3, 4};
      Tagger t = mtcrf::testing::random_tagger(kind, counts, rng, layers);
      t.config_json = R"({"note":"x"})";
      t.model.bp.damping = 0.3;
      TempFile f;
      save_tagger(t, f.str());
      Tagger back = load_tagger(f.str());
      EXPECT_EQ(back.kind, t.kind);
      EXPECT_EQ(back.model.variant, t.model.variant);
      EXPECT_TRUE(back.schema == t.schema);
      EXPECT_EQ(back.config_json, t.config_json);
      EXPECT_EQ(back.model.bp, t.model.bp);
      EXPECT_TRUE(back.model.couplings == t.model.couplings);
      EXPECT_TRUE(same_parameters(back, t));
      for (int i = 0; i < 5; ++i) {
        const auto tokens = mtcrf::testing::random_tokens(rng, 1 + i);
        EXPECT_EQ(tagger_predict(back, tokens), tagger_predict(t, tokens));
      }
      // Saving the loaded model reproduces the file byte for byte.
      TempFile g;
      save_tagger(back, g.str());
      EXPECT_EQ(read_bytes(f.str()), read_bytes(g.str()));
    }
  }
}

TEST(SaveLoad, MissingFileIsIoError) {
  EXPECT_EQ(load_error("/nonexistent/dir/model.bin"), ErrorKind::kIo);
  std::mt19937_64 rng(2);
  const Tagger t = mtcrf::testing::random_tagger(ModelKind::kMultiHead, {2}, rng);
  EXPECT_THROW(save_tagger(t, "/nonexistent/dir/model.bin"), Error);
}

TEST(SaveLoad, BadMagicVersionAndTruncationAreFormatErrors) {
  std::mt19937_64 rng(3);
  const Tagger t = mtcrf::testing::random_tagger(ModelKind::kFactorial, {2, 3}, rng);
  TempFile f;
  save_tagger(t, f.str());
  const auto bytes = read_bytes(f.str());

  auto magic = bytes;
  magic[0] = 'X';
  write_bytes(f.str(), magic);
  EXPECT_EQ(load_error(f.str()), ErrorKind::kFormat);

  auto version = bytes;
  version[8] = static_cast<char>(kModelFormatVersion + 1);
  write_bytes(f.str(), version);
  EXPECT_EQ(load_error(f.str()), ErrorKind::kFormat);

  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{13}, bytes.size() / 2,
                          bytes.size() - 1}) {
    write_bytes(f.str(), std::vector<char>(bytes.begin(), bytes.begin() + cut));
    EXPECT_EQ(load_error(f.str()), ErrorKind::kFormat) << cut;
  }

  auto trailing = bytes;
  trailing.push_back('\0');
  write_bytes(f.str(), trailing);
  EXPECT_EQ(load_error(f.str()), ErrorKind::kFormat);
}

TEST(SaveLoad, CorruptedHeaderBytesNeverLoadSilentlyWrong) {
  std::mt19937_64 rng(4);
  const Tagger t = mtcrf::testing::random_tagger(ModelKind::kWeightedFactorial, {2, 3}, rng);
  TempFile f;
  save_tagger(t, f.str());
  const auto bytes = read_bytes(f.str());
  // Flipping any structural byte of the prefix (kind, schema, config) must
  // either fail as a format error or still load a model of consistent shape.
  const std::size_t limit = std::min<std::size_t>(bytes.size(), 400);
  for (std::size_t i = 12; i < limit; ++i) {
    auto corrupt = bytes;
    corrupt[i] = static_cast<char>(corrupt[i] ^ 0x5a);
    write_bytes(f.str(), corrupt);
    try {
      Tagger back = load_tagger(f.str());
      const auto tokens = mtcrf::testing::random_tokens(rng, 4);
      const TaskLabels labels = tagger_predict(back, tokens);
      ASSERT_EQ(static_cast<int>(labels.size()), back.num_tasks()) << i;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kFormat) << i;
    }
  }
}
