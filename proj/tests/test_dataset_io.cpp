#include <string>

#include <gtest/gtest.h>

#include "ctrace/dataset_io.hpp"
#include "ctrace/error.hpp"
#include "ctrace/oracle.hpp"

namespace ctrace {
namespace {

const std::string kHeader = R"({"kind":"header","d_audio":2,"description":"t"})";

std::string sample_line(const std::string& elements, int target = 1, const std::string& id = "a") {
  return R"({"id":")" + id + R"(","target_token":)" + std::to_string(target) + R"(,"elements":[)" + elements + "]}";
}

const std::string kAudio = R"({"kind":"audio","features":[0.5,1]})";
const std::string kLast = R"({"kind":"text","token":3,"segment":"last"})";

ErrorKind kind_of(const std::string& text, std::optional<std::size_t> vocab = 8) {
  try {
    parse_dataset(text, vocab);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "accepted: " << text;
  return ErrorKind::Io;
}

TEST(Dataset, ParsesHeaderAndSamples) {
  const std::string text = R"({"kind":"header","d_audio":2,"silence_vector":[0.1,0.2],"description":"demo"})"
                           "\n" +
                           sample_line(kAudio + R"(,{"kind":"text","token":0,"segment":"object"},)" + kLast) + "\n";
  const Dataset ds = parse_dataset(text, 8);
  EXPECT_EQ(ds.header.d_audio, 2u);
  EXPECT_EQ(ds.header.description, "demo");
  EXPECT_EQ(ds.default_corruption().silence_vector, (Vector{0.1, 0.2}));
  ASSERT_EQ(ds.samples.size(), 1u);
  EXPECT_EQ(ds.samples[0].target, 1u);
  EXPECT_EQ(ds.samples[0].clean_sequence.size(), 3u);
  EXPECT_EQ(ds.samples[0].clean_sequence[1].segment, Segment::Object);
}

TEST(Dataset, DefaultSilenceIsZeros) {
  const Dataset ds = parse_dataset(kHeader + "\n" + sample_line(kLast));
  EXPECT_EQ(ds.default_corruption().silence_vector, (Vector{0, 0}));
}

TEST(Dataset, RejectsMalformedRecords) {
  EXPECT_EQ(kind_of(""), ErrorKind::Format);
  EXPECT_EQ(kind_of(sample_line(kLast)), ErrorKind::Format);  // no header
  EXPECT_EQ(kind_of(kHeader + "\n" + sample_line(R"({"kind":"video"},)" + kLast)), ErrorKind::Format);
  EXPECT_EQ(kind_of(kHeader + "\n" + sample_line(R"({"kind":"audio","features":[1]},)" + kLast)), ErrorKind::Format);
  EXPECT_EQ(kind_of(kHeader + "\n" + sample_line(kAudio)), ErrorKind::Format);  // missing last
  EXPECT_EQ(kind_of(kHeader + "\n" + sample_line(kLast + "," + kLast)), ErrorKind::Format);
  EXPECT_EQ(kind_of(kHeader + "\n" + sample_line(R"({"kind":"text","token":9,"segment":"last"})")), ErrorKind::Format);
  EXPECT_EQ(kind_of(kHeader + "\n" + sample_line(kLast, 8)), ErrorKind::Format);  // target >= V
  EXPECT_EQ(kind_of(kHeader + "\n" + sample_line(R"({"kind":"text","token":1,"segment":"middle"},)" + kLast)),
            ErrorKind::Format);
  EXPECT_EQ(kind_of(kHeader + "\n" + sample_line(kLast) + "\n" + sample_line(kLast)), ErrorKind::Format);  // dup id
  EXPECT_EQ(kind_of(kHeader + "\n{not json"), ErrorKind::Format);
}

TEST(Dataset, TokenRangeUncheckedWithoutVocab) {
  EXPECT_NO_THROW(parse_dataset(kHeader + "\n" + sample_line(R"({"kind":"text","token":99,"segment":"last"})"),
                                std::nullopt));
}

TEST(Dataset, NormalizedFormIsAFixedPoint) {
  // Loosely formatted input: reordered keys, blank line, integer features.
  const std::string loose = R"({"description":"x","d_audio":2,"kind":"header"})"
                            "\n\n"
                            R"({"elements":[{"features":[1,2],"kind":"audio"},{"segment":"last","token":3,"kind":"text"}],"target_token":4,"id":"z"})";
  const std::string once = format_dataset(parse_dataset(loose));
  EXPECT_EQ(format_dataset(parse_dataset(once)), once);
  EXPECT_EQ(parse_dataset(once), parse_dataset(loose));
}

TEST(Dataset, OracleDatasetRoundTripsByteIdentically) {
  const oracle::OracleSpec spec;
  const Dataset ds = oracle::to_dataset(spec, oracle::gen_dataset(spec, 16));
  const std::string text = format_dataset(ds);
  EXPECT_EQ(parse_dataset(text), ds);
  EXPECT_EQ(format_dataset(parse_dataset(text)), text);
  EXPECT_EQ(dataset_digest(ds).size(), 64u);
  EXPECT_EQ(dataset_digest(parse_dataset(text)), dataset_digest(ds));
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace ctrace
