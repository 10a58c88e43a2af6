#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "clab/io.hpp"
#include "oracles.hpp"

using clab::ErrorCode;
using clab::Matrix;

namespace {

clab::Error decode_error(std::string_view bytes) {
  try {
    clab::decode_dump(bytes);
  } catch (const clab::Error& e) {
    return e;
  }
  ADD_FAILURE() << "decode_dump accepted malformed bytes";
  return clab::Error(ErrorCode::IoError, "none");
}

clab::EmbeddingDump random_dump(bool labelled) {
  clab::EmbeddingDump d{oracle::random_unit_rows(100, 16, 4), std::nullopt};
  if (labelled) {
    d.labels = clab::Labels(100);
    for (std::size_t i = 0; i < 100; ++i) (*d.labels)[i] = static_cast<std::uint32_t>((i * 7919u) % 13u);
  }
  return d;
}

clab::ReportRow sample_row(double tau) {
  clab::ReportRow r;
  r.tau = tau;
  r.variant = clab::Variant::HardSimple;
  r.alpha = 0.0819;
  r.snapshot.step = 2000;
  r.snapshot.mean_loss = 4.1234567890123456;
  r.snapshot.uniformity = -3.7000000000000002;
  r.snapshot.tolerance = 1.0 / 3.0;
  r.snapshot.knn_purity = 0.8125;
  r.snapshot.mean_positive_similarity = std::nextafter(0.7, 1.0);
  for (std::size_t k = 0; k < clab::kTopNegatives; ++k) r.snapshot.top_negatives.push_back(0.6 - 0.01 * k);
  return r;
}

}  // namespace

TEST(Dump, RoundTripIsBitwise) {
  for (bool labelled : {true, false}) {
    const auto d = random_dump(labelled);
    const std::string bytes = clab::encode_dump(d);
    EXPECT_EQ(bytes.size(), 22u + 8u * 1600u + (labelled ? 400u : 0u));
    const auto back = clab::decode_dump(bytes);
    EXPECT_EQ(std::memcmp(back.dump.rows.values().data(), d.rows.values().data(), 1600 * sizeof(double)), 0);
    EXPECT_EQ(back.dump.labels, d.labels);
    EXPECT_TRUE(back.off_unit_rows.empty());
    EXPECT_EQ(clab::encode_dump(back.dump), bytes);
  }
}

TEST(Dump, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "clab_io_roundtrip.clab").string();
  const auto d = random_dump(true);
  clab::write_dump(path, d);
  EXPECT_EQ(clab::read_dump(path).dump.rows, d.rows);
  std::filesystem::remove(path);
}

TEST(Dump, GoldenFixtureReads) {
  const auto r = clab::read_dump(std::string(CLAB_TEST_DATA_DIR) + "/golden.clab");
  EXPECT_EQ(r.dump.rows, (Matrix{{1.0, 0.0}, {0.0, -1.0}, {0.6, 0.8}}));
  EXPECT_EQ(r.dump.labels, (clab::Labels{0, 1, 7}));
  EXPECT_TRUE(r.off_unit_rows.empty());
  EXPECT_EQ(clab::encode_dump(r.dump), clab::read_file(std::string(CLAB_TEST_DATA_DIR) + "/golden.clab"));
}

TEST(Dump, HeaderLayoutIsLittleEndian) {
  const std::string b = clab::encode_dump({Matrix{{1.0, 0.0}, {0.0, 1.0}}, std::nullopt});
  EXPECT_EQ(b.substr(0, 5), "CLAB1");
  EXPECT_EQ(static_cast<unsigned char>(b[5]), 2);
  EXPECT_EQ(static_cast<unsigned char>(b[13]), 2);
  EXPECT_EQ(b[21], 0);
  EXPECT_EQ(static_cast<unsigned char>(b[22 + 7]), 0x3f);  // 1.0 = 0x3ff0000000000000
  EXPECT_EQ(static_cast<unsigned char>(b[22 + 6]), 0xf0);
}

TEST(Dump, TruncatedPayloadReportsOffset) {
  const std::string full = clab::encode_dump(random_dump(true));
  const std::string cut = full.substr(0, full.size() - 3);
  const auto e = decode_error(cut);
  EXPECT_EQ(e.code(), ErrorCode::TruncatedPayload);
  EXPECT_EQ(e.index(), std::optional<std::size_t>(cut.size()));
  EXPECT_EQ(decode_error(full.substr(0, 100)).code(), ErrorCode::TruncatedPayload);
}

TEST(Dump, MalformedHeaders) {
  std::string full = clab::encode_dump(random_dump(false));
  EXPECT_EQ(decode_error("").code(), ErrorCode::CorruptHeader);
  EXPECT_EQ(decode_error("NOPE1").code(), ErrorCode::CorruptHeader);
  EXPECT_EQ(decode_error(full.substr(0, 12)).code(), ErrorCode::CorruptHeader);
  std::string v2 = full;
  v2[4] = '2';
  EXPECT_EQ(decode_error(v2).code(), ErrorCode::UnsupportedVersion);
  std::string flag = full;
  flag[21] = 5;
  EXPECT_EQ(decode_error(flag).code(), ErrorCode::CorruptHeader);
  std::string zero = full;
  std::fill(zero.begin() + 5, zero.begin() + 13, '\0');
  EXPECT_EQ(decode_error(zero).code(), ErrorCode::CorruptHeader);
  EXPECT_EQ(decode_error(full + "x").code(), ErrorCode::CorruptHeader);
}

TEST(Dump, OffUnitRowsWarnButLoad) {
  clab::EmbeddingDump d{Matrix{{1.0, 0.0}, {0.0, 2.0}, {0.6, 0.8 + 1e-5}}, std::nullopt};
  const auto r = clab::decode_dump(clab::encode_dump(d));
  EXPECT_EQ(r.off_unit_rows, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(r.dump.rows, d.rows);
}

TEST(Dump, MissingFileIsIoError) {
  try {
    clab::read_dump("/nonexistent/dir/x.clab");
    FAIL();
  } catch (const clab::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
  EXPECT_THROW(clab::write_file("/nonexistent/dir/x.clab", "x"), clab::Error);
}

TEST(Report, ColumnsAndSingleRow) {
  const std::string csv = clab::render_report({sample_row(0.2)}, clab::ReportFormat::Csv);
  std::string header = "tau,variant,alpha,step,mean_loss,uniformity,neg_uniformity,tolerance,knn_purity,mean_pos_sim";
  for (int k = 1; k <= 10; ++k) header += ",top" + std::to_string(k) + "_neg_sim";
  EXPECT_EQ(csv.substr(0, csv.find('\n')), header);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_NE(csv.find(",hard-simple,"), std::string::npos);
  EXPECT_THROW(clab::render_report({}, clab::ReportFormat::Csv), clab::Error);
}

TEST(Report, NegUniformityIsTextualNegation) {
  const std::string csv = clab::render_report({sample_row(0.2)}, clab::ReportFormat::Csv);
  const std::string line = csv.substr(csv.find('\n') + 1);
  std::vector<std::string> f;
  std::size_t start = 0;
  for (std::size_t pos; (pos = line.find_first_of(",\n", start)) != std::string::npos; start = pos + 1)
    f.push_back(line.substr(start, pos - start));
  EXPECT_EQ(f[5], "-" + f[6]);
  EXPECT_EQ(f[5], "-3.7000000000000002");
}

TEST(Report, SeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -3.7000000000000002, 1e-300, 123456789.123}) {
    EXPECT_EQ(clab::parse_double(clab::format_double(v)), v);
  }
  EXPECT_EQ(clab::format_double(0.1), "0.10000000000000001");
}

TEST(Report, CsvAndJsonAgree) {
  const std::vector<clab::ReportRow> rows = {sample_row(0.07), sample_row(1.0)};
  const auto from_csv = clab::parse_report_csv(clab::render_report(rows, clab::ReportFormat::Csv));
  const auto j = nlohmann::json::parse(clab::render_report(rows, clab::ReportFormat::Json));
  ASSERT_EQ(from_csv.size(), 2u);
  ASSERT_EQ(j.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& c = from_csv[i];
    const auto& o = j[i];
    EXPECT_EQ(c.tau, rows[i].tau);
    EXPECT_EQ(o["tau"].get<double>(), rows[i].tau);
    EXPECT_EQ(o["variant"].get<std::string>(), "hard-simple");
    EXPECT_EQ(c.variant, clab::Variant::HardSimple);
    EXPECT_EQ(o["alpha"].get<double>(), c.alpha);
    EXPECT_EQ(o["step"].get<std::size_t>(), c.snapshot.step);
    EXPECT_EQ(o["mean_loss"].get<double>(), c.snapshot.mean_loss);
    EXPECT_EQ(o["uniformity"].get<double>(), c.snapshot.uniformity);
    EXPECT_EQ(o["neg_uniformity"].get<double>(), -c.snapshot.uniformity);
    EXPECT_EQ(o["tolerance"].get<double>(), c.snapshot.tolerance);
    EXPECT_EQ(o["knn_purity"].get<double>(), c.snapshot.knn_purity);
    EXPECT_EQ(o["mean_pos_sim"].get<double>(), c.snapshot.mean_positive_similarity);
    for (std::size_t k = 0; k < clab::kTopNegatives; ++k)
      EXPECT_EQ(o["top" + std::to_string(k + 1) + "_neg_sim"].get<double>(), c.snapshot.top_negatives[k]);
    EXPECT_EQ(c.snapshot.mean_positive_similarity, rows[i].snapshot.mean_positive_similarity);
  }
}
