#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ecgt/rng.hpp"
#include "ecgt/signal_io.hpp"
#include "helpers/oracles.hpp"

using namespace ecgt;

namespace {

// record-100 style header as published
const char* kRecord100Header =
    "100 2 360 650000 0:0:0 0/0/0\n"
    "100.dat 212 200 11 1024 995 -22131 0 MLII\n"
    "100.dat 212 200 11 1024 1011 20052 0 V5\n"
    "# 69 M 1085 1629 x1\n";

std::filesystem::path tmp_dir() {
  auto p = std::filesystem::temp_directory_path() / "ecgt_sigio_tests";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("parse_header reads the published record-100 layout") {
  RecordHeader h = parse_header(kRecord100Header);
  CHECK(h.record_name == "100");
  CHECK(h.n_channels == 2);
  CHECK(h.sampling_rate_hz == doctest::Approx(360.0));
  CHECK(h.n_samples == 650000);
  REQUIRE(h.channels.size() == 2);
  CHECK(h.channels[0].signal_format == "212");
  CHECK(h.channels[0].gain == doctest::Approx(200.0));
  CHECK(h.channels[0].adc_zero == 1024);
  CHECK(h.channels[0].lead_name == "MLII");
  CHECK(h.channels[1].lead_name == "V5");
}

TEST_CASE("parse_header reduced form and errors") {
  RecordHeader h = parse_header("r1 1 250 1000\n212 100 0 LeadX\n");
  CHECK(h.channels[0].gain == doctest::Approx(100.0));
  CHECK(h.channels[0].lead_name == "LeadX");

  CHECK_THROWS_WITH_AS(parse_header("x 0 360 100\n"), doctest::Contains("zero channels"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_header("x 1 360 100\nx.dat 16 200 11 0 0 0 0 L\n"),
                       doctest::Contains("unsupported format"), std::runtime_error);
  CHECK_THROWS(parse_header("x 1\n"));
  CHECK_THROWS(parse_header(""));
}

TEST_CASE("decode_format212 worked examples") {
  RecordHeader h;
  h.n_channels = 2;
  h.sampling_rate_hz = 360;
  h.n_samples = 1;
  h.channels.resize(2);

  auto out = decode_format212({0x00, 0x00, 0x00}, h);
  CHECK(out[0][0] == 0);
  CHECK(out[1][0] == 0);

  out = decode_format212({0xE8, 0x03, 0x7D}, h);
  CHECK(out[0][0] == 1000);
  CHECK(out[1][0] == 125);

  out = decode_format212({0xFF, 0x0F, 0x00}, h);
  CHECK(out[0][0] == -1);
  CHECK(out[1][0] == 0);

  h.n_samples = 2;
  CHECK_THROWS_WITH_AS(decode_format212({0x00, 0x00, 0x00}, h),
                       doctest::Contains("truncated"), std::runtime_error);
  h.n_samples = 1;
  h.n_channels = 1;
  h.channels.resize(1);
  CHECK_THROWS(decode_format212({0x00, 0x00, 0x00}, h));
}

TEST_CASE("format-212 encode/decode round trip (independent encoder oracle)") {
  RecordHeader h;
  h.n_channels = 2;
  h.sampling_rate_hz = 360;
  h.channels.resize(2);

  Rng rng(0x212);
  const int cases = 200000;
  std::vector<uint8_t> bytes;
  std::vector<int16_t> want1, want2;
  bytes.reserve(size_t(cases) * 3);
  for (int i = 0; i < cases; ++i) {
    const int s1 = int(rng.below(4096)) - 2048;
    const int s2 = int(rng.below(4096)) - 2048;
    oracle::encode212_pair(s1, s2, bytes);
    want1.push_back(int16_t(s1));
    want2.push_back(int16_t(s2));
  }
  h.n_samples = cases;
  const auto out = decode_format212(bytes, h);
  for (int i = 0; i < cases; ++i) {
    REQUIRE(out[0][size_t(i)] == want1[size_t(i)]);
    REQUIRE(out[1][size_t(i)] == want2[size_t(i)]);
  }
}

TEST_CASE("annotation parser worked examples") {
  // empty stream: just the terminator
  std::vector<uint8_t> bytes;
  oracle::put_word(bytes, 0);
  CHECK(parse_annotations(bytes).empty());

  // deltas 10 and 5 with beat codes
  bytes.clear();
  oracle::encode_annotation({{1, 10}, {5, 5}}, bytes);
  auto anns = parse_annotations(bytes);
  REQUIRE(anns.size() == 2);
  CHECK(anns[0].sample_index == 10);
  CHECK(anns[0].symbol == 'N');
  CHECK(anns[1].sample_index == 15);
  CHECK(anns[1].symbol == 'V');

  // SKIP escape: the 4-byte interval counts toward the next index
  bytes.clear();
  oracle::encode_annotation({{1, 100000}}, bytes);
  anns = parse_annotations(bytes);
  REQUIRE(anns.size() == 1);
  CHECK(anns[0].sample_index == 100000);

  // truncated stream
  bytes.clear();
  oracle::put_word(bytes, uint16_t((1 << 10) | 5));
  CHECK_THROWS_WITH_AS(parse_annotations(bytes), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("annotation parser consumes NUM/SUB/CHN/AUX without emitting") {
  std::vector<uint8_t> bytes;
  oracle::put_word(bytes, uint16_t((1 << 10) | 7));   // beat at 7
  oracle::put_word(bytes, uint16_t((61 << 10) | 3));  // SUB
  oracle::put_word(bytes, uint16_t((60 << 10) | 2));  // NUM
  oracle::put_word(bytes, uint16_t((62 << 10) | 1));  // CHN
  oracle::put_word(bytes, uint16_t((63 << 10) | 3));  // AUX, 3 bytes + pad
  bytes.push_back('a');
  bytes.push_back('b');
  bytes.push_back('c');
  bytes.push_back(0);                                  // pad to even
  oracle::put_word(bytes, uint16_t((5 << 10) | 9));   // beat at 16
  oracle::put_word(bytes, 0);
  auto anns = parse_annotations(bytes);
  REQUIRE(anns.size() == 2);
  CHECK(anns[0].sample_index == 7);
  CHECK(anns[1].sample_index == 16);
  CHECK(anns[1].symbol == 'V');
}

TEST_CASE("annotation round trip: random streams, indices strictly increasing") {
  Rng rng(0xA77);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<oracle::AnnEvent> events;
    std::vector<int64_t> want_idx;
    std::vector<char> want_sym;
    int64_t t = 0;
    const int n = 1 + int(rng.below(60));
    for (int i = 0; i < n; ++i) {
      // mix of beat codes and symbol-bearing non-beat codes
      static const int codes[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 28, 14};
      const int code = codes[rng.below(std::size(codes))];
      const int64_t delta = 1 + int64_t(rng.below(5000));
      events.push_back({code, delta});
      t += delta;
      want_idx.push_back(t);
      want_sym.push_back(annotation_code_to_symbol(code));
    }
    std::vector<uint8_t> bytes;
    oracle::encode_annotation(events, bytes);
    const auto anns = parse_annotations(bytes);
    REQUIRE(anns.size() == want_idx.size());
    for (size_t i = 0; i < anns.size(); ++i) {
      REQUIRE(anns[i].sample_index == want_idx[i]);
      REQUIRE(anns[i].symbol == want_sym[i]);
      if (i > 0) REQUIRE(anns[i].sample_index > anns[i - 1].sample_index);
    }
  }
}

TEST_CASE("AAMI symbol mapping") {
  CHECK(map_symbol_to_class('V') == BeatClass::V);
  CHECK(map_symbol_to_class('A') == BeatClass::S);
  CHECK(map_symbol_to_class('N') == BeatClass::N);
  CHECK(map_symbol_to_class('L') == BeatClass::N);
  CHECK(map_symbol_to_class('R') == BeatClass::N);
  CHECK(map_symbol_to_class('e') == BeatClass::N);
  CHECK(map_symbol_to_class('j') == BeatClass::N);
  CHECK(map_symbol_to_class('a') == BeatClass::S);
  CHECK(map_symbol_to_class('J') == BeatClass::S);
  CHECK(map_symbol_to_class('S') == BeatClass::S);
  CHECK(map_symbol_to_class('E') == BeatClass::V);
  CHECK(map_symbol_to_class('F') == BeatClass::F);
  CHECK(map_symbol_to_class('/') == BeatClass::Q);
  CHECK(map_symbol_to_class('f') == BeatClass::Q);
  CHECK(map_symbol_to_class('Q') == BeatClass::Q);
  // non-beat marks
  CHECK(!map_symbol_to_class('+'));
  CHECK(!map_symbol_to_class('~'));
  CHECK(!map_symbol_to_class('|'));
  CHECK(!map_symbol_to_class('"'));
  CHECK(!map_symbol_to_class('?'));
}

TEST_CASE("CSV fallback: zeros, round trip, duplicate index error") {
  const auto dir = tmp_dir();
  {
    std::ofstream f(dir / "z1.csv");
    f << "sample_index,MLII\n0,0.0\n1,0.0\n2,0.0\n";
  }
  EcgRecord rec = load_record_csv((dir / "z1.csv").string());
  CHECK(rec.header.n_samples == 3);
  CHECK(rec.channels[0][0] == 0);
  CHECK(rec.channels[0][2] == 0);
  CHECK(rec.header.channels[0].lead_name == "MLII");

  {
    std::ofstream f(dir / "dup.csv");
    f << "sample_index,MLII\n0,0.1\n0,0.2\n";
  }
  CHECK_THROWS_WITH_AS(load_record_csv((dir / "dup.csv").string()),
                       doctest::Contains("strictly increasing"), std::runtime_error);

  // export -> import round trip is bit identical on the ADC integers
  EcgRecord orig;
  orig.header.record_name = "rt";
  orig.header.n_channels = 1;
  orig.header.sampling_rate_hz = 360;
  ChannelSpec ch;
  ch.signal_format = "csv";
  ch.gain = 200;
  ch.adc_zero = 17;
  ch.lead_name = "MLII";
  orig.header.channels.push_back(ch);
  orig.channels.resize(1);
  Rng rng(0xC5F);
  for (int i = 0; i < 500; ++i)
    orig.channels[0].push_back(int16_t(int(rng.below(4096)) - 2048));
  orig.header.n_samples = 500;
  orig.annotations = {{10, 'N'}, {120, 'V'}, {200, '+'}, {340, 'A'}};
  write_record_csv(orig, (dir / "rt.csv").string());
  EcgRecord back = load_record_csv((dir / "rt.csv").string());
  REQUIRE(back.header.n_samples == orig.header.n_samples);
  CHECK(back.header.channels[0].adc_zero == 17);
  for (int i = 0; i < 500; ++i)
    REQUIRE(back.channels[0][size_t(i)] == orig.channels[0][size_t(i)]);
  REQUIRE(back.annotations.size() == orig.annotations.size());
  for (size_t i = 0; i < back.annotations.size(); ++i) {
    CHECK(back.annotations[i].sample_index == orig.annotations[i].sample_index);
    CHECK(back.annotations[i].symbol == orig.annotations[i].symbol);
  }
}

TEST_CASE("load_record_wfdb assembles header, signal, annotations") {
  const auto dir = tmp_dir();
  {
    std::ofstream f(dir / "w1.hea");
    f << "w1 2 360 4\nw1.dat 212 200 11 0 0 0 0 MLII\nw1.dat 212 200 11 0 0 0 0 V5\n";
  }
  {
    std::vector<uint8_t> bytes;
    oracle::encode212_pair(100, -100, bytes);
    oracle::encode212_pair(200, -200, bytes);
    oracle::encode212_pair(300, -300, bytes);
    oracle::encode212_pair(400, -400, bytes);
    std::ofstream f(dir / "w1.dat", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size()));
  }
  {
    std::vector<uint8_t> bytes;
    oracle::encode_annotation({{1, 1}, {5, 2}}, bytes);
    std::ofstream f(dir / "w1.atr", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size()));
  }
  EcgRecord rec = load_record_wfdb(dir.string(), "w1");
  CHECK(rec.channels[0][3] == 400);
  CHECK(rec.channels[1][3] == -400);
  REQUIRE(rec.annotations.size() == 2);
  CHECK(rec.annotations[1].sample_index == 3);
  CHECK(rec.find_lead("MLII") == 0);
  CHECK(rec.find_lead("V5") == 1);
  CHECK(rec.find_lead("V1") == -1);
  // calibration: ADC -> mV via gain
  auto mv = rec.channel_mv(0);
  CHECK(mv[0] == doctest::Approx(0.5));
}
