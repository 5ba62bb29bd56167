#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ecgt {

struct ChannelSpec {
  std::string signal_format;  // "212" or "csv"
  double gain = 200.0;        // ADC units per mV
  int adc_zero = 0;           // ADC units subtracted before gain division
  std::string lead_name;
};

struct RecordHeader {
  std::string record_name;
  int n_channels = 0;
  double sampling_rate_hz = 0.0;
  int64_t n_samples = 0;
  std::vector<ChannelSpec> channels;
};

struct Annotation {
  int64_t sample_index = 0;
  char symbol = '?';
};

struct EcgRecord {
  RecordHeader header;
  std::vector<std::vector<int16_t>> channels;  // raw ADC units, one vector per channel
  std::vector<Annotation> annotations;         // sorted by sample_index

  // calibrated samples in mV for one channel
  std::vector<double> channel_mv(int ch) const;
  // index of the channel named `lead`, or -1
  int find_lead(const std::string& lead) const;
};

enum class BeatClass : uint8_t { N = 0, S = 1, V = 2, F = 3, Q = 4 };
inline constexpr int kNumClasses = 5;

const char* beat_class_name(BeatClass c);
// AAMI five-group mapping; nullopt for rhythm/artifact/non-beat symbols.
// N <- {N,L,R,e,j}  S <- {A,a,J,S}  V <- {V,E}  F <- {F}  Q <- {/,f,Q}
std::optional<BeatClass> map_symbol_to_class(char symbol);

// WFDB text header. First line: `name n_channels fs n_samples`; one line
// per channel after that. Accepts both the full WFDB signal line
// (`file fmt gain adcres adczero initval cksum bsize description`) and a
// reduced `fmt gain adc_zero lead` form. `#` lines are comments.
RecordHeader parse_header(const std::string& text);

// Format 212: each 3-byte group packs two 12-bit two's-complement samples,
//   s1 = b0 | ((b1 & 0x0F) << 8),  s2 = b2 | ((b1 >> 4) << 8),
// interleaved across the two channels.
std::vector<std::vector<int16_t>> decode_format212(const std::vector<uint8_t>& bytes,
                                                   const RecordHeader& header);

// MIT annotation stream: 16-bit LE words, code in the top 6 bits, time
// delta in the low 10; SKIP/NUM/SUB/CHN/AUX escapes consumed but not
// emitted; terminated by a zero word.
std::vector<Annotation> parse_annotations(const std::vector<uint8_t>& bytes);

// Annotation code table (subset of the MIT code space that carries a
// display symbol). Exposed for the round-trip tests and the CSV writer.
char annotation_code_to_symbol(int code);  // 0 if the code has no symbol
int annotation_symbol_to_code(char symbol);  // -1 if unknown

// CSV fallback: `<path>.csv` holds `sample_index,<lead>[,<lead>...]` in mV
// with optional `# key: value` metadata lines (record, fs_hz, gains,
// adc_zeros); `<path>.ann.csv` holds `sample_index,symbol`.
EcgRecord load_record_csv(const std::string& csv_path);
void write_record_csv(const EcgRecord& rec, const std::string& csv_path);

// Binary WFDB record: `<dir>/<name>.hea` + `.dat` (format 212) + `.atr`.
EcgRecord load_record_wfdb(const std::string& dir, const std::string& name);

// Either flavor; `path_or_name` may be `dir/name` (WFDB) or a `.csv` path.
EcgRecord load_record(const std::string& path_or_name);

// All record names in a directory (stems of .hea plus stems of non-.ann .csv).
std::vector<std::string> list_records(const std::string& dir);

}  // namespace ecgt
