#include "ecgt/signal_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace ecgt {

namespace {

// MIT annotation type codes that carry a display symbol (ecgcodes subset).
struct CodeSym {
  int code;
  char symbol;
};
constexpr CodeSym kCodeTable[] = {
    {1, 'N'},  {2, 'L'},  {3, 'R'},  {4, 'a'},  {5, 'V'},  {6, 'F'},  {7, 'J'},
    {8, 'A'},  {9, 'S'},  {10, 'E'}, {11, 'j'}, {12, '/'}, {13, 'Q'}, {14, '~'},
    {16, '|'}, {18, 's'}, {19, 'T'}, {20, '*'}, {21, 'D'}, {22, '"'}, {23, '='},
    {24, 'p'}, {25, 'B'}, {26, '^'}, {27, 't'}, {28, '+'}, {29, 'u'}, {30, '?'},
    {31, '!'}, {32, '['}, {33, ']'}, {34, 'e'}, {35, 'n'}, {36, '@'}, {37, 'x'},
    {38, 'f'}, {39, '('}, {40, ')'}, {41, 'r'},
};

constexpr int kSkip = 59, kNum = 60, kSub = 61, kChn = 62, kAux = 63;

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

// WFDB gain fields come as `200`, `200(1024)`, or `200(1024)/mV`.
void parse_gain_field(const std::string& field, double& gain, std::optional<int>& baseline) {
  size_t pos = 0;
  gain = std::stod(field, &pos);
  if (pos < field.size() && field[pos] == '(') {
    size_t close = field.find(')', pos);
    baseline = std::stoi(field.substr(pos + 1, close - pos - 1));
  }
}

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), {});
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int16_t sign_extend_12(int v) {
  return int16_t((v & 0x800) ? v - 0x1000 : v);
}

}  // namespace

const char* beat_class_name(BeatClass c) {
  static const char* names[] = {"N", "S", "V", "F", "Q"};
  return names[int(c)];
}

std::optional<BeatClass> map_symbol_to_class(char symbol) {
  switch (symbol) {
    case 'N':
    case 'L':
    case 'R':
    case 'e':
    case 'j':
      return BeatClass::N;
    case 'A':
    case 'a':
    case 'J':
    case 'S':
      return BeatClass::S;
    case 'V':
    case 'E':
      return BeatClass::V;
    case 'F':
      return BeatClass::F;
    case '/':
    case 'f':
    case 'Q':
      return BeatClass::Q;
    default:
      return std::nullopt;
  }
}

char annotation_code_to_symbol(int code) {
  for (const auto& cs : kCodeTable)
    if (cs.code == code) return cs.symbol;
  return 0;
}

int annotation_symbol_to_code(char symbol) {
  for (const auto& cs : kCodeTable)
    if (cs.symbol == symbol) return cs.code;
  return -1;
}

RecordHeader parse_header(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  RecordHeader h;
  bool have_first = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto toks = split_ws(line);
    if (!have_first) {
      if (toks.size() < 4) throw std::runtime_error("header: malformed record line: " + line);
      // record name may carry a segment count suffix `name/n`
      h.record_name = toks[0].substr(0, toks[0].find('/'));
      h.n_channels = std::stoi(toks[1]);
      h.sampling_rate_hz = std::stod(toks[2]);  // stod stops at `/` in `360/360(0)`
      h.n_samples = std::stoll(toks[3]);
      if (h.n_channels == 0) throw std::runtime_error("header: zero channels");
      if (h.n_channels < 0) throw std::runtime_error("header: negative channel count");
      if (h.sampling_rate_hz <= 0) throw std::runtime_error("header: non-positive sampling rate");
      if (h.n_samples < 0) throw std::runtime_error("header: negative sample count");
      have_first = true;
      continue;
    }
    if (int(h.channels.size()) == h.n_channels) break;  // trailing info lines
    ChannelSpec ch;
    // Full WFDB signal line starts with a file name; the reduced form
    // starts directly with the format token.
    size_t base = (toks[0].find('.') != std::string::npos) ? 1 : 0;
    if (toks.size() < base + 2) throw std::runtime_error("header: malformed signal line: " + line);
    ch.signal_format = toks[base];
    if (ch.signal_format != "212" && ch.signal_format != "csv")
      throw std::runtime_error("header: unsupported format " + ch.signal_format);
    std::optional<int> baseline;
    parse_gain_field(toks[base + 1], ch.gain, baseline);
    if (ch.gain <= 0) throw std::runtime_error("header: non-positive gain");
    if (base == 1) {
      // file fmt gain adcres adczero initval cksum bsize description...
      if (toks.size() > base + 3) ch.adc_zero = std::stoi(toks[base + 3]);
      if (toks.size() > base + 7) {
        std::string lead;
        for (size_t i = base + 7; i < toks.size(); ++i) {
          if (!lead.empty()) lead += ' ';
          lead += toks[i];
        }
        ch.lead_name = lead;
      }
    } else {
      if (toks.size() > 2) ch.adc_zero = std::stoi(toks[2]);
      if (toks.size() > 3) {
        std::string lead;
        for (size_t i = 3; i < toks.size(); ++i) {
          if (!lead.empty()) lead += ' ';
          lead += toks[i];
        }
        ch.lead_name = lead;
      }
    }
    if (baseline) ch.adc_zero = *baseline;
    h.channels.push_back(std::move(ch));
  }
  if (!have_first) throw std::runtime_error("header: empty input");
  if (int(h.channels.size()) != h.n_channels)
    throw std::runtime_error("header: expected " + std::to_string(h.n_channels) +
                             " signal lines, found " + std::to_string(h.channels.size()));
  return h;
}

std::vector<std::vector<int16_t>> decode_format212(const std::vector<uint8_t>& bytes,
                                                   const RecordHeader& header) {
  if (header.n_channels != 2)
    throw std::runtime_error("format 212: expected 2 channels, got " +
                             std::to_string(header.n_channels));
  const int64_t n = header.n_samples;
  if (int64_t(bytes.size()) < 3 * n)
    throw std::runtime_error("format 212: truncated stream (" + std::to_string(bytes.size()) +
                             " bytes for " + std::to_string(n) + " sample pairs)");
  std::vector<std::vector<int16_t>> out(2);
  out[0].resize(size_t(n));
  out[1].resize(size_t(n));
  for (int64_t i = 0; i < n; ++i) {
    const uint8_t b0 = bytes[size_t(3 * i)];
    const uint8_t b1 = bytes[size_t(3 * i + 1)];
    const uint8_t b2 = bytes[size_t(3 * i + 2)];
    out[0][size_t(i)] = sign_extend_12(b0 | ((b1 & 0x0F) << 8));
    out[1][size_t(i)] = sign_extend_12(b2 | ((b1 >> 4) << 8));
  }
  return out;
}

std::vector<Annotation> parse_annotations(const std::vector<uint8_t>& bytes) {
  std::vector<Annotation> out;
  int64_t time = 0;
  size_t p = 0;
  auto read_word = [&]() -> uint16_t {
    if (p + 2 > bytes.size()) throw std::runtime_error("annotations: truncated stream");
    uint16_t w = uint16_t(bytes[p] | (bytes[p + 1] << 8));
    p += 2;
    return w;
  };
  while (true) {
    const uint16_t w = read_word();
    if (w == 0) break;  // terminator
    const int code = w >> 10;
    const int delta = w & 0x3FF;
    switch (code) {
      case kSkip: {
        // four-byte interval, high word first
        const uint16_t hi = read_word();
        const uint16_t lo = read_word();
        time += int32_t((uint32_t(hi) << 16) | lo);
        break;
      }
      case kAux: {
        size_t skip = size_t(delta) + (delta & 1);  // padded to even length
        if (p + skip > bytes.size()) throw std::runtime_error("annotations: truncated aux field");
        p += skip;
        break;
      }
      case kNum:
      case kSub:
      case kChn:
        break;  // bookkeeping, no time advance
      default: {
        time += delta;
        if (time < 0 || time > int64_t(1) << 40)
          throw std::runtime_error("annotations: cumulative index out of range");
        const char sym = annotation_code_to_symbol(code);
        if (sym != 0) out.push_back({time, sym});
        break;
      }
    }
  }
  return out;
}

std::vector<double> EcgRecord::channel_mv(int ch) const {
  const auto& spec = header.channels.at(size_t(ch));
  const auto& raw = channels.at(size_t(ch));
  std::vector<double> mv(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) mv[i] = (double(raw[i]) - spec.adc_zero) / spec.gain;
  return mv;
}

int EcgRecord::find_lead(const std::string& lead) const {
  for (size_t i = 0; i < header.channels.size(); ++i)
    if (header.channels[i].lead_name == lead) return int(i);
  return -1;
}

EcgRecord load_record_wfdb(const std::string& dir, const std::string& name) {
  const std::string base = (fs::path(dir) / name).string();
  EcgRecord rec;
  rec.header = parse_header(read_text(base + ".hea"));
  rec.channels = decode_format212(read_bytes(base + ".dat"), rec.header);
  const std::string atr = base + ".atr";
  if (fs::exists(atr)) rec.annotations = parse_annotations(read_bytes(atr));
  for (size_t i = 1; i < rec.annotations.size(); ++i)
    if (rec.annotations[i].sample_index <= rec.annotations[i - 1].sample_index)
      throw std::runtime_error(name + ": annotation indices not strictly increasing");
  if (!rec.annotations.empty() && rec.annotations.back().sample_index >= rec.header.n_samples)
    throw std::runtime_error(name + ": annotation index beyond signal end");
  return rec;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  return split_csv_line(s);
}

}  // namespace

EcgRecord load_record_csv(const std::string& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw std::runtime_error("cannot open " + csv_path);
  EcgRecord rec;
  rec.header.record_name = fs::path(csv_path).stem().string();
  rec.header.sampling_rate_hz = 360.0;
  std::map<std::string, std::string> meta;
  std::string line;
  std::vector<std::string> header_cols;
  // metadata comments then the column header
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      size_t colon = line.find(':');
      if (colon != std::string::npos) {
        std::string key = line.substr(1, colon - 1);
        std::string val = line.substr(colon + 1);
        auto trim = [](std::string& s) {
          s.erase(0, s.find_first_not_of(" \t"));
          s.erase(s.find_last_not_of(" \t") + 1);
        };
        trim(key);
        trim(val);
        meta[key] = val;
      }
      continue;
    }
    header_cols = split_csv_line(line);
    break;
  }
  if (header_cols.size() < 2 || header_cols[0] != "sample_index")
    throw std::runtime_error(csv_path + ": expected header `sample_index,<lead>...`");
  const int n_ch = int(header_cols.size()) - 1;
  rec.header.n_channels = n_ch;
  rec.header.channels.resize(size_t(n_ch));
  for (int c = 0; c < n_ch; ++c) {
    rec.header.channels[size_t(c)].signal_format = "csv";
    rec.header.channels[size_t(c)].lead_name = header_cols[size_t(c) + 1];
  }
  if (meta.count("record")) rec.header.record_name = meta["record"];
  if (meta.count("fs_hz")) rec.header.sampling_rate_hz = std::stod(meta["fs_hz"]);
  if (meta.count("gains")) {
    auto g = split_list(meta["gains"]);
    for (int c = 0; c < n_ch && c < int(g.size()); ++c)
      rec.header.channels[size_t(c)].gain = std::stod(g[size_t(c)]);
  }
  if (meta.count("adc_zeros")) {
    auto z = split_list(meta["adc_zeros"]);
    for (int c = 0; c < n_ch && c < int(z.size()); ++c)
      rec.header.channels[size_t(c)].adc_zero = std::stoi(z[size_t(c)]);
  }

  rec.channels.assign(size_t(n_ch), {});
  int64_t prev_index = -1;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_csv_line(line);
    if (int(cols.size()) != n_ch + 1)
      throw std::runtime_error(csv_path + ": row with " + std::to_string(cols.size()) +
                               " columns, expected " + std::to_string(n_ch + 1));
    const int64_t idx = std::stoll(cols[0]);
    if (idx <= prev_index)
      throw std::runtime_error(csv_path + ": sample_index not strictly increasing at " +
                               std::to_string(idx));
    prev_index = idx;
    for (int c = 0; c < n_ch; ++c) {
      const auto& spec = rec.header.channels[size_t(c)];
      const double mv = std::stod(cols[size_t(c) + 1]);
      const double adc = std::round(mv * spec.gain) + spec.adc_zero;
      if (adc < -32768 || adc > 32767)
        throw std::runtime_error(csv_path + ": sample out of 16-bit range");
      rec.channels[size_t(c)].push_back(int16_t(adc));
    }
  }
  rec.header.n_samples = int64_t(rec.channels[0].size());

  const std::string ann_path =
      (fs::path(csv_path).parent_path() / (fs::path(csv_path).stem().string() + ".ann.csv"))
          .string();
  if (fs::exists(ann_path)) {
    std::ifstream af(ann_path);
    std::string aline;
    bool first = true;
    while (std::getline(af, aline)) {
      if (!aline.empty() && aline.back() == '\r') aline.pop_back();
      if (aline.empty() || aline[0] == '#') continue;
      if (first && aline.rfind("sample_index", 0) == 0) {
        first = false;
        continue;
      }
      first = false;
      auto cols = split_csv_line(aline);
      if (cols.size() < 2 || cols[1].empty())
        throw std::runtime_error(ann_path + ": malformed row `" + aline + "`");
      Annotation a{std::stoll(cols[0]), cols[1][0]};
      if (!rec.annotations.empty() && a.sample_index <= rec.annotations.back().sample_index)
        throw std::runtime_error(ann_path + ": annotation indices not strictly increasing");
      if (a.sample_index >= rec.header.n_samples)
        throw std::runtime_error(ann_path + ": annotation index beyond signal end");
      rec.annotations.push_back(a);
    }
  }
  return rec;
}

void write_record_csv(const EcgRecord& rec, const std::string& csv_path) {
  std::ofstream f(csv_path);
  if (!f) throw std::runtime_error("cannot write " + csv_path);
  f << "# record: " << rec.header.record_name << "\n";
  f << "# fs_hz: " << rec.header.sampling_rate_hz << "\n";
  f << "# gains:";
  for (size_t c = 0; c < rec.header.channels.size(); ++c)
    f << (c ? "," : " ") << rec.header.channels[c].gain;
  f << "\n# adc_zeros:";
  for (size_t c = 0; c < rec.header.channels.size(); ++c)
    f << (c ? "," : " ") << rec.header.channels[c].adc_zero;
  f << "\nsample_index";
  for (const auto& ch : rec.header.channels) f << "," << ch.lead_name;
  f << "\n";
  char buf[32];
  for (int64_t i = 0; i < rec.header.n_samples; ++i) {
    f << i;
    for (size_t c = 0; c < rec.channels.size(); ++c) {
      const auto& spec = rec.header.channels[c];
      const double mv = (double(rec.channels[c][size_t(i)]) - spec.adc_zero) / spec.gain;
      std::snprintf(buf, sizeof buf, "%.6f", mv);
      f << ',' << buf;
    }
    f << "\n";
  }
  if (!rec.annotations.empty()) {
    const std::string ann_path =
        (fs::path(csv_path).parent_path() / (fs::path(csv_path).stem().string() + ".ann.csv"))
            .string();
    std::ofstream af(ann_path);
    if (!af) throw std::runtime_error("cannot write " + ann_path);
    af << "sample_index,symbol\n";
    for (const auto& a : rec.annotations) af << a.sample_index << "," << a.symbol << "\n";
  }
}

EcgRecord load_record(const std::string& path_or_name) {
  if (path_or_name.size() > 4 && path_or_name.substr(path_or_name.size() - 4) == ".csv")
    return load_record_csv(path_or_name);
  fs::path p(path_or_name);
  if (fs::exists(p.string() + ".hea"))
    return load_record_wfdb(p.parent_path().string(), p.filename().string());
  if (fs::exists(p.string() + ".csv")) return load_record_csv(p.string() + ".csv");
  throw std::runtime_error("no record found at " + path_or_name);
}

std::vector<std::string> list_records(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto p = e.path();
    if (p.extension() == ".hea") names.push_back(p.stem().string());
    if (p.extension() == ".csv") {
      const std::string stem = p.stem().string();
      if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".ann") continue;
      names.push_back(stem);
    }
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

}  // namespace ecgt
