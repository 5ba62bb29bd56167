#include "ecgt/container.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ecgt {

using nlohmann::json;

namespace {

constexpr char kDatasetMagic[9] = "ECGTDS1\n";
constexpr char kCheckpointMagic[9] = "ECGTCK1\n";
constexpr char kQuantMagic[9] = "ECGTQK1\n";

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) out.push_back(char((bits >> (8 * i)) & 0xFF));
}

void put_i32(std::string& out, int32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((uint32_t(v) >> (8 * i)) & 0xFF));
}

void put_i64(std::string& out, int64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((uint64_t(v) >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    data_.assign(std::istreambuf_iterator<char>(f), {});
  }
  void expect_magic(const char* magic) {
    if (data_.size() < 8 || std::memcmp(data_.data(), magic, 8) != 0)
      throw std::runtime_error(path_ + ": wrong container magic");
    pos_ = 8;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(data_[pos_ + size_t(i)])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(data_.begin() + long(pos_), data_.begin() + long(pos_ + n));
    pos_ += n;
    return s;
  }
  float f32_at(size_t off) const {
    check_range(off, 4);
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i)
      bits |= uint32_t(uint8_t(data_[payload_ + off + size_t(i)])) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  int8_t i8_at(size_t off) const {
    check_range(off, 1);
    return int8_t(data_[payload_ + off]);
  }
  int32_t i32_at(size_t off) const {
    check_range(off, 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= uint32_t(uint8_t(data_[payload_ + off + size_t(i)])) << (8 * i);
    return int32_t(v);
  }
  int64_t i64_at(size_t off) const {
    check_range(off, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= uint64_t(uint8_t(data_[payload_ + off + size_t(i)])) << (8 * i);
    return int64_t(v);
  }
  void mark_payload() { payload_ = pos_; }
  size_t payload_size() const { return data_.size() - payload_; }

 private:
  void need(size_t n) {
    if (pos_ + n > data_.size()) throw std::runtime_error(path_ + ": truncated container");
  }
  void check_range(size_t off, size_t n) const {
    if (payload_ + off + n > data_.size())
      throw std::runtime_error(path_ + ": blob offset out of range");
  }
  std::string path_;
  std::string data_;
  size_t pos_ = 0;
  size_t payload_ = 0;
};

void write_file(const std::string& path, const char* magic, const std::string& manifest,
                const std::string& payload) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(magic, 8);
  std::string len;
  put_u64(len, manifest.size());
  f.write(len.data(), 8);
  f.write(manifest.data(), long(manifest.size()));
  f.write(payload.data(), long(payload.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

json config_to_json(const ModelConfig& c) {
  return json{{"input_len", c.input_len}, {"embed_dim", c.embed_dim}, {"kernel", c.kernel},
              {"heads", c.heads},         {"hidden", c.hidden},       {"classes", c.classes},
              {"rr_dim", c.rr_dim},       {"use_rr", c.use_rr}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.input_len = j.at("input_len");
  c.embed_dim = j.at("embed_dim");
  c.kernel = j.at("kernel");
  c.heads = j.at("heads");
  c.hidden = j.at("hidden");
  c.classes = j.at("classes");
  c.rr_dim = j.at("rr_dim");
  c.use_rr = j.at("use_rr");
  return c;
}

}  // namespace

void save_dataset(const BeatDataset& ds, const std::string& path) {
  json j;
  j["fs"] = ds.fs;
  j["seed"] = ds.seed;
  j["config_hash"] = ds.config_hash;
  j["window_len"] = kWindowLen;
  j["n"] = ds.samples.size();
  std::vector<std::string> records;
  json rec_idx = json::array(), sample_idx = json::array(), label = json::array(),
       cond = json::array();
  for (const auto& s : ds.samples) {
    size_t r = 0;
    for (; r < records.size(); ++r)
      if (records[r] == s.record_name) break;
    if (r == records.size()) records.push_back(s.record_name);
    rec_idx.push_back(r);
    sample_idx.push_back(s.sample_index);
    label.push_back(int(s.label));
    cond.push_back(int(s.condition));
  }
  j["records"] = records;
  j["rec"] = rec_idx;
  j["idx"] = sample_idx;
  j["label"] = label;
  j["cond"] = cond;
  j["blob"] = {{"windows", {{"dtype", "f32le"}, {"offset", 0},
                            {"count", ds.samples.size() * kWindowLen}}},
               {"rr", {{"dtype", "f32le"}, {"offset", ds.samples.size() * kWindowLen * 4},
                       {"count", ds.samples.size() * 2}}}};

  std::string payload;
  payload.reserve(ds.samples.size() * (kWindowLen + 2) * 4);
  for (const auto& s : ds.samples)
    for (float v : s.window) put_f32(payload, v);
  for (const auto& s : ds.samples) {
    put_f32(payload, s.rr_norm[0]);
    put_f32(payload, s.rr_norm[1]);
  }
  write_file(path, kDatasetMagic, json(j).dump(), payload);
}

BeatDataset load_dataset(const std::string& path) {
  Reader r(path);
  r.expect_magic(kDatasetMagic);
  const uint64_t len = r.u64();
  json j = json::parse(r.bytes(size_t(len)));
  r.mark_payload();
  BeatDataset ds;
  ds.fs = j.at("fs");
  ds.seed = j.at("seed");
  ds.config_hash = j.at("config_hash");
  const size_t n = j.at("n");
  std::vector<std::string> records = j.at("records");
  const auto& rec = j.at("rec");
  const auto& idx = j.at("idx");
  const auto& label = j.at("label");
  const auto& cond = j.at("cond");
  const size_t rr_off = n * kWindowLen * 4;
  ds.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    BeatSample& s = ds.samples[i];
    s.record_name = records.at(rec.at(i).get<size_t>());
    s.sample_index = idx.at(i).get<int64_t>();
    s.label = BeatClass(label.at(i).get<int>());
    s.condition = NoiseCondition(cond.at(i).get<int>());
    for (int w = 0; w < kWindowLen; ++w)
      s.window[size_t(w)] = r.f32_at((i * kWindowLen + size_t(w)) * 4);
    s.rr_norm[0] = r.f32_at(rr_off + i * 8);
    s.rr_norm[1] = r.f32_at(rr_off + i * 8 + 4);
  }
  return ds;
}

void save_checkpoint(const ModelParams& params, const std::string& path,
                     const std::string& config_hash, uint64_t seed) {
  json j;
  j["config"] = config_to_json(params.cfg);
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["dtype"] = "f32le";
  json tensors = json::array();
  std::string payload;
  size_t offset = 0;
  const_cast<ModelParams&>(params).for_each_tensor([&](const char* name,
                                                       std::vector<double>& v) {
    tensors.push_back({{"name", name}, {"offset", offset}, {"count", v.size()}});
    for (double x : v) put_f32(payload, float(x));
    offset += v.size() * 4;
  });
  j["tensors"] = tensors;
  write_file(path, kCheckpointMagic, j.dump(), payload);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  r.expect_magic(kCheckpointMagic);
  const uint64_t len = r.u64();
  json j = json::parse(r.bytes(size_t(len)));
  r.mark_payload();
  Checkpoint ck;
  ck.config_hash = j.at("config_hash");
  ck.seed = j.at("seed");
  const ModelConfig cfg = config_from_json(j.at("config"));
  ck.params = ModelParams::zeros(cfg);
  const auto& tensors = j.at("tensors");
  size_t t = 0;
  ck.params.for_each_tensor([&](const char* name, std::vector<double>& v) {
    const auto& entry = tensors.at(t++);
    if (entry.at("name") != name || entry.at("count") != v.size())
      throw std::runtime_error(path + ": tensor layout mismatch at " + std::string(name));
    const size_t off = entry.at("offset");
    for (size_t i = 0; i < v.size(); ++i) v[i] = double(r.f32_at(off + i * 4));
  });
  return ck;
}

namespace {

json requant_to_json(const intops::Requant& rq) {
  return json{{"mult", rq.mult}, {"shift", rq.shift}};
}

intops::Requant requant_from_json(const json& j) {
  intops::Requant rq;
  rq.mult = j.at("mult");
  rq.shift = j.at("shift");
  return rq;
}

json softmax_to_json(const SoftmaxParams& p) {
  return json{{"in_shift", p.in_shift}, {"q_ln2", p.q_ln2}, {"q_b", p.q_b}, {"q_c", p.q_c}};
}

SoftmaxParams softmax_from_json(const json& j) {
  SoftmaxParams p;
  p.in_shift = j.at("in_shift");
  p.q_ln2 = j.at("q_ln2");
  p.q_b = j.at("q_b");
  p.q_c = j.at("q_c");
  return p;
}

json gelu_to_json(const GeluParams& p) {
  return json{{"in_shift", p.in_shift}, {"q_b", p.q_b},       {"q_c", p.q_c},
              {"q_one", p.q_one},       {"q_clip", p.q_clip}, {"rq_out", requant_to_json(p.rq_out)}};
}

GeluParams gelu_from_json(const json& j) {
  GeluParams p;
  p.in_shift = j.at("in_shift");
  p.q_b = j.at("q_b");
  p.q_c = j.at("q_c");
  p.q_one = j.at("q_one");
  p.q_clip = j.at("q_clip");
  p.rq_out = requant_from_json(j.at("rq_out"));
  return p;
}

struct BlobWriter {
  std::string payload;
  json entries = json::array();
  void add_i8(const char* name, const std::vector<int8_t>& v) {
    entries.push_back({{"name", name}, {"dtype", "i8"}, {"offset", payload.size()},
                       {"count", v.size()}});
    for (int8_t x : v) payload.push_back(char(x));
  }
  void add_i32(const char* name, const std::vector<int32_t>& v) {
    entries.push_back({{"name", name}, {"dtype", "i32le"}, {"offset", payload.size()},
                       {"count", v.size()}});
    for (int32_t x : v) put_i32(payload, x);
  }
  void add_i64(const char* name, const std::vector<int64_t>& v) {
    entries.push_back({{"name", name}, {"dtype", "i64le"}, {"offset", payload.size()},
                       {"count", v.size()}});
    for (int64_t x : v) put_i64(payload, x);
  }
};

struct BlobReader {
  const Reader& r;
  const json& entries;
  size_t next = 0;
  std::vector<int8_t> get_i8(const char* name) {
    const auto& e = entries.at(next++);
    if (e.at("name") != name || e.at("dtype") != "i8")
      throw std::runtime_error("quantized checkpoint: expected i8 blob " + std::string(name));
    const size_t off = e.at("offset"), count = e.at("count");
    std::vector<int8_t> v(count);
    for (size_t i = 0; i < count; ++i) v[i] = r.i8_at(off + i);
    return v;
  }
  std::vector<int32_t> get_i32(const char* name) {
    const auto& e = entries.at(next++);
    if (e.at("name") != name || e.at("dtype") != "i32le")
      throw std::runtime_error("quantized checkpoint: expected i32 blob " + std::string(name));
    const size_t off = e.at("offset"), count = e.at("count");
    std::vector<int32_t> v(count);
    for (size_t i = 0; i < count; ++i) v[i] = r.i32_at(off + i * 4);
    return v;
  }
  std::vector<int64_t> get_i64(const char* name) {
    const auto& e = entries.at(next++);
    if (e.at("name") != name || e.at("dtype") != "i64le")
      throw std::runtime_error("quantized checkpoint: expected i64 blob " + std::string(name));
    const size_t off = e.at("offset"), count = e.at("count");
    std::vector<int64_t> v(count);
    for (size_t i = 0; i < count; ++i) v[i] = r.i64_at(off + i * 8);
    return v;
  }
};

json ln_to_json(const LnParams& p, BlobWriter& bw, const std::string& prefix) {
  bw.add_i32((prefix + "_gamma").c_str(), p.gamma_q);
  bw.add_i64((prefix + "_beta").c_str(), p.beta_acc);
  return json{{"rq_out", requant_to_json(p.rq_out)}};
}

LnParams ln_from_json(const json& j, BlobReader& br, const std::string& prefix) {
  LnParams p;
  p.gamma_q = br.get_i32((prefix + "_gamma").c_str());
  p.beta_acc = br.get_i64((prefix + "_beta").c_str());
  p.rq_out = requant_from_json(j.at("rq_out"));
  return p;
}

}  // namespace

void save_quantized(const QuantizedModel& qm, const std::string& path,
                    const std::string& config_hash, uint64_t seed) {
  json j;
  j["config"] = config_to_json(qm.cfg);
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  json scales = json::object();
  const_cast<ActScales&>(qm.scales).for_each([&](const char* name, double& v) {
    scales[name] = v;
  });
  j["scales"] = scales;

  BlobWriter bw;
  const IntModel& m = qm.im;
  bw.add_i8("conv_w", m.conv_w);
  bw.add_i32("conv_b", m.conv_b);
  bw.add_i8("pos", m.pos);
  bw.add_i8("wq", m.wq);
  bw.add_i32("bq", m.bq);
  bw.add_i8("wk", m.wk);
  bw.add_i32("bk", m.bk);
  bw.add_i8("wv", m.wv);
  bw.add_i32("bv", m.bv);
  bw.add_i8("wo", m.wo);
  bw.add_i32("bo", m.bo);
  bw.add_i8("ff1_w", m.ff1_w);
  bw.add_i32("ff1_b", m.ff1_b);
  bw.add_i8("ff2_w", m.ff2_w);
  bw.add_i32("ff2_b", m.ff2_b);
  bw.add_i8("rr_w", m.rr_w);
  bw.add_i8("head_w", m.head_w);
  bw.add_i32("head_b", m.head_b);

  json ip;
  ip["rq_conv"] = requant_to_json(m.rq_conv);
  ip["ln1"] = ln_to_json(m.ln1, bw, "ln1");
  ip["rq_q"] = requant_to_json(m.rq_q);
  ip["rq_k"] = requant_to_json(m.rq_k);
  ip["rq_v"] = requant_to_json(m.rq_v);
  ip["softmax"] = softmax_to_json(m.softmax);
  ip["rq_ctx"] = requant_to_json(m.rq_ctx);
  ip["rq_attn_out"] = requant_to_json(m.rq_attn_out);
  ip["rq_x0_res"] = requant_to_json(m.rq_x0_res);
  ip["rq_attn_res"] = requant_to_json(m.rq_attn_res);
  ip["ln2"] = ln_to_json(m.ln2, bw, "ln2");
  ip["gelu1"] = gelu_to_json(m.gelu1);
  ip["gelu2"] = gelu_to_json(m.gelu2);
  ip["rq_x1_res"] = requant_to_json(m.rq_x1_res);
  ip["rq_ffn_res"] = requant_to_json(m.rq_ffn_res);
  ip["ln3"] = ln_to_json(m.ln3, bw, "ln3");
  ip["rq_pool"] = requant_to_json(m.rq_pool);
  ip["rq_rr"] = requant_to_json(m.rq_rr);
  j["int_params"] = ip;
  j["blobs"] = bw.entries;
  write_file(path, kQuantMagic, j.dump(), bw.payload);
}

QuantCheckpoint load_quantized(const std::string& path) {
  Reader r(path);
  r.expect_magic(kQuantMagic);
  const uint64_t len = r.u64();
  json j = json::parse(r.bytes(size_t(len)));
  r.mark_payload();
  QuantCheckpoint qc;
  qc.config_hash = j.at("config_hash");
  qc.seed = j.at("seed");
  qc.model.cfg = config_from_json(j.at("config"));
  qc.model.scales.for_each([&](const char* name, double& v) {
    v = j.at("scales").at(name).get<double>();
  });

  BlobReader br{r, j.at("blobs")};
  IntModel& m = qc.model.im;
  m.conv_w = br.get_i8("conv_w");
  m.conv_b = br.get_i32("conv_b");
  m.pos = br.get_i8("pos");
  m.wq = br.get_i8("wq");
  m.bq = br.get_i32("bq");
  m.wk = br.get_i8("wk");
  m.bk = br.get_i32("bk");
  m.wv = br.get_i8("wv");
  m.bv = br.get_i32("bv");
  m.wo = br.get_i8("wo");
  m.bo = br.get_i32("bo");
  m.ff1_w = br.get_i8("ff1_w");
  m.ff1_b = br.get_i32("ff1_b");
  m.ff2_w = br.get_i8("ff2_w");
  m.ff2_b = br.get_i32("ff2_b");
  m.rr_w = br.get_i8("rr_w");
  m.head_w = br.get_i8("head_w");
  m.head_b = br.get_i32("head_b");

  const json& ip = j.at("int_params");
  m.rq_conv = requant_from_json(ip.at("rq_conv"));
  m.rq_q = requant_from_json(ip.at("rq_q"));
  m.rq_k = requant_from_json(ip.at("rq_k"));
  m.rq_v = requant_from_json(ip.at("rq_v"));
  m.softmax = softmax_from_json(ip.at("softmax"));
  m.rq_ctx = requant_from_json(ip.at("rq_ctx"));
  m.rq_attn_out = requant_from_json(ip.at("rq_attn_out"));
  m.rq_x0_res = requant_from_json(ip.at("rq_x0_res"));
  m.rq_attn_res = requant_from_json(ip.at("rq_attn_res"));
  m.gelu1 = gelu_from_json(ip.at("gelu1"));
  m.gelu2 = gelu_from_json(ip.at("gelu2"));
  m.rq_x1_res = requant_from_json(ip.at("rq_x1_res"));
  m.rq_ffn_res = requant_from_json(ip.at("rq_ffn_res"));
  m.rq_pool = requant_from_json(ip.at("rq_pool"));
  m.rq_rr = requant_from_json(ip.at("rq_rr"));
  // layer-norm blobs follow the dense tensors, in ln1/ln2/ln3 order
  m.ln1 = ln_from_json(ip.at("ln1"), br, "ln1");
  m.ln2 = ln_from_json(ip.at("ln2"), br, "ln2");
  m.ln3 = ln_from_json(ip.at("ln3"), br, "ln3");
  return qc;
}

void append_train_log(const std::string& path, int epoch, double train_loss, double valid_loss,
                      double valid_acc, double lr) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot write " + path);
  json j{{"epoch", epoch},
         {"train_loss", train_loss},
         {"valid_loss", valid_loss},
         {"valid_accuracy", valid_acc},
         {"lr", lr}};
  f << j.dump() << "\n";
}

}  // namespace ecgt
