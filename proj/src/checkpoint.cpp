// SPDX-License-Identifier: Apache-2.0

#include "xattn/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <map>
#include <vector>

#include "xattn/errors.hpp"

namespace xattn {

namespace {

void put_u16(std::ostream& o, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  o.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& o, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  o.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& o, float f) { put_u32(o, std::bit_cast<std::uint32_t>(f)); }

std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) throw IoFailure("checkpoint truncated");
  return std::uint16_t(b[0] | (std::uint16_t(b[1]) << 8));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoFailure("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

void write_tensor(std::ostream& o, const std::string& name, const Tensor& t) {
  put_u32(o, std::uint32_t(name.size()));
  o.write(name.data(), std::streamsize(name.size()));
  put_u32(o, 2);
  put_u32(o, std::uint32_t(t.rows()));
  put_u32(o, std::uint32_t(t.cols()));
  for (std::size_t i = 0; i < t.size(); ++i) put_f32(o, float(t[i]));
}

Tensor read_tensor(std::istream& in, std::string* name) {
  const std::uint32_t name_len = get_u32(in);
  if (name_len > 4096) throw ParseError("checkpoint: implausible name length");
  name->resize(name_len);
  if (!in.read(name->data(), name_len)) throw IoFailure("checkpoint truncated");
  const std::uint32_t rank = get_u32(in);
  if (rank != 2) throw ParseError("checkpoint: unsupported tensor rank " +
                                  std::to_string(rank) + " for " + *name);
  const std::uint32_t rows = get_u32(in);
  const std::uint32_t cols = get_u32(in);
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = double(get_f32(in));
  return t;
}

Tensor encode_config(const ModelParams& p) {
  const ModelConfig& c = p.cfg;
  std::vector<double> v = {double(c.d_roi),  double(c.d_joint), double(c.d_g),
                           double(c.d_s),    double(c.n_attrs), c.lambda_a,
                           c.lambda_b,       c.beta,            c.leaky_slope,
                           c.bn_momentum,    c.bn_eps,          c.ln_eps,
                           double(p.bn_steps)};
  v.push_back(double(c.alpha_hidden.size()));
  for (std::size_t h : c.alpha_hidden) v.push_back(double(h));
  v.push_back(double(c.cls_hidden.size()));
  for (std::size_t h : c.cls_hidden) v.push_back(double(h));
  Tensor t(1, v.size());
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

void decode_config(const Tensor& t, ModelConfig* c, std::uint64_t* bn_steps) {
  std::size_t i = 0;
  const auto next = [&]() -> double {
    if (i >= t.size()) throw ParseError("checkpoint: config record too short");
    return t[i++];
  };
  c->d_roi = std::size_t(next());
  c->d_joint = std::size_t(next());
  c->d_g = std::size_t(next());
  c->d_s = std::size_t(next());
  c->n_attrs = std::size_t(next());
  c->lambda_a = next();
  c->lambda_b = next();
  c->beta = next();
  c->leaky_slope = next();
  c->bn_momentum = next();
  c->bn_eps = next();
  c->ln_eps = next();
  *bn_steps = std::uint64_t(next());
  c->alpha_hidden.resize(std::size_t(next()));
  for (auto& h : c->alpha_hidden) h = std::size_t(next());
  c->cls_hidden.resize(std::size_t(next()));
  for (auto& h : c->cls_hidden) h = std::size_t(next());
}

std::vector<std::pair<std::string, const Tensor*>> named_tensors(const ModelParams& p) {
  std::vector<std::pair<std::string, const Tensor*>> out = {
      {"W1", &p.W1},         {"b1", &p.b1},
      {"W2", &p.W2},         {"b2", &p.b2},
      {"Wg", &p.Wg},         {"bg", &p.bg},
      {"Ws", &p.Ws},         {"bs", &p.bs},
      {"ln_g.gain", &p.ln_g_gain}, {"ln_g.bias", &p.ln_g_bias},
      {"ln_s.gain", &p.ln_s_gain}, {"ln_s.bias", &p.ln_s_bias}};
  for (std::size_t l = 0; l < p.alpha_mlp.size(); ++l) {
    const std::string base = "alpha." + std::to_string(l);
    out.emplace_back(base + ".W", &p.alpha_mlp[l].W);
    out.emplace_back(base + ".b", &p.alpha_mlp[l].b);
  }
  for (std::size_t l = 0; l < p.cls_mlp.size(); ++l) {
    const std::string base = "cls." + std::to_string(l);
    out.emplace_back(base + ".W", &p.cls_mlp[l].W);
    out.emplace_back(base + ".b", &p.cls_mlp[l].b);
  }
  for (std::size_t l = 0; l < p.cls_bn.size(); ++l) {
    const std::string base = "bn." + std::to_string(l);
    out.emplace_back(base + ".gain", &p.cls_bn[l].gain);
    out.emplace_back(base + ".bias", &p.cls_bn[l].bias);
    out.emplace_back(base + ".mean", &p.cls_bn[l].run_mean);
    out.emplace_back(base + ".var", &p.cls_bn[l].run_var);
  }
  return out;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + tmp + " for writing");
    out.write("XATN", 4);
    put_u16(out, kCheckpointVersion);
    const Tensor config = encode_config(params);
    const auto tensors = named_tensors(params);
    put_u32(out, std::uint32_t(tensors.size() + 1));
    write_tensor(out, "config", config);
    for (const auto& [name, t] : tensors) write_tensor(out, name, *t);
    if (!out) throw IoFailure("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoFailure("rename failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "XATN")
    throw BadMagic(path + ": not a checkpoint file");
  const std::uint16_t version = get_u16(in);
  if (version != kCheckpointVersion)
    throw VersionUnsupported(path + ": version " + std::to_string(version) +
                             ", expected " + std::to_string(kCheckpointVersion));
  const std::uint32_t count = get_u32(in);
  std::map<std::string, Tensor> records;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name;
    Tensor t = read_tensor(in, &name);
    records[name] = std::move(t);
  }

  const auto cfg_it = records.find("config");
  if (cfg_it == records.end()) throw ParseError(path + ": missing config record");
  ModelConfig cfg;
  std::uint64_t bn_steps = 0;
  decode_config(cfg_it->second, &cfg, &bn_steps);

  Rng unused(0);
  ModelParams params = init_params(cfg, unused);
  params.bn_steps = bn_steps;
  for (auto& [name, dst] : named_tensors(params)) {
    const auto it = records.find(name);
    if (it == records.end()) throw ParseError(path + ": missing tensor " + name);
    if (!it->second.same_shape(*dst))
      throw ParseError(path + ": tensor " + name + " has shape " +
                       it->second.shape_str() + ", expected " + dst->shape_str());
    *const_cast<Tensor*>(dst) = it->second;
  }
  return params;
}

}  // namespace xattn
