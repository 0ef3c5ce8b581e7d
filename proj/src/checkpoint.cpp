#include "glass/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace glass {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  for (auto& [n, _] : entries_)
    if (n == name) throw std::logic_error("duplicate parameter name: " + name);
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("no such parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (auto& [n, _] : entries_)
    if (n == name) return true;
  return false;
}

std::vector<Tensor> ParamStore::learnable() const {
  std::vector<Tensor> out;
  for (auto& [_, t] : entries_)
    if (t.requires_grad()) out.push_back(t);
  return out;
}

int64_t ParamStore::param_count() const {
  int64_t n = 0;
  for (auto& [_, t] : entries_)
    if (t.requires_grad()) n += t.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [_, t] : entries_)
    if (t.requires_grad()) const_cast<Tensor&>(t).zero_grad();
}

static uint32_t f32_bits_le(float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

void save_checkpoint(const ParamStore& store, const std::string& path_prefix) {
  nlohmann::json manifest = nlohmann::json::array();
  int64_t offset = 0;
  std::ofstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + path_prefix + ".bin");
  for (const auto& [name, t] : store.entries()) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    manifest.push_back(e);
    for (double v : t.data()) {
      uint32_t u = f32_bits_le(static_cast<float>(v));
      unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                            static_cast<unsigned char>((u >> 8) & 0xff),
                            static_cast<unsigned char>((u >> 16) & 0xff),
                            static_cast<unsigned char>((u >> 24) & 0xff)};
      bin.write(reinterpret_cast<char*>(b), 4);
    }
    offset += t.numel() * 4;
  }
  std::ofstream mf(path_prefix + ".json");
  if (!mf) throw std::runtime_error("cannot write " + path_prefix + ".json");
  mf << manifest.dump(2) << "\n";
}

void load_checkpoint(ParamStore& store, const std::string& path_prefix) {
  std::ifstream mf(path_prefix + ".json");
  if (!mf) throw std::runtime_error("cannot read " + path_prefix + ".json");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + path_prefix + ".bin");
  for (const auto& e : manifest) {
    std::string name = e.at("name").get<std::string>();
    Shape shape = e.at("shape").get<Shape>();
    int64_t offset = e.at("offset").get<int64_t>();
    if (!store.has(name))
      throw std::runtime_error("checkpoint has unknown parameter: " + name);
    Tensor& t = store.get(name);
    if (t.shape() != shape)
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    bin.seekg(offset);
    std::vector<unsigned char> buf(t.numel() * 4);
    bin.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (!bin) throw std::runtime_error("checkpoint blob truncated at " + name);
    for (int64_t i = 0; i < t.numel(); ++i) {
      uint32_t u = buf[i * 4] | (buf[i * 4 + 1] << 8) | (buf[i * 4 + 2] << 16) |
                   (static_cast<uint32_t>(buf[i * 4 + 3]) << 24);
      float f;
      std::memcpy(&f, &u, 4);
      t.data()[i] = static_cast<double>(f);
    }
  }
}

}  // namespace glass
