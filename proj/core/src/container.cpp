#include "taper/container.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace taper {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'A', 'P', 'E', 'R', 'B', 'O', 'X'};
constexpr uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts unsupported");

template <typename T>
void byteswap_inplace(T* p, size_t n) {
  auto* b = reinterpret_cast<unsigned char*>(p);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < sizeof(T) / 2; ++j)
      std::swap(b[i * sizeof(T) + j], b[i * sizeof(T) + sizeof(T) - 1 - j]);
  }
}

}  // namespace

void write_container(const std::string& path, const Container& box) {
  json header;
  header["byte_order"] = "little";
  header["dtype"] = sizeof(real) == 8 ? "f64" : "f32";
  header["meta"] = box.meta_json.empty() ? json::object() : json::parse(box.meta_json);
  json jt = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : box.tensors) {
    json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    offset += static_cast<uint64_t>(t.numel()) * sizeof(real);
    jt.push_back(e);
  }
  header["tensors"] = jt;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write container '%s'", path.c_str());
  out.write(kMagic, 8);
  uint32_t ver = kFormatVersion;
  uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, t] : box.tensors) {
    if (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(real))));
    } else {
      std::vector<real> tmp(t.data(), t.data() + t.numel());
      byteswap_inplace(tmp.data(), tmp.size());
      out.write(reinterpret_cast<const char*>(tmp.data()),
                static_cast<std::streamsize>(tmp.size() * sizeof(real)));
    }
  }
  if (!out) fail("short write to container '%s'", path.c_str());
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open container '%s'", path.c_str());
  char magic[8];
  uint32_t ver = 0;
  uint64_t hlen = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    fail("'%s' is not a taper container", path.c_str());
  if (std::endian::native == std::endian::big) {
    byteswap_inplace(&ver, 1);
    byteswap_inplace(&hlen, 1);
  }
  if (ver != kFormatVersion) fail("container '%s': unsupported format version %u", path.c_str(), ver);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) fail("container '%s': truncated header", path.c_str());

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    fail("container '%s': bad header: %s", path.c_str(), e.what());
  }
  const std::string dtype = header.value("dtype", "f64");
  const std::string want = sizeof(real) == 8 ? "f64" : "f32";
  if (dtype != want)
    fail("container '%s' holds %s tensors but this build uses %s", path.c_str(), dtype.c_str(),
         want.c_str());
  if (header.value("byte_order", "little") != "little")
    fail("container '%s': unsupported byte order", path.c_str());

  Container box;
  box.meta_json = header.contains("meta") ? header["meta"].dump() : "{}";
  for (const auto& e : header.at("tensors")) {
    Shape shape;
    for (auto d : e.at("shape")) shape.push_back(d.get<int64_t>());
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(real))));
    if (!in) fail("container '%s': truncated tensor '%s'", path.c_str(),
                  e.at("name").get<std::string>().c_str());
    if (std::endian::native == std::endian::big) byteswap_inplace(t.data(), static_cast<size_t>(t.numel()));
    box.add(e.at("name").get<std::string>(), std::move(t));
  }
  return box;
}

}  // namespace taper
