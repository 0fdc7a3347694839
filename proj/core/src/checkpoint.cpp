#include "odgcnn/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace odgcnn {
namespace {

constexpr std::string_view kMagic = "ODGC1\n";

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

template <typename T>
void put(std::vector<unsigned char>& out, T value) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const ParamRegistry& params) {
  std::vector<unsigned char> out(kMagic.begin(), kMagic.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

ParamRegistry decode_checkpoint(std::span<const unsigned char> bytes) {
  Reader in(bytes);
  if (in.get_string(kMagic.size()) != kMagic) throw std::runtime_error("not an ODGC1 checkpoint (bad magic)");
  const auto count = in.get<std::uint32_t>();
  ParamRegistry params;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = in.get_string(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = in.get<double>();
    params.add(name, Tensor::from(std::move(shape), std::move(data), true));
  }
  if (!in.done()) throw std::runtime_error("trailing bytes after checkpoint entries");
  return params;
}

void save_checkpoint(const ParamRegistry& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ParamRegistry load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void load_into(ParamRegistry& params, const ParamRegistry& checkpoint) {
  for (const auto& [name, t] : params) {
    if (!checkpoint.contains(name)) throw std::invalid_argument("checkpoint mismatch: missing tensor " + name);
    if (checkpoint.get(name).shape() != t.shape()) {
      throw std::invalid_argument("checkpoint mismatch: tensor " + name + " has shape " +
                                  shape_string(checkpoint.get(name).shape()) + ", model expects " +
                                  shape_string(t.shape()));
    }
  }
  for (const auto& [name, t] : checkpoint) {
    if (!params.contains(name)) throw std::invalid_argument("checkpoint mismatch: unexpected tensor " + name);
  }
  params.copy_values_from(checkpoint);
}

std::string git_blob_hash(std::span<const unsigned char> content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

}  // namespace odgcnn
