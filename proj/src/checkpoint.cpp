#include "seqrl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "seqrl/error.hpp"

namespace seqrl {

namespace {

static_assert(std::endian::native == std::endian::little, "DRLC codec assumes a little-endian host");

constexpr char kMagic[4] = {'D', 'R', 'L', 'C'};

void put(std::vector<std::uint8_t>& out, const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n);
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& data) : data_(data) {}

  void bytes(void* dst, std::size_t n, const std::string& what) {
    if (data_.size() - pos_ < n) throw FormatError("DRLC: truncated while reading " + what, pos_);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U get(const std::string& what) {
    U v;
    bytes(&v, sizeof(U), what);
    return v;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParameterStore& params) {
  std::vector<std::uint8_t> out;
  put(out, kMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  put(out, &version, 4);
  const std::uint64_t count = params.size();
  put(out, &count, 8);
  for (const auto& [name, tensor] : params.entries()) {
    const auto len = static_cast<std::uint32_t>(name.size());
    put(out, &len, 4);
    put(out, name.data(), name.size());
    const auto rank = static_cast<std::uint32_t>(tensor.rank());
    put(out, &rank, 4);
    for (std::size_t d : tensor.shape()) {
      const std::uint64_t dim = d;
      put(out, &dim, 8);
    }
    const auto data = tensor.data();
    put(out, data.data(), data.size() * sizeof(double));
  }
  return out;
}

ParameterStore decode_checkpoint(const std::vector<std::uint8_t>& bytes, bool requires_grad) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("DRLC: bad magic", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw FormatError("DRLC: unsupported version " + std::to_string(version), 4);
  const auto count = r.get<std::uint64_t>("entry count");
  // Smallest possible entry: empty name, rank 0, one f64.
  if (count > r.remaining() / 16) throw FormatError("DRLC: entry count exceeds file size", 8);
  ParameterStore store(requires_grad);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string label = "entry " + std::to_string(i);
    const std::size_t start = r.pos();
    const auto len = r.get<std::uint32_t>(label + " name length");
    if (len > r.remaining()) throw FormatError("DRLC: truncated name of " + label, r.pos());
    std::string name(len, '\0');
    r.bytes(name.data(), len, label + " name");
    const auto rank = r.get<std::uint32_t>(label + " rank");
    if (rank > r.remaining() / 8) throw FormatError("DRLC: rank of " + label + " exceeds file size", r.pos() - 4);
    Shape shape;
    std::uint64_t elements = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto dim = r.get<std::uint64_t>(label + " dims");
      if (dim != 0 && elements > r.remaining() / dim) {
        throw FormatError("DRLC: dims of " + label + " exceed file size", r.pos() - 8);
      }
      elements *= dim;
      shape.push_back(static_cast<std::size_t>(dim));
    }
    if (elements > r.remaining() / 8) throw FormatError("DRLC: truncated data of " + label, r.pos());
    std::vector<double> values(elements);
    r.bytes(values.data(), elements * 8, label + " data");
    if (store.contains(name)) throw FormatError("DRLC: duplicate parameter '" + name + "'", start);
    store.insert(name, Tensor(shape, std::move(values), requires_grad));
  }
  if (r.remaining() != 0) throw FormatError("DRLC: trailing bytes after the last entry", r.pos());
  return store;
}

void write_checkpoint(const ParameterStore& params, const std::string& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StateError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StateError("failed writing checkpoint '" + path + "'");
}

ParameterStore read_checkpoint(const std::string& path, bool requires_grad) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("DRLC: cannot open '" + path + "'", 0);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, requires_grad);
}

}  // namespace seqrl
