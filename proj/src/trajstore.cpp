#include "seqrl/trajstore.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include "seqrl/error.hpp"

namespace seqrl {

namespace {

static_assert(std::endian::native == std::endian::little, "DRLT codec assumes a little-endian host");

constexpr char kMagic[4] = {'D', 'R', 'L', 'T'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& data) : data_(data) {}

  void bytes(void* dst, std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw FormatError(std::string("DRLT: truncated while reading ") + what, pos_);
    }
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    bytes(&v, 8, what);
    return v;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& data_;
  std::size_t pos_ = 0;
};

}  // namespace

double Trajectory::episode_return() const { return std::accumulate(rewards.begin(), rewards.end(), 0.0); }

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  if (d.shape.size() == 0 || d.action_count == 0) throw DimensionError("DRLT: observation dims and action count must be positive");
  const std::size_t n = d.shape.size();
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(d.shape.channels));
  w.u32(static_cast<std::uint32_t>(d.shape.height));
  w.u32(static_cast<std::uint32_t>(d.shape.width));
  w.u32(d.action_count);
  w.u64(d.trajectories.size());
  w.u32(static_cast<std::uint32_t>(d.env_tag.size()));
  w.bytes(d.env_tag.data(), d.env_tag.size());
  w.u32(d.frame_skip);
  for (const auto& t : d.trajectories) {
    const std::size_t len = t.length();
    if (t.rewards.size() != len || t.observations.size() != len * n) {
      throw DimensionError("DRLT: trajectory arrays disagree with its length " + std::to_string(len));
    }
    w.u32(static_cast<std::uint32_t>(len));
    for (double v : t.observations) w.f32(static_cast<float>(v));
    for (std::size_t a : t.actions) {
      if (a >= d.action_count) throw IndexError("DRLT: action " + std::to_string(a) + " outside the action set");
      w.u32(static_cast<std::uint32_t>(a));
    }
    for (double r : t.rewards) w.f32(static_cast<float>(r));
  }
  return std::move(w.out);
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("DRLT: bad magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion) throw FormatError("DRLT: unsupported version " + std::to_string(version), 4);
  Dataset d;
  const std::size_t dims_at = r.pos();
  d.shape.channels = r.u32("channels");
  d.shape.height = r.u32("height");
  d.shape.width = r.u32("width");
  if (d.shape.size() == 0) throw FormatError("DRLT: observation dims must be positive", dims_at);
  const std::size_t actions_at = r.pos();
  d.action_count = r.u32("action count");
  if (d.action_count == 0) throw FormatError("DRLT: action count must be positive", actions_at);
  const std::uint64_t count = r.u64("trajectory count");
  const std::uint32_t tag_len = r.u32("env tag length");
  if (tag_len > r.remaining()) throw FormatError("DRLT: truncated env tag", r.pos());
  d.env_tag.resize(tag_len);
  r.bytes(d.env_tag.data(), tag_len, "env tag");
  d.frame_skip = r.u32("frame skip");

  const std::size_t n = d.shape.size();
  // Each trajectory needs at least its 4-byte length, which bounds a
  // corrupted count before anything is reserved.
  if (count > r.remaining() / 4) throw FormatError("DRLT: trajectory count exceeds file size", r.pos());
  d.trajectories.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t start = r.pos();
    const std::uint32_t len = r.u32("trajectory length");
    const std::uint64_t need = static_cast<std::uint64_t>(len) * (n * 4 + 8);
    if (need > r.remaining()) throw FormatError("DRLT: truncated trajectory " + std::to_string(i), start);
    Trajectory t;
    std::vector<float> buf(static_cast<std::size_t>(len) * n);
    r.bytes(buf.data(), buf.size() * 4, "observations");
    t.observations.assign(buf.begin(), buf.end());
    t.actions.resize(len);
    for (std::uint32_t k = 0; k < len; ++k) {
      const std::size_t at = r.pos();
      const std::uint32_t a = r.u32("action");
      if (a >= d.action_count) throw FormatError("DRLT: action " + std::to_string(a) + " outside the action set", at);
      t.actions[k] = a;
    }
    std::vector<float> rewards(len);
    r.bytes(rewards.data(), rewards.size() * 4, "rewards");
    t.rewards.assign(rewards.begin(), rewards.end());
    d.trajectories.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("DRLT: trailing bytes after the last trajectory", r.pos());
  return d;
}

void write_dataset(const Dataset& dataset, const std::string& path) {
  const auto bytes = encode_dataset(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

DatasetStats dataset_stats(const Dataset& dataset) {
  if (dataset.trajectories.empty()) throw StateError("dataset_stats: dataset holds no trajectories");
  DatasetStats s;
  s.min_return = std::numeric_limits<double>::infinity();
  s.max_return = -std::numeric_limits<double>::infinity();
  double total_return = 0.0, total_length = 0.0;
  for (const auto& t : dataset.trajectories) {
    const double ret = t.episode_return();
    total_return += ret;
    total_length += static_cast<double>(t.length());
    s.min_return = std::min(s.min_return, ret);
    s.max_return = std::max(s.max_return, ret);
  }
  s.count = dataset.trajectories.size();
  s.mean_return = total_return / static_cast<double>(s.count);
  s.mean_length = total_length / static_cast<double>(s.count);
  return s;
}

DatasetStats dataset_stats(const std::string& path) { return dataset_stats(read_dataset(path)); }

Dataset collect(Policy& policy, const EnvSettings& settings, std::size_t n_trajectories, std::uint64_t seed,
                std::size_t frame_skip) {
  if (n_trajectories == 0) throw ConfigError("collect: need at least one trajectory", "collect.episodes");
  auto env = make_env(settings);
  Dataset d;
  d.shape = env->observation_shape();
  d.action_count = static_cast<std::uint32_t>(env->action_count());
  d.env_tag = env_kind_name(settings.kind);
  d.frame_skip = static_cast<std::uint32_t>(frame_skip);
  Rng seeds(seed);
  Rng rng = seeds.split();
  for (std::size_t i = 0; i < n_trajectories; ++i) {
    EpisodeRecord e = run_episode(*env, policy, seeds(), frame_skip, rng, true);
    Trajectory t;
    for (const auto& o : e.observations) t.observations.insert(t.observations.end(), o.planes.begin(), o.planes.end());
    t.actions = std::move(e.actions);
    t.rewards = std::move(e.rewards);
    d.trajectories.push_back(std::move(t));
  }
  return d;
}

}  // namespace seqrl
