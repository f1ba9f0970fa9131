// Checkpoint layout (all integers and floats little-endian):
//
//   "GSNCKPT1"
//   u32 header_bytes, then "key=value\n" lines describing the GsnConfig
//   u32 tensor_count
//   per tensor: u32 name_bytes, name, u32 ndim, u64 dims[ndim], f64 data[prod(dims)]
//
// Convolution weights are stored as [out, in, kernel] in row-major order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "gaitseg/errors.hpp"
#include "gaitseg/gsn.hpp"
#include "gaitseg/io.hpp"

namespace gaitseg {

namespace {

constexpr int kFormatVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  const std::string& str() const { return buf_; }

 private:
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(char((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  void bytes(void* out, std::size_t n, const std::string& what) {
    if (data_.size() - pos_ < n) throw DataError("checkpoint truncated while reading " + what);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const std::string& what) { return le<std::uint32_t>(what); }
  std::uint64_t u64(const std::string& what) { return le<std::uint64_t>(what); }
  double f64(const std::string& what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  template <typename U>
  U le(const std::string& what) {
    unsigned char b[sizeof(U)];
    bytes(b, sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(b[i]) << (8 * i);
    return v;
  }
  std::string data_;
  std::size_t pos_ = 0;
};

std::string config_header(const GsnConfig& c) {
  std::string dil;
  for (std::size_t i = 0; i < c.dilations.size(); ++i) dil += (i ? "," : "") + std::to_string(c.dilations[i]);
  return "format_version=" + std::to_string(kFormatVersion) + "\n" +
         "in_channels=" + std::to_string(c.in_channels) + "\n" +
         "channels=" + std::to_string(c.channels) + "\n" +
         "num_dilated_layers=" + std::to_string(c.num_dilated_layers) + "\n" +
         "kernel=" + std::to_string(c.kernel) + "\n" + "dilations=" + dil + "\n" +
         "out_events=" + std::to_string(c.out_events) + "\n" +
         "bn_momentum=" + format_double(c.bn_momentum) + "\n" +
         "bn_epsilon=" + format_double(c.bn_epsilon) + "\n";
}

GsnConfig parse_header(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint header line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint header is missing '" + key + "'");
    return it->second;
  };
  try {
    if (std::stoi(get("format_version")) != kFormatVersion)
      throw DataError("checkpoint format_version " + get("format_version") + " is not supported");
    GsnConfig c;
    c.in_channels = std::stoi(get("in_channels"));
    c.channels = std::stoi(get("channels"));
    c.num_dilated_layers = std::stoi(get("num_dilated_layers"));
    c.kernel = std::stoi(get("kernel"));
    c.out_events = std::stoi(get("out_events"));
    c.bn_momentum = std::stod(get("bn_momentum"));
    c.bn_epsilon = std::stod(get("bn_epsilon"));
    c.dilations.clear();
    std::istringstream d(get("dilations"));
    std::string tok;
    while (std::getline(d, tok, ',')) c.dilations.push_back(std::stoi(tok));
    return c;
  } catch (const std::logic_error& e) {
    throw DataError(std::string("checkpoint header has a malformed value: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const GsnModel& model, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kCheckpointMagic, 8);
  const std::string header = config_header(model.config);
  w.u32(std::uint32_t(header.size()));
  w.bytes(header.data(), header.size());

  std::uint32_t count = 0;
  model.for_each_tensor([&](const std::string&, const auto&) { ++count; });
  w.u32(count);

  auto write_conv = [&](const std::string& name, const ConvParams<double>& p) {
    w.u32(std::uint32_t(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(3);
    w.u64(std::uint64_t(p.out_channels()));
    w.u64(std::uint64_t(p.in_channels()));
    w.u64(std::uint64_t(p.kernel));
    for (Index o = 0; o < p.out_channels(); ++o)
      for (Index i = 0; i < p.in_channels(); ++i)
        for (int k = 0; k < p.kernel; ++k) w.f64(p.weight(o, i, k));
  };
  auto write_vector = [&](const std::string& name, const Vector<double>& v) {
    w.u32(std::uint32_t(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(1);
    w.u64(std::uint64_t(v.size()));
    for (Index i = 0; i < v.size(); ++i) w.f64(v(i));
  };
  auto write_block = [&](const std::string& prefix, const GsnBlock& b) {
    write_conv(prefix + ".conv.weight", b.conv);
    write_vector(prefix + ".conv.bias", b.conv.bias);
    write_vector(prefix + ".bn.gamma", b.bn.gamma);
    write_vector(prefix + ".bn.beta", b.bn.beta);
    write_vector(prefix + ".bn.running_mean", b.bn.running_mean);
    write_vector(prefix + ".bn.running_var", b.bn.running_var);
    if (b.residual_proj) {
      write_conv(prefix + ".proj.weight", *b.residual_proj);
      write_vector(prefix + ".proj.bias", b.residual_proj->bias);
    }
  };
  write_block("input", model.input_block);
  for (std::size_t i = 0; i < model.dilated_blocks.size(); ++i)
    write_block("block" + std::to_string(i), model.dilated_blocks[i]);
  write_conv("head.weight", model.head);
  write_vector("head.bias", model.head.bias);

  write_text_file(path, w.str());
}

GsnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));

  char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError(path.string() + " is not a GSN checkpoint (bad magic)");
  const std::uint32_t header_len = r.u32("header length");
  if (header_len > (1u << 20)) throw DataError("checkpoint header length is implausible");
  std::string header(header_len, '\0');
  r.bytes(header.data(), header_len, "header");
  GsnConfig config = parse_header(header);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config is invalid: ") + e.what());
  }

  GsnModel model = GsnModel::zeros(config);
  std::uint32_t expected_count = 0;
  model.for_each_tensor([&](const std::string&, const auto&) { ++expected_count; });
  const std::uint32_t count = r.u32("tensor count");
  if (count != expected_count)
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                    std::to_string(expected_count));

  auto read_entry = [&](const std::string& name, std::vector<std::uint64_t> shape) {
    const std::uint32_t len = r.u32("name of " + name);
    if (len > 4096) throw DataError("checkpoint tensor name length is implausible near " + name);
    std::string stored(len, '\0');
    r.bytes(stored.data(), len, "name of " + name);
    if (stored != name)
      throw DataError("checkpoint tensor '" + stored + "' found where '" + name + "' was expected");
    const std::uint32_t ndim = r.u32("rank of " + name);
    if (ndim != shape.size())
      throw DataError("checkpoint tensor '" + name + "' has rank " + std::to_string(ndim) +
                      ", expected " + std::to_string(shape.size()));
    for (std::size_t d = 0; d < shape.size(); ++d) {
      const std::uint64_t dim = r.u64("shape of " + name);
      if (dim != shape[d])
        throw DataError("checkpoint tensor '" + name + "' has dimension " + std::to_string(d) +
                        " = " + std::to_string(dim) + ", header implies " + std::to_string(shape[d]));
    }
  };
  auto read_conv = [&](const std::string& name, ConvParams<double>& p) {
    read_entry(name, {std::uint64_t(p.out_channels()), std::uint64_t(p.in_channels()),
                      std::uint64_t(p.kernel)});
    for (Index o = 0; o < p.out_channels(); ++o)
      for (Index i = 0; i < p.in_channels(); ++i)
        for (int k = 0; k < p.kernel; ++k) p.weight(o, i, k) = r.f64("data of " + name);
  };
  auto read_vector = [&](const std::string& name, Vector<double>& v) {
    read_entry(name, {std::uint64_t(v.size())});
    for (Index i = 0; i < v.size(); ++i) v(i) = r.f64("data of " + name);
  };
  auto read_block = [&](const std::string& prefix, GsnBlock& b) {
    read_conv(prefix + ".conv.weight", b.conv);
    read_vector(prefix + ".conv.bias", b.conv.bias);
    read_vector(prefix + ".bn.gamma", b.bn.gamma);
    read_vector(prefix + ".bn.beta", b.bn.beta);
    read_vector(prefix + ".bn.running_mean", b.bn.running_mean);
    read_vector(prefix + ".bn.running_var", b.bn.running_var);
    if (b.residual_proj) {
      read_conv(prefix + ".proj.weight", *b.residual_proj);
      read_vector(prefix + ".proj.bias", b.residual_proj->bias);
    }
  };
  read_block("input", model.input_block);
  for (std::size_t i = 0; i < model.dilated_blocks.size(); ++i)
    read_block("block" + std::to_string(i), model.dilated_blocks[i]);
  read_conv("head.weight", model.head);
  read_vector("head.bias", model.head.bias);
  if (!r.at_end()) throw DataError("checkpoint has trailing bytes after the last tensor");
  model.set_mode(Mode::eval);
  return model;
}

GsnModel load_checkpoint(const std::filesystem::path& path, const GsnConfig& expected) {
  GsnModel model = load_checkpoint(path);
  if (!(model.config == expected))
    throw ConfigError("checkpoint " + path.string() + " was trained with in_channels=" +
                      std::to_string(model.config.in_channels) + ", channels=" +
                      std::to_string(model.config.channels) + "; this run expects in_channels=" +
                      std::to_string(expected.in_channels) + ", channels=" +
                      std::to_string(expected.channels));
  return model;
}

}  // namespace gaitseg
