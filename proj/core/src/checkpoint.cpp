#include "casdet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "casdet/config.hpp"
#include "casdet/error.hpp"

namespace casdet {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'S', 'D', 'E', 'T', 'C', 'K'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(Model& model) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string spec = format_model_spec(model.spec());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
  out += spec;
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint8_t>(out, p->trainable ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(double));
  }
  return out;
}

Model deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.get_string(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw DataError("checkpoint: bad magic");
  }
  if (const auto v = in.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(v));
  }
  const ModelSpec spec = parse_model_spec(in.get_string(in.get<std::uint32_t>()));
  Model model(spec);
  auto params = model.parameters();
  const auto n = in.get<std::uint32_t>();
  if (n != params.size()) throw DataError("checkpoint: tensor count does not match the model");
  for (Parameter* p : params) {
    const std::string name = in.get_string(in.get<std::uint32_t>());
    if (name != p->name) throw DataError("checkpoint: expected tensor " + p->name + ", found " + name);
    if ((in.get<std::uint8_t>() != 0) != p->trainable) {
      throw DataError("checkpoint: trainable flag mismatch for " + name);
    }
    Shape shape(in.get<std::uint32_t>());
    for (auto& d : shape) d = in.get<std::uint64_t>();
    if (shape != p->value.shape()) {
      throw ShapeError("checkpoint: " + name + " has shape " + to_string(shape) + ", model expects " +
                       to_string(p->value.shape()));
    }
    for (double& x : p->value.values()) x = in.get<double>();
  }
  if (!in.done()) throw DataError("checkpoint: trailing bytes");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace casdet
