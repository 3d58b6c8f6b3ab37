#include "coat/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "coat/errors.hpp"
#include "coat/io.hpp"

namespace coat {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr std::string_view kMagic = "COATCKPT";
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(std::string_view s) {
    pod(static_cast<std::uint64_t>(s.size()));
    out_.append(s);
  }
  template <typename Tensor>
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    pod(static_cast<std::uint64_t>(t.rows()));
    pod(static_cast<std::uint64_t>(t.cols()));
    out_.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(float));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  template <typename Tensor>
  void tensor(const std::string& expected_name, Tensor& t) {
    const std::size_t at = pos_;
    const std::string name = str();
    if (name != expected_name) throw ParseError("expected tensor " + expected_name + ", found " + name, at);
    const auto rows = pod<std::uint64_t>();
    const auto cols = pod<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(t.rows()) || cols != static_cast<std::uint64_t>(t.cols()))
      throw ParseError("tensor " + name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                           ", config implies " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()),
                       at);
    const std::size_t bytes = static_cast<std::size_t>(t.size()) * sizeof(float);
    need(bytes);
    std::memcpy(t.data(), in_.data() + pos_, bytes);
    pos_ += bytes;
  }
  bool done() const noexcept { return pos_ == in_.size(); }
  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_), pos_);
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

template <typename F>
void visit_all(const Checkpoint& c, F&& f) {
  c.model.params.visit([&](const std::string& n, const auto& t) { f("param." + n, t); });
  c.optimizer.first_moment.visit([&](const std::string& n, const auto& t) { f("moment1." + n, t); });
  c.optimizer.second_moment.visit([&](const std::string& n, const auto& t) { f("moment2." + n, t); });
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.str(kMagic);
  w.pod(kVersion);
  w.pod(static_cast<std::uint32_t>(sizeof(float)));
  const ModelConfig& cfg = c.model.config;
  for (int v : {cfg.n_layers, cfg.d_model, cfg.n_heads, cfg.d_ff, cfg.max_seq_len, cfg.vocab_size})
    w.pod(static_cast<std::int32_t>(v));
  w.pod(cfg.dropout);
  w.str(c.vocab.serialize());
  w.pod(c.step);
  const auto& o = c.optimizer;
  w.pod(o.step);
  for (double v : {o.learning_rate, o.beta1, o.beta2, o.epsilon, o.grad_clip}) w.pod(v);
  visit_all(c, [&](const std::string& name, const auto& t) { w.tensor(name, t); });
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.str() != kMagic) throw ParseError("not a checkpoint file (bad magic)", 0);
  if (const auto version = r.pod<std::uint32_t>(); version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), r.position());
  if (r.pod<std::uint32_t>() != sizeof(float)) throw ParseError("checkpoint scalar width is not 4 bytes", r.position());

  Checkpoint c;
  ModelConfig& cfg = c.model.config;
  for (int* field : {&cfg.n_layers, &cfg.d_model, &cfg.n_heads, &cfg.d_ff, &cfg.max_seq_len, &cfg.vocab_size})
    *field = r.pod<std::int32_t>();
  cfg.dropout = r.pod<double>();
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("invalid model config: ") + e.what(), r.position());
  }
  c.vocab = Vocabulary::deserialize(r.str());
  if (c.vocab.size() != static_cast<std::size_t>(cfg.vocab_size))
    throw ParseError("vocabulary size differs from model config", r.position());
  c.step = r.pod<std::int64_t>();
  auto& o = c.optimizer;
  o.step = r.pod<std::int64_t>();
  for (double* v : {&o.learning_rate, &o.beta1, &o.beta2, &o.epsilon, &o.grad_clip}) *v = r.pod<double>();

  c.model.params = Parameters<float>::zeros(cfg);
  o.first_moment = Parameters<float>::zeros(cfg);
  o.second_moment = Parameters<float>::zeros(cfg);
  c.model.params.visit([&](const std::string& n, auto& t) { r.tensor("param." + n, t); });
  o.first_moment.visit([&](const std::string& n, auto& t) { r.tensor("moment1." + n, t); });
  o.second_moment.visit([&](const std::string& n, auto& t) { r.tensor("moment2." + n, t); });
  if (!r.done()) throw ParseError("trailing bytes after checkpoint", r.position());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_file(path, serialize_checkpoint(c)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.position());
  }
}

}  // namespace coat
