#include "emberflow/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace emberflow {
namespace {

using json = nlohmann::json;
using Kind = CheckpointError::Kind;

json config_json(const ModelConfig& c) {
  return {{"conv_channels", c.conv_channels}, {"kernel", c.kernel},
          {"conv_padding", c.conv_padding},   {"pool_size", c.pool_size},
          {"pool_stride", c.pool_stride},     {"dropout_rate", c.dropout_rate},
          {"hidden_units", c.hidden_units},   {"num_classes", c.num_classes},
          {"input_shape", c.input_shape}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.conv_padding = j.at("conv_padding").get<std::size_t>();
  c.pool_size = j.at("pool_size").get<std::size_t>();
  c.pool_stride = j.at("pool_stride").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.hidden_units = j.at("hidden_units").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.input_shape = j.at("input_shape").get<Shape>();
  return c;
}

json run_json(const RunMetadata& r) {
  return {{"optimizer", to_string(r.optimizer)},
          {"lr", r.lr},
          {"decay", r.decay},
          {"batch_size", r.batch_size},
          {"seed", r.seed},
          {"epoch", r.epoch},
          {"optimizer_steps", r.optimizer_steps},
          {"run_rng", r.run_rng},
          {"dropout_rng", r.dropout_rng},
          {"diverged", r.diverged}};
}

RunMetadata run_from(const json& j) {
  RunMetadata r;
  r.optimizer = parse_optimizer_kind(j.at("optimizer").get<std::string>());
  r.lr = j.at("lr").get<double>();
  r.decay = j.at("decay").get<double>();
  r.batch_size = j.at("batch_size").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.epoch = j.at("epoch").get<std::size_t>();
  r.optimizer_steps = j.at("optimizer_steps").get<std::uint64_t>();
  r.run_rng = j.at("run_rng").get<Rng::State>();
  r.dropout_rng = j.at("dropout_rng").get<Rng::State>();
  r.diverged = j.at("diverged").get<bool>();
  return r;
}

// Names and shapes every checkpoint for this config must contain.
std::map<std::string, Shape> expected_shapes(const ModelConfig& config, OptimizerKind kind) {
  Rng rng(0);
  const Model<float> model(config, rng);
  std::map<std::string, Shape> out;
  for (const ParamSlot<float>* slot : model.params()) {
    out[slot->name] = slot->value.shape();
    if (kind == OptimizerKind::adam) {
      out["adam.m." + slot->name] = slot->value.shape();
      out["adam.v." + slot->name] = slot->value.shape();
    }
  }
  for (const auto& buffer : model.buffers()) out[buffer.name] = buffer.value->shape();
  return out;
}

void validate_tensors(const Checkpoint& ckpt, bool adam_moments_optional) {
  std::map<std::string, Shape> expected = expected_shapes(ckpt.model, ckpt.run.optimizer);
  for (const auto& [name, tensor] : ckpt.tensors) {
    const auto it = expected.find(name);
    if (it == expected.end()) throw CheckpointError(Kind::shape_mismatch, "unexpected tensor '" + name + "'");
    if (it->second != tensor.shape()) {
      throw CheckpointError(Kind::shape_mismatch, "tensor '" + name + "' has shape " + shape_string(tensor.shape()) +
                                                      ", model expects " + shape_string(it->second));
    }
    expected.erase(it);
  }
  for (const auto& [name, shape] : expected) {
    // Adam allocates its moments on the first step.
    if (adam_moments_optional && name.starts_with("adam.")) continue;
    throw CheckpointError(Kind::shape_mismatch, "missing tensor '" + name + "'");
  }
}

template <typename U>
void put(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const noexcept { return pos_ == bytes_.size(); }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(Kind::truncated, std::string("file ends inside ") + what);
    }
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    ModelConfig c = config_from(json::parse(text));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::malformed, std::string("model config: ") + e.what());
  } catch (const Error& e) {
    throw CheckpointError(Kind::malformed, std::string("model config: ") + e.what());
  }
}

Checkpoint make_checkpoint(const Model<float>& model, const Optimizer<float>& optimizer, RunMetadata run) {
  Checkpoint ckpt;
  ckpt.model = model.config();
  run.optimizer = optimizer.kind();
  run.optimizer_steps = optimizer.step_count();
  run.dropout_rng = model.dropout_rng().state();
  ckpt.run = run;
  for (const ParamSlot<float>* slot : model.params()) ckpt.tensors.emplace_back(slot->name, slot->value);
  for (const auto& buffer : model.buffers()) ckpt.tensors.emplace_back(buffer.name, *buffer.value);
  for (auto& entry : optimizer.export_state().tensors) ckpt.tensors.push_back(std::move(entry));
  return ckpt;
}

Model<float> restore_model(const Checkpoint& ckpt) {
  Rng rng(0);
  Model<float> model(ckpt.model, rng);
  auto load = [&](const std::string& name, Tensor& into) {
    const Tensor* t = ckpt.find(name);
    if (!t) throw CheckpointError(Kind::shape_mismatch, "missing tensor '" + name + "'");
    if (t->shape() != into.shape()) {
      throw CheckpointError(Kind::shape_mismatch, "tensor '" + name + "' has shape " + shape_string(t->shape()) +
                                                      ", model expects " + shape_string(into.shape()));
    }
    into = *t;
  };
  for (ParamSlot<float>* slot : model.params()) load(slot->name, slot->value);
  for (auto& buffer : model.buffers()) load(buffer.name, *buffer.value);
  model.dropout_rng().set_state(ckpt.run.dropout_rng);
  return model;
}

void restore_optimizer(const Checkpoint& ckpt, Optimizer<float>& optimizer) {
  if (optimizer.kind() != ckpt.run.optimizer) {
    throw CheckpointError(Kind::malformed, std::string("checkpoint holds ") + to_string(ckpt.run.optimizer) +
                                               " state, optimizer is " + to_string(optimizer.kind()));
  }
  OptimizerState<float> state;
  state.step_count = ckpt.run.optimizer_steps;
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.starts_with("adam.")) state.tensors.emplace_back(name, tensor);
  }
  optimizer.import_state(state);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string meta = json{{"model", config_json(ckpt.model)}, {"run", run_json(ckpt.run)}}.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.size() > 0xffff) throw CheckpointError(Kind::malformed, "tensor name too long: " + name);
    if (tensor.rank() > 0xff) throw CheckpointError(Kind::malformed, "tensor rank too large: " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : tensor.values()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put<std::uint32_t>(out, bits);
    }
  }

  // Write to a sibling file and rename so a failed save leaves no torn file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError(Kind::io, "cannot open '" + tmp.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError(Kind::io, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(Kind::io, "cannot rename to '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(Kind::io, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof kCheckpointMagic ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError(Kind::bad_magic, "'" + path.string() + "' is not a checkpoint");
  }
  Reader in(bytes.substr(sizeof kCheckpointMagic));
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::unsupported_version, "checkpoint version " + std::to_string(version) +
                                                         ", this build reads version " +
                                                         std::to_string(kCheckpointVersion));
  }
  const auto meta_len = in.get<std::uint32_t>("metadata length");
  const std::string meta = in.bytes(meta_len, "metadata");

  Checkpoint ckpt;
  try {
    const json j = json::parse(meta);
    ckpt.model = config_from(j.at("model"));
    ckpt.run = run_from(j.at("run"));
    ckpt.model.validate();
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::malformed, std::string("metadata: ") + e.what());
  } catch (const UsageError& e) {
    throw CheckpointError(Kind::malformed, std::string("metadata: ") + e.what());
  } catch (const GeometryError& e) {
    throw CheckpointError(Kind::malformed, std::string("metadata: ") + e.what());
  }

  const auto count = in.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = in.get<std::uint16_t>("tensor name length");
    std::string name = in.bytes(name_len, "tensor name");
    const auto rank = in.get<std::uint8_t>("tensor rank");
    if (rank == 0) throw CheckpointError(Kind::malformed, "tensor '" + name + "' has rank 0");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = in.get<std::uint32_t>("tensor extents");
      if (d == 0) throw CheckpointError(Kind::malformed, "tensor '" + name + "' has a zero extent");
      numel *= d;
    }
    if (numel > in.remaining() / sizeof(float)) {
      throw CheckpointError(Kind::truncated, "file ends inside tensor '" + name + "'");
    }
    std::vector<float> values(numel);
    for (float& v : values) {
      const auto bits = in.get<std::uint32_t>("tensor payload");
      std::memcpy(&v, &bits, sizeof v);
    }
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!in.at_end()) throw CheckpointError(Kind::malformed, "trailing bytes after the last tensor");

  validate_tensors(ckpt, ckpt.run.optimizer_steps == 0);
  return ckpt;
}

}  // namespace emberflow
