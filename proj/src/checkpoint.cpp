#include "faithtag/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

namespace faithtag {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'T', 'A', 'G', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json dims_json(const nn::TransformerDims& d) {
  return {{"encoder_layers", d.encoder_layers}, {"decoder_layers", d.decoder_layers}, {"d_model", d.d_model},
          {"heads", d.heads}, {"d_ff", d.d_ff}, {"max_len", d.max_len}};
}

nn::TransformerDims dims_from(const json& j) {
  nn::TransformerDims d;
  d.encoder_layers = j.at("encoder_layers").get<int>();
  d.decoder_layers = j.at("decoder_layers").get<int>();
  d.d_model = j.at("d_model").get<int>();
  d.heads = j.at("heads").get<int>();
  d.d_ff = j.at("d_ff").get<int>();
  d.max_len = j.at("max_len").get<int>();
  return d;
}

template <typename Scalar>
void write_file(const std::filesystem::path& path, json header, nn::ParameterRefs<Scalar> params) {
  json table = json::array();
  for (auto* p : params) table.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  header["tensors"] = std::move(table);
  header["dtype"] = "float64";
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t length = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto* p : params) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> v = p->value.template cast<double>();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

struct RawCheckpoint {
  json header;
  std::ifstream stream;
};

RawCheckpoint open_file(const std::filesystem::path& path) {
  RawCheckpoint raw{json(), std::ifstream(path, std::ios::binary)};
  auto& in = raw.stream;
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError(path.string() + " is not a faithtag checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  if (length > (std::uint64_t{1} << 32)) throw CheckpointError("checkpoint header is implausibly large");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw CheckpointError("truncated checkpoint header");
  try {
    raw.header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  return raw;
}

template <typename Scalar>
void read_tensors(RawCheckpoint& raw, nn::ParameterRefs<Scalar> params) {
  const auto& table = raw.header.at("tensors");
  if (table.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(table.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    const auto& entry = table[i];
    if (entry.at("name").get<std::string>() != p->name || entry.at("rows").get<Eigen::Index>() != p->value.rows() ||
        entry.at("cols").get<Eigen::Index>() != p->value.cols()) {
      throw CheckpointError("tensor " + std::to_string(i) + " (" + entry.at("name").get<std::string>() +
                            ") does not match " + p->name);
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> v(p->value.rows(), p->value.cols());
    raw.stream.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!raw.stream) throw CheckpointError("truncated tensor data for " + p->name);
    p->value = v.template cast<Scalar>();
    p->zero_grad();
  }
  if (raw.stream.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after tensor data");
}

void expect_kind(const json& header, const char* kind) {
  if (header.value("kind", "") != kind) {
    throw CheckpointError(std::string("expected a ") + kind + " checkpoint, found '" + header.value("kind", "") + "'");
  }
}

json config_or_empty(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    throw CheckpointError("checkpoint config is not valid JSON");
  }
}

}  // namespace

template <typename Scalar>
void save_joint_checkpoint(const std::filesystem::path& path, joint::JointModel<Scalar>& model,
                           const std::string& config_json) {
  if (!model.loaded()) throw ModelNotTrained("nothing to save");
  json header = {{"kind", "joint"},
                 {"dims", dims_json(model.dims())},
                 {"vocab", model.vocab().tokens()},
                 {"config", config_or_empty(config_json)}};
  write_file(path, std::move(header), model.parameters());
}

template <typename Scalar>
joint::JointModel<Scalar> load_joint_checkpoint(const std::filesystem::path& path) {
  auto raw = open_file(path);
  try {
    expect_kind(raw.header, "joint");
    joint::JointModel<Scalar> model(Vocab::from_tokens(raw.header.at("vocab").get<std::vector<std::string>>()),
                                    dims_from(raw.header.at("dims")), 0);
    read_tensors(raw, model.parameters());
    return model;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
}

template <typename Scalar>
void save_proxy_checkpoint(const std::filesystem::path& path, proxy::ProxyModel<Scalar>& model,
                           const std::string& config_json) {
  if (!model.loaded()) throw ModelNotTrained("nothing to save");
  json header = {{"kind", "proxy"},
                 {"dims", dims_json(model.dims())},
                 {"vocab", model.vocab().tokens()},
                 {"label_space", model.label_space() == proxy::LabelSpace::Binary ? "binary" : "multiclass"},
                 {"mode", std::string(proxy::mode_name(model.mode()))},
                 {"config", config_or_empty(config_json)}};
  write_file(path, std::move(header), model.parameters());
}

template <typename Scalar>
proxy::ProxyModel<Scalar> load_proxy_checkpoint(const std::filesystem::path& path) {
  auto raw = open_file(path);
  try {
    expect_kind(raw.header, "proxy");
    const auto space = raw.header.at("label_space").get<std::string>() == "binary" ? proxy::LabelSpace::Binary
                                                                                   : proxy::LabelSpace::Multiclass;
    proxy::ProxyModel<Scalar> model(Vocab::from_tokens(raw.header.at("vocab").get<std::vector<std::string>>()),
                                    dims_from(raw.header.at("dims")), space,
                                    proxy::parse_mode(raw.header.at("mode").get<std::string>()), 0);
    read_tensors(raw, model.parameters());
    return model;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  auto raw = open_file(path);
  const std::string kind = raw.header.value("kind", "");
  if (kind != "joint" && kind != "proxy") throw CheckpointError("unknown checkpoint kind '" + kind + "'");
  return kind;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<joint::LossRecord>& steps) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "step,token_loss,tag_loss,joint_loss\n";
  for (const auto& s : steps) out << s.step << ',' << s.token_loss << ',' << s.tag_loss << ',' << s.joint_loss << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

template void save_joint_checkpoint<double>(const std::filesystem::path&, joint::JointModel<double>&,
                                            const std::string&);
template void save_joint_checkpoint<float>(const std::filesystem::path&, joint::JointModel<float>&,
                                           const std::string&);
template joint::JointModel<double> load_joint_checkpoint<double>(const std::filesystem::path&);
template joint::JointModel<float> load_joint_checkpoint<float>(const std::filesystem::path&);
template void save_proxy_checkpoint<double>(const std::filesystem::path&, proxy::ProxyModel<double>&,
                                            const std::string&);
template void save_proxy_checkpoint<float>(const std::filesystem::path&, proxy::ProxyModel<float>&,
                                           const std::string&);
template proxy::ProxyModel<double> load_proxy_checkpoint<double>(const std::filesystem::path&);
template proxy::ProxyModel<float> load_proxy_checkpoint<float>(const std::filesystem::path&);

}  // namespace faithtag
