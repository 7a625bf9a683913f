#include "ecgr/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "ecgr/error.hpp"

namespace ecgr {

namespace {

constexpr char kMagic[4] = {'E', 'C', 'G', 'R'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      fail(ErrorKind::kCorruptFile, std::string("weights file truncated while reading ") + what);
    }
  }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint32_t> dims_of(const ad::Shape& shape) {
  return {shape.begin(), shape.end()};
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, std::span<const TensorBlob> tensors) {
  std::string out(kMagic, 4);
  put_u32(out, kWeightsFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const TensorBlob& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) put_u32(out, d);
    for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::kIo, "write failed: " + path.string());
}

std::vector<TensorBlob> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot read " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}));
  if (r.remaining() < 4) fail(ErrorKind::kCorruptFile, "weights file too short");
  if (r.str(4, "magic") != std::string(kMagic, 4)) {
    fail(ErrorKind::kBadMagic, path.string() + " is not an ECGR weights file");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kWeightsFormatVersion) {
    fail(ErrorKind::kVersionMismatch, "weights format version " + std::to_string(version) +
                                          ", expected " + std::to_string(kWeightsFormatVersion));
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<TensorBlob> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorBlob t;
    t.name = r.str(r.u32("name length"), "tensor name");
    const std::uint32_t rank = r.u32("rank");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.u32("dims"));
      n *= t.dims.back();
    }
    r.need(n * 4, "tensor data");
    t.data.resize(n);
    for (auto& v : t.data) v = std::bit_cast<float>(r.u32("tensor data"));
    out.push_back(std::move(t));
  }
  if (r.remaining() != 0) fail(ErrorKind::kCorruptFile, "trailing bytes after the last tensor");
  return out;
}

std::vector<TensorBlob> model_blobs(const Model<float>& model) {
  std::vector<TensorBlob> out;
  for (const auto& nt : model.tensors()) {
    const auto data = nt.tensor.data();
    out.push_back({nt.name, dims_of(nt.tensor.shape()), {data.begin(), data.end()}});
  }
  return out;
}

void assign_blobs(Model<float>& model, std::span<const TensorBlob> blobs, bool allow_extra) {
  std::map<std::string, const TensorBlob*> by_name;
  for (const TensorBlob& b : blobs) by_name[b.name] = &b;
  std::size_t used = 0;
  for (auto& nt : model.tensors()) {
    const auto it = by_name.find(nt.name);
    if (it == by_name.end()) fail(ErrorKind::kShapeMismatch, "tensor '" + nt.name + "' missing");
    if (it->second->dims != dims_of(nt.tensor.shape())) {
      fail(ErrorKind::kShapeMismatch, "tensor '" + nt.name + "' has shape " +
                                          ad::shape_str(ad::Shape(it->second->dims.begin(),
                                                                  it->second->dims.end())) +
                                          ", model expects " + ad::shape_str(nt.tensor.shape()));
    }
    std::copy(it->second->data.begin(), it->second->data.end(), nt.tensor.data().begin());
    ++used;
  }
  if (!allow_extra && used != by_name.size()) {
    for (const TensorBlob& b : blobs) {
      const bool known = std::any_of(model.tensors().begin(), model.tensors().end(),
                                     [&](const auto& nt) { return nt.name == b.name; });
      if (!known) fail(ErrorKind::kShapeMismatch, "tensor '" + b.name + "' not part of the model");
    }
  }
}

void save_weights(const Model<float>& model, const std::filesystem::path& path) {
  write_tensor_file(path, model_blobs(model));
}

Model<float> load_weights(const std::filesystem::path& path, const ModelConfig& config) {
  const auto blobs = read_tensor_file(path);
  Model<float> model = Model<float>::build(config, 0);
  assign_blobs(model, blobs);
  return model;
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"enc2d_channels", c.enc2d_channels},
          {"enc1d_channels_per_lead", c.enc1d_channels_per_lead},
          {"leaky_slope", c.leaky_slope},
          {"dropout_p", c.dropout_p},
          {"transition_kh", c.transition_kh},
          {"transition_kw", c.transition_kw},
          {"time_stride", c.time_stride},
          {"num_leads", c.num_leads},
          {"num_samples", c.num_samples},
          {"share_1d_weights_across_leads", c.share_1d_weights_across_leads}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    j.at("enc2d_channels").get_to(c.enc2d_channels);
    j.at("enc1d_channels_per_lead").get_to(c.enc1d_channels_per_lead);
    j.at("leaky_slope").get_to(c.leaky_slope);
    j.at("dropout_p").get_to(c.dropout_p);
    j.at("transition_kh").get_to(c.transition_kh);
    j.at("transition_kw").get_to(c.transition_kw);
    j.at("time_stride").get_to(c.time_stride);
    j.at("num_leads").get_to(c.num_leads);
    j.at("num_samples").get_to(c.num_samples);
    j.at("share_1d_weights_across_leads").get_to(c.share_1d_weights_across_leads);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace ecgr
