#include "ana/weights.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <vector>

namespace ana {
namespace {

constexpr std::array<char, 4> kMagic = {'A', 'N', 'A', 'W'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    if (pos_ + 4 > bytes_.size()) {
      throw WeightsError(WeightsError::Code::corrupt, std::string("weights file truncated reading ") + what);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t soc_tag(SocForm f) {
  switch (f) {
    case SocForm::none: return 0;
    case SocForm::cubic: return 1;
    case SocForm::quadratic: return 2;
    case SocForm::linear: return 3;
  }
  return 0;
}

SocForm soc_from_tag(std::uint32_t tag) {
  switch (tag) {
    case 0: return SocForm::none;
    case 1: return SocForm::cubic;
    case 2: return SocForm::quadratic;
    case 3: return SocForm::linear;
    default: throw WeightsError(WeightsError::Code::corrupt, "unknown SOC form tag " + std::to_string(tag));
  }
}

std::string describe(const NetConfig& c) {
  return "L=" + std::to_string(c.layers) + " d=" + std::to_string(c.dim) + " heads=" +
         std::to_string(c.heads) + " soc=" + std::string(to_string(c.soc_form)) +
         " value=" + (c.value_mode == ValueMode::projected ? "projected" : "raw") +
         " norm=" + (c.context_norm ? "on" : "off");
}

}  // namespace

void save_weights(const ModelParams<float>& params, const std::filesystem::path& path) {
  std::vector<char> out(kMagic.begin(), kMagic.end());
  const NetConfig& c = params.config;
  put_u32(out, kWeightsVersion);
  put_u32(out, static_cast<std::uint32_t>(c.layers));
  put_u32(out, static_cast<std::uint32_t>(c.dim));
  put_u32(out, static_cast<std::uint32_t>(c.heads));
  put_u32(out, soc_tag(c.soc_form));
  put_u32(out, c.value_mode == ValueMode::projected ? 0u : 1u);
  put_u32(out, c.context_norm ? 1u : 0u);
  std::uint32_t count = 0;
  params.for_each([&](const std::string&, const Matrix<float>&) { ++count; });
  put_u32(out, count);
  params.for_each([&](const std::string&, const Matrix<float>& m) {
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (float v : m.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  });
  std::ofstream f(path, std::ios::binary);
  if (!f) throw WeightsError(WeightsError::Code::io, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw WeightsError(WeightsError::Code::io, "failed writing " + path.string());
}

ModelParams<float> load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WeightsError(WeightsError::Code::io, "cannot open " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw WeightsError(WeightsError::Code::corrupt, path.string() + " is not a weights file");
  }
  std::vector<char> body(bytes.begin() + kMagic.size(), bytes.end());
  Reader in(body);
  const std::uint32_t version = in.u32("version");
  if (version != kWeightsVersion) {
    throw WeightsError(WeightsError::Code::version, "weights format version " + std::to_string(version) +
                                                        ", expected " + std::to_string(kWeightsVersion));
  }
  NetConfig cfg;
  cfg.layers = in.u32("layers");
  cfg.dim = in.u32("dim");
  cfg.heads = in.u32("heads");
  cfg.soc_form = soc_from_tag(in.u32("soc form"));
  const std::uint32_t value_tag = in.u32("value mode");
  if (value_tag > 1) throw WeightsError(WeightsError::Code::corrupt, "unknown value mode tag");
  cfg.value_mode = value_tag == 0 ? ValueMode::projected : ValueMode::raw;
  cfg.context_norm = in.u32("norm flag") != 0;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw WeightsError(WeightsError::Code::corrupt, std::string("invalid header: ") + e.what());
  }
  // Shapes only; the values are overwritten below.
  ModelParams<float> params;
  params.config = cfg;
  params.input_w = Matrix<float>(4, cfg.dim);
  params.input_b = Matrix<float>(1, cfg.dim);
  for (std::size_t i = 0; i < cfg.layers; ++i) params.blocks.push_back(BlockParams<float>::zeros(cfg.dim, cfg.heads));
  params.classifier_w = Matrix<float>(cfg.dim, 1);
  params.classifier_b = Matrix<float>(1, 1);

  const std::uint32_t count = in.u32("blob count");
  std::uint32_t expected = 0;
  params.for_each([&](const std::string&, const Matrix<float>&) { ++expected; });
  if (count != expected) {
    throw WeightsError(WeightsError::Code::corrupt, "blob count " + std::to_string(count) + " does not match header (" +
                                                        std::to_string(expected) + ")");
  }
  params.for_each([&](const std::string& name, Matrix<float>& m) {
    const std::uint32_t rows = in.u32("blob shape");
    const std::uint32_t cols = in.u32("blob shape");
    if (rows != m.rows() || cols != m.cols()) {
      throw WeightsError(WeightsError::Code::corrupt, "blob " + name + " has shape " + shape_string(rows, cols) +
                                                          ", expected " + shape_string(m.rows(), m.cols()));
    }
    for (float& v : m.values()) v = std::bit_cast<float>(in.u32(name.c_str()));
  });
  if (!in.at_end()) throw WeightsError(WeightsError::Code::corrupt, "trailing bytes after last blob");
  return params;
}

ModelParams<float> load_weights(const std::filesystem::path& path, const NetConfig& expected) {
  ModelParams<float> params = load_weights(path);
  if (!(params.config == expected)) {
    throw WeightsError(WeightsError::Code::architecture, "weights file has " + describe(params.config) +
                                                             ", expected " + describe(expected));
  }
  return params;
}

}  // namespace ana
