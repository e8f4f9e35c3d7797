#pragma once

// Inception-style 1D residual network for heart-sound classification, plus
// binary weight-file serialization with integrity checks.

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pcgnet/autodiff.hpp"
#include "pcgnet/common.hpp"

namespace pcgnet::model {

using ad::Mode;
using ad::Tape;
using ad::TensorPtr;

enum class HeadKind { SOFTMAX, SIGMOID };

struct NetworkConfig {
  int depth = 10;           // number of inception modules
  int filters = 32;         // filters per branch
  std::array<int, 3> kernel_sizes{10, 20, 40};
  int bottleneck_channels = 32;
  int residual_period = 3;  // shortcut joins every this many modules
  bool use_batchnorm = true;
  int input_channels = 1;
  int num_classes = 2;
  HeadKind head = HeadKind::SOFTMAX;

  // Channels leaving every module: three conv branches plus the pooling branch.
  int module_out_channels() const { return 4 * filters; }

  void validate() const {
    if (depth < 1) throw ConfigInvalid("network depth must be >= 1");
    if (filters < 1) throw ConfigInvalid("filters must be >= 1");
    for (int k : kernel_sizes)
      if (k < 1) throw ConfigInvalid("kernel sizes must be >= 1");
    if (bottleneck_channels < 1) throw ConfigInvalid("bottleneck channels must be >= 1");
    if (residual_period < 1) throw ConfigInvalid("residual period must be >= 1");
    if (input_channels < 1) throw ConfigInvalid("input channels must be >= 1");
    if (num_classes < 2) throw ConfigInvalid("need at least two classes");
    if (head == HeadKind::SIGMOID && num_classes != 2)
      throw ConfigInvalid("sigmoid head requires exactly two classes");
  }

  // Canonical description used for the weight-file fingerprint: two configs
  // produce interchangeable weights iff these strings match.
  std::string canonical_string() const {
    std::ostringstream os;
    os << "depth=" << depth << ";filters=" << filters << ";kernels=" << kernel_sizes[0] << ","
       << kernel_sizes[1] << "," << kernel_sizes[2] << ";bottleneck=" << bottleneck_channels
       << ";period=" << residual_period << ";bn=" << (use_batchnorm ? 1 : 0)
       << ";cin=" << input_channels << ";classes=" << num_classes
       << ";head=" << (head == HeadKind::SOFTMAX ? "softmax" : "sigmoid");
    return os.str();
  }

  std::uint64_t fingerprint() const { return detail::fnv1a64(canonical_string()); }
};

// One named parameter or buffer. Buffers (batch-norm running stats) are saved
// with the weights but excluded from gradient updates.
struct Param {
  std::string name;
  TensorPtr tensor;
  bool trainable = true;
};

struct BatchNormParams {
  TensorPtr gamma, beta, running_mean, running_var;
};

struct InceptionModule {
  bool has_bottleneck = false;
  TensorPtr bottleneck_w;             // [bottleneck, Cin, 1]
  std::array<TensorPtr, 3> branch_w;  // [filters, Cb, K]
  TensorPtr pool_w;                   // [filters, Cin, 1]
  BatchNormParams bn;
};

struct ResidualJoin {
  TensorPtr proj_w;  // [Cout, Cin_anchor, 1]
  BatchNormParams bn;
};

struct Network {
  NetworkConfig config;
  std::vector<InceptionModule> modules;
  std::map<int, ResidualJoin> joins;  // keyed by module index after which they apply
  TensorPtr head_w;                   // [K,F] or [1,F]
  TensorPtr head_b;
};

namespace detail_model {

inline TensorPtr make_param(std::vector<int> shape) { return ad::make_tensor(std::move(shape), true); }

inline BatchNormParams make_bn(int channels) {
  BatchNormParams bn;
  bn.gamma = make_param({channels});
  std::fill(bn.gamma->data.begin(), bn.gamma->data.end(), 1.0);
  bn.beta = make_param({channels});
  bn.running_mean = ad::make_tensor({channels});
  bn.running_var = ad::make_tensor({channels});
  std::fill(bn.running_var->data.begin(), bn.running_var->data.end(), 1.0);
  return bn;
}

inline void init_conv(TensorPtr& w, std::mt19937_64& rng) {
  const std::int64_t fan_in = static_cast<std::int64_t>(w->shape[1]) * w->shape[2];
  ad::he_uniform_init(*w, fan_in, rng);
}

}  // namespace detail_model

inline void init_head(Network& net, std::mt19937_64& rng) {
  const auto& cfg = net.config;
  const int F = cfg.module_out_channels();
  const int out = cfg.head == HeadKind::SOFTMAX ? cfg.num_classes : 1;
  net.head_w = detail_model::make_param({out, F});
  ad::he_uniform_init(*net.head_w, F, rng);
  net.head_b = detail_model::make_param({out});
}

inline Network build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network net;
  net.config = cfg;
  std::mt19937_64 rng(seed);

  int in_ch = cfg.input_channels;
  int anchor_ch = cfg.input_channels;  // channels at the residual anchor point
  const int out_ch = cfg.module_out_channels();

  for (int m = 0; m < cfg.depth; ++m) {
    InceptionModule mod;
    // 1x1 bottleneck compresses multichannel inputs before the wide kernels;
    // a single-channel input has nothing to compress.
    mod.has_bottleneck = in_ch > 1;
    const int branch_in = mod.has_bottleneck ? cfg.bottleneck_channels : in_ch;
    if (mod.has_bottleneck) {
      mod.bottleneck_w = detail_model::make_param({cfg.bottleneck_channels, in_ch, 1});
      detail_model::init_conv(mod.bottleneck_w, rng);
    }
    for (int i = 0; i < 3; ++i) {
      mod.branch_w[i] = detail_model::make_param({cfg.filters, branch_in, cfg.kernel_sizes[i]});
      detail_model::init_conv(mod.branch_w[i], rng);
    }
    mod.pool_w = detail_model::make_param({cfg.filters, in_ch, 1});
    detail_model::init_conv(mod.pool_w, rng);
    mod.bn = detail_model::make_bn(out_ch);
    net.modules.push_back(std::move(mod));

    if ((m + 1) % cfg.residual_period == 0) {
      ResidualJoin join;
      join.proj_w = detail_model::make_param({out_ch, anchor_ch, 1});
      detail_model::init_conv(join.proj_w, rng);
      join.bn = detail_model::make_bn(out_ch);
      net.joins.emplace(m, std::move(join));
      anchor_ch = out_ch;
    }
    in_ch = out_ch;
  }

  init_head(net, rng);
  return net;
}

// Drops the classification head and installs a freshly initialized one for a
// new target task; the feature extractor keeps its weights.
inline void replace_head(Network& net, int num_classes, HeadKind head, std::uint64_t seed) {
  NetworkConfig cfg = net.config;
  cfg.num_classes = num_classes;
  cfg.head = head;
  cfg.validate();
  net.config = cfg;
  std::mt19937_64 rng(seed);
  init_head(net, rng);
}

namespace detail_model {

inline TensorPtr apply_bn(Tape* tape, const TensorPtr& x, const BatchNormParams& bn, Mode mode,
                          bool enabled) {
  if (!enabled) return x;
  return ad::batchnorm1d(tape, x, bn.gamma, bn.beta, bn.running_mean, bn.running_var, mode);
}

}  // namespace detail_model

// Full forward pass: x is [B, input_channels, L]; returns class probabilities
// [B, num_classes] (the sigmoid head is expanded to {1-p, p}).
inline TensorPtr forward(Tape* tape, Network& net, const TensorPtr& x, Mode mode) {
  const auto& cfg = net.config;
  ad::detail::require(x->shape.size() == 3 && x->shape[1] == cfg.input_channels,
                      "forward input must be [B,input_channels,L]");

  TensorPtr h = x;
  TensorPtr anchor = x;
  for (int m = 0; m < cfg.depth; ++m) {
    auto& mod = net.modules[m];
    TensorPtr branch_in = mod.has_bottleneck ? ad::conv1d(tape, h, mod.bottleneck_w) : h;
    std::vector<TensorPtr> branches;
    branches.reserve(4);
    for (int i = 0; i < 3; ++i) branches.push_back(ad::conv1d(tape, branch_in, mod.branch_w[i]));
    branches.push_back(ad::conv1d(tape, ad::maxpool1d(tape, h, 3), mod.pool_w));
    TensorPtr cat = ad::concat_channels(tape, branches);
    h = ad::relu(tape, detail_model::apply_bn(tape, cat, mod.bn, mode, cfg.use_batchnorm));

    auto join = net.joins.find(m);
    if (join != net.joins.end()) {
      TensorPtr shortcut = ad::conv1d(tape, anchor, join->second.proj_w);
      shortcut = detail_model::apply_bn(tape, shortcut, join->second.bn, mode, cfg.use_batchnorm);
      h = ad::relu(tape, ad::add(tape, h, shortcut));
      anchor = h;
    }
  }

  TensorPtr pooled = ad::global_avg_pool(tape, h);
  TensorPtr logits = ad::dense(tape, pooled, net.head_w, net.head_b);
  if (cfg.head == HeadKind::SOFTMAX) return ad::softmax(tape, logits);
  return ad::binary_class_probs(tape, ad::sigmoid(tape, logits));
}

// Stable name->tensor listing. Buffer entries carry trainable=false.
inline std::vector<Param> named_parameters(Network& net) {
  std::vector<Param> out;
  auto add_bn = [&](const std::string& prefix, const BatchNormParams& bn) {
    out.push_back({prefix + ".gamma", bn.gamma, true});
    out.push_back({prefix + ".beta", bn.beta, true});
    out.push_back({prefix + ".running_mean", bn.running_mean, false});
    out.push_back({prefix + ".running_var", bn.running_var, false});
  };
  for (std::size_t m = 0; m < net.modules.size(); ++m) {
    const std::string p = "module" + std::to_string(m);
    auto& mod = net.modules[m];
    if (mod.has_bottleneck) out.push_back({p + ".bottleneck", mod.bottleneck_w, true});
    for (int i = 0; i < 3; ++i)
      out.push_back({p + ".branch" + std::to_string(i), mod.branch_w[i], true});
    out.push_back({p + ".pool_proj", mod.pool_w, true});
    if (net.config.use_batchnorm) add_bn(p + ".bn", mod.bn);
  }
  for (auto& [idx, join] : net.joins) {
    const std::string p = "join" + std::to_string(idx);
    out.push_back({p + ".proj", join.proj_w, true});
    if (net.config.use_batchnorm) add_bn(p + ".bn", join.bn);
  }
  out.push_back({"head.weight", net.head_w, true});
  out.push_back({"head.bias", net.head_b, true});
  return out;
}

inline std::vector<Param> trainable_parameters(Network& net) {
  std::vector<Param> all = named_parameters(net);
  std::vector<Param> out;
  for (auto& p : all)
    if (p.trainable) out.push_back(p);
  return out;
}

inline std::int64_t parameter_count(Network& net, bool trainable_only = true) {
  std::int64_t n = 0;
  for (const auto& p : named_parameters(net))
    if (p.trainable || !trainable_only) n += p.tensor->size();
  return n;
}

// --- weight file ------------------------------------------------------------
//
// Layout (all integers little-endian):
//   "PCGW" | format_version u32 | fingerprint u64 | tensor_count u32
//   per tensor: name_len u32 | name bytes | rank u32 | dims u32*rank
//               | data f32*count | record_crc u32
//   file_crc u32  (crc32 of everything before it)

constexpr std::uint32_t kWeightFormatVersion = 1;
constexpr char kWeightMagic[4] = {'P', 'C', 'G', 'W'};

namespace detail_model {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, std::size_t pos = 0) : buf_(buf), pos_(pos) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw CorruptFile("weight file truncated");
  }
  const std::string& buf_;
  std::size_t pos_;
};

}  // namespace detail_model

inline void save_weights(Network& net, const std::string& path) {
  auto params = named_parameters(net);
  std::string buf;
  buf.append(kWeightMagic, 4);
  detail_model::put_u32(buf, kWeightFormatVersion);
  detail_model::put_u64(buf, net.config.fingerprint());
  detail_model::put_u32(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    std::string rec;
    detail_model::put_u32(rec, static_cast<std::uint32_t>(p.name.size()));
    rec += p.name;
    detail_model::put_u32(rec, static_cast<std::uint32_t>(p.tensor->shape.size()));
    for (int d : p.tensor->shape) detail_model::put_u32(rec, static_cast<std::uint32_t>(d));
    for (double v : p.tensor->data) detail_model::put_f32(rec, static_cast<float>(v));
    const std::uint32_t rec_crc = detail::crc32(rec.data(), rec.size());
    buf += rec;
    detail_model::put_u32(buf, rec_crc);
  }
  const std::uint32_t file_crc = detail::crc32(buf.data(), buf.size());
  detail_model::put_u32(buf, file_crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open weight file for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing weight file: " + path);
}

inline void load_weights(Network& net, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weight file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 + 4 + 8 + 4 + 4) throw CorruptFile("weight file too small");
  if (std::memcmp(buf.data(), kWeightMagic, 4) != 0) throw CorruptFile("bad weight file magic");

  // whole-file checksum first: everything before the trailing u32
  {
    detail_model::ByteReader tail(buf, buf.size() - 4);
    const std::uint32_t stored = tail.u32();
    const std::uint32_t actual = detail::crc32(buf.data(), buf.size() - 4);
    if (stored != actual) throw CorruptFile("weight file checksum mismatch");
  }

  detail_model::ByteReader r(buf, 4);
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion)
    throw CorruptFile("unsupported weight format version " + std::to_string(version));
  const std::uint64_t fp = r.u64();
  if (fp != net.config.fingerprint())
    throw FingerprintMismatch("weight file was written for a different architecture");
  const std::uint32_t count = r.u32();

  auto params = named_parameters(net);
  if (count != params.size()) throw CorruptFile("weight file tensor count mismatch");

  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t rec_start = r.pos();
    const std::uint32_t name_len = r.u32();
    if (name_len > 4096) throw CorruptFile("implausible tensor name length");
    const std::string name = r.bytes(name_len);
    if (name != params[i].name)
      throw CorruptFile("unexpected tensor '" + name + "' (wanted '" + params[i].name + "')");
    const std::uint32_t rank = r.u32();
    if (rank != params[i].tensor->shape.size()) throw CorruptFile("tensor rank mismatch for " + name);
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (static_cast<int>(dim) != params[i].tensor->shape[d])
        throw CorruptFile("tensor shape mismatch for " + name);
      n *= dim;
    }
    for (std::int64_t j = 0; j < n; ++j) params[i].tensor->data[static_cast<std::size_t>(j)] = r.f32();
    const std::size_t rec_end = r.pos();
    const std::uint32_t stored = r.u32();
    const std::uint32_t actual = detail::crc32(buf.data() + rec_start, rec_end - rec_start);
    if (stored != actual) throw CorruptFile("record checksum mismatch for " + name);
  }
  if (r.remaining() != 4) throw CorruptFile("trailing bytes in weight file");
}

// Deep-copies every tensor's values (used by early-stopping snapshots).
inline std::vector<std::vector<double>> snapshot_weights(Network& net) {
  std::vector<std::vector<double>> snap;
  for (const auto& p : named_parameters(net)) snap.push_back(p.tensor->data);
  return snap;
}

inline void restore_weights(Network& net, const std::vector<std::vector<double>>& snap) {
  auto params = named_parameters(net);
  if (snap.size() != params.size()) throw ShapeMismatch("snapshot does not match network");
  for (std::size_t i = 0; i < snap.size(); ++i) {
    if (snap[i].size() != params[i].tensor->data.size())
      throw ShapeMismatch("snapshot tensor size mismatch");
    params[i].tensor->data = snap[i];
  }
}

}  // namespace pcgnet::model
