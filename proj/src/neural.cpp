#include "cityfm/neural.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "cityfm/kernels.hpp"

namespace cityfm {

// ---------------------------------------------------------------------------
// Vocabulary

namespace {

// Walks the token structure of serialized tag strings: bracketed specials and
// lowercased alphanumeric runs; everything else is a separator.
template <typename WordFn, typename SpecialFn>
void scan_tokens(std::string_view text, WordFn&& on_word, SpecialFn&& on_special) {
  const auto lower = to_lower(text);
  std::size_t i = 0;
  while (i < lower.size()) {
    const char c = lower[i];
    if (c == '[') {
      if (lower.compare(i, 5, "[cls]") == 0) {
        on_special(Vocabulary::kCls);
        i += 5;
        continue;
      }
      if (lower.compare(i, 5, "[sep]") == 0) {
        on_special(Vocabulary::kSep);
        i += 5;
        continue;
      }
      ++i;
      continue;
    }
    if (std::isalnum(static_cast<unsigned char>(c))) {
      const std::size_t start = i;
      while (i < lower.size() && std::isalnum(static_cast<unsigned char>(lower[i]))) ++i;
      on_word(lower.substr(start, i - start));
      continue;
    }
    ++i;
  }
}

}  // namespace

Vocabulary build_vocab(const Corpus& corpus) {
  std::map<std::string, std::int64_t> freq;
  const auto count = [&freq](const std::string& text) {
    scan_tokens(text, [&freq](std::string_view w) { ++freq[std::string(w)]; }, [](int) {});
  };
  bool any_tagged = false;
  for (const auto& [id, e] : corpus.entities) {
    if (!e.has_tags()) continue;
    any_tagged = true;
    count(serialize_tags(e));
  }
  if (!any_tagged) throw Error("build_vocab: corpus has no tagged entities");
  count(serialize_tags(empty_node()));

  Vocabulary v;
  v.id_to_token = {"[CLS]", "[SEP]", "[UNK]"};
  for (const auto& [tok, n] : freq) {
    // the empty-node tokens stay in even though the empty node occurs once
    if (n >= 2 || tok == "context" || tok == "none") {
      v.token_to_id[tok] = static_cast<int>(v.id_to_token.size());
      v.id_to_token.push_back(tok);
    }
  }
  return v;
}

std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> ids;
  scan_tokens(
      text,
      [&](std::string_view w) {
        const auto it = vocab.token_to_id.find(std::string(w));
        ids.push_back(it == vocab.token_to_id.end() ? Vocabulary::kUnk : it->second);
      },
      [&](int special) { ids.push_back(special); });
  return ids;
}

// ---------------------------------------------------------------------------
// ParameterStore

std::size_t ParameterStore::add(const std::string& name, std::vector<std::size_t> shape) {
  if (by_name_.count(name)) throw Error("duplicate tensor " + name);
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  Entry e{name, std::move(shape), values_.size(), n};
  by_name_[name] = entries_.size();
  entries_.push_back(std::move(e));
  values_.resize(values_.size() + n, 0.0);
  grads_.resize(values_.size(), 0.0);
  return entries_.back().offset;
}

const ParameterStore::Entry& ParameterStore::entry(const std::string& name) const {
  const auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("unknown tensor " + name);
  return entries_[it->second];
}

double* ParameterStore::values(const std::string& name) {
  return values_.data() + entry(name).offset;
}

const double* ParameterStore::values(const std::string& name) const {
  return values_.data() + entry(name).offset;
}

double* ParameterStore::grads(const std::string& name) {
  return grads_.data() + entry(name).offset;
}

const std::string& ParameterStore::owner(std::size_t flat_index) const {
  for (const Entry& e : entries_) {
    if (flat_index >= e.offset && flat_index < e.offset + e.size) return e.name;
  }
  throw Error("flat index out of range");
}

void ParameterStore::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

// ---------------------------------------------------------------------------
// Model

namespace {

// Registers one tensor and, when rng is present, fills it with
// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
void reg_tensor(ParameterStore& p, const std::string& name, std::vector<std::size_t> shape,
                std::size_t fan_in, Rng* rng) {
  p.add(name, std::move(shape));
  if (!rng) return;
  const ParameterStore::Entry& e = p.entry(name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  double* data = p.values(name);
  for (std::size_t i = 0; i < e.size; ++i) data[i] = rng->uniform(-bound, bound);
}

void register_mlp(ParameterStore& p, const std::string& prefix, std::size_t in_dim,
                  std::size_t d, Rng* rng) {
  reg_tensor(p, prefix + ".w1", {d, in_dim}, in_dim, rng);
  reg_tensor(p, prefix + ".b1", {d}, in_dim, rng);
  reg_tensor(p, prefix + ".w2", {d, d}, d, rng);
  reg_tensor(p, prefix + ".b2", {d}, d, rng);
}

void mlp_forward(const ParameterStore& p, const std::string& prefix, const double* x,
                 int in_dim, int d, MlpTrace& t) {
  t.x.assign(x, x + in_dim);
  std::vector<double> z1(d);
  kernels::dense_forward(p.values(prefix + ".w1"), p.values(prefix + ".b1"), x, z1.data(), 1,
                         in_dim, d);
  t.a1.resize(d);
  for (int i = 0; i < d; ++i) t.a1[i] = std::tanh(z1[i]);
  t.out.resize(d);
  kernels::dense_forward(p.values(prefix + ".w2"), p.values(prefix + ".b2"), t.a1.data(),
                         t.out.data(), 1, d, d);
}

// dx may be null when the input gradient is not needed.
void mlp_backward(ParameterStore& p, const std::string& prefix, const MlpTrace& t,
                  const double* dout, double* dx, int in_dim, int d) {
  std::vector<double> da1(d);
  kernels::dense_backward(p.values(prefix + ".w2"), t.a1.data(), dout, da1.data(),
                          p.grads(prefix + ".w2"), p.grads(prefix + ".b2"), 1, d, d);
  for (int i = 0; i < d; ++i) da1[i] *= 1.0 - t.a1[i] * t.a1[i];
  kernels::dense_backward(p.values(prefix + ".w1"), t.x.data(), da1.data(), dx,
                          p.grads(prefix + ".w1"), p.grads(prefix + ".b1"), 1, in_dim, d);
}

}  // namespace

namespace {

void build_model_tensors(ParameterStore& params, const ModelConfig& config, Rng* rng) {
  if (config.vocab_size < 3) throw Error("model: vocab size must cover the specials");
  if (config.embed_dim < 1) throw Error("model: embed_dim must be positive");
  if (config.grid_size < 2) throw Error("model: grid_size too small");
  const auto V = static_cast<std::size_t>(config.vocab_size);
  const auto D = static_cast<std::size_t>(config.embed_dim);

  reg_tensor(params, "text.embed", {V, D}, 1, rng);
  register_mlp(params, "text.mlp", D, D, rng);

  std::size_t ic = 1;
  for (int block = 0; block < 4; ++block) {
    const auto oc = static_cast<std::size_t>(Model::kConvChannels[block]);
    const std::string w = "vision.conv" + std::to_string(block + 1);
    reg_tensor(params, w + ".w", {oc, ic, 3, 3}, ic * 9, rng);
    reg_tensor(params, w + ".b", {oc}, ic * 9, rng);
    ic = oc;
  }
  const auto C = static_cast<std::size_t>(Model::kConvChannels[3]);
  reg_tensor(params, "vision.dense.w", {D, C}, C, rng);
  reg_tensor(params, "vision.dense.b", {D}, C, rng);
  register_mlp(params, "vision.mlp", D, D, rng);

  register_mlp(params, "area.mlp", 1, D, rng);
  register_mlp(params, "fuse.mlp", D, D, rng);
}

}  // namespace

Model::Model(ModelConfig config, Rng& rng) : config_(config) {
  build_model_tensors(params_, config_, &rng);
}

Model::Model(ModelConfig config) : config_(config) {
  build_model_tensors(params_, config_, nullptr);
}

TextTrace Model::text_forward(const std::vector<int>& tokens) const {
  if (tokens.empty()) throw Error("text_encode: empty token sequence");
  const int D = config_.embed_dim;
  TextTrace t;
  t.tokens = tokens;
  t.pooled.assign(D, 0.0);
  const double* embed = params_.values("text.embed");
  for (int id : tokens) {
    if (id < 0 || id >= config_.vocab_size) {
      throw Error("text_encode: token id " + std::to_string(id) + " out of range");
    }
    const double* row = embed + static_cast<std::size_t>(id) * D;
    for (int i = 0; i < D; ++i) t.pooled[i] += row[i];
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (double& v : t.pooled) v *= inv;
  mlp_forward(params_, "text.mlp", t.pooled.data(), D, D, t.mlp);
  return t;
}

void Model::text_backward(const TextTrace& trace, const double* dout) {
  const int D = config_.embed_dim;
  std::vector<double> dpooled(D);
  mlp_backward(params_, "text.mlp", trace.mlp, dout, dpooled.data(), D, D);
  double* dembed = params_.grads("text.embed");
  const double inv = 1.0 / static_cast<double>(trace.tokens.size());
  for (int id : trace.tokens) {
    double* row = dembed + static_cast<std::size_t>(id) * D;
    for (int i = 0; i < D; ++i) row[i] += dpooled[i] * inv;
  }
}

VisionTrace Model::vision_forward(const RasterGrid& grid) const {
  const int G = config_.grid_size;
  if (grid.width != G || grid.height != G) {
    throw Error("vision_encode: grid is " + std::to_string(grid.width) + "x" +
                std::to_string(grid.height) + ", expected " + std::to_string(G));
  }
  const int D = config_.embed_dim;
  VisionTrace t;
  t.input.resize(grid.bits.size());
  for (std::size_t i = 0; i < grid.bits.size(); ++i) t.input[i] = grid.bits[i] ? 1.0 : 0.0;

  t.convs.resize(4);
  const double* in = t.input.data();
  int ic = 1, extent = G;
  for (int block = 0; block < 4; ++block) {
    const int oc = kConvChannels[block];
    const int out_extent = kernels::conv_out_extent(extent);
    const std::string w = "vision.conv" + std::to_string(block + 1);
    auto& act = t.convs[block];
    act.resize(static_cast<std::size_t>(oc) * out_extent * out_extent);
    kernels::conv2d_forward(in, params_.values(w + ".w"), params_.values(w + ".b"), act.data(),
                            ic, extent, extent, oc);
    for (double& v : act) v = std::tanh(v);
    in = act.data();
    ic = oc;
    extent = out_extent;
  }

  const int C = kConvChannels[3];
  t.pooled.assign(C, 0.0);
  const double inv = 1.0 / static_cast<double>(extent * extent);
  for (int c = 0; c < C; ++c) {
    const double* plane = t.convs[3].data() + static_cast<std::size_t>(c) * extent * extent;
    double sum = 0.0;
    for (int i = 0; i < extent * extent; ++i) sum += plane[i];
    t.pooled[c] = sum * inv;
  }
  t.dense.resize(D);
  kernels::dense_forward(params_.values("vision.dense.w"), params_.values("vision.dense.b"),
                         t.pooled.data(), t.dense.data(), 1, C, D);
  mlp_forward(params_, "vision.mlp", t.dense.data(), D, D, t.mlp);
  return t;
}

void Model::vision_backward(const VisionTrace& trace, const double* dout) {
  const int G = config_.grid_size;
  const int D = config_.embed_dim;
  const int C = kConvChannels[3];

  std::vector<double> ddense(D);
  mlp_backward(params_, "vision.mlp", trace.mlp, dout, ddense.data(), D, D);
  std::vector<double> dpooled(C);
  kernels::dense_backward(params_.values("vision.dense.w"), trace.pooled.data(), ddense.data(),
                          dpooled.data(), params_.grads("vision.dense.w"),
                          params_.grads("vision.dense.b"), 1, C, D);

  // replay the forward extents
  int extents[5];
  extents[0] = G;
  for (int i = 0; i < 4; ++i) extents[i + 1] = kernels::conv_out_extent(extents[i]);

  const int last = extents[4];
  std::vector<double> dact(static_cast<std::size_t>(C) * last * last);
  const double inv = 1.0 / static_cast<double>(last * last);
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < last * last; ++i) {
      dact[static_cast<std::size_t>(c) * last * last + i] = dpooled[c] * inv;
    }
  }

  for (int block = 3; block >= 0; --block) {
    const int oc = kConvChannels[block];
    const int ic = block == 0 ? 1 : kConvChannels[block - 1];
    const int in_extent = extents[block];
    const std::string w = "vision.conv" + std::to_string(block + 1);
    const auto& act = trace.convs[block];
    // through tanh
    std::vector<double> dz(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) dz[i] = dact[i] * (1.0 - act[i] * act[i]);
    const double* in = block == 0 ? trace.input.data() : trace.convs[block - 1].data();
    kernels::conv2d_backward_filter(in, dz.data(), params_.grads(w + ".w"),
                                    params_.grads(w + ".b"), ic, in_extent, in_extent, oc);
    if (block > 0) {
      dact.assign(static_cast<std::size_t>(ic) * in_extent * in_extent, 0.0);
      kernels::conv2d_backward_data(params_.values(w + ".w"), dz.data(), dact.data(), ic,
                                    in_extent, in_extent, oc);
    }
  }
}

AreaTrace Model::area_forward(double area_m2, double max_a) const {
  if (!(max_a > 0)) throw Error("area_encode: max_a must be positive");
  AreaTrace t;
  t.x = area_m2 / max_a;
  mlp_forward(params_, "area.mlp", &t.x, 1, config_.embed_dim, t.mlp);
  return t;
}

void Model::area_backward(const AreaTrace& trace, const double* dout) {
  mlp_backward(params_, "area.mlp", trace.mlp, dout, nullptr, 1, config_.embed_dim);
}

FuseTrace Model::fuse_forward(const double* s, const double* a) const {
  const int D = config_.embed_dim;
  std::vector<double> mean(D);
  for (int i = 0; i < D; ++i) mean[i] = 0.5 * (s[i] + a[i]);
  FuseTrace t;
  mlp_forward(params_, "fuse.mlp", mean.data(), D, D, t.mlp);
  return t;
}

void Model::fuse_backward(const FuseTrace& trace, const double* dout, double* ds, double* da) {
  const int D = config_.embed_dim;
  std::vector<double> dmean(D);
  mlp_backward(params_, "fuse.mlp", trace.mlp, dout, dmean.data(), D, D);
  for (int i = 0; i < D; ++i) {
    if (ds) ds[i] = 0.5 * dmean[i];
    if (da) da[i] = 0.5 * dmean[i];
  }
}

std::vector<double> text_encode(const Model& model, const std::vector<int>& tokens) {
  return model.text_forward(tokens).mlp.out;
}

std::vector<double> vision_encode(const Model& model, const RasterGrid& grid) {
  return model.vision_forward(grid).mlp.out;
}

std::vector<double> area_encode(const Model& model, double area_m2, double max_a) {
  return model.area_forward(area_m2, max_a).mlp.out;
}

std::vector<double> fuse_visual(const Model& model, const std::vector<double>& s,
                                const std::vector<double>& a) {
  if (s.size() != a.size() || static_cast<int>(s.size()) != model.config().embed_dim) {
    throw Error("fuse_visual: dimension mismatch");
  }
  return model.fuse_forward(s.data(), a.data()).mlp.out;
}

// ---------------------------------------------------------------------------
// Optimizer

AdamOptimizer::AdamOptimizer(std::size_t n_params, double beta1, double beta2, double eps)
    : m_(n_params, 0.0), v_(n_params, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ParameterStore& params, double lr) {
  if (params.size() != m_.size()) throw Error("optimizer: parameter count mismatch");
  auto& theta = params.flat_values();
  const auto& g = params.flat_grads();
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw Error("optimizer: non-finite gradient in tensor " + params.owner(i));
    }
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
  }
}

// ---------------------------------------------------------------------------
// Gradient verification

double grad_check(ParameterStore& params, const std::function<double()>& loss_and_grad,
                  Rng& rng, double h, int min_samples) {
  const double base = loss_and_grad();
  if (!std::isfinite(base)) throw Error("grad_check: non-finite loss");
  const std::vector<double> analytic = params.flat_grads();

  const std::size_t n = params.size();
  const std::size_t k = std::min(n, static_cast<std::size_t>(min_samples));
  const std::vector<std::size_t> picks = rng.sample_without_replacement(n, k);

  auto& theta = params.flat_values();
  double max_rel = 0.0;
  for (std::size_t i : picks) {
    const double orig = theta[i];
    theta[i] = orig + h;
    const double lp = loss_and_grad();
    theta[i] = orig - h;
    const double lm = loss_and_grad();
    theta[i] = orig;
    if (!std::isfinite(lp) || !std::isfinite(lm)) throw Error("grad_check: non-finite loss");
    const double fd = (lp - lm) / (2.0 * h);
    const double g = analytic[i];
    const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6});
    max_rel = std::max(max_rel, rel);
  }
  loss_and_grad();  // restore gradients at the unperturbed point
  return max_rel;
}

}  // namespace cityfm
