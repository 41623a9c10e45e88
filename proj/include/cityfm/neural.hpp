#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cityfm/corpus.hpp"
#include "cityfm/geometry.hpp"
#include "cityfm/util.hpp"

namespace cityfm {

// ---------------------------------------------------------------------------
// Vocabulary

struct Vocabulary {
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kUnk = 2;

  std::vector<std::string> id_to_token;  // [0]="[CLS]", [1]="[SEP]", [2]="[UNK]"
  std::map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  bool operator==(const Vocabulary&) const = default;
};

// Lowercased alphanumeric tokens from the serialized tags of every tagged
// entity plus the synthetic empty node. Tokens seen fewer than twice map to
// UNK, except the empty-node tokens which are always kept.
Vocabulary build_vocab(const Corpus& corpus);

// Splits into bracketed specials ([CLS]/[SEP]) and alphanumeric runs; all
// other characters separate tokens. Unknown tokens become UNK.
std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Parameters

// Flat value/gradient arrays with a named-tensor directory on top. Flat
// storage keeps the optimizer and grad_check trivial.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  // Registers a tensor and returns its offset. Call order fixes the layout.
  std::size_t add(const std::string& name, std::vector<std::size_t> shape);

  double* values(const std::string& name);
  const double* values(const std::string& name) const;
  double* grads(const std::string& name);

  std::vector<double>& flat_values() { return values_; }
  const std::vector<double>& flat_values() const { return values_; }
  std::vector<double>& flat_grads() { return grads_; }

  const std::vector<Entry>& entries() const { return entries_; }
  const Entry& entry(const std::string& name) const;
  // Name of the tensor that owns flat index i.
  const std::string& owner(std::size_t flat_index) const;

  std::size_t size() const { return values_.size(); }
  void zero_grads();

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> by_name_;
};

// ---------------------------------------------------------------------------
// Model

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 128;     // D, shared by every embedding role
  int grid_size = 64;      // raster edge length fed to the vision encoder
  double area_norm = 1.0;  // max_a, the corpus-wide max polygon area

  bool operator==(const ModelConfig&) const = default;
};

// Saved intermediates for one forward pass, consumed by the matching
// backward. Kept as plain structs so batches can hold a vector of them.
struct MlpTrace {
  std::vector<double> x;    // input
  std::vector<double> a1;   // tanh hidden
  std::vector<double> out;  // linear output
};

struct TextTrace {
  std::vector<int> tokens;
  std::vector<double> pooled;  // mean token embedding
  MlpTrace mlp;
};

struct VisionTrace {
  std::vector<double> input;                // 1 x G x G
  std::vector<std::vector<double>> convs;   // post-tanh activations per block
  std::vector<double> pooled;               // global average pool, 64
  std::vector<double> dense;                // linear projection to D
  MlpTrace mlp;
};

struct AreaTrace {
  double x = 0;  // area / max_a
  MlpTrace mlp;
};

struct FuseTrace {
  MlpTrace mlp;  // mlp.x holds (s + a) / 2
};

class Model {
 public:
  Model(ModelConfig config, Rng& rng);
  // Registers the tensor layout with zeroed values; checkpoint loading fills
  // them in afterwards.
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // Forward passes are const and safe to run concurrently; backward passes
  // accumulate into the shared gradient buffer and must stay single-threaded.
  TextTrace text_forward(const std::vector<int>& tokens) const;
  void text_backward(const TextTrace& trace, const double* dout);

  VisionTrace vision_forward(const RasterGrid& grid) const;
  void vision_backward(const VisionTrace& trace, const double* dout);

  AreaTrace area_forward(double area_m2, double max_a) const;
  void area_backward(const AreaTrace& trace, const double* dout);

  FuseTrace fuse_forward(const double* s, const double* a) const;
  // ds/da receive the input gradients (each dmean / 2); pass nullptr to skip.
  void fuse_backward(const FuseTrace& trace, const double* dout, double* ds, double* da);

  static constexpr int kConvChannels[4] = {8, 16, 32, 64};

 private:
  ModelConfig config_;
  ParameterStore params_;
};

// Convenience wrappers matching the encoder contracts.
std::vector<double> text_encode(const Model& model, const std::vector<int>& tokens);
std::vector<double> vision_encode(const Model& model, const RasterGrid& grid);
std::vector<double> area_encode(const Model& model, double area_m2, double max_a);
std::vector<double> fuse_visual(const Model& model, const std::vector<double>& s,
                                const std::vector<double>& a);

// ---------------------------------------------------------------------------
// Optimizer and verification

class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::size_t n_params, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);

  // Applies one update from params.flat_grads(). Throws on a non-finite
  // gradient, naming the owning tensor.
  void step(ParameterStore& params, double lr);

  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t t_ = 0;
  double beta1_, beta2_, eps_;
};

// loss_and_grad must zero the gradient buffer, run forward + backward and
// return the loss. Central differences with step h over a random subsample of
// at least min_samples parameters; returns the max relative error, where the
// denominator is max(|analytic|, |numeric|, 1e-6).
double grad_check(ParameterStore& params, const std::function<double()>& loss_and_grad,
                  Rng& rng, double h = 1e-5, int min_samples = 200);

}  // namespace cityfm
