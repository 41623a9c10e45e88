#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cityfm/corpus.hpp"
#include "cityfm/geometry.hpp"
#include "cityfm/neural.hpp"

namespace cityfm {

struct TrainingConfig {
  double tau = 0.5;             // NCE temperature
  double theta = 0.05;          // link-weight similarity threshold
  int batch_size = 32;          // desk-scale default; reference setup uses 256
  int num_negatives = 64;       // N in the road objective
  double lr = 1e-4;
  double warmup_fraction = 0.1;
  int max_steps = 2000;
  int plateau_window = 400;     // 0 disables the plateau stop
  double plateau_tolerance = 1e-3;
  int loc_d = 128;              // location encoder d (per coordinate)
  double loc_lambda = 100.0;
  int embed_dim = 128;          // multimodal dimension D
  int grid_size = 64;           // raster edge; reference setup uses 224
  double context_radius_m = 50.0;
  std::uint64_t seed = 7;

  bool operator==(const TrainingConfig&) const = default;
};

// Throws on out-of-range fields (tau <= 0, theta outside (0,1), N < 1, ...).
void validate_config(const TrainingConfig& config);

std::string training_config_to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// Link weights and road similarity

struct LinkWeightTable {
  std::map<EntityId, std::int64_t> counts;  // relations containing each way
  std::map<EntityId, double> weights;       // counts / max count, 0 when none
  std::int64_t max_count = 0;
};

// Counts, for every Way, the relations that contain it as a member (each
// relation counted once) and normalizes by the corpus-wide maximum.
LinkWeightTable link_weights(const Corpus& corpus);

// For each id, the other ids whose weight differs by less than theta.
std::map<EntityId, std::vector<EntityId>> similar_roads(
    const std::map<EntityId, double>& weights, double theta);

// ---------------------------------------------------------------------------
// Losses

// Softmax cross-entropy over in-batch pairs: anchors and contexts are b x dim
// row-major, positives on the diagonal of the logit matrix z = A C^T / tau.
struct PairNceResult {
  double loss = 0.0;
  std::vector<double> danchors;   // b x dim
  std::vector<double> dcontexts;  // b x dim
};

PairNceResult nce_pair_loss(const std::vector<double>& anchors,
                            const std::vector<double>& contexts, int b, int dim, double tau);

// Named aliases for the two diagonal-pair objectives.
PairNceResult nce_text_loss(const std::vector<double>& anchors,
                            const std::vector<double>& contexts, int b, int dim, double tau);
PairNceResult nce_vision_loss(const std::vector<double>& text, const std::vector<double>& visual,
                              int p, int dim, double tau);

// Road objective: each anchor i averages, over its similar roads j, a softmax
// cross-entropy whose denominator is the positive logit plus n sampled
// negatives (drawn per anchor from roads outside sim(i), self excluded).
// Anchors with empty sim sets contribute 0.
struct RoadNceResult {
  double loss = 0.0;
  std::vector<double> demb;  // r x dim
  int clamped_to = -1;       // negatives actually used when the pool ran short
};

RoadNceResult nce_road_loss(const std::vector<double>& emb, int r, int dim,
                            const std::vector<std::vector<int>>& sims, int n_negatives,
                            double tau, Rng& rng);

// Mean of member embeddings. Used for contexts (anchor already excluded by
// the caller) and for road embeddings.
std::vector<double> average_embeddings(const std::vector<const double*>& members, int dim);

// ---------------------------------------------------------------------------
// Schedule and loop

// Linear ramp from 0 to base_lr over round(warmup_fraction * max_steps)
// steps, then linear decay to 0 at max_steps.
double lr_schedule(int step, int max_steps, double warmup_fraction, double base_lr);

struct LossRow {
  int step = 0;
  double lr = 0;
  double loss_t = 0;
  double loss_v = 0;
  double loss_r = 0;
  double total = 0;
};

std::string loss_curve_csv(const std::vector<LossRow>& rows);

struct PretrainOutput {
  Model model;
  Vocabulary vocab;
  std::vector<LossRow> curve;
  bool text_active = false;
  bool vision_active = false;
  bool road_active = false;
  bool stopped_early = false;
  int steps_run = 0;
};

// Runs the full loop: context groups, vocabulary, per-step joint sampling of
// the three objectives, summed loss, Adam updates under lr_schedule, optional
// plateau stop. Warnings and progress go to log when non-null.
PretrainOutput pretrain(const Corpus& corpus, const TrainingConfig& config,
                        std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  ModelConfig model_config;
  TrainingConfig train_config;
  Vocabulary vocab;
  std::vector<double> values;  // flat parameters, Model registration order
};

// Binary container: magic, JSON header (configs, vocabulary, tensor
// directory), raw 64-bit little-endian values. Round-trips bitwise.
void save_checkpoint(const std::string& path, const Model& model,
                     const TrainingConfig& train_config, const Vocabulary& vocab);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the model and copies the stored parameters in.
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace cityfm
