#include <algorithm>
#include <cmath>
#include <set>

#include "cityfm/kernels.hpp"
#include "cityfm/pretrain.hpp"
#include "cityfm/util.hpp"
#include "json.hpp"

namespace cityfm {

using ordered_json = nlohmann::ordered_json;

void validate_config(const TrainingConfig& c) {
  if (!(c.tau > 0)) throw Error("config: tau must be positive");
  if (!(c.theta > 0 && c.theta < 1)) throw Error("config: theta must lie in (0, 1)");
  if (c.batch_size < 1) throw Error("config: batch_size must be >= 1");
  if (c.num_negatives < 1) throw Error("config: num_negatives must be >= 1");
  if (!(c.lr > 0)) throw Error("config: lr must be positive");
  if (c.warmup_fraction < 0 || c.warmup_fraction >= 1) {
    throw Error("config: warmup_fraction must lie in [0, 1)");
  }
  if (c.max_steps < 1) throw Error("config: max_steps must be >= 1");
  if (c.plateau_window < 0) throw Error("config: plateau_window must be >= 0");
  if (!(c.plateau_tolerance >= 0)) throw Error("config: plateau_tolerance must be >= 0");
  if (c.loc_d < 2 || c.loc_d % 2 != 0) throw Error("config: loc_d must be even and >= 2");
  if (!(c.loc_lambda > 0)) throw Error("config: loc_lambda must be positive");
  if (c.embed_dim < 1) throw Error("config: embed_dim must be >= 1");
  if (c.grid_size < 2) throw Error("config: grid_size must be >= 2");
  if (!(c.context_radius_m > 0)) throw Error("config: context_radius_m must be positive");
}

std::string training_config_to_json(const TrainingConfig& c) {
  ordered_json j;
  j["tau"] = c.tau;
  j["theta"] = c.theta;
  j["batch_size"] = c.batch_size;
  j["num_negatives"] = c.num_negatives;
  j["lr"] = c.lr;
  j["warmup_fraction"] = c.warmup_fraction;
  j["max_steps"] = c.max_steps;
  j["plateau_window"] = c.plateau_window;
  j["plateau_tolerance"] = c.plateau_tolerance;
  j["loc_d"] = c.loc_d;
  j["loc_lambda"] = c.loc_lambda;
  j["embed_dim"] = c.embed_dim;
  j["grid_size"] = c.grid_size;
  j["context_radius_m"] = c.context_radius_m;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

TrainingConfig training_config_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& ex) {
    throw Error(std::string("config parse error: ") + ex.what());
  }
  TrainingConfig c;
  c.tau = j.value("tau", c.tau);
  c.theta = j.value("theta", c.theta);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.num_negatives = j.value("num_negatives", c.num_negatives);
  c.lr = j.value("lr", c.lr);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.plateau_window = j.value("plateau_window", c.plateau_window);
  c.plateau_tolerance = j.value("plateau_tolerance", c.plateau_tolerance);
  c.loc_d = j.value("loc_d", c.loc_d);
  c.loc_lambda = j.value("loc_lambda", c.loc_lambda);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.grid_size = j.value("grid_size", c.grid_size);
  c.context_radius_m = j.value("context_radius_m", c.context_radius_m);
  c.seed = j.value("seed", c.seed);
  validate_config(c);
  return c;
}

// ---------------------------------------------------------------------------
// Link weights

LinkWeightTable link_weights(const Corpus& corpus) {
  LinkWeightTable table;
  for (const auto& [id, e] : corpus.entities) {
    if (e.kind == EntityKind::Way) table.counts[id] = 0;
  }
  for (const auto& [id, e] : corpus.entities) {
    if (e.kind != EntityKind::Relation) continue;
    std::set<EntityId> seen;  // a relation counts once per way
    for (const Member& m : e.members) {
      const auto it = table.counts.find(m.id);
      if (it != table.counts.end() && seen.insert(m.id).second) ++it->second;
    }
  }
  for (const auto& [id, n] : table.counts) table.max_count = std::max(table.max_count, n);
  for (const auto& [id, n] : table.counts) {
    table.weights[id] =
        table.max_count == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(table.max_count);
  }
  return table;
}

std::map<EntityId, std::vector<EntityId>> similar_roads(
    const std::map<EntityId, double>& weights, double theta) {
  std::map<EntityId, std::vector<EntityId>> sims;
  for (const auto& [i, wi] : weights) {
    auto& set = sims[i];
    for (const auto& [j, wj] : weights) {
      if (j != i && std::abs(wi - wj) < theta) set.push_back(j);
    }
  }
  return sims;
}

// ---------------------------------------------------------------------------
// Pairwise NCE (text, vision)

PairNceResult nce_pair_loss(const std::vector<double>& anchors,
                            const std::vector<double>& contexts, int b, int dim, double tau) {
  if (b < 1) throw Error("nce loss: empty batch");
  if (!(tau > 0)) throw Error("nce loss: tau must be positive");
  const auto n = static_cast<std::size_t>(b) * dim;
  if (anchors.size() != n || contexts.size() != n) throw Error("nce loss: shape mismatch");
  for (double v : anchors) {
    if (!std::isfinite(v)) throw Error("nce loss: non-finite anchor embedding");
  }
  for (double v : contexts) {
    if (!std::isfinite(v)) throw Error("nce loss: non-finite context embedding");
  }

  std::vector<double> z(static_cast<std::size_t>(b) * b);
  kernels::pairwise_dot(anchors.data(), contexts.data(), z.data(), b, b, dim, 1.0 / tau);

  PairNceResult res;
  res.danchors.assign(n, 0.0);
  res.dcontexts.assign(n, 0.0);
  std::vector<double> p(static_cast<std::size_t>(b) * b);
  const double inv_b = 1.0 / static_cast<double>(b);
  for (int i = 0; i < b; ++i) {
    const double* zi = z.data() + static_cast<std::size_t>(i) * b;
    double m = zi[0];
    for (int j = 1; j < b; ++j) m = std::max(m, zi[j]);
    double denom = 0.0;
    for (int j = 0; j < b; ++j) denom += std::exp(zi[j] - m);
    res.loss += -(zi[i] - m - std::log(denom)) * inv_b;
    double* pi = p.data() + static_cast<std::size_t>(i) * b;
    for (int j = 0; j < b; ++j) pi[j] = std::exp(zi[j] - m) / denom;
  }

  // dz_ij = (p_ij - [i == j]) / (B tau)
  const double scale = inv_b / tau;
  for (int i = 0; i < b; ++i) {
    const double* ai = anchors.data() + static_cast<std::size_t>(i) * dim;
    double* dai = res.danchors.data() + static_cast<std::size_t>(i) * dim;
    for (int j = 0; j < b; ++j) {
      const double dz = (p[static_cast<std::size_t>(i) * b + j] - (i == j ? 1.0 : 0.0)) * scale;
      const double* cj = contexts.data() + static_cast<std::size_t>(j) * dim;
      double* dcj = res.dcontexts.data() + static_cast<std::size_t>(j) * dim;
      for (int k = 0; k < dim; ++k) {
        dai[k] += dz * cj[k];
        dcj[k] += dz * ai[k];
      }
    }
  }
  return res;
}

PairNceResult nce_text_loss(const std::vector<double>& anchors,
                            const std::vector<double>& contexts, int b, int dim, double tau) {
  return nce_pair_loss(anchors, contexts, b, dim, tau);
}

PairNceResult nce_vision_loss(const std::vector<double>& text, const std::vector<double>& visual,
                              int p, int dim, double tau) {
  return nce_pair_loss(text, visual, p, dim, tau);
}

// ---------------------------------------------------------------------------
// Road NCE

RoadNceResult nce_road_loss(const std::vector<double>& emb, int r, int dim,
                            const std::vector<std::vector<int>>& sims, int n_negatives,
                            double tau, Rng& rng) {
  if (r < 1) throw Error("road loss: empty batch");
  if (!(tau > 0)) throw Error("road loss: tau must be positive");
  if (n_negatives < 1) throw Error("road loss: need at least one negative");
  if (emb.size() != static_cast<std::size_t>(r) * dim) throw Error("road loss: shape mismatch");
  if (sims.size() != static_cast<std::size_t>(r)) throw Error("road loss: sims size mismatch");
  for (double v : emb) {
    if (!std::isfinite(v)) throw Error("road loss: non-finite embedding");
  }

  std::vector<double> z(static_cast<std::size_t>(r) * r);
  kernels::pairwise_dot(emb.data(), emb.data(), z.data(), r, r, dim, 1.0 / tau);
  const auto zat = [&](int i, int j) { return z[static_cast<std::size_t>(i) * r + j]; };

  RoadNceResult res;
  res.demb.assign(emb.size(), 0.0);
  std::vector<double> dz(static_cast<std::size_t>(r) * r, 0.0);
  int anchors_used = 0;
  const double inv_r = 1.0 / static_cast<double>(r);

  for (int i = 0; i < r; ++i) {
    if (sims[i].empty()) continue;
    ++anchors_used;
    // negative pool: everything outside sim(i), self excluded
    std::vector<int> pool;
    std::vector<char> in_sim(r, 0);
    for (int j : sims[i]) in_sim[j] = 1;
    for (int k = 0; k < r; ++k) {
      if (k != i && !in_sim[k]) pool.push_back(k);
    }
    std::vector<int> negs;
    const int take = std::min<int>(n_negatives, static_cast<int>(pool.size()));
    if (take < n_negatives && (res.clamped_to == -1 || take < res.clamped_to)) {
      res.clamped_to = take;
    }
    for (std::size_t pick : rng.sample_without_replacement(pool.size(), take)) {
      negs.push_back(pool[pick]);
    }

    const double w = inv_r / static_cast<double>(sims[i].size());
    for (int j : sims[i]) {
      double m = zat(i, j);
      for (int k : negs) m = std::max(m, zat(i, k));
      double denom = std::exp(zat(i, j) - m);
      for (int k : negs) denom += std::exp(zat(i, k) - m);
      res.loss += -(zat(i, j) - m - std::log(denom)) * w;
      // softmax over {j} + negs
      const double pj = std::exp(zat(i, j) - m) / denom;
      dz[static_cast<std::size_t>(i) * r + j] += w * (pj - 1.0);
      for (int k : negs) {
        const double pk = std::exp(zat(i, k) - m) / denom;
        dz[static_cast<std::size_t>(i) * r + k] += w * pk;
      }
    }
  }
  if (anchors_used == 0) return res;  // loss 0, zero gradients

  // z_ik = emb_i . emb_k / tau contributes to both rows
  for (int i = 0; i < r; ++i) {
    for (int k = 0; k < r; ++k) {
      const double g = dz[static_cast<std::size_t>(i) * r + k] / tau;
      if (g == 0.0) continue;
      const double* ei = emb.data() + static_cast<std::size_t>(i) * dim;
      const double* ek = emb.data() + static_cast<std::size_t>(k) * dim;
      double* di = res.demb.data() + static_cast<std::size_t>(i) * dim;
      double* dk = res.demb.data() + static_cast<std::size_t>(k) * dim;
      for (int d = 0; d < dim; ++d) {
        di[d] += g * ek[d];
        dk[d] += g * ei[d];
      }
    }
  }
  return res;
}

std::vector<double> average_embeddings(const std::vector<const double*>& members, int dim) {
  if (members.empty()) throw Error("average_embeddings: empty set");
  std::vector<double> out(dim, 0.0);
  for (const double* m : members) {
    for (int d = 0; d < dim; ++d) out[d] += m[d];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : out) v *= inv;
  return out;
}

// ---------------------------------------------------------------------------
// Schedule

double lr_schedule(int step, int max_steps, double warmup_fraction, double base_lr) {
  if (warmup_fraction < 0 || warmup_fraction >= 1) {
    throw Error("lr_schedule: warmup_fraction must lie in [0, 1)");
  }
  if (max_steps < 1) throw Error("lr_schedule: max_steps must be >= 1");
  if (step < 0 || step > max_steps) throw Error("lr_schedule: step out of range");
  int warmup = static_cast<int>(std::llround(warmup_fraction * max_steps));
  warmup = std::min(warmup, max_steps - 1);
  if (step <= warmup) {
    return warmup == 0 ? (step == 0 ? 0.0 : base_lr)
                       : base_lr * static_cast<double>(step) / warmup;
  }
  return base_lr * static_cast<double>(max_steps - step) / (max_steps - warmup);
}

std::string loss_curve_csv(const std::vector<LossRow>& rows) {
  std::string out = "step,lr,loss_T,loss_V,loss_R,loss_total\n";
  for (const LossRow& r : rows) {
    out += std::to_string(r.step) + "," + fmt_double(r.lr) + "," + fmt_double(r.loss_t) + "," +
           fmt_double(r.loss_v) + "," + fmt_double(r.loss_r) + "," + fmt_double(r.total) + "\n";
  }
  return out;
}

}  // namespace cityfm
