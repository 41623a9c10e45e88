#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include "cityfm/geometry.hpp"
#include "cityfm/pretrain.hpp"
#include "cityfm/util.hpp"

namespace cityfm {

namespace {

struct VisionItem {
  EntityId id = 0;
  RasterGrid grid;
  double area = 0;
};

struct TrainData {
  std::vector<ContextGroup> groups;
  std::map<EntityId, std::vector<int>> tokens;     // tagged entities + empty node
  std::vector<std::pair<int, EntityId>> anchors;   // (group index, member id)
  std::vector<VisionItem> visions;                 // tagged, rasterizable polygons
  std::vector<double> group_weights;               // normalized link weight per group
  double max_area = 0;
  bool any_closed_way = false;
  bool road_links = false;
};

TrainData prepare(const Corpus& corpus, const TrainingConfig& config, const Vocabulary& vocab) {
  TrainData d;
  d.groups = build_context_groups(corpus, config.context_radius_m);
  for (std::size_t g = 0; g < d.groups.size(); ++g) {
    for (EntityId m : d.groups[g].member_ids) d.anchors.emplace_back(static_cast<int>(g), m);
  }

  d.tokens[kEmptyNodeId] = tokenize(serialize_tags(empty_node()), vocab);
  for (const auto& [id, e] : corpus.entities) {
    if (e.has_tags()) d.tokens[id] = tokenize(serialize_tags(e), vocab);
  }

  for (const auto& [id, e] : corpus.entities) {
    if (!e.is_closed_way()) continue;
    const auto ring = way_ring(corpus, e);
    const double area = surface_area_m2(ring);
    d.any_closed_way = true;
    d.max_area = std::max(d.max_area, area);
    if (!e.has_tags() || area == 0.0) continue;
    VisionItem item;
    item.id = id;
    item.area = area;
    item.grid = rasterize(ring, config.grid_size);
    d.visions.push_back(std::move(item));
  }

  const LinkWeightTable lw = link_weights(corpus);
  d.road_links = lw.max_count > 0;
  d.group_weights.reserve(d.groups.size());
  for (const ContextGroup& g : d.groups) {
    const auto it = lw.weights.find(g.segment_id);
    d.group_weights.push_back(it == lw.weights.end() ? 0.0 : it->second);
  }
  return d;
}

}  // namespace

PretrainOutput pretrain(const Corpus& corpus, const TrainingConfig& config, std::ostream* log) {
  validate_config(config);
  const Vocabulary vocab = build_vocab(corpus);
  const TrainData data = prepare(corpus, config, vocab);

  const bool text_active = !data.anchors.empty();
  const bool vision_active = !data.visions.empty();
  const bool road_active = data.road_links && !data.groups.empty();
  if (!text_active && !vision_active && !road_active) {
    std::string missing = "pretrain: no usable data:";
    missing += " no context group members (text objective);";
    missing += " no tagged nonzero-area polygons (vision objective);";
    missing += " no relation links (road objective)";
    throw Error(missing);
  }
  if (log) {
    if (!text_active) *log << "warning: no context group members, text objective disabled\n";
    if (!vision_active) *log << "warning: no tagged polygons, vision objective disabled\n";
    if (!road_active) *log << "warning: no relation links, road objective disabled\n";
  }

  Rng rng(config.seed);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = config.embed_dim;
  mc.grid_size = config.grid_size;
  mc.area_norm = data.any_closed_way && data.max_area > 0 ? data.max_area : 1.0;
  Model model(mc, rng);
  AdamOptimizer opt(model.params().size());

  const int D = config.embed_dim;
  std::vector<LossRow> curve;
  curve.reserve(config.max_steps);
  bool warned_clamp = false;
  bool stopped_early = false;
  const int log_every = std::max(1, config.max_steps / 10);

  int step = 1;
  for (; step <= config.max_steps; ++step) {
    // --- assemble the three minibatches (sampling order is fixed) ---
    const int tb = text_active
                       ? static_cast<int>(std::min<std::size_t>(config.batch_size, data.anchors.size()))
                       : 0;
    std::vector<std::size_t> tpicks;
    if (tb > 0) tpicks = rng.sample_without_replacement(data.anchors.size(), tb);

    const int pb = vision_active
                       ? static_cast<int>(std::min<std::size_t>(config.batch_size, data.visions.size()))
                       : 0;
    std::vector<std::size_t> vpicks;
    if (pb > 0) vpicks = rng.sample_without_replacement(data.visions.size(), pb);

    const int rb = road_active
                       ? static_cast<int>(std::min<std::size_t>(config.batch_size, data.groups.size()))
                       : 0;
    std::vector<std::size_t> rpicks;
    if (rb > 0) rpicks = rng.sample_without_replacement(data.groups.size(), rb);

    // --- every text embedding needed this step, computed once ---
    std::set<EntityId> uniq;
    uniq.insert(kEmptyNodeId);
    for (std::size_t p : tpicks) {
      const auto& [g, anchor] = data.anchors[p];
      uniq.insert(anchor);
      for (EntityId m : data.groups[g].member_ids) uniq.insert(m);
    }
    for (std::size_t p : vpicks) uniq.insert(data.visions[p].id);
    for (std::size_t p : rpicks) {
      for (EntityId m : data.groups[p].member_ids) uniq.insert(m);
    }

    std::map<EntityId, TextTrace> traces;
    for (EntityId id : uniq) traces.emplace(id, model.text_forward(data.tokens.at(id)));
    const auto h_of = [&](EntityId id) { return traces.at(id).mlp.out.data(); };

    // --- text objective ---
    double loss_t = 0;
    PairNceResult tres;
    std::vector<std::vector<EntityId>> t_contexts(tb);
    if (tb > 0) {
      std::vector<double> anchors_m(static_cast<std::size_t>(tb) * D);
      std::vector<double> contexts_m(static_cast<std::size_t>(tb) * D);
      for (int i = 0; i < tb; ++i) {
        const auto& [g, anchor] = data.anchors[tpicks[i]];
        std::copy_n(h_of(anchor), D, anchors_m.begin() + static_cast<std::size_t>(i) * D);
        auto& ctx = t_contexts[i];
        for (EntityId m : data.groups[g].member_ids) {
          if (m != anchor) ctx.push_back(m);
        }
        ctx.push_back(kEmptyNodeId);
        std::vector<const double*> ptrs;
        ptrs.reserve(ctx.size());
        for (EntityId m : ctx) ptrs.push_back(h_of(m));
        const auto c = average_embeddings(ptrs, D);
        std::copy_n(c.data(), D, contexts_m.begin() + static_cast<std::size_t>(i) * D);
      }
      tres = nce_text_loss(anchors_m, contexts_m, tb, D, config.tau);
      loss_t = tres.loss;
    }

    // --- vision objective ---
    double loss_v = 0;
    PairNceResult vres;
    std::vector<VisionTrace> vtraces;
    std::vector<AreaTrace> atraces;
    std::vector<FuseTrace> ftraces;
    if (pb > 0) {
      std::vector<double> text_m(static_cast<std::size_t>(pb) * D);
      std::vector<double> vis_m(static_cast<std::size_t>(pb) * D);
      vtraces.reserve(pb);
      atraces.reserve(pb);
      ftraces.reserve(pb);
      for (int i = 0; i < pb; ++i) {
        const VisionItem& item = data.visions[vpicks[i]];
        std::copy_n(h_of(item.id), D, text_m.begin() + static_cast<std::size_t>(i) * D);
        vtraces.push_back(model.vision_forward(item.grid));
        atraces.push_back(model.area_forward(item.area, mc.area_norm));
        ftraces.push_back(
            model.fuse_forward(vtraces.back().mlp.out.data(), atraces.back().mlp.out.data()));
        std::copy_n(ftraces.back().mlp.out.data(), D,
                    vis_m.begin() + static_cast<std::size_t>(i) * D);
      }
      vres = nce_vision_loss(text_m, vis_m, pb, D, config.tau);
      loss_v = vres.loss;
    }

    // --- road objective ---
    double loss_r = 0;
    RoadNceResult rres;
    std::vector<std::vector<EntityId>> r_members(rb);
    if (rb > 0) {
      std::vector<double> road_m(static_cast<std::size_t>(rb) * D);
      for (int i = 0; i < rb; ++i) {
        const ContextGroup& g = data.groups[rpicks[i]];
        auto& mem = r_members[i];
        mem = g.member_ids;
        mem.push_back(kEmptyNodeId);
        std::vector<const double*> ptrs;
        ptrs.reserve(mem.size());
        for (EntityId m : mem) ptrs.push_back(h_of(m));
        const auto s = average_embeddings(ptrs, D);
        std::copy_n(s.data(), D, road_m.begin() + static_cast<std::size_t>(i) * D);
      }
      std::vector<std::vector<int>> sims(rb);
      for (int i = 0; i < rb; ++i) {
        for (int j = 0; j < rb; ++j) {
          if (j != i && std::abs(data.group_weights[rpicks[i]] - data.group_weights[rpicks[j]]) <
                            config.theta) {
            sims[i].push_back(j);
          }
        }
      }
      rres = nce_road_loss(road_m, rb, D, sims, config.num_negatives, config.tau, rng);
      loss_r = rres.loss;
      if (rres.clamped_to >= 0 && !warned_clamp && log) {
        *log << "warning: road negatives clamped to " << rres.clamped_to
             << " (pool smaller than num_negatives)\n";
        warned_clamp = true;
      }
    }

    // --- backward, fixed order for bitwise determinism ---
    model.params().zero_grads();
    std::map<EntityId, std::vector<double>> dh;
    const auto add_dh = [&](EntityId id, const double* g, double scale) {
      auto it = dh.try_emplace(id, std::vector<double>(D, 0.0)).first;
      for (int k = 0; k < D; ++k) it->second[k] += g[k] * scale;
    };

    for (int i = 0; i < tb; ++i) {
      const auto& [g, anchor] = data.anchors[tpicks[i]];
      add_dh(anchor, tres.danchors.data() + static_cast<std::size_t>(i) * D, 1.0);
      const double inv = 1.0 / static_cast<double>(t_contexts[i].size());
      for (EntityId m : t_contexts[i]) {
        add_dh(m, tres.dcontexts.data() + static_cast<std::size_t>(i) * D, inv);
      }
    }
    if (pb > 0) {
      std::vector<double> ds(D), da(D);
      for (int i = 0; i < pb; ++i) {
        add_dh(data.visions[vpicks[i]].id, vres.danchors.data() + static_cast<std::size_t>(i) * D,
               1.0);
        model.fuse_backward(ftraces[i], vres.dcontexts.data() + static_cast<std::size_t>(i) * D,
                            ds.data(), da.data());
        model.vision_backward(vtraces[i], ds.data());
        model.area_backward(atraces[i], da.data());
      }
    }
    for (int i = 0; i < rb; ++i) {
      const double inv = 1.0 / static_cast<double>(r_members[i].size());
      for (EntityId m : r_members[i]) {
        add_dh(m, rres.demb.data() + static_cast<std::size_t>(i) * D, inv);
      }
    }
    for (const auto& [id, g] : dh) model.text_backward(traces.at(id), g.data());

    const double lr = lr_schedule(step, config.max_steps, config.warmup_fraction, config.lr);
    opt.step(model.params(), lr);

    const double total = loss_t + loss_v + loss_r;
    curve.push_back({step, lr, loss_t, loss_v, loss_r, total});
    if (log && (step % log_every == 0 || step == 1)) {
      *log << "step " << step << " lr " << fmt_fixed(lr, 8) << " loss " << fmt_fixed(total, 6)
           << " (T " << fmt_fixed(loss_t, 4) << " V " << fmt_fixed(loss_v, 4) << " R "
           << fmt_fixed(loss_r, 4) << ")\n";
    }

    // plateau stop over two adjacent disjoint windows of the total loss,
    // checked once per window so batch noise gets averaged out
    const int w = config.plateau_window;
    if (w > 0 && static_cast<int>(curve.size()) >= 2 * w && step % w == 0) {
      double prev = 0, cur = 0;
      const std::size_t n = curve.size();
      for (int i = 0; i < w; ++i) {
        prev += curve[n - 2 * w + i].total;
        cur += curve[n - w + i].total;
      }
      prev /= w;
      cur /= w;
      if (prev - cur < config.plateau_tolerance * std::abs(prev)) {
        if (log) *log << "plateau reached at step " << step << ", stopping\n";
        stopped_early = true;
        ++step;
        break;
      }
    }
  }

  return PretrainOutput{std::move(model), vocab,         std::move(curve), text_active,
                        vision_active,    road_active,   stopped_early,    step - 1};
}

}  // namespace cityfm
