#include "emkat/hif.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "emkat/error.hpp"
#include "emkat/rng.hpp"

namespace emkat::hif {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

VectorXd stable_softmax(const VectorXd& z) {
  VectorXd out = (z.array() - z.maxCoeff()).exp();
  out /= out.sum();
  return out;
}

double log_sum_exp(const VectorXd& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

std::vector<std::size_t> content_positions(const tokenize::FramedValue& framed) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < framed.tokens.size(); ++t) {
    if (framed.tokens[t] != tokenize::kPadId) out.push_back(t);
  }
  return out;
}

struct FramedRecord {
  std::vector<tokenize::FramedValue> values;
};

FramedRecord frame_record(const HifModel& model, const corpus::Record& record) {
  if (record.values.size() != model.attribute_count()) {
    throw ModelError("record '" + record.id + "' has " +
                     std::to_string(record.values.size()) +
                     " values, model expects " +
                     std::to_string(model.attribute_count()));
  }
  FramedRecord out;
  out.values.reserve(record.values.size());
  for (std::size_t i = 0; i < record.values.size(); ++i) {
    out.values.push_back(model.frame_value(i, record.values[i]));
  }
  return out;
}

struct AttrCache {
  std::vector<std::size_t> support;  // non-PAD positions
  MatrixXd embedded;                 // l x d_e
  VectorXd alpha;                    // pooling weights over support
  VectorXd pooled;                   // d_e
  VectorXd agg_pre;                  // d_a, pre-ReLU
};

struct RecordCache {
  std::vector<AttrCache> attrs;
  MatrixXd agg;         // m x d_a (post-ReLU)
  MatrixXd q, k, v;     // m x d_k, m x d_k, m x d_v
  std::vector<MatrixXd> attn;  // per head, m x m; row i has A_ii = 0
  MatrixXd context;     // m x d_v
  MatrixXd concat_pre;  // m x 2*d_v, pre-ReLU
  MatrixXd concat;      // m x 2*d_v
  MatrixXd hidden_pre;  // m x d
  MatrixXd hidden;      // m x d
  MatrixXd out;         // m x d
};

void agg_attr_forward(const MatrixXd& embedded,
                      const std::vector<std::size_t>& support,
                      std::size_t attr_index, const HifParams& params,
                      AttrCache& cache) {
  const Index d_e = embedded.cols();
  const Index d_a = params.pool_proj[attr_index].cols();
  cache.support = support;
  if (support.empty()) {
    cache.alpha.resize(0);
    cache.pooled = VectorXd::Zero(d_e);
    cache.agg_pre = VectorXd::Zero(d_a);
    return;
  }
  VectorXd logits(static_cast<Index>(support.size()));
  for (std::size_t s = 0; s < support.size(); ++s) {
    logits[static_cast<Index>(s)] =
        embedded.row(static_cast<Index>(support[s]))
            .dot(params.pool[attr_index].col(0));
  }
  cache.alpha = stable_softmax(logits);
  cache.pooled = VectorXd::Zero(d_e);
  for (std::size_t s = 0; s < support.size(); ++s) {
    cache.pooled += cache.alpha[static_cast<Index>(s)] *
                    embedded.row(static_cast<Index>(support[s])).transpose();
  }
  cache.agg_pre = params.pool_proj[attr_index].transpose() * cache.pooled;
}

void forward_record(const HifModel& model, const FramedRecord& framed,
                    RecordCache& rc) {
  const HifParams& p = model.params;
  const HifConfig& cfg = model.config;
  const std::size_t m = model.attribute_count();
  const Index d_a = static_cast<Index>(cfg.d_a);
  const Index d_v = static_cast<Index>(cfg.d_v);

  rc.attrs.assign(m, AttrCache{});
  rc.agg.resize(static_cast<Index>(m), d_a);
  for (std::size_t i = 0; i < m; ++i) {
    AttrCache& ac = rc.attrs[i];
    ac.embedded = embedding::embed_value(framed.values[i], model.embeddings);
    agg_attr_forward(ac.embedded, content_positions(framed.values[i]), i, p, ac);
    rc.agg.row(static_cast<Index>(i)) = ac.agg_pre.cwiseMax(0.0).transpose();
  }

  rc.q = rc.agg * p.query;
  rc.k = rc.agg * p.key;
  rc.v.resize(static_cast<Index>(m), d_v);
  for (std::size_t i = 0; i < m; ++i) {
    rc.v.row(static_cast<Index>(i)) =
        rc.agg.row(static_cast<Index>(i)) * p.value[i];
  }

  const std::size_t heads = cfg.num_heads;
  const Index hk = static_cast<Index>(cfg.d_k / heads);
  const Index hv = static_cast<Index>(cfg.d_v / heads);
  const double scale =
      cfg.scale_by_key_dim ? 1.0 / std::sqrt(static_cast<double>(hk))
                           : 1.0 / std::sqrt(static_cast<double>(m));

  rc.attn.assign(heads, MatrixXd::Zero(static_cast<Index>(m),
                                       static_cast<Index>(m)));
  rc.context = MatrixXd::Zero(static_cast<Index>(m), d_v);
  if (m > 1) {
    for (std::size_t h = 0; h < heads; ++h) {
      const Index kh = static_cast<Index>(h) * hk;
      const Index vh = static_cast<Index>(h) * hv;
      for (std::size_t i = 0; i < m; ++i) {
        VectorXd scores(static_cast<Index>(m - 1));
        Index s = 0;
        for (std::size_t j = 0; j < m; ++j) {
          if (j == i) continue;
          scores[s++] = rc.q.row(static_cast<Index>(i)).segment(kh, hk).dot(
                            rc.k.row(static_cast<Index>(j)).segment(kh, hk)) *
                        scale;
        }
        const VectorXd weights = stable_softmax(scores);
        s = 0;
        for (std::size_t j = 0; j < m; ++j) {
          if (j == i) continue;
          const double w = weights[s++];
          rc.attn[h](static_cast<Index>(i), static_cast<Index>(j)) = w;
          rc.context.row(static_cast<Index>(i)).segment(vh, hv) +=
              w * rc.v.row(static_cast<Index>(j)).segment(vh, hv);
        }
      }
    }
  }

  rc.concat_pre.resize(static_cast<Index>(m), 2 * d_v);
  rc.concat_pre << rc.v, rc.context;
  rc.concat = rc.concat_pre.cwiseMax(0.0);
  rc.hidden_pre =
      (rc.concat * p.mlp_w1).rowwise() + p.mlp_b1.col(0).transpose();
  rc.hidden = rc.hidden_pre.cwiseMax(0.0);
  rc.out = (rc.hidden * p.mlp_w2).rowwise() + p.mlp_b2.col(0).transpose();
}

struct HeadCache {
  VectorXd t_pre;   // d
  VectorXd t;       // d
  VectorXd logits;  // N
};

void head_forward(const HifParams& p, const VectorXd& out_row, HeadCache& hc) {
  hc.t_pre = p.head_w1.transpose() * out_row + p.head_b1.col(0);
  hc.t = hc.t_pre.cwiseMax(0.0);
  hc.logits = p.head_w2.transpose() * hc.t + p.head_b2.col(0);
}

double cell_cross_entropy(const HeadCache& hc,
                          const tokenize::WbowTarget& target) {
  const double lse = log_sum_exp(hc.logits);
  double loss = 0.0;
  for (const auto& [id, weight] : target.weights) {
    loss -= weight * (hc.logits[id] - lse);
  }
  return loss;
}

struct CellRef {
  std::size_t record;
  std::size_t attribute;
  const tokenize::WbowTarget* target;
};

// Loss (and optionally gradients) over an explicit cell set. The cell set
// is grouped per record; iteration order is fixed so gradient reductions
// are deterministic.
double loss_over_cells(const HifModel& model,
                       const std::vector<FramedRecord>& framed,
                       std::span<const CellRef> cells,
                       HifGradients* gradients) {
  if (cells.empty()) throw UsageError("reconstruction loss needs >= 1 masked cell");
  const HifParams& p = model.params;
  const HifConfig& cfg = model.config;
  const std::size_t m = model.attribute_count();
  const Index d_v = static_cast<Index>(cfg.d_v);
  const double cell_weight = 1.0 / static_cast<double>(cells.size());

  // Group cells by record, preserving order.
  std::map<std::size_t, std::vector<const CellRef*>> by_record;
  for (const auto& cell : cells) by_record[cell.record].push_back(&cell);

  double total_loss = 0.0;
  RecordCache rc;
  HeadCache hc;
  for (const auto& [record_index, record_cells] : by_record) {
    forward_record(model, framed[record_index], rc);

    MatrixXd d_out;
    if (gradients) {
      d_out = MatrixXd::Zero(static_cast<Index>(m), static_cast<Index>(cfg.d));
    }
    for (const CellRef* cell : record_cells) {
      const Index row = static_cast<Index>(cell->attribute);
      head_forward(p, rc.out.row(row).transpose(), hc);
      total_loss += cell_weight * cell_cross_entropy(hc, *cell->target);
      if (!gradients) continue;

      VectorXd d_logits = stable_softmax(hc.logits);
      for (const auto& [id, weight] : cell->target->weights) {
        d_logits[id] -= weight;
      }
      d_logits *= cell_weight;

      HifParams& g = gradients->params;
      g.head_w2 += hc.t * d_logits.transpose();
      g.head_b2.col(0) += d_logits;
      VectorXd d_t = p.head_w2 * d_logits;
      VectorXd d_t_pre =
          (hc.t_pre.array() > 0.0).select(d_t, VectorXd::Zero(d_t.size()));
      g.head_w1 += rc.out.row(row).transpose() * d_t_pre.transpose();
      g.head_b1.col(0) += d_t_pre;
      d_out.row(row) += (p.head_w1 * d_t_pre).transpose();
    }
    if (!gradients) continue;

    HifParams& g = gradients->params;
    // MLP backward (only masked rows carry output gradient).
    MatrixXd d_concat = MatrixXd::Zero(static_cast<Index>(m), 2 * d_v);
    for (const CellRef* cell : record_cells) {
      const Index i = static_cast<Index>(cell->attribute);
      const RowVectorXd d_out_row = d_out.row(i);
      g.mlp_w2 += rc.hidden.row(i).transpose() * d_out_row;
      g.mlp_b2.col(0) += d_out_row.transpose();
      RowVectorXd d_hidden = d_out_row * p.mlp_w2.transpose();
      RowVectorXd d_hidden_pre =
          (rc.hidden_pre.row(i).array() > 0.0)
              .select(d_hidden, RowVectorXd::Zero(d_hidden.size()));
      g.mlp_w1 += rc.concat.row(i).transpose() * d_hidden_pre;
      g.mlp_b1.col(0) += d_hidden_pre.transpose();
      d_concat.row(i) += d_hidden_pre * p.mlp_w1.transpose();
    }

    // PROP backward.
    const std::size_t heads = cfg.num_heads;
    const Index hk = static_cast<Index>(cfg.d_k / heads);
    const Index hv = static_cast<Index>(cfg.d_v / heads);
    const double scale =
        cfg.scale_by_key_dim ? 1.0 / std::sqrt(static_cast<double>(hk))
                             : 1.0 / std::sqrt(static_cast<double>(m));
    MatrixXd d_v_rows = MatrixXd::Zero(static_cast<Index>(m), d_v);
    MatrixXd d_q = MatrixXd::Zero(static_cast<Index>(m),
                                  static_cast<Index>(cfg.d_k));
    MatrixXd d_k = MatrixXd::Zero(static_cast<Index>(m),
                                  static_cast<Index>(cfg.d_k));
    for (const CellRef* cell : record_cells) {
      const Index i = static_cast<Index>(cell->attribute);
      RowVectorXd d_r =
          (rc.concat_pre.row(i).array() > 0.0)
              .select(d_concat.row(i), RowVectorXd::Zero(2 * d_v));
      d_v_rows.row(i) += d_r.head(d_v);
      if (m == 1) continue;  // context is constant zero
      const RowVectorXd d_context = d_r.tail(d_v);
      for (std::size_t h = 0; h < heads; ++h) {
        const Index kh = static_cast<Index>(h) * hk;
        const Index vh = static_cast<Index>(h) * hv;
        const RowVectorXd d_ctx_h = d_context.segment(vh, hv);
        // dA and softmax backward over j != i.
        double weighted_sum = 0.0;
        std::vector<double> d_attn(m, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
          if (static_cast<Index>(j) == i) continue;
          d_attn[j] = d_ctx_h.dot(rc.v.row(static_cast<Index>(j)).segment(vh, hv));
          weighted_sum += rc.attn[h](i, static_cast<Index>(j)) * d_attn[j];
        }
        for (std::size_t j = 0; j < m; ++j) {
          if (static_cast<Index>(j) == i) continue;
          const double a = rc.attn[h](i, static_cast<Index>(j));
          const double d_score = a * (d_attn[j] - weighted_sum);
          d_q.row(i).segment(kh, hk) +=
              d_score * scale * rc.k.row(static_cast<Index>(j)).segment(kh, hk);
          d_k.row(static_cast<Index>(j)).segment(kh, hk) +=
              d_score * scale * rc.q.row(i).segment(kh, hk);
          d_v_rows.row(static_cast<Index>(j)).segment(vh, hv) += a * d_ctx_h;
        }
      }
    }

    MatrixXd d_agg = d_q * p.query.transpose() + d_k * p.key.transpose();
    g.query += rc.agg.transpose() * d_q;
    g.key += rc.agg.transpose() * d_k;
    for (std::size_t j = 0; j < m; ++j) {
      const Index jj = static_cast<Index>(j);
      d_agg.row(jj) += d_v_rows.row(jj) * p.value[j].transpose();
      g.value[j] += rc.agg.row(jj).transpose() * d_v_rows.row(jj);
    }

    // AGG backward.
    for (std::size_t j = 0; j < m; ++j) {
      const Index jj = static_cast<Index>(j);
      const AttrCache& ac = rc.attrs[j];
      if (ac.support.empty()) continue;
      VectorXd d_agg_pre =
          (ac.agg_pre.array() > 0.0)
              .select(d_agg.row(jj).transpose(),
                      VectorXd::Zero(ac.agg_pre.size()));
      g.pool_proj[j] += ac.pooled * d_agg_pre.transpose();
      VectorXd d_pooled = p.pool_proj[j] * d_agg_pre;
      VectorXd d_alpha(static_cast<Index>(ac.support.size()));
      for (std::size_t s = 0; s < ac.support.size(); ++s) {
        d_alpha[static_cast<Index>(s)] =
            ac.embedded.row(static_cast<Index>(ac.support[s])).dot(d_pooled);
      }
      const double weighted = ac.alpha.dot(d_alpha);
      for (std::size_t s = 0; s < ac.support.size(); ++s) {
        const Index si = static_cast<Index>(s);
        const double d_logit = ac.alpha[si] * (d_alpha[si] - weighted);
        g.pool[j].col(0) +=
            d_logit * ac.embedded.row(static_cast<Index>(ac.support[s]))
                          .transpose();
        if (cfg.train_embeddings) {
          const auto token =
              framed[record_index].values[j].tokens[ac.support[s]];
          gradients->embeddings.row(token) +=
              ac.alpha[si] * d_pooled.transpose() +
              d_logit * p.pool[j].col(0).transpose();
        }
      }
    }
  }
  if (gradients && cfg.train_embeddings) {
    gradients->embeddings.row(tokenize::kPadId).setZero();
  }
  return total_loss;
}

std::vector<FramedRecord> frame_table(const HifModel& model,
                                      const corpus::EntityTable& table) {
  std::vector<FramedRecord> out;
  out.reserve(table.records.size());
  for (const auto& rec : table.records) out.push_back(frame_record(model, rec));
  return out;
}

std::vector<CellRef> cells_of(const tokenize::MaskedCorpus& masked) {
  std::vector<CellRef> out;
  out.reserve(masked.cells.size());
  for (const auto& cell : masked.cells) {
    out.push_back({cell.record_index, cell.attribute, &cell.target});
  }
  return out;
}

HifGradients make_gradients(const HifModel& model) {
  HifGradients g;
  g.params = model.params;
  g.params.set_zero();
  if (model.config.train_embeddings) {
    g.embeddings = MatrixXd::Zero(model.embeddings.vectors.rows(),
                                  model.embeddings.vectors.cols());
  }
  return g;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void HifConfig::validate() const {
  if (d_e == 0 || d_a == 0 || d_k == 0 || d_v == 0 || d == 0 || num_heads == 0) {
    throw UsageError("all model dimensions must be positive");
  }
  if (d_k % num_heads != 0 || d_v % num_heads != 0) {
    throw UsageError("num_heads must divide both d_k and d_v");
  }
  if (!(mask_prob > 0.0) || !(mask_prob < 1.0)) {
    throw UsageError("mask_prob must be in (0, 1)");
  }
  if (learning_rate < 0.0 || weight_decay < 0.0) {
    throw UsageError("learning rate and weight decay must be nonnegative");
  }
  if (batches_per_epoch == 0 || max_epochs == 0 || patience == 0) {
    throw UsageError("batches_per_epoch, max_epochs, patience must be positive");
  }
}

bool HifParams::all_finite() const {
  auto finite = [](const MatrixXd& m) { return m.allFinite(); };
  for (const auto& t : pool) {
    if (!finite(t)) return false;
  }
  for (const auto& t : pool_proj) {
    if (!finite(t)) return false;
  }
  for (const auto& t : value) {
    if (!finite(t)) return false;
  }
  return finite(query) && finite(key) && finite(mlp_w1) && finite(mlp_b1) &&
         finite(mlp_w2) && finite(mlp_b2) && finite(head_w1) &&
         finite(head_b1) && finite(head_w2) && finite(head_b2);
}

void HifParams::set_zero() {
  for (auto& [name, tensor] : named_tensors(*this)) tensor->setZero();
}

std::vector<NamedTensor> named_tensors(HifParams& params) {
  std::vector<NamedTensor> out;
  const std::size_t m = params.pool.size();
  for (std::size_t i = 0; i < m; ++i) {
    out.push_back({"a_" + std::to_string(i), &params.pool[i]});
  }
  for (std::size_t i = 0; i < m; ++i) {
    out.push_back({"W_a_" + std::to_string(i), &params.pool_proj[i]});
  }
  out.push_back({"Q", &params.query});
  out.push_back({"K", &params.key});
  for (std::size_t i = 0; i < m; ++i) {
    out.push_back({"V_" + std::to_string(i), &params.value[i]});
  }
  out.push_back({"mlp_w1", &params.mlp_w1});
  out.push_back({"mlp_b1", &params.mlp_b1});
  out.push_back({"mlp_w2", &params.mlp_w2});
  out.push_back({"mlp_b2", &params.mlp_b2});
  out.push_back({"head_w1", &params.head_w1});
  out.push_back({"head_b1", &params.head_b1});
  out.push_back({"head_w2", &params.head_w2});
  out.push_back({"head_b2", &params.head_b2});
  return out;
}

HifParams init_params(const HifConfig& config, std::size_t attribute_count,
                      std::size_t vocab_size, std::uint64_t seed) {
  config.validate();
  const Index d_e = static_cast<Index>(config.d_e);
  const Index d_a = static_cast<Index>(config.d_a);
  const Index d_k = static_cast<Index>(config.d_k);
  const Index d_v = static_cast<Index>(config.d_v);
  const Index d = static_cast<Index>(config.d);
  const Index n = static_cast<Index>(vocab_size);

  HifParams p;
  p.pool.assign(attribute_count, MatrixXd(d_e, 1));
  p.pool_proj.assign(attribute_count, MatrixXd(d_e, d_a));
  p.query.resize(d_a, d_k);
  p.key.resize(d_a, d_k);
  p.value.assign(attribute_count, MatrixXd(d_a, d_v));
  p.mlp_w1.resize(2 * d_v, d);
  p.mlp_b1 = MatrixXd::Zero(d, 1);
  p.mlp_w2.resize(d, d);
  p.mlp_b2 = MatrixXd::Zero(d, 1);
  p.head_w1.resize(d, d);
  p.head_b1 = MatrixXd::Zero(d, 1);
  p.head_w2.resize(d, n);
  p.head_b2 = MatrixXd::Zero(n, 1);

  Rng rng(derive_seed(seed, "init"));
  for (auto& [name, tensor] : named_tensors(p)) {
    if (name.rfind("mlp_b", 0) == 0 || name.rfind("head_b", 0) == 0) continue;
    const double limit =
        std::sqrt(6.0 / static_cast<double>(tensor->rows() + tensor->cols()));
    for (Index r = 0; r < tensor->rows(); ++r) {
      for (Index c = 0; c < tensor->cols(); ++c) {
        (*tensor)(r, c) = rng.uniform(-limit, limit);
      }
    }
  }
  return p;
}

tokenize::FramedValue HifModel::frame_value(std::size_t attr_index,
                                            const std::string& raw) const {
  const auto tokens = tokenize::normalize_value(raw);
  return tokenize::frame(tokens, frame_lengths.for_attribute(attributes[attr_index]),
                         vocab);
}

Eigen::VectorXd agg_forward(const Eigen::MatrixXd& value_matrix,
                            std::span<const bool> content,
                            std::size_t attr_index, const HifParams& params) {
  if (attr_index >= params.attribute_count()) {
    throw UsageError("attribute index out of range");
  }
  if (content.size() != static_cast<std::size_t>(value_matrix.rows())) {
    throw UsageError("content mask length must match value matrix rows");
  }
  std::vector<std::size_t> support;
  for (std::size_t t = 0; t < content.size(); ++t) {
    if (content[t]) support.push_back(t);
  }
  AttrCache cache;
  agg_attr_forward(value_matrix, support, attr_index, params, cache);
  return cache.agg_pre.cwiseMax(0.0);
}

Eigen::VectorXd agg_forward(const tokenize::FramedValue& framed,
                            const HifModel& model, std::size_t attr_index) {
  const MatrixXd embedded = embedding::embed_value(framed, model.embeddings);
  AttrCache cache;
  agg_attr_forward(embedded, content_positions(framed), attr_index,
                   model.params, cache);
  return cache.agg_pre.cwiseMax(0.0);
}

Eigen::MatrixXd prop_forward(const Eigen::MatrixXd& agg_vectors,
                             const HifParams& params, const HifConfig& config) {
  const std::size_t m = static_cast<std::size_t>(agg_vectors.rows());
  if (m == 0) throw UsageError("prop_forward needs at least one attribute");
  if (m != params.attribute_count()) {
    throw UsageError("agg_vectors rows must equal the attribute count");
  }
  // Reuses the record forward path with a stub record cache.
  const Index d_v = static_cast<Index>(config.d_v);
  MatrixXd q = agg_vectors * params.query;
  MatrixXd k = agg_vectors * params.key;
  MatrixXd v(static_cast<Index>(m), d_v);
  for (std::size_t i = 0; i < m; ++i) {
    v.row(static_cast<Index>(i)) =
        agg_vectors.row(static_cast<Index>(i)) * params.value[i];
  }
  const std::size_t heads = config.num_heads;
  const Index hk = static_cast<Index>(config.d_k / heads);
  const Index hv = static_cast<Index>(config.d_v / heads);
  const double scale =
      config.scale_by_key_dim ? 1.0 / std::sqrt(static_cast<double>(hk))
                              : 1.0 / std::sqrt(static_cast<double>(m));
  MatrixXd context = MatrixXd::Zero(static_cast<Index>(m), d_v);
  if (m > 1) {
    for (std::size_t h = 0; h < heads; ++h) {
      const Index kh = static_cast<Index>(h) * hk;
      const Index vh = static_cast<Index>(h) * hv;
      for (std::size_t i = 0; i < m; ++i) {
        VectorXd scores(static_cast<Index>(m - 1));
        Index s = 0;
        for (std::size_t j = 0; j < m; ++j) {
          if (j == i) continue;
          scores[s++] = q.row(static_cast<Index>(i)).segment(kh, hk).dot(
                            k.row(static_cast<Index>(j)).segment(kh, hk)) *
                        scale;
        }
        const VectorXd weights = stable_softmax(scores);
        s = 0;
        for (std::size_t j = 0; j < m; ++j) {
          if (j == i) continue;
          context.row(static_cast<Index>(i)).segment(vh, hv) +=
              weights[s++] * v.row(static_cast<Index>(j)).segment(vh, hv);
        }
      }
    }
  }
  MatrixXd concat(static_cast<Index>(m), 2 * d_v);
  concat << v, context;
  return concat.cwiseMax(0.0);
}

Eigen::MatrixXd hif_forward(const HifModel& model,
                            const corpus::Record& record) {
  const FramedRecord framed = frame_record(model, record);
  RecordCache rc;
  forward_record(model, framed, rc);
  return rc.out;
}

Eigen::VectorXd predict_wbow(const HifModel& model,
                             const Eigen::VectorXd& attribute_embedding) {
  HeadCache hc;
  head_forward(model.params, attribute_embedding, hc);
  return stable_softmax(hc.logits);
}

double reconstruction_loss(const HifModel& model,
                           const tokenize::MaskedCorpus& masked) {
  const auto framed = frame_table(model, masked.corrupted);
  const auto cells = cells_of(masked);
  return loss_over_cells(model, framed, cells, nullptr);
}

double reconstruction_loss_and_gradient(const HifModel& model,
                                        const tokenize::MaskedCorpus& masked,
                                        HifGradients* gradients) {
  const auto framed = frame_table(model, masked.corrupted);
  const auto cells = cells_of(masked);
  if (gradients) {
    *gradients = make_gradients(model);
  }
  return loss_over_cells(model, framed, cells, gradients);
}

double gradient_check(HifModel& model, const tokenize::MaskedCorpus& masked,
                      const GradientCheckOptions& options) {
  const auto framed = frame_table(model, masked.corrupted);
  const auto cells = cells_of(masked);

  HifGradients analytic = make_gradients(model);
  loss_over_cells(model, framed, cells, &analytic);
  if (!options.perturb_tensor.empty()) {
    bool found = false;
    for (auto& [name, tensor] : named_tensors(analytic.params)) {
      if (name == options.perturb_tensor) {
        *tensor = 2.0 * *tensor;
        tensor->array() += 0.1;
        found = true;
      }
    }
    if (!found) {
      throw UsageError("unknown tensor '" + options.perturb_tensor + "'");
    }
  }

  auto param_tensors = named_tensors(model.params);
  auto grad_tensors = named_tensors(analytic.params);
  const std::size_t per_tensor =
      (options.min_coordinates + param_tensors.size() - 1) /
      param_tensors.size();

  Rng rng(derive_seed(options.seed, "grad-check"));
  double max_rel = 0.0;
  for (std::size_t t = 0; t < param_tensors.size(); ++t) {
    Eigen::MatrixXd* tensor = param_tensors[t].tensor;
    Eigen::MatrixXd* grad = grad_tensors[t].tensor;
    const std::size_t size = static_cast<std::size_t>(tensor->size());
    for (std::size_t pick = 0; pick < per_tensor; ++pick) {
      const Index idx = static_cast<Index>(rng.below(size));
      const double original = tensor->data()[idx];
      tensor->data()[idx] = original + options.epsilon;
      const double loss_plus = loss_over_cells(model, framed, cells, nullptr);
      tensor->data()[idx] = original - options.epsilon;
      const double loss_minus = loss_over_cells(model, framed, cells, nullptr);
      tensor->data()[idx] = original;
      const double fd = (loss_plus - loss_minus) / (2.0 * options.epsilon);
      const double an = grad->data()[idx];
      const double rel = std::abs(fd - an) /
                         std::max({std::abs(fd), std::abs(an), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

namespace {

struct AdamState {
  HifParams m;
  HifParams v;
  MatrixXd emb_m, emb_v;
  std::size_t step = 0;
};

void adam_step(HifModel& model, HifGradients& grads, AdamState& state) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  const double lr = model.config.learning_rate;
  const double wd = model.config.weight_decay;
  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));

  auto update = [&](MatrixXd& theta, const MatrixXd& g, MatrixXd& m,
                    MatrixXd& v) {
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
    const MatrixXd m_hat = m / bc1;
    const MatrixXd v_hat = v / bc2;
    theta -= lr * (m_hat.array() / (v_hat.array().sqrt() + kEps)).matrix();
    theta -= lr * wd * theta;
  };

  auto params = named_tensors(model.params);
  auto grad_tensors = named_tensors(grads.params);
  auto m_tensors = named_tensors(state.m);
  auto v_tensors = named_tensors(state.v);
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(*params[i].tensor, *grad_tensors[i].tensor, *m_tensors[i].tensor,
           *v_tensors[i].tensor);
  }
  if (model.config.train_embeddings) {
    update(model.embeddings.vectors, grads.embeddings, state.emb_m,
           state.emb_v);
    model.embeddings.vectors.row(tokenize::kPadId).setZero();
  }
}

}  // namespace

HifModel train_hif(const corpus::EntityTable& table_a,
                   const corpus::EntityTable& table_b, const HifConfig& config,
                   const tokenize::FrameLengths& frame_lengths,
                   const std::optional<std::filesystem::path>& pretrained,
                   TrainLog* log) {
  config.validate();
  if (table_a.attributes != table_b.attributes) {
    throw DataError("tables '" + table_a.name + "' and '" + table_b.name +
                    "' have different attribute lists");
  }
  if (table_a.records.empty() && table_b.records.empty()) {
    throw DataError("training needs a non-empty record union");
  }

  // Union of both tables; ids are prefixed to stay unique.
  corpus::EntityTable union_table;
  union_table.name = "union";
  union_table.attributes = table_a.attributes;
  for (const auto& rec : table_a.records) {
    union_table.records.push_back({"1:" + rec.id, rec.values});
  }
  for (const auto& rec : table_b.records) {
    union_table.records.push_back({"2:" + rec.id, rec.values});
  }
  union_table.rebuild_index();

  HifModel model;
  model.config = config;
  model.attributes = table_a.attributes;
  model.frame_lengths = frame_lengths;
  model.vocab = tokenize::Vocab::build(table_a, table_b);
  if (pretrained) {
    model.embeddings = embedding::load_pretrained(*pretrained, model.vocab,
                                                  config.seed);
    model.config.d_e = model.embeddings.dim();
  } else {
    model.embeddings = embedding::random_init(model.vocab, config.d_e,
                                              config.seed);
  }
  model.params = init_params(model.config, model.attributes.size(),
                             model.vocab.size(), config.seed);

  AdamState state;
  state.m = model.params;
  state.m.set_zero();
  state.v = model.params;
  state.v.set_zero();
  if (config.train_embeddings) {
    state.emb_m = MatrixXd::Zero(model.embeddings.vectors.rows(),
                                 model.embeddings.vectors.cols());
    state.emb_v = state.emb_m;
  }

  HifParams best_params = model.params;
  embedding::EmbeddingStore best_embeddings = model.embeddings;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t stale_epochs = 0;

  // Non-empty cell slots; 10% are held out once as a fixed validation
  // corpus so epoch losses stay comparable. Training masks never touch
  // the held-out slots.
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t r = 0; r < union_table.records.size(); ++r) {
    const auto& rec = union_table.records[r];
    for (std::size_t a = 0; a < rec.values.size(); ++a) {
      if (!rec.values[a].empty()) slots.emplace_back(r, a);
    }
  }
  if (slots.empty()) {
    throw DataError("training needs at least one non-empty cell");
  }
  Rng val_rng(derive_seed(config.seed, "val-split"));
  std::vector<char> is_val(slots.size(), 0);
  std::size_t val_count = 0;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (val_rng.bernoulli(0.1)) {
      is_val[s] = 1;
      ++val_count;
    }
  }
  if (val_count == 0) {
    is_val.back() = 1;
    val_count = 1;
  }

  tokenize::MaskedCorpus val_corpus;
  val_corpus.corrupted = union_table;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (!is_val[s]) continue;
    auto [r, a] = slots[s];
    auto& value = val_corpus.corrupted.records[r].values[a];
    const auto tokens = tokenize::normalize_value(value);
    val_corpus.cells.push_back({r, union_table.records[r].id, a,
                                tokenize::wbow(tokens, model.vocab)});
    value.clear();
  }
  const auto val_framed = frame_table(model, val_corpus.corrupted);
  const auto val_cells = cells_of(val_corpus);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const std::uint64_t mask_index = config.remask_each_epoch ? epoch : 0;
    tokenize::MaskedCorpus masked;
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt >= 100) {
        throw TrainError("masking produced no cells after 100 attempts");
      }
      Rng mask_rng(derive_seed(config.seed, "epoch-mask",
                               mask_index * 1000 + attempt));
      masked.corrupted = union_table;
      masked.cells.clear();
      for (std::size_t s = 0; s < slots.size(); ++s) {
        const bool mask = mask_rng.bernoulli(config.mask_prob);
        if (!mask || is_val[s]) continue;
        auto [r, a] = slots[s];
        auto& value = masked.corrupted.records[r].values[a];
        const auto tokens = tokenize::normalize_value(value);
        masked.cells.push_back({r, union_table.records[r].id, a,
                                tokenize::wbow(tokens, model.vocab)});
        value.clear();
      }
      if (!masked.cells.empty()) break;
    }
    const auto framed = frame_table(model, masked.corrupted);
    const auto train_cells = cells_of(masked);

    // Records carrying at least one training cell, shuffled, split into
    // even batches.
    std::vector<std::size_t> batch_records;
    for (const auto& cell : train_cells) batch_records.push_back(cell.record);
    std::sort(batch_records.begin(), batch_records.end());
    batch_records.erase(
        std::unique(batch_records.begin(), batch_records.end()),
        batch_records.end());
    Rng batch_rng(derive_seed(config.seed, "batch", epoch));
    batch_rng.shuffle(batch_records);

    const std::size_t batch_count =
        std::min<std::size_t>(config.batches_per_epoch, batch_records.size());
    const std::size_t base = batch_records.size() / batch_count;
    const std::size_t extra = batch_records.size() % batch_count;
    std::size_t cursor = 0;
    for (std::size_t b = 0; b < batch_count; ++b) {
      const std::size_t take = base + (b < extra ? 1 : 0);
      std::vector<std::size_t> chunk(batch_records.begin() + cursor,
                                     batch_records.begin() + cursor + take);
      cursor += take;
      std::sort(chunk.begin(), chunk.end());
      std::vector<CellRef> batch_cells;
      for (const auto& cell : train_cells) {
        if (std::binary_search(chunk.begin(), chunk.end(), cell.record)) {
          batch_cells.push_back(cell);
        }
      }
      if (batch_cells.empty()) continue;
      HifGradients grads = make_gradients(model);
      const double loss = loss_over_cells(model, framed, batch_cells, &grads);
      if (!std::isfinite(loss)) {
        throw TrainError("training diverged (non-finite loss) at epoch " +
                         std::to_string(epoch) + " batch " + std::to_string(b));
      }
      adam_step(model, grads, state);
      if (!model.params.all_finite()) {
        throw TrainError("training diverged (non-finite parameters) at epoch " +
                         std::to_string(epoch) + " batch " + std::to_string(b));
      }
    }

    const double val_loss =
        loss_over_cells(model, val_framed, val_cells, nullptr);
    if (log) log->validation_losses.push_back(val_loss);
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best_params = model.params;
      best_embeddings = model.embeddings;
      best_epoch = epoch;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.patience) {
        if (log) log->epochs_run = epoch + 1;
        break;
      }
    }
    if (log) log->epochs_run = epoch + 1;
  }

  model.params = best_params;
  model.embeddings = best_embeddings;
  if (log) {
    log->best_epoch = best_epoch;
    log->best_validation_loss = best_loss;
  }
  return model;
}

void save_model(const HifModel& model, const std::filesystem::path& model_path,
                const std::string& vocab_filename) {
  const auto vocab_path = model_path.parent_path() / vocab_filename;
  model.vocab.save(vocab_path);

  std::ofstream out(model_path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + model_path.string());
  const HifConfig& c = model.config;
  out << "emkat.model.v1\n";
  out << "[meta]\n";
  out << "m " << model.attributes.size() << '\n';
  out << "d_e " << c.d_e << '\n';
  out << "d_a " << c.d_a << '\n';
  out << "d_k " << c.d_k << '\n';
  out << "d_v " << c.d_v << '\n';
  out << "d " << c.d << '\n';
  out << "num_heads " << c.num_heads << '\n';
  out << "scale_by_key_dim " << (c.scale_by_key_dim ? 1 : 0) << '\n';
  out << "seed " << c.seed << '\n';
  for (std::size_t i = 0; i < model.attributes.size(); ++i) {
    out << "attr " << i << ' ' << model.attributes[i] << '\n';
  }
  for (std::size_t i = 0; i < model.attributes.size(); ++i) {
    out << "frame_len " << i << ' '
        << model.frame_lengths.for_attribute(model.attributes[i]) << '\n';
  }
  out << "[vocab-ref]\n";
  out << "path " << vocab_filename << '\n';
  out << "size " << model.vocab.size() << '\n';

  auto write_tensor = [&out](const std::string& name, const MatrixXd& t) {
    out << "[tensor " << name << "]\n";
    out << "rows " << t.rows() << '\n';
    out << "cols " << t.cols() << '\n';
    for (Index r = 0; r < t.rows(); ++r) {
      for (Index c2 = 0; c2 < t.cols(); ++c2) {
        if (c2) out << ' ';
        out << format_double(t(r, c2));
      }
      out << '\n';
    }
  };
  write_tensor("emb", model.embeddings.vectors);
  auto& mutable_params = const_cast<HifParams&>(model.params);
  for (const auto& [name, tensor] : named_tensors(mutable_params)) {
    write_tensor(name, *tensor);
  }
}

HifModel load_model(const std::filesystem::path& model_path) {
  std::ifstream in(model_path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + model_path.string());
  std::string line;
  auto fail = [&](const std::string& why) -> ModelError {
    return ModelError(model_path.string() + ": " + why);
  };
  if (!std::getline(in, line) || line != "emkat.model.v1") {
    throw fail("not an emkat model file");
  }
  if (!std::getline(in, line) || line != "[meta]") throw fail("missing [meta]");

  HifModel model;
  std::size_t m = 0;
  std::string vocab_file;
  std::size_t vocab_size = 0;
  std::map<std::size_t, std::size_t> frame_lens;

  while (std::getline(in, line)) {
    if (line == "[vocab-ref]") break;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "m") ss >> m;
    else if (key == "d_e") ss >> model.config.d_e;
    else if (key == "d_a") ss >> model.config.d_a;
    else if (key == "d_k") ss >> model.config.d_k;
    else if (key == "d_v") ss >> model.config.d_v;
    else if (key == "d") ss >> model.config.d;
    else if (key == "num_heads") ss >> model.config.num_heads;
    else if (key == "seed") ss >> model.config.seed;
    else if (key == "scale_by_key_dim") {
      int flag = 0;
      ss >> flag;
      model.config.scale_by_key_dim = flag != 0;
    } else if (key == "attr") {
      std::size_t idx;
      ss >> idx;
      std::string name;
      std::getline(ss, name);
      if (!name.empty() && name.front() == ' ') name.erase(0, 1);
      model.attributes.resize(std::max(model.attributes.size(), idx + 1));
      model.attributes[idx] = name;
    } else if (key == "frame_len") {
      std::size_t idx, len;
      ss >> idx >> len;
      frame_lens[idx] = len;
    } else {
      throw fail("unknown meta key '" + key + "'");
    }
  }
  if (model.attributes.size() != m) throw fail("attribute list incomplete");
  for (std::size_t i = 0; i < m; ++i) {
    auto it = frame_lens.find(i);
    if (it == frame_lens.end()) throw fail("missing frame_len entry");
    model.frame_lengths.overrides[model.attributes[i]] = it->second;
  }

  while (std::getline(in, line)) {
    if (line.rfind("[tensor ", 0) == 0) break;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "path") ss >> vocab_file;
    else if (key == "size") ss >> vocab_size;
    else throw fail("unknown vocab-ref key '" + key + "'");
  }
  if (vocab_file.empty()) throw fail("missing vocab path");
  model.vocab = tokenize::Vocab::load(model_path.parent_path() / vocab_file);
  if (model.vocab.size() != vocab_size) {
    throw fail("vocab size mismatch: file has " +
               std::to_string(model.vocab.size()) + ", model expects " +
               std::to_string(vocab_size));
  }

  model.params = init_params(model.config, m, model.vocab.size(), 0);
  model.embeddings.vectors =
      MatrixXd::Zero(static_cast<Index>(model.vocab.size()),
                     static_cast<Index>(model.config.d_e));

  std::map<std::string, MatrixXd*> slots;
  slots["emb"] = &model.embeddings.vectors;
  for (const auto& [name, tensor] : named_tensors(model.params)) {
    slots[name] = tensor;
  }
  std::map<std::string, bool> loaded;
  for (const auto& [name, tensor] : slots) loaded[name] = false;

  // `line` currently holds the first [tensor ...] header.
  while (true) {
    if (line.rfind("[tensor ", 0) != 0 || line.back() != ']') {
      throw fail("malformed tensor header '" + line + "'");
    }
    const std::string name = line.substr(8, line.size() - 9);
    auto it = slots.find(name);
    if (it == slots.end()) throw fail("unknown tensor '" + name + "'");
    MatrixXd* tensor = it->second;
    loaded[name] = true;

    std::size_t rows = 0, cols = 0;
    std::string key;
    if (!std::getline(in, line)) throw fail("truncated tensor " + name);
    {
      std::istringstream ss(line);
      ss >> key >> rows;
      if (key != "rows") throw fail("expected rows for tensor " + name);
    }
    if (!std::getline(in, line)) throw fail("truncated tensor " + name);
    {
      std::istringstream ss(line);
      ss >> key >> cols;
      if (key != "cols") throw fail("expected cols for tensor " + name);
    }
    if (rows != static_cast<std::size_t>(tensor->rows()) ||
        cols != static_cast<std::size_t>(tensor->cols())) {
      throw fail("tensor " + name + " has shape " + std::to_string(rows) + "x" +
                 std::to_string(cols) + ", expected " +
                 std::to_string(tensor->rows()) + "x" +
                 std::to_string(tensor->cols()));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw fail("truncated tensor " + name);
      std::istringstream ss(line);
      for (std::size_t c2 = 0; c2 < cols; ++c2) {
        double v;
        if (!(ss >> v)) throw fail("short row in tensor " + name);
        (*tensor)(static_cast<Index>(r), static_cast<Index>(c2)) = v;
      }
    }
    if (!std::getline(in, line)) break;  // end of file
    if (line.empty()) break;
  }
  for (const auto& [name, was_loaded] : loaded) {
    if (!was_loaded) throw fail("tensor '" + name + "' missing from file");
  }
  return model;
}

}  // namespace emkat::hif
