#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emkat/corpus.hpp"
#include "emkat/embedding.hpp"
#include "emkat/tokenize.hpp"

namespace emkat::hif {

struct HifConfig {
  std::size_t d_e = 50;   // word-embedding dimension (random-init default)
  std::size_t d_a = 100;  // aggregated attribute dimension
  std::size_t d_k = 16;   // attention query/key dimension
  std::size_t d_v = 100;  // attention value dimension
  std::size_t d = 64;     // output embedding dimension
  std::size_t num_heads = 1;
  double mask_prob = 0.4;
  double learning_rate = 0.01;
  double weight_decay = 1e-5;  // decoupled L2
  std::size_t batches_per_epoch = 3;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 42;
  bool remask_each_epoch = true;
  // Attention logits divide by sqrt(m) by default; this switches to the
  // per-head key dimension instead.
  bool scale_by_key_dim = false;
  bool train_embeddings = false;

  void validate() const;
};

// All learnable tensors. Vectors are stored as single-column matrices so
// the optimizer, serializer, and gradient check can treat every tensor
// uniformly.
struct HifParams {
  std::vector<Eigen::MatrixXd> pool;       // a_i, d_e x 1, one per attribute
  std::vector<Eigen::MatrixXd> pool_proj;  // W_a_i, d_e x d_a
  Eigen::MatrixXd query;                   // Q, d_a x d_k (shared)
  Eigen::MatrixXd key;                     // K, d_a x d_k (shared)
  std::vector<Eigen::MatrixXd> value;      // V_i, d_a x d_v
  Eigen::MatrixXd mlp_w1;                  // 2*d_v x d
  Eigen::MatrixXd mlp_b1;                  // d x 1
  Eigen::MatrixXd mlp_w2;                  // d x d
  Eigen::MatrixXd mlp_b2;                  // d x 1
  Eigen::MatrixXd head_w1;                 // d x d
  Eigen::MatrixXd head_b1;                 // d x 1
  Eigen::MatrixXd head_w2;                 // d x N
  Eigen::MatrixXd head_b2;                 // N x 1

  std::size_t attribute_count() const { return pool.size(); }
  bool all_finite() const;
  void set_zero();
};

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd* tensor;
};

// Stable-order view over every tensor of a parameter set.
std::vector<NamedTensor> named_tensors(HifParams& params);

HifParams init_params(const HifConfig& config, std::size_t attribute_count,
                      std::size_t vocab_size, std::uint64_t seed);

// A trained (or initialized) model: everything needed to embed a record.
struct HifModel {
  HifConfig config;
  std::vector<std::string> attributes;
  tokenize::FrameLengths frame_lengths;
  tokenize::Vocab vocab;
  embedding::EmbeddingStore embeddings;
  HifParams params;

  std::size_t attribute_count() const { return attributes.size(); }
  tokenize::FramedValue frame_value(std::size_t attr_index,
                                    const std::string& raw) const;
};

// Attention-pooled aggregation of one embedded value. `content` flags the
// non-PAD positions; PAD positions are excluded from the pooling softmax.
// An all-PAD value aggregates to the zero vector.
Eigen::VectorXd agg_forward(const Eigen::MatrixXd& value_matrix,
                            std::span<const bool> content,
                            std::size_t attr_index, const HifParams& params);

Eigen::VectorXd agg_forward(const tokenize::FramedValue& framed,
                            const HifModel& model, std::size_t attr_index);

// Scaled dot-product propagation across attributes; row i is
// ReLU(v_i || sum_{j != i} A_ij v_j). For m = 1 the context is zero.
Eigen::MatrixXd prop_forward(const Eigen::MatrixXd& agg_vectors,
                             const HifParams& params, const HifConfig& config);

// Full per-record embedding, one d-dimensional row per attribute.
Eigen::MatrixXd hif_forward(const HifModel& model, const corpus::Record& record);

// Softmax distribution over the vocabulary predicted from one attribute
// embedding (the reconstruction head).
Eigen::VectorXd predict_wbow(const HifModel& model,
                             const Eigen::VectorXd& attribute_embedding);

// Mean cross-entropy between head predictions and the masked-cell targets.
double reconstruction_loss(const HifModel& model,
                           const tokenize::MaskedCorpus& masked);

// Gradient container shaped like the parameters (plus word embeddings when
// those are trainable).
struct HifGradients {
  HifParams params;
  Eigen::MatrixXd embeddings;  // N x d_e, used only when train_embeddings
};

double reconstruction_loss_and_gradient(const HifModel& model,
                                        const tokenize::MaskedCorpus& masked,
                                        HifGradients* gradients);

struct GradientCheckOptions {
  double epsilon = 1e-5;
  std::size_t min_coordinates = 200;
  std::uint64_t seed = 1;
  // Test hook: multiplies this tensor's analytic gradient by 2 and adds
  // 0.1 before comparing (negative control).
  std::string perturb_tensor;
};

// Max scaled relative error between analytic gradients and central finite
// differences over a random subsample of coordinates.
double gradient_check(HifModel& model, const tokenize::MaskedCorpus& masked,
                      const GradientCheckOptions& options = {});

struct TrainLog {
  std::vector<double> validation_losses;  // one per epoch
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
};

// Self-supervised masked-reconstruction training over the union of both
// tables. Adam with decoupled weight decay; re-masks each epoch; early
// stops on a 10% held-out slice of masked cells; returns the best-loss
// parameters. Deterministic under config.seed.
HifModel train_hif(const corpus::EntityTable& table_a,
                   const corpus::EntityTable& table_b, const HifConfig& config,
                   const tokenize::FrameLengths& frame_lengths,
                   const std::optional<std::filesystem::path>& pretrained,
                   TrainLog* log = nullptr);

// Versioned text container; bit-exact round-trip in double precision. The
// vocabulary is written next to the model file and referenced by name.
void save_model(const HifModel& model, const std::filesystem::path& model_path,
                const std::string& vocab_filename = "vocab.txt");

HifModel load_model(const std::filesystem::path& model_path);

}  // namespace emkat::hif
