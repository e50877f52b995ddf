#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <utility>

#include "knockens/dataset.hpp"
#include "knockens/rng.hpp"

namespace knockens {

struct NetworkConfig {
  int p = 0;            // original feature count
  int copies = 1;       // knockoff copies M; input width is (1+M)*p
  int depth = 1;        // 1, 2 or 3 hidden FC layers
  int hidden = 25;
  double lambda = 0.0;  // L1 coefficient, applied to the first FC weight matrix
  double dropout_prob = 0.5;
  int covariate_dim = 0;
  Task task = Task::regression;
  std::uint64_t seed = 0;

  int input_dim() const { return (1 + copies) * p; }
  void validate() const;  // throws ConfigError
};

/// Pairwise-connected network: the first layer maps (1+M)*p inputs to p units,
/// unit j combining only columns {j, j+p, ..., j+M*p}; then dropout, a stack
/// of `depth` ELU FC layers, optional covariate concatenation, and a final
/// linear unit (a logit for the binary task).
///
/// Parameters live in one flat vector (pairwise weights, FC weights/biases in
/// depth order, final layer) with Adam state alongside. Training mutates the
/// network; everything else is const.
class Network {
public:
  explicit Network(const NetworkConfig& cfg);

  const NetworkConfig& config() const { return cfg_; }

  /// Predictions for a batch. In train mode, dropout consumes the network's
  /// dropout RNG stream; in eval mode the pass is deterministic.
  Eigen::VectorXd forward(const Eigen::MatrixXd& x_aug, const Eigen::MatrixXd* covariates,
                          bool train_mode);

  /// One minibatch step: forward with dropout, backprop of the penalized loss
  /// (MSE or logistic loss on logits, plus lambda * ||W_fc1||_1), Adam update
  /// with beta1=0.9, beta2=0.999, eps=1e-8 and bias correction.
  /// Returns the penalized training loss. Throws NumericError on a
  /// non-finite loss.
  double train_step(const Eigen::MatrixXd& x_aug, const Eigen::MatrixXd* covariates,
                    const Eigen::VectorXd& targets, double learning_rate);

  /// Data-fit term only (no L1), eval mode; this is the CV loss.
  double data_loss(const Eigen::MatrixXd& x_aug, const Eigen::MatrixXd* covariates,
                   const Eigen::VectorXd& targets) const;

  /// Signed per-row gradient of the scalar output w.r.t. each input column
  /// (eval mode): rows x (1+M)*p.
  Eigen::MatrixXd input_gradients(const Eigen::MatrixXd& x_aug,
                                  const Eigen::MatrixXd* covariates) const;

  /// Z_k = mean over rows of |d output / d x_k|; length (1+M)*p.
  Eigen::VectorXd input_gradient_importance(const Eigen::MatrixXd& x_aug,
                                            const Eigen::MatrixXd* covariates) const;

  /// Alternative scorer behind the same interface: |pairwise weight| per
  /// input column.
  Eigen::VectorXd pairwise_weight_importance() const;

  /// Penalized loss and its gradient w.r.t. the flat parameter vector.
  /// train_mode=true applies a dropout mask drawn from the dropout RNG (so
  /// reseed_dropout gives reproducible masks); eval mode is deterministic.
  /// No optimizer update. Used for gradient verification.
  std::pair<double, Eigen::VectorXd> loss_and_gradient(const Eigen::MatrixXd& x_aug,
                                                       const Eigen::MatrixXd* covariates,
                                                       const Eigen::VectorXd& targets,
                                                       bool train_mode = false);

  Eigen::VectorXd parameters() const { return theta_; }
  void set_parameters(const Eigen::VectorXd& theta);
  Eigen::Index parameter_count() const { return theta_.size(); }

  void reseed_dropout(std::uint64_t seed);

  /// Flat binary record: magic bytes, config JSON, little-endian f64
  /// parameter block. Optimizer state is not persisted.
  void save_checkpoint(const std::filesystem::path& path) const;
  static Network load_checkpoint(const std::filesystem::path& path);

private:
  struct Layout;
  struct Cache;

  Eigen::VectorXd forward_cached(const Eigen::MatrixXd& x_aug, const Eigen::MatrixXd* covariates,
                                 bool train_mode, Cache* cache) const;
  double loss_from_predictions(const Eigen::VectorXd& pred, const Eigen::VectorXd& targets,
                               Eigen::VectorXd* dpred) const;
  void backward(const Cache& cache, const Eigen::VectorXd& dpred, Eigen::VectorXd* grad,
                Eigen::MatrixXd* dinput) const;

  NetworkConfig cfg_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd adam_m_;
  Eigen::VectorXd adam_v_;
  long adam_step_ = 0;
  mutable Rng dropout_rng_;  // consumed only by train-mode forwards
};

}  // namespace knockens
