#include "knockens/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "knockens/errors.hpp"

namespace knockens {

using nlohmann::json;

void NetworkConfig::validate() const {
  if (p <= 0) throw ConfigError("network: p must be positive");
  if (copies < 1) throw ConfigError("network: copies must be >= 1");
  if (depth < 1 || depth > 3) throw ConfigError("network: depth must be 1, 2 or 3");
  if (hidden <= 0) throw ConfigError("network: hidden width must be positive");
  if (lambda < 0) throw ConfigError("network: lambda must be >= 0");
  if (dropout_prob < 0 || dropout_prob >= 1)
    throw ConfigError("network: dropout_prob must be in [0, 1)");
  if (covariate_dim < 0) throw ConfigError("network: covariate_dim must be >= 0");
}

/// Flat parameter layout: pairwise weights, then (W, b) per FC layer in
/// depth order, then the final linear layer.
struct Network::Layout {
  Eigen::Index pw_off = 0, pw_rows = 0, pw_cols = 0;
  Eigen::Index w_off[3] = {0, 0, 0};
  Eigen::Index b_off[3] = {0, 0, 0};
  Eigen::Index w_rows[3] = {0, 0, 0};
  Eigen::Index wf_off = 0, wf_size = 0;
  Eigen::Index bf_off = 0;
  Eigen::Index total = 0;
  int depth = 1, hidden = 0, cov = 0;

  explicit Layout(const NetworkConfig& cfg) {
    depth = cfg.depth;
    hidden = cfg.hidden;
    cov = cfg.covariate_dim;
    pw_rows = 1 + cfg.copies;
    pw_cols = cfg.p;
    Eigen::Index off = pw_rows * pw_cols;
    Eigen::Index in = cfg.p;
    for (int l = 0; l < depth; ++l) {
      w_off[l] = off;
      w_rows[l] = in;
      off += in * hidden;
      b_off[l] = off;
      off += hidden;
      in = hidden;
    }
    wf_off = off;
    wf_size = hidden + cov;
    off += wf_size;
    bf_off = off;
    total = off + 1;
  }
};

struct Network::Cache {
  const Eigen::MatrixXd* x = nullptr;
  const Eigen::MatrixXd* cov = nullptr;
  Eigen::MatrixXd pw_out;
  Eigen::MatrixXd drop_mask;  // inverted-scaling mask; empty in eval mode
  Eigen::MatrixXd dropped;
  Eigen::MatrixXd pre[3];
  Eigen::MatrixXd act[3];
  bool train_mode = false;
};

namespace {

Eigen::MatrixXd elu(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); });
}

// d/dz ELU(z) = 1 for z > 0, exp(z) otherwise
Eigen::MatrixXd elu_grad(const Eigen::MatrixXd& pre) {
  return pre.unaryExpr([](double v) { return v > 0 ? 1.0 : std::exp(v); });
}

double stable_softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

Network::Network(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const Layout lay(cfg_);
  theta_.setZero(lay.total);
  adam_m_.setZero(lay.total);
  adam_v_.setZero(lay.total);

  Rng init_rng(cfg_.seed);
  auto glorot = [&](Eigen::Index off, Eigen::Index count, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (Eigen::Index i = 0; i < count; ++i) theta_(off + i) = unif(init_rng);
  };
  glorot(lay.pw_off, lay.pw_rows * lay.pw_cols, double(lay.pw_rows), 1.0);
  for (int l = 0; l < lay.depth; ++l)
    glorot(lay.w_off[l], lay.w_rows[l] * lay.hidden, double(lay.w_rows[l]), double(lay.hidden));
  glorot(lay.wf_off, lay.wf_size, double(lay.wf_size), 1.0);
  // biases stay zero

  dropout_rng_.seed(derive_seed(cfg_.seed, 0xd20ULL));
}

void Network::reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

void Network::set_parameters(const Eigen::VectorXd& theta) {
  if (theta.size() != theta_.size())
    throw ConfigError("network: parameter vector has wrong size");
  theta_ = theta;
}

Eigen::VectorXd Network::forward_cached(const Eigen::MatrixXd& x_aug,
                                        const Eigen::MatrixXd* covariates, bool train_mode,
                                        Cache* cache) const {
  const Layout lay(cfg_);
  const Eigen::Index batch = x_aug.rows();
  if (x_aug.cols() != cfg_.input_dim())
    throw DataError("network: batch has " + std::to_string(x_aug.cols()) +
                    " columns, expected " + std::to_string(cfg_.input_dim()));
  if (cfg_.covariate_dim > 0) {
    if (!covariates || covariates->cols() != cfg_.covariate_dim ||
        covariates->rows() != batch)
      throw DataError("network: covariate block missing or mis-shaped");
  }

  const auto pw = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.pw_off, lay.pw_rows,
                                                    lay.pw_cols);

  Eigen::MatrixXd pw_out = Eigen::MatrixXd::Zero(batch, lay.pw_cols);
  for (Eigen::Index m = 0; m < lay.pw_rows; ++m)
    pw_out.array() +=
        x_aug.middleCols(m * lay.pw_cols, lay.pw_cols).array().rowwise() * pw.row(m).array();

  Eigen::MatrixXd drop_mask;
  Eigen::MatrixXd dropped;
  if (train_mode && cfg_.dropout_prob > 0) {
    const double keep = 1.0 - cfg_.dropout_prob;
    std::bernoulli_distribution bern(keep);
    drop_mask.resize(batch, lay.pw_cols);
    for (Eigen::Index j = 0; j < lay.pw_cols; ++j)
      for (Eigen::Index i = 0; i < batch; ++i)
        drop_mask(i, j) = bern(dropout_rng_) ? 1.0 / keep : 0.0;
    dropped = pw_out.cwiseProduct(drop_mask);
  } else {
    dropped = pw_out;
  }

  Eigen::MatrixXd pre[3], act[3];
  const Eigen::MatrixXd* prev = &dropped;
  for (int l = 0; l < lay.depth; ++l) {
    const auto w = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.w_off[l], lay.w_rows[l],
                                                     lay.hidden);
    const auto b = Eigen::Map<const Eigen::VectorXd>(theta_.data() + lay.b_off[l], lay.hidden);
    pre[l] = ((*prev) * w).rowwise() + b.transpose();
    act[l] = elu(pre[l]);
    prev = &act[l];
  }

  const auto wf = Eigen::Map<const Eigen::VectorXd>(theta_.data() + lay.wf_off, lay.wf_size);
  const double bf = theta_(lay.bf_off);
  Eigen::VectorXd out = (*prev) * wf.head(lay.hidden);
  if (lay.cov > 0) out += (*covariates) * wf.tail(lay.cov);
  out.array() += bf;

  if (cache) {
    cache->x = &x_aug;
    cache->cov = covariates;
    cache->pw_out = std::move(pw_out);
    cache->drop_mask = std::move(drop_mask);
    cache->dropped = std::move(dropped);
    for (int l = 0; l < lay.depth; ++l) {
      cache->pre[l] = std::move(pre[l]);
      cache->act[l] = std::move(act[l]);
    }
    cache->train_mode = train_mode;
  }
  return out;
}

Eigen::VectorXd Network::forward(const Eigen::MatrixXd& x_aug, const Eigen::MatrixXd* covariates,
                                 bool train_mode) {
  return forward_cached(x_aug, covariates, train_mode, nullptr);
}

double Network::loss_from_predictions(const Eigen::VectorXd& pred, const Eigen::VectorXd& targets,
                                      Eigen::VectorXd* dpred) const {
  const Eigen::Index batch = pred.size();
  if (targets.size() != batch) throw DataError("network: target length != batch size");
  if (batch == 0) throw DataError("network: empty batch");

  double loss = 0.0;
  if (cfg_.task == Task::regression) {
    const Eigen::VectorXd resid = pred - targets;
    loss = resid.squaredNorm() / double(batch);
    if (dpred) *dpred = 2.0 * resid / double(batch);
  } else {
    if (dpred) dpred->resize(batch);
    for (Eigen::Index i = 0; i < batch; ++i) {
      loss += stable_softplus(pred(i)) - targets(i) * pred(i);
      if (dpred) (*dpred)(i) = 1.0 / (1.0 + std::exp(-pred(i))) - targets(i);
    }
    loss /= double(batch);
    if (dpred) *dpred /= double(batch);
  }
  return loss;
}

void Network::backward(const Cache& cache, const Eigen::VectorXd& dpred, Eigen::VectorXd* grad,
                       Eigen::MatrixXd* dinput) const {
  const Layout lay(cfg_);
  const Eigen::MatrixXd& x = *cache.x;
  const Eigen::Index batch = x.rows();

  const auto wf = Eigen::Map<const Eigen::VectorXd>(theta_.data() + lay.wf_off, lay.wf_size);
  const Eigen::MatrixXd& last_act = cache.act[lay.depth - 1];

  if (grad) {
    auto gwf = Eigen::Map<Eigen::VectorXd>(grad->data() + lay.wf_off, lay.wf_size);
    gwf.head(lay.hidden) = last_act.transpose() * dpred;
    if (lay.cov > 0) gwf.tail(lay.cov) = cache.cov->transpose() * dpred;
    (*grad)(lay.bf_off) = dpred.sum();
  }

  // d loss / d last hidden activation
  Eigen::MatrixXd dact = dpred * wf.head(lay.hidden).transpose();

  for (int l = lay.depth - 1; l >= 0; --l) {
    const Eigen::MatrixXd dpre = dact.cwiseProduct(elu_grad(cache.pre[l]));
    const Eigen::MatrixXd& input = l > 0 ? cache.act[l - 1] : cache.dropped;
    if (grad) {
      auto gw = Eigen::Map<Eigen::MatrixXd>(grad->data() + lay.w_off[l], lay.w_rows[l],
                                            lay.hidden);
      auto gb = Eigen::Map<Eigen::VectorXd>(grad->data() + lay.b_off[l], lay.hidden);
      gw = input.transpose() * dpre;
      gb = dpre.colwise().sum();
    }
    const auto w = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.w_off[l], lay.w_rows[l],
                                                     lay.hidden);
    dact = dpre * w.transpose();
  }

  // through dropout back to the pairwise layer output
  Eigen::MatrixXd dpw_out;
  if (cache.drop_mask.size() > 0)
    dpw_out = dact.cwiseProduct(cache.drop_mask);
  else
    dpw_out = std::move(dact);

  const auto pw = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.pw_off, lay.pw_rows,
                                                    lay.pw_cols);
  if (grad) {
    auto gpw = Eigen::Map<Eigen::MatrixXd>(grad->data() + lay.pw_off, lay.pw_rows, lay.pw_cols);
    for (Eigen::Index m = 0; m < lay.pw_rows; ++m)
      gpw.row(m) = (dpw_out.array() * x.middleCols(m * lay.pw_cols, lay.pw_cols).array())
                       .colwise()
                       .sum();
    // L1 subgradient on the first FC weight matrix (0 at 0)
    if (cfg_.lambda > 0) {
      auto gw1 = Eigen::Map<Eigen::MatrixXd>(grad->data() + lay.w_off[0], lay.w_rows[0],
                                             lay.hidden);
      const auto w1 = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.w_off[0],
                                                        lay.w_rows[0], lay.hidden);
      gw1.array() += cfg_.lambda * w1.array().sign();
    }
  }
  if (dinput) {
    dinput->resize(batch, cfg_.input_dim());
    for (Eigen::Index m = 0; m < lay.pw_rows; ++m)
      dinput->middleCols(m * lay.pw_cols, lay.pw_cols) =
          dpw_out.array().rowwise() * pw.row(m).array();
  }
}

double Network::train_step(const Eigen::MatrixXd& x_aug, const Eigen::MatrixXd* covariates,
                           const Eigen::VectorXd& targets, double learning_rate) {
  const Layout lay(cfg_);
  Cache cache;
  const Eigen::VectorXd pred = forward_cached(x_aug, covariates, true, &cache);
  Eigen::VectorXd dpred;
  double loss = loss_from_predictions(pred, targets, &dpred);
  if (cfg_.lambda > 0) {
    const auto w1 =
        Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.w_off[0], lay.w_rows[0], lay.hidden);
    loss += cfg_.lambda * w1.array().abs().sum();
  }
  if (!std::isfinite(loss)) throw NumericError("training loss is not finite");

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_.size());
  backward(cache, dpred, &grad, nullptr);

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++adam_step_;
  adam_m_ = beta1 * adam_m_ + (1.0 - beta1) * grad;
  adam_v_.array() = beta2 * adam_v_.array() + (1.0 - beta2) * grad.array().square();
  const double c1 = 1.0 - std::pow(beta1, double(adam_step_));
  const double c2 = 1.0 - std::pow(beta2, double(adam_step_));
  theta_.array() -=
      learning_rate * (adam_m_.array() / c1) / ((adam_v_.array() / c2).sqrt() + eps);
  return loss;
}

double Network::data_loss(const Eigen::MatrixXd& x_aug, const Eigen::MatrixXd* covariates,
                          const Eigen::VectorXd& targets) const {
  const Eigen::VectorXd pred = forward_cached(x_aug, covariates, false, nullptr);
  return loss_from_predictions(pred, targets, nullptr);
}

Eigen::MatrixXd Network::input_gradients(const Eigen::MatrixXd& x_aug,
                                         const Eigen::MatrixXd* covariates) const {
  Cache cache;
  forward_cached(x_aug, covariates, false, &cache);
  // rows are independent, so one backward pass with unit output sensitivity
  // yields every row's d(output)/d(input)
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(x_aug.rows());
  Eigen::MatrixXd dinput;
  backward(cache, ones, nullptr, &dinput);
  return dinput;
}

Eigen::VectorXd Network::input_gradient_importance(const Eigen::MatrixXd& x_aug,
                                                   const Eigen::MatrixXd* covariates) const {
  if (x_aug.rows() == 0) throw DataError("importance: empty sample set");
  return input_gradients(x_aug, covariates).cwiseAbs().colwise().mean();
}

Eigen::VectorXd Network::pairwise_weight_importance() const {
  const Layout lay(cfg_);
  const auto pw = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.pw_off, lay.pw_rows,
                                                    lay.pw_cols);
  Eigen::VectorXd z(cfg_.input_dim());
  for (Eigen::Index m = 0; m < lay.pw_rows; ++m)
    z.segment(m * lay.pw_cols, lay.pw_cols) = pw.row(m).cwiseAbs().transpose();
  return z;
}

std::pair<double, Eigen::VectorXd> Network::loss_and_gradient(const Eigen::MatrixXd& x_aug,
                                                              const Eigen::MatrixXd* covariates,
                                                              const Eigen::VectorXd& targets,
                                                              bool train_mode) {
  const Layout lay(cfg_);
  Cache cache;
  const Eigen::VectorXd pred = forward_cached(x_aug, covariates, train_mode, &cache);
  Eigen::VectorXd dpred;
  double loss = loss_from_predictions(pred, targets, &dpred);
  if (cfg_.lambda > 0) {
    const auto w1 =
        Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.w_off[0], lay.w_rows[0], lay.hidden);
    loss += cfg_.lambda * w1.array().abs().sum();
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_.size());
  backward(cache, dpred, &grad, nullptr);
  return {loss, std::move(grad)};
}

namespace {
constexpr char kMagic[8] = {'K', 'N', 'C', 'K', 'N', 'E', 'T', '1'};

template <typename T>
void write_le(std::ofstream& out, T value) {
  // x86-64 is little-endian; written as-is
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}
}  // namespace

void Network::save_checkpoint(const std::filesystem::path& path) const {
  json cfg;
  cfg["p"] = cfg_.p;
  cfg["copies"] = cfg_.copies;
  cfg["depth"] = cfg_.depth;
  cfg["hidden"] = cfg_.hidden;
  cfg["lambda"] = cfg_.lambda;
  cfg["dropout_prob"] = cfg_.dropout_prob;
  cfg["covariate_dim"] = cfg_.covariate_dim;
  cfg["task"] = cfg_.task == Task::binary ? "binary" : "regression";
  cfg["seed"] = cfg_.seed;
  const std::string cfg_str = cfg.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_str.size()));
  out.write(cfg_str.data(), static_cast<std::streamsize>(cfg_str.size()));
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(theta_.size()));
  out.write(reinterpret_cast<const char*>(theta_.data()),
            static_cast<std::streamsize>(theta_.size() * sizeof(double)));
  if (!out) throw IoError("error while writing checkpoint: " + path.string());
}

Network Network::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint has wrong magic bytes: " + path.string());
  const auto cfg_len = read_le<std::uint32_t>(in);
  std::string cfg_str(cfg_len, '\0');
  in.read(cfg_str.data(), cfg_len);
  const json cfg = json::parse(cfg_str);

  NetworkConfig nc;
  nc.p = cfg.at("p").get<int>();
  nc.copies = cfg.at("copies").get<int>();
  nc.depth = cfg.at("depth").get<int>();
  nc.hidden = cfg.at("hidden").get<int>();
  nc.lambda = cfg.at("lambda").get<double>();
  nc.dropout_prob = cfg.at("dropout_prob").get<double>();
  nc.covariate_dim = cfg.at("covariate_dim").get<int>();
  nc.task = cfg.at("task").get<std::string>() == "binary" ? Task::binary : Task::regression;
  nc.seed = cfg.at("seed").get<std::uint64_t>();

  Network net(nc);
  const auto count = read_le<std::uint64_t>(in);
  if (count != static_cast<std::uint64_t>(net.theta_.size()))
    throw DataError("checkpoint parameter count does not match its config: " + path.string());
  in.read(reinterpret_cast<char*>(net.theta_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw DataError("checkpoint is truncated: " + path.string());
  return net;
}

}  // namespace knockens
