#include "foxp2/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace foxp2 {

void to_json(nlohmann::json& j, const SaeConfig& c) {
  j = {{"m", c.m},         {"lr", c.lr},       {"steps", c.steps}, {"batch", c.batch},
       {"clip", c.clip},   {"l1", c.l1},       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SaeConfig& c) {
  c = SaeConfig{};
  if (j.contains("m")) j.at("m").get_to(c.m);
  if (j.contains("lr")) j.at("lr").get_to(c.lr);
  if (j.contains("steps")) j.at("steps").get_to(c.steps);
  if (j.contains("batch")) j.at("batch").get_to(c.batch);
  if (j.contains("clip")) j.at("clip").get_to(c.clip);
  if (j.contains("l1")) j.at("l1").get_to(c.l1);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (c.m < 1 || c.steps < 0 || c.batch < 1 || c.lr <= 0 || c.clip <= 0 || c.l1 < 0)
    throw ConfigError("invalid dictionary config");
}

Mat Dictionary::encode_rows(const Mat& X) const {
  Mat R = X * W;
  R.rowwise() += b.transpose();
  return R.cwiseMax(0.0);
}

SaeGrad sae_loss_grad(const Dictionary& D, const Mat& X, double l1) {
  const double n = static_cast<double>(X.rows());
  Mat R = X * D.W;
  R.rowwise() += D.b.transpose();
  Mat Z = R.cwiseMax(0.0);
  Mat E = Z * D.W.transpose() - X;
  SaeGrad g;
  g.loss = (E.squaredNorm() + l1 * Z.sum()) / n;
  Mat dZ = (2.0 / n) * (E * D.W);
  dZ.array() += l1 / n;
  Mat dR = (R.array() > 0.0).select(dZ, 0.0);
  g.gW = (2.0 / n) * (E.transpose() * Z) + X.transpose() * dR;
  g.gb = dR.colwise().sum().transpose();
  return g;
}

double sae_loss(const Dictionary& D, const Mat& X, double l1) {
  Mat Z = D.encode_rows(X);
  Mat E = Z * D.W.transpose() - X;
  return (E.squaredNorm() + l1 * Z.sum()) / static_cast<double>(X.rows());
}

Dictionary init_dictionary(int d, int m, std::uint64_t seed) {
  auto rng = make_rng(seed, "dictionary_init");
  std::normal_distribution<double> nd(0.0, 1.0);
  Dictionary D;
  D.W.resize(d, m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < d; ++i) D.W(i, j) = nd(rng);
    D.W.col(j).normalize();
  }
  D.b = Vec::Zero(m);
  return D;
}

Dictionary train_dictionary(const Mat& X, const SaeConfig& cfg, std::uint64_t seed,
                            std::vector<double>* loss_trace) {
  const int n = static_cast<int>(X.rows());
  if (n == 0) throw ConfigError("empty activation set");
  Dictionary D = init_dictionary(static_cast<int>(X.cols()), cfg.m, seed);
  auto rng = make_rng(seed, "dictionary_batches");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  Mat mW = Mat::Zero(D.W.rows(), D.W.cols()), vW = mW;
  Vec mb = Vec::Zero(cfg.m), vb = mb;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const int B = std::min(cfg.batch, n);
  Mat batch(B, X.cols());

  for (int step = 1; step <= cfg.steps; ++step) {
    for (int r = 0; r < B; ++r) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.row(r) = X.row(order[cursor++]);
    }
    SaeGrad g = sae_loss_grad(D, batch, cfg.l1);
    double gn = std::sqrt(g.gW.squaredNorm() + g.gb.squaredNorm());
    if (gn > cfg.clip) {
      g.gW *= cfg.clip / gn;
      g.gb *= cfg.clip / gn;
    }
    mW = b1 * mW + (1 - b1) * g.gW;
    vW = b2 * vW + (1 - b2) * g.gW.cwiseProduct(g.gW);
    mb = b1 * mb + (1 - b1) * g.gb;
    vb = b2 * vb + (1 - b2) * g.gb.cwiseProduct(g.gb);
    const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
    D.W.array() -= cfg.lr * (mW.array() / c1) / ((vW.array() / c2).sqrt() + eps);
    D.b.array() -= cfg.lr * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
    for (int j = 0; j < cfg.m; ++j) {
      double nj = D.W.col(j).norm();
      if (nj > 1.0) D.W.col(j) /= nj;
    }
    if (loss_trace && (step % 500 == 0 || step == cfg.steps)) loss_trace->push_back(g.loss);
  }
  return D;
}

DictHealth dictionary_health(const Dictionary& D, const Mat& X) {
  Mat Z = D.encode_rows(X);
  Mat E = Z * D.W.transpose() - X;
  DictHealth h;
  h.rel_recon = E.squaredNorm() / (X.squaredNorm() + 1e-12);
  int dead = 0;
  for (int j = 0; j < Z.cols(); ++j)
    if (Z.col(j).maxCoeff() <= 0.0) ++dead;
  h.dead_fraction = Z.cols() ? double(dead) / double(Z.cols()) : 0.0;
  return h;
}

std::vector<Dictionary> train_dictionaries(const std::vector<Mat>& per_layer, const SaeConfig& cfg,
                                           Exec exec) {
  const int L = static_cast<int>(per_layer.size());
  std::vector<Dictionary> out(L);
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int l = 0; l < L; ++l) out[l] = train_dictionary(per_layer[l], cfg, derive_seed(cfg.seed, "dict", l + 1));
  } else {
    for (int l = 0; l < L; ++l) out[l] = train_dictionary(per_layer[l], cfg, derive_seed(cfg.seed, "dict", l + 1));
  }
  return out;
}

}  // namespace foxp2
