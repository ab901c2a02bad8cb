#include "foxp2/dictionary.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace foxp2;

namespace {

Mat gaussian(int n, int d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Mat X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = nd(rng);
  return X;
}

// Written out independently of the library: per-row loop over the tied autoencoder.
double oracle_loss(const Mat& W, const Vec& b, const Mat& X, double l1) {
  double tot = 0.0;
  for (int i = 0; i < X.rows(); ++i) {
    Vec h = X.row(i).transpose();
    Vec z(W.cols());
    for (int j = 0; j < W.cols(); ++j) z[j] = std::max(0.0, W.col(j).dot(h) + b[j]);
    Vec r = h;
    for (int j = 0; j < W.cols(); ++j) r -= z[j] * W.col(j);
    tot += r.squaredNorm() + l1 * z.sum();
  }
  return tot / double(X.rows());
}

double min_abs_preact(const Dictionary& D, const Mat& X) {
  Mat R = X * D.W;
  R.rowwise() += D.b.transpose();
  return R.cwiseAbs().minCoeff();
}

}  // namespace

TEST(Dictionary, GradientMatchesCentralDifferences) {
  const int d = 4, m = 8;
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 5 && seed < 50; ++seed) {
    Dictionary D = init_dictionary(d, m, seed);
    D.b = gaussian(1, m, seed + 100, 0.3).row(0).transpose();
    Mat X = gaussian(16, d, seed + 200);
    if (min_abs_preact(D, X) < 1e-3) continue;  // keep the probe away from ReLU kinks
    ++checked;
    const double l1 = 0.05, h = 1e-6;
    SaeGrad g = sae_loss_grad(D, X, l1);
    EXPECT_NEAR(g.loss, oracle_loss(D.W, D.b, X, l1), 1e-12);
    Mat fdW(d, m);
    Vec fdb(m);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < m; ++j) {
        Mat Wp = D.W, Wm = D.W;
        Wp(i, j) += h;
        Wm(i, j) -= h;
        fdW(i, j) = (oracle_loss(Wp, D.b, X, l1) - oracle_loss(Wm, D.b, X, l1)) / (2 * h);
      }
    for (int j = 0; j < m; ++j) {
      Vec bp = D.b, bm = D.b;
      bp[j] += h;
      bm[j] -= h;
      fdb[j] = (oracle_loss(D.W, bp, X, l1) - oracle_loss(D.W, bm, X, l1)) / (2 * h);
    }
    double num = std::sqrt((g.gW - fdW).squaredNorm() + (g.gb - fdb).squaredNorm());
    double den = std::sqrt(fdW.squaredNorm() + fdb.squaredNorm());
    EXPECT_LE(num / den, 1e-5) << "seed " << seed;
  }
  EXPECT_EQ(checked, 5);
}

TEST(Dictionary, EncodeDecodeBasics) {
  Dictionary D;
  D.W = Mat::Identity(4, 4);
  D.b = Vec::Zero(4);
  EXPECT_EQ(D.encode(Vec::Zero(4)), Vec::Zero(4));
  EXPECT_EQ(D.decode(Vec::Zero(4)), Vec::Zero(4));
  Vec h = 2.5 * D.W.col(2);
  Vec z = D.encode(h);
  EXPECT_DOUBLE_EQ(z[2], 2.5);
  EXPECT_EQ(z.sum(), 2.5);
  Vec z1 = Vec::LinSpaced(4, 0, 3), z2 = Vec::Constant(4, 0.5);
  EXPECT_LE((D.decode(z1 + z2) - D.decode(z1) - D.decode(z2)).norm(), 1e-15);

  Dictionary R = init_dictionary(6, 10, 3);
  Mat X = gaussian(50, 6, 8);
  EXPECT_GE(R.encode_rows(X).minCoeff(), 0.0);
}

TEST(Dictionary, HealthExtremes) {
  Mat X = gaussian(40, 4, 2);
  Dictionary perfect;
  perfect.W.resize(4, 8);
  perfect.W << Mat::Identity(4, 4), -Mat::Identity(4, 4);
  perfect.b = Vec::Zero(8);
  EXPECT_LE(dictionary_health(perfect, X).rel_recon, 1e-20);
  Dictionary zero;
  zero.W = Mat::Zero(4, 8);
  zero.b = Vec::Zero(8);
  EXPECT_NEAR(dictionary_health(zero, X).rel_recon, 1.0, 1e-9);
  Dictionary pos = init_dictionary(4, 8, 1);
  pos.b = Vec::Constant(8, 1.0);
  EXPECT_LT(dictionary_health(pos, X).dead_fraction, 1.0);
}

TEST(Dictionary, UnregularizedTrainingReconstructs) {
  Mat X = gaussian(512, 4, 5);
  SaeConfig c;
  c.m = 8;
  c.l1 = 0.0;
  c.lr = 1e-2;
  c.steps = 4000;
  c.batch = 64;
  Dictionary D = train_dictionary(X, c, 1);
  EXPECT_LE(dictionary_health(D, X).rel_recon, 0.01);
}

TEST(Dictionary, SparsityPenaltyReducesActiveCount) {
  Mat X = gaussian(512, 4, 6);
  SaeConfig c;
  c.m = 8;
  c.lr = 1e-2;
  c.steps = 3000;
  c.batch = 64;
  double prev = 1e9;
  for (double l1 : {1e-4, 1e-3, 1e-2}) {
    c.l1 = l1;
    Dictionary D = train_dictionary(X, c, 1);
    Mat Z = D.encode_rows(X);
    double active = (Z.array() > 0.0).cast<double>().sum() / double(Z.rows());
    EXPECT_LE(active, prev + 1e-9) << "l1 " << l1;
    prev = active;
  }
}

TEST(Dictionary, TrainingIsDeterministic) {
  Mat X = gaussian(200, 4, 7);
  SaeConfig c;
  c.m = 8;
  c.steps = 300;
  Dictionary a = train_dictionary(X, c, 4), b = train_dictionary(X, c, 4);
  EXPECT_EQ(a.W, b.W);
  EXPECT_EQ(a.b, b.b);
  std::vector<Mat> layers = {X, 2.0 * X, X.array().square().matrix()};
  auto s = train_dictionaries(layers, c, Exec::Serial);
  auto p = train_dictionaries(layers, c, Exec::Parallel);
  for (std::size_t l = 0; l < layers.size(); ++l) EXPECT_EQ(s[l].W, p[l].W);
}
