#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gsfuse/alignment.hpp"
#include "gsfuse/errors.hpp"
#include "gsfuse/ops.hpp"
#include "test_util.hpp"

using namespace gsfuse;
using namespace gsfuse::alignment;
using gsfuse::testing::random_tensor;
using gsfuse::testing::store_grad_check;

namespace {

Tensor unit_rows(Tensor t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double n = 0;
    for (double v : t.row(r)) n += v * v;
    n = std::sqrt(n);
    for (double& v : t.row(r)) v /= n;
  }
  return t;
}

std::vector<std::size_t> brute_top_k(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

}  // namespace

TEST(Interleave, SingleStepGetsFullWeight) {
  Rng rng(1);
  nn::ParamStore store;
  auto a = nn::MultiHeadAttention::create(store, "a", nn::ParamGroup::Alignment, 8, 2, rng);
  auto c = nn::MultiHeadAttention::create(store, "c", nn::ParamGroup::Alignment, 8, 2, rng);
  Tape tape;
  nn::Binder b(tape, store);
  std::vector<double> wt, ws;
  auto out = bidirectional_interleave(b, a, c, tape.constant(random_tensor({4, 8}, rng)),
                                      tape.constant(random_tensor({1, 8}, rng)), &wt, &ws);
  EXPECT_EQ(out.text.value().shape(), (Shape{4, 8}));
  EXPECT_EQ(out.ts.value().shape(), (Shape{1, 8}));
  for (double v : wt) EXPECT_EQ(v, 1.0);
}

TEST(Interleave, ShapesAndGradient) {
  Rng rng(2);
  nn::ParamStore store;
  auto a = nn::MultiHeadAttention::create(store, "a", nn::ParamGroup::Alignment, 8, 2, rng);
  auto c = nn::MultiHeadAttention::create(store, "c", nn::ParamGroup::Alignment, 8, 2, rng);
  auto text = store.add("text", nn::ParamGroup::TextProjection, random_tensor({3, 8}, rng));
  auto ts = store.add("ts", nn::ParamGroup::TsProjection, random_tensor({4, 8}, rng));
  Tensor w1 = random_tensor({3, 8}, rng), w2 = random_tensor({4, 8}, rng);
  auto rep = store_grad_check(store, [&](nn::Binder& b) {
    auto out = bidirectional_interleave(b, a, c, b(text), b(ts));
    return ops::add(ops::sum(ops::mul(out.text, b.tape().constant(w1))),
                    ops::sum(ops::mul(out.ts, b.tape().constant(w2))));
  });
  EXPECT_TRUE(rep.passed) << rep.summary();
}

TEST(Pool, Basics) {
  Tape tape;
  auto one = pool(tape.constant(Tensor::from_rows({{1, -2, 3}})));
  EXPECT_EQ(one.value(), Tensor::vector({1, -2, 3}));
  auto sym = pool(tape.constant(Tensor::from_rows({{1, -2, 3}, {-1, 2, -3}})));
  for (double v : sym.value().data()) EXPECT_EQ(v, 0.0);
  auto p1 = pool(tape.constant(Tensor::from_rows({{1, 2}, {3, 5}, {7, 11}})));
  auto p2 = pool(tape.constant(Tensor::from_rows({{7, 11}, {1, 2}, {3, 5}})));
  EXPECT_EQ(p1.value(), p2.value());
}

TEST(InstanceContrastive, OrthogonalPairsClosedForm) {
  Tape tape;
  std::vector<Var> s = {tape.constant(Tensor::vector({1, 0})), tape.constant(Tensor::vector({0, 1}))};
  auto loss = instance_contrastive_loss(s, s, 1.0);
  EXPECT_NEAR(loss.item(), std::log1p(std::exp(-1.0)), 1e-9);
  EXPECT_NEAR(loss.item(), 0.31326, 1e-5);
}

TEST(InstanceContrastive, IdenticalEmbeddingsGiveLogN) {
  Tape tape;
  std::vector<Var> s;
  for (int i = 0; i < 5; ++i) s.push_back(tape.constant(Tensor::vector({0.3, -1.2, 2.0})));
  EXPECT_NEAR(instance_contrastive_loss(s, s, 0.1).item(), std::log(5.0), 1e-12);
}

TEST(InstanceContrastive, ScaleAndRotationInvariant) {
  Rng rng(3);
  Tensor S = random_tensor({4, 2}, rng), T = random_tensor({4, 2}, rng);
  auto loss_of = [](const Tensor& a, const Tensor& b) {
    Tape tape;
    std::vector<Var> s, t;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      s.push_back(tape.constant(Tensor::vector({a.at(i, 0), a.at(i, 1)})));
      t.push_back(tape.constant(Tensor::vector({b.at(i, 0), b.at(i, 1)})));
    }
    return instance_contrastive_loss(s, t, 0.1).item();
  };
  const double base = loss_of(S, T);
  Tensor S2 = S;
  for (double& v : S2.row(1)) v *= 7.5;
  EXPECT_NEAR(loss_of(S2, T), base, 1e-12);
  const double th = 0.7, c = std::cos(th), sn = std::sin(th);
  auto rot = [&](Tensor x) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double a = x.at(i, 0), b = x.at(i, 1);
      x.at(i, 0) = c * a - sn * b;
      x.at(i, 1) = sn * a + c * b;
    }
    return x;
  };
  EXPECT_NEAR(loss_of(rot(S), rot(T)), base, 1e-12);
  EXPECT_GE(base, 0.0);
}

TEST(TokenStep, ConcentratesOnMatchingStep) {
  Tape tape;
  auto zt = tape.constant(Tensor::from_rows({{0, 1, 0}}));
  auto zx = tape.constant(Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  auto maps = token_step_similarity(zt, zx, 1e-3);
  EXPECT_NEAR(maps.transport.value().at(0, 1), 1.0, 1e-12);
}

TEST(TokenStep, SingleStepAndRowSums) {
  Rng rng(4);
  Tape tape;
  auto maps1 = token_step_similarity(tape.constant(unit_rows(random_tensor({3, 4}, rng))),
                                     tape.constant(unit_rows(random_tensor({1, 4}, rng))), 0.2);
  for (double v : maps1.transport.value().data()) EXPECT_EQ(v, 1.0);
  auto maps = token_step_similarity(tape.constant(unit_rows(random_tensor({3, 4}, rng))),
                                    tape.constant(unit_rows(random_tensor({4, 4}, rng))), 0.2);
  for (std::size_t r = 0; r < 3; ++r) {
    double sum = 0;
    for (double v : maps.transport.value().row(r)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(SoftPositive, OneHotUniformAndNormBound) {
  Tape tape;
  auto zx = tape.constant(Tensor::from_rows({{0.6, 0.8}, {-0.6, -0.8}}));
  auto sel = soft_positive(tape.constant(Tensor::from_rows({{0, 1}})), zx);
  EXPECT_EQ(sel.value(), Tensor::from_rows({{-0.6, -0.8}}));
  auto mid = soft_positive(tape.constant(Tensor::from_rows({{0.5, 0.5}})), zx);
  for (double v : mid.value().data()) EXPECT_EQ(v, 0.0);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    auto maps = token_step_similarity(tape.constant(unit_rows(random_tensor({3, 5}, rng))),
                                      tape.constant(unit_rows(random_tensor({6, 5}, rng))), 0.2);
    auto sp = soft_positive(maps.transport, tape.constant(unit_rows(random_tensor({6, 5}, rng))));
    for (std::size_t r = 0; r < 3; ++r) {
      double n = 0;
      for (double v : sp.value().row(r)) n += v * v;
      EXPECT_LE(std::sqrt(n), 1.0 + 1e-12);
    }
  }
}

TEST(Salience, ZeroScorerIsUniformWithIndexTieBreak) {
  Rng rng(6);
  Tape tape;
  auto prof = salience_and_anchors(tape.constant(random_tensor({6, 4}, rng)), tape.constant(Tensor({4})), 3);
  for (double v : prof.scores.value().data()) EXPECT_DOUBLE_EQ(v, 1.0 / 6.0);
  EXPECT_EQ(prof.anchors, (std::vector<std::size_t>{0, 1, 2}));
  auto all = salience_and_anchors(tape.constant(random_tensor({4, 4}, rng)), tape.constant(random_tensor({4}, rng)), 256);
  EXPECT_EQ(all.anchors.size(), 4u);
  double sum = 0;
  for (double v : all.scores.value().data()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Salience, TopKMatchesBruteForce) {
  Rng rng(7);
  {
    std::vector<double> v(50);
    for (double& x : v) x = rng.normal();
    EXPECT_EQ(top_k_indices(v, 7), brute_top_k(v, 7));
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.below(64), k = 1 + rng.below(m);
    std::vector<double> v(m);
    // Coarse values so ties occur.
    for (double& x : v) x = static_cast<double>(rng.below(6));
    ASSERT_EQ(top_k_indices(v, k), brute_top_k(v, k)) << "trial " << trial;
  }
}

TEST(TokenContrastive, ClosedForm) {
  Tape tape;
  auto make = [&](double sign) {
    TokenAlignmentInput in;
    in.z_text = tape.constant(Tensor::from_rows({{sign, 0}}));
    in.z_ts = tape.constant(Tensor::from_rows({{sign, 0}, {sign, 0}}));
    in.salience = salience_and_anchors(tape.constant(Tensor::from_rows({{1, 0}})), tape.constant(Tensor({2})), 256);
    return in;
  };
  std::vector<TokenAlignmentInput> batch = {make(1), make(-1)};
  // Positive similarity 1, two cross-sample negatives at -1, temperature 1.
  EXPECT_NEAR(token_contrastive_loss(batch, 0.2, 1.0).item(), std::log1p(2 * std::exp(-2.0)), 1e-12);
}

TEST(TokenContrastive, BoundedByWorstTokenAndGradient) {
  Rng rng(8);
  nn::ParamStore store;
  std::vector<nn::ParamRef> zt, zx, h;
  for (int i = 0; i < 2; ++i) {
    zt.push_back(store.add("zt" + std::to_string(i), nn::ParamGroup::Alignment, random_tensor({3, 4}, rng)));
    zx.push_back(store.add("zx" + std::to_string(i), nn::ParamGroup::Alignment, random_tensor({4, 4}, rng)));
    h.push_back(store.add("h" + std::to_string(i), nn::ParamGroup::TextProjection, random_tensor({3, 4}, rng)));
  }
  auto w = store.add("w", nn::ParamGroup::Alignment, random_tensor({4}, rng));
  auto build = [&](nn::Binder& b) {
    std::vector<TokenAlignmentInput> batch;
    for (int i = 0; i < 2; ++i) {
      batch.push_back({ops::l2_normalize_rows(b(zt[i])), ops::l2_normalize_rows(b(zx[i])),
                       salience_and_anchors(b(h[i]), b(w), 2)});
    }
    return batch;
  };
  {
    Tape tape;
    nn::Binder b(tape, store);
    auto batch = build(b);
    const double loss = token_contrastive_loss(batch, 0.2, 0.07).item();
    EXPECT_GE(loss, 0.0);
    // Worst single-token loss over the anchors bounds the weighted mean.
    double worst = 0;
    for (int i = 0; i < 2; ++i) {
      for (auto a : batch[i].salience.anchors) {
        TokenAlignmentInput one = batch[i];
        one.salience.anchors = {a};
        one.salience.scores = tape.constant(Tensor::vector(std::vector<double>(3, 1.0)));
        std::vector<TokenAlignmentInput> pair = {one, batch[1 - i]};
        pair[1].salience.scores = tape.constant(Tensor::vector(std::vector<double>(3, 0.0)));
        worst = std::max(worst, 2.0 * token_contrastive_loss(pair, 0.2, 0.07).item());
      }
    }
    EXPECT_LE(loss, worst + 1e-12);
  }
  GradCheckOptions o;
  auto rep = store_grad_check(store, [&](nn::Binder& b) { return token_contrastive_loss(build(b), 0.2, 0.07); }, o);
  EXPECT_TRUE(rep.passed) << rep.summary();
}

TEST(AlignmentLoss, SumsComponentsAndChecksGradient) {
  Rng rng(9);
  nn::ParamStore store;
  std::vector<nn::ParamRef> s, t, zt, zx, h;
  for (int i = 0; i < 3; ++i) {
    s.push_back(store.add("s" + std::to_string(i), nn::ParamGroup::TsProjection, random_tensor({4}, rng)));
    t.push_back(store.add("t" + std::to_string(i), nn::ParamGroup::TextProjection, random_tensor({4}, rng)));
    zt.push_back(store.add("zt" + std::to_string(i), nn::ParamGroup::Alignment, random_tensor({3, 4}, rng)));
    zx.push_back(store.add("zx" + std::to_string(i), nn::ParamGroup::Alignment, random_tensor({4, 4}, rng)));
    h.push_back(store.add("h" + std::to_string(i), nn::ParamGroup::TextProjection, random_tensor({3, 4}, rng)));
  }
  auto w = store.add("w", nn::ParamGroup::Alignment, random_tensor({4}, rng));
  auto run = [&](nn::Binder& b) {
    std::vector<Var> sv, tv;
    std::vector<TokenAlignmentInput> batch;
    for (int i = 0; i < 3; ++i) {
      sv.push_back(b(s[i]));
      tv.push_back(b(t[i]));
      batch.push_back({ops::l2_normalize_rows(b(zt[i])), ops::l2_normalize_rows(b(zx[i])),
                       salience_and_anchors(b(h[i]), b(w), 256)});
    }
    return alignment_loss(sv, tv, batch, 0.1, 0.2, 0.07);
  };
  {
    Tape tape;
    nn::Binder b(tape, store);
    auto l = run(b);
    EXPECT_GE(l.ctr.item(), 0.0);
    EXPECT_GE(l.tok.item(), 0.0);
    EXPECT_EQ(l.total.item(), l.ctr.item() + l.tok.item());
  }
  auto rep_ctr = store_grad_check(store, [&](nn::Binder& b) { return run(b).ctr; });
  EXPECT_TRUE(rep_ctr.passed) << rep_ctr.summary();
  auto rep_all = store_grad_check(store, [&](nn::Binder& b) { return run(b).total; });
  EXPECT_TRUE(rep_all.passed) << rep_all.summary();
}

TEST(AlignmentLoss, NeedsTwoInstances) {
  Tape tape;
  std::vector<Var> one = {tape.constant(Tensor::vector({1, 0}))};
  EXPECT_THROW(instance_contrastive_loss(one, one, 0.1), ConfigError);
}
