#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "pdpnet/losses.hpp"

using namespace pdpnet;

namespace {

torch::Tensor row(std::vector<float> v) { return torch::tensor(v).reshape({1, -1}); }

}  // namespace

TEST(DiceLoss, IdenticalMasksGiveZero) {
  const auto t = row({1, 0, 1, 1});
  EXPECT_NEAR(dice_loss(t, t).item<double>(), 0.0, 1e-5);
}

TEST(DiceLoss, DisjointMasksGiveOne) {
  EXPECT_NEAR(dice_loss(row({1, 1, 0, 0}), row({0, 0, 1, 1})).item<double>(), 1.0, 1e-5);
}

TEST(DiceLoss, HalfOverlap) {
  EXPECT_NEAR(dice_loss(row({1, 1, 0, 0}), row({0, 1, 1, 0})).item<double>(), 0.5, 1e-6);
}

TEST(DiceLoss, BothEmptyGivesZero) {
  EXPECT_EQ(dice_loss(row({0, 0, 0}), row({0, 0, 0})).item<double>(), 0.0);
}

TEST(DiceLoss, PerSampleShape) {
  const auto p = torch::rand({3, 1, 4, 4});
  EXPECT_EQ(dice_loss(p, (p > 0.5).to(torch::kFloat)).sizes(), (std::vector<std::int64_t>{3}));
}

TEST(LogCoshDice, ScalarValues) {
  const auto same = row({1, 1, 0, 0});
  EXPECT_NEAR(log_cosh_dice(same, same).item<double>(), 0.0, 1e-9);
  EXPECT_NEAR(log_cosh_dice(row({1, 1, 0, 0}), row({0, 1, 1, 0})).item<double>(), 0.120114, 1e-6);
  EXPECT_NEAR(log_cosh_dice(row({1, 1, 0, 0}), row({0, 0, 1, 1})).item<double>(), 0.433781, 1e-5);
}

TEST(LogCoshDice, NeverExceedsDice) {
  torch::manual_seed(0);
  for (int t = 0; t < 50; ++t) {
    const auto p = torch::rand({4, 1, 8, 8});
    const auto y = (torch::rand({4, 1, 8, 8}) > 0.6).to(torch::kFloat);
    const auto d = dice_loss(p, y), l = log_cosh_dice(p, y);
    EXPECT_TRUE((l <= d + 1e-7).all().item<bool>());
    EXPECT_TRUE((l >= 0).all().item<bool>());
  }
}

TEST(LocLoss, PerfectGridGivesZero) {
  const auto y = (torch::rand({2, 4, 4}) > 0.5).to(torch::kFloat);
  EXPECT_NEAR(loc_loss(y, y).item<double>(), 0.0, 1e-9);
}

TEST(LocLoss, HalfProbabilitiesAgainstFullTarget) {
  const auto p = torch::full({1, 4, 4}, 0.5);
  // Dice of 8 against 16 leaves 1/3.
  EXPECT_NEAR(loc_loss(p, torch::ones({1, 4, 4})).item<double>(), std::log(std::cosh(1.0 / 3.0)),
              1e-6);
}

TEST(LocLoss, HalfProbabilitiesAgainstEmptyTarget) {
  const auto p = torch::full({1, 4, 4}, 0.5);
  EXPECT_NEAR(loc_loss(p, torch::zeros({1, 4, 4})).item<double>(), 0.433781, 1e-6);
}

TEST(SegLoss, PerfectPredictionsGiveZero) {
  std::vector<torch::Tensor> priors, targets;
  for (int side : {16, 8, 4, 2}) {
    const auto t = (torch::rand({2, 1, side, side}) > 0.5).to(torch::kFloat);
    priors.push_back(t);
    targets.push_back(t);
  }
  const auto y = (torch::rand({2, 1, 64, 64}) > 0.5).to(torch::kFloat);
  EXPECT_NEAR(seg_loss(priors, targets, y, y).total.item<double>(), 0.0, 1e-9);
}

TEST(SegLoss, EqualsSumOfIndependentTerms) {
  torch::manual_seed(1);
  auto opts = torch::TensorOptions().dtype(torch::kDouble);
  std::vector<torch::Tensor> priors, targets;
  double expected = 0;
  for (int side : {8, 4, 2}) {
    priors.push_back(torch::rand({3, 1, side, side}, opts));
    targets.push_back((torch::rand({3, 1, side, side}, opts) > 0.5).to(torch::kDouble));
  }
  const auto y_hat = torch::rand({3, 1, 16, 16}, opts);
  const auto y = (torch::rand({3, 1, 16, 16}, opts) > 0.5).to(torch::kDouble);

  auto term = [](const torch::Tensor& p, const torch::Tensor& t) {
    double sum = 0;
    for (int b = 0; b < p.size(0); ++b) {
      const double inter = (p[b] * t[b]).sum().item<double>();
      const double denom = p[b].sum().item<double>() + t[b].sum().item<double>();
      const double d = 1.0 - 2.0 * inter / (denom + kDiceEpsilon);
      sum += std::log(std::cosh(d));
    }
    return sum / p.size(0);
  };
  for (std::size_t i = 0; i < priors.size(); ++i) expected += term(priors[i], targets[i]);
  expected += term(y_hat, y);

  const auto loss = seg_loss(priors, targets, y_hat, y);
  EXPECT_NEAR(loss.total.item<double>(), expected, 1e-9);
  ASSERT_EQ(loss.prior_terms.size(), 3u);
  EXPECT_NEAR(loss.pixel_term.item<double>(), term(y_hat, y), 1e-9);
}

TEST(SegLoss, EqualTermsAdd) {
  // Five identical terms of log(cosh(0.5)).
  std::vector<torch::Tensor> priors, targets;
  for (int i = 0; i < 4; ++i) {
    priors.push_back(row({1, 1, 0, 0}));
    targets.push_back(row({0, 1, 1, 0}));
  }
  const auto l = seg_loss(priors, targets, row({1, 1, 0, 0}), row({0, 1, 1, 0}));
  EXPECT_NEAR(l.total.item<double>(), 5 * std::log(std::cosh(0.5)), 1e-5);
}

TEST(SegLoss, RejectsMismatchedPriorCount) {
  EXPECT_ANY_THROW(seg_loss({row({1, 0})}, {}, row({1, 0}), row({1, 0})));
}
