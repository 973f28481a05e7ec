#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "maadv/victim_net.hpp"
#include "test_support.hpp"

using namespace maadv;
using maadv::fixtures::random_unit_stream;

namespace {

LabeledSample labelled(ScenarioKind kind, std::uint64_t seed) {
  auto s = generate_random_sample(kind, 128, 0.0, seed);
  s.stream = normalize(s.stream);
  return s;
}

}  // namespace

TEST(Losses, MarginExamples) {
  EXPECT_DOUBLE_EQ(margin_logit_loss(std::vector<double>{5, 2, 1}, 0, 0.0), 3.0);
  EXPECT_DOUBLE_EQ(margin_logit_loss(std::vector<double>{1, 5, 2}, 0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(margin_logit_loss(std::vector<double>{2, 2, 0}, 0, 0.5), 0.5);
}

TEST(Losses, CrossEntropyUniform) {
  EXPECT_NEAR(cross_entropy_loss(std::vector<double>{0, 0, 0, 0}, 2), std::log(4.0), 1e-12);
}

TEST(Forward, ShapeAndZeroParams) {
  const VictimShape shape;
  const auto s = random_unit_stream(40, 1);
  EXPECT_EQ(forward(VictimParams::xavier(shape, 3), s).size(), shape.classes);
  for (double z : forward(VictimParams(shape), s)) EXPECT_EQ(z, 0.0);
}

TEST(Forward, PermutationInvariant) {
  const auto params = VictimParams::xavier({}, 9);
  const auto s = random_unit_stream(64, 2);
  EventStream shuffled = s;
  std::mt19937_64 rng(4);
  std::shuffle(shuffled.events.begin(), shuffled.events.end(), rng);
  const auto a = forward(params, s);
  const auto b = forward(params, shuffled);
  for (std::size_t c = 0; c < a.size(); ++c) EXPECT_NEAR(a[c], b[c], 1e-12);
}

TEST(Backward, ClampedMarginGivesZeroGradient) {
  const auto params = VictimParams::xavier({}, 5);
  const auto s = random_unit_stream(32, 6);
  const auto z = forward(params, s);
  const std::size_t pred = argmax(z);
  const std::size_t other = (pred + 1) % z.size();
  // With label = a non-winning class and kappa 0 the loss is clamped at 0.
  const auto lg = backward_input(params, s, LossKind::Margin, other, 0.0);
  ASSERT_EQ(lg.loss, 0.0);
  for (const auto& g : lg.grad) {
    for (double v : g) EXPECT_EQ(v, 0.0);
  }
}

TEST(Backward, MatchesFiniteDifferencesOnSample) {
  const auto params = VictimParams::xavier({}, 21);
  const auto s = random_unit_stream(32, 22);
  for (auto kind : {LossKind::CrossEntropy, LossKind::Margin}) {
    const std::size_t label = argmax(forward(params, s));
    const auto lg = backward_input(params, s, kind, label, 0.5);
    const double h = 1e-5;
    double num = 0.0, den = 0.0;
    for (std::size_t e = 0; e < s.size(); ++e) {
      for (int d = 0; d < 4; ++d) {
        EventStream plus = s, minus = s;
        double* fp = d == 0 ? &plus[e].x : d == 1 ? &plus[e].y : d == 2 ? &plus[e].t : &plus[e].p;
        double* fm = d == 0 ? &minus[e].x : d == 1 ? &minus[e].y : d == 2 ? &minus[e].t : &minus[e].p;
        *fp += h;
        *fm -= h;
        const double lp = backward_input(params, plus, kind, label, 0.5).loss;
        const double lm = backward_input(params, minus, kind, label, 0.5).loss;
        const double fd = (lp - lm) / (2 * h);
        num += (fd - lg.grad[e][d]) * (fd - lg.grad[e][d]);
        den += fd * fd;
      }
    }
    EXPECT_LT(std::sqrt(num / den), 1e-4);
  }
}

TEST(Backward, Linearity) {
  const auto params = VictimParams::xavier({}, 31);
  const auto s = random_unit_stream(32, 32);
  VictimParams doubled = params;
  // Scaling the last layer doubles the logits, hence the cross-entropy
  // logit gradient is not linear; use the margin loss instead.
  for (std::size_t i = doubled.off_w4(); i < doubled.data().size(); ++i) doubled.data()[i] *= 2.0;
  const std::size_t label = argmax(forward(params, s));
  const auto a = backward_input(params, s, LossKind::Margin, label, 10.0);
  const auto b = backward_input(doubled, s, LossKind::Margin, label, 20.0);
  EXPECT_NEAR(b.loss, 2.0 * a.loss, 1e-10);
  for (std::size_t e = 0; e < s.size(); ++e) {
    for (int d = 0; d < 4; ++d) EXPECT_NEAR(b.grad[e][d], 2.0 * a.grad[e][d], 1e-10);
  }
}

TEST(Backward, RejectsBadLabel) {
  EXPECT_THROW(backward_input(VictimParams::xavier({}, 1), random_unit_stream(8, 1), LossKind::Margin, 9),
               Error);
}

TEST(Train, DeterministicAndSeparable) {
  std::vector<LabeledSample> train_set, val_set;
  for (int i = 0; i < 16; ++i) {
    auto a = labelled(ScenarioKind::TranslatingBar, 10 + i);
    auto b = labelled(ScenarioKind::ExpandingRing, 50 + i);
    a.label = 0;
    b.label = 1;
    (i < 12 ? train_set : val_set).push_back(a);
    (i < 12 ? train_set : val_set).push_back(b);
  }
  TrainOptions opts;
  opts.epochs = 1;
  opts.seed = 4;
  opts.shape.classes = 2;
  const auto first = train(train_set, val_set, opts);
  const auto second = train(train_set, val_set, opts);
  EXPECT_EQ(first.params, second.params);
  EXPECT_GT(first.train_accuracy, 0.5);
  EXPECT_THROW(train({}, val_set, opts), Error);
}

TEST(Serialization, RoundTrip) {
  TrainedVictim v;
  v.params = VictimParams::xavier({4, 8, 16, 8, 3}, 77);
  v.train_accuracy = 0.75;
  v.val_accuracy = 0.5;
  const auto dir = std::filesystem::temp_directory_path();
  const auto bin = (dir / "maadv_victim_rt.bin").string();
  const auto js = (dir / "maadv_victim_rt.json").string();
  save_victim(v, bin, js);
  const auto back = load_victim(bin, js);
  EXPECT_EQ(back.params, v.params);
  EXPECT_EQ(back.params.shape(), v.params.shape());
  EXPECT_DOUBLE_EQ(back.val_accuracy, 0.5);
  std::filesystem::remove(bin);
  std::filesystem::remove(js);
}
