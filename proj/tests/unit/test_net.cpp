#include <gtest/gtest.h>

#include <random>

#include "avil/net/policy.hpp"
#include "avil/numerics/grad_check.hpp"
#include "oracles.hpp"

using namespace avil;
using net::NetConfig;
using nn::Tensor;

namespace {

Tensor random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor img({3, h, w});
  for (auto& v : img.data()) v = std::round(u(rng) * 255.0f) / 255.0f;
  return img;
}

std::vector<net::JointVector> random_history(int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<net::JointVector> h(k);
  for (auto& q : h) {
    for (double& v : q) v = u(rng);
  }
  return h;
}

NetConfig small_config(int size) {
  NetConfig c;
  c.height = size;
  c.width = size;
  return c;
}

}  // namespace

TEST(Attention, ShapeAndRangeForSeveralSizes) {
  for (int size : {32, 64, 96}) {
    const auto params = net::init_params(small_config(size), 3);
    const Tensor map = net::attention_map(random_image(size, size, size), params);
    EXPECT_EQ(map.shape(), (nn::Shape{1, size, size}));
    for (float v : map.data()) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
}

TEST(Attention, NonSquareImagesKeepTheirShape) {
  NetConfig c;
  c.height = 32;
  c.width = 48;
  const Tensor map = net::attention_map(random_image(32, 48, 1), net::init_params(c, 1));
  EXPECT_EQ(map.shape(), (nn::Shape{1, 32, 48}));
}

TEST(Attention, Deterministic) {
  const auto params = net::init_params(NetConfig{}, 9);
  const Tensor img = random_image(64, 64, 4);
  EXPECT_EQ(net::attention_map(img, params), net::attention_map(img, params));
}

TEST(Attention, ModuleIsSmall) {
  const auto params = net::init_params(NetConfig{}, 1);
  EXPECT_LT(net::parameter_count(params.theta1), 50000u);
  EXPECT_EQ(params.theta1.size(), 10u);
  EXPECT_EQ(params.theta2.size(), 2u);
  EXPECT_EQ(params.theta3.size(), 2u);
  EXPECT_EQ(params.theta4.size(), 8u);
}

TEST(Attention, WrongInputShapeThrows) {
  const auto params = net::init_params(NetConfig{}, 1);
  EXPECT_THROW(net::attention_map(Tensor({1, 64, 64}), params), nn::DimensionError);
}

TEST(Centroid, UniformMapIsCentre) {
  const auto c = net::extract_centroid(Tensor({1, 20, 30}, 0.3f), 0.5);
  EXPECT_DOUBLE_EQ(c.x, 0.5);
  EXPECT_DOUBLE_EQ(c.y, 0.5);
}

TEST(Centroid, SinglePeak) {
  Tensor map({1, 16, 24}, 0.1f);
  map.at(0, 5, 17) = 0.9f;
  const auto c = net::extract_centroid(map, 0.5);
  EXPECT_DOUBLE_EQ(c.x, 17.5 / 24);
  EXPECT_DOUBLE_EQ(c.y, 5.5 / 16);
}

TEST(Centroid, TwoEqualPeaksAverage) {
  Tensor map({1, 16, 16}, 0.1f);
  map.at(0, 7, 2) = 0.8f;
  map.at(0, 7, 11) = 0.8f;
  const auto c = net::extract_centroid(map, 0.5);
  EXPECT_DOUBLE_EQ(c.x, 0.5 * (2.5 + 11.5) / 16);
  EXPECT_DOUBLE_EQ(c.y, 7.5 / 16);
}

TEST(Centroid, MatchesBruteForceOverSelectedSet) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(0.01f, 0.99f);
  for (int n = 0; n < 50; ++n) {
    Tensor map({1, 12, 9});
    for (auto& v : map.data()) v = u(rng);
    const float peak = *std::max_element(map.data().begin(), map.data().end());
    double sx = 0, sy = 0;
    int count = 0;
    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 9; ++j) {
        if (map.at(0, i, j) >= 0.5 * peak) sx += (j + 0.5) / 9, sy += (i + 0.5) / 12, ++count;
      }
    }
    const auto c = net::extract_centroid(map, 0.5);
    EXPECT_NEAR(c.x, sx / count, 1e-12);
    EXPECT_NEAR(c.y, sy / count, 1e-12);
    EXPECT_GE(c.x, 0.0);
    EXPECT_LE(c.x, 1.0);
  }
}

TEST(Centroid, TranslationConsistentOnDeltaMap) {
  const int h = 20, w = 28;
  for (int di : {0, 1, 5}) {
    for (int dj : {0, 2, 9}) {
      Tensor a({1, h, w}, 0.05f), b({1, h, w}, 0.05f);
      a.at(0, 3, 4) = 0.95f;
      b.at(0, 3 + di, 4 + dj) = 0.95f;
      const auto ca = net::extract_centroid(a, 0.5), cb = net::extract_centroid(b, 0.5);
      EXPECT_NEAR(cb.x - ca.x, static_cast<double>(dj) / w, 1e-12);
      EXPECT_NEAR(cb.y - ca.y, static_cast<double>(di) / h, 1e-12);
    }
  }
}

TEST(Policy, ChunkShapeAndDeterminism) {
  const NetConfig c;
  const auto params = net::init_params(c, 5);
  net::StackedState s{random_image(64, 64, 2), random_history(4, 3)};
  const auto a = net::policy_forward(s, params), b = net::policy_forward(s, params);
  ASSERT_EQ(a.action.size(), 2u);
  EXPECT_EQ(a.action, b.action);
  EXPECT_EQ(a.v.size(), 64u);
  EXPECT_EQ(a.u.size(), 64u);
  EXPECT_EQ(a.action_normalized.size(), 12u);
  EXPECT_EQ(params.theta4[0].value.shape(), (nn::Shape{128, 128}));
  EXPECT_EQ(params.theta4[6].value.shape(), (nn::Shape{12, 64}));
}

TEST(Policy, WrongHistoryLengthThrows) {
  const auto params = net::init_params(NetConfig{}, 5);
  net::StackedState s{random_image(64, 64, 2), random_history(3, 3)};
  EXPECT_THROW(net::policy_forward(s, params), nn::DimensionError);
}

TEST(Policy, JointNormalisationRoundTrip) {
  const NetConfig c;
  for (int j = 0; j < net::kJoints; ++j) {
    EXPECT_DOUBLE_EQ(net::normalize_joint(j, c.joint_lo[j], c), -1.0);
    EXPECT_DOUBLE_EQ(net::normalize_joint(j, c.joint_hi[j], c), 1.0);
    for (double v : {-1.3, 0.0, 0.77}) EXPECT_NEAR(net::denormalize_joint(j, net::normalize_joint(j, v, c), c), v, 1e-12);
  }
}

TEST(Policy, ResidualHeadAnchorsOnNewestJoints) {
  NetConfig c;
  auto params = net::init_params(c, 5);
  for (auto& p : params.theta4) p.value.fill(0.0f);  // zero head output
  const auto history = random_history(4, 11);
  const auto trace = net::policy_forward(net::Centroid{0.3, 0.6}, history, params);
  for (const auto& q : trace.action) {
    for (int j = 0; j < net::kJoints; ++j) EXPECT_NEAR(q[j], history.back()[j], 1e-6);
  }
}

TEST(Objective, ZeroAndConstantOffset) {
  nn::Tape64 tape;
  nn::Tensor64 expert({12});
  for (int i = 0; i < 12; ++i) expert[i] = 0.1 * i - 0.4;
  nn::Tensor64 shifted = expert;
  for (auto& v : shifted.data()) v += 0.3;
  const auto zero = net::bc_objective(tape, tape.leaf(expert), expert);
  const auto off = net::bc_objective(tape, tape.leaf(shifted), expert);
  EXPECT_EQ(tape.value(zero)[0], 0.0);
  EXPECT_NEAR(tape.value(off)[0], 0.09, 1e-15);
  EXPECT_THROW(net::bc_objective(tape, tape.leaf(nn::Tensor64({6})), expert), nn::DimensionError);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const auto expert = avil::oracle::random_tensor<double>({12}, rng);
  const auto report = nn::grad_check(
      [&](nn::Tape64& t, std::span<const nn::Var> in) { return net::bc_objective(t, in[0], expert); },
      {avil::oracle::random_tensor<double>({12}, rng)}, 4);
  EXPECT_LT(report.max_relative_error, 1e-4);
}

TEST(Policy, EndToEndGradientOnSmallInstance) {
  const NetConfig c = small_config(16);
  const auto params = net::init_params(c, 21);
  nn::Tape64 att;
  const auto theta1 = net::bind(att, std::span<const nn::Parameter>(params.theta1), false);
  const auto map = att.value(net::attention_forward(att, att.leaf(random_image(16, 16, 6).cast<double>()), theta1, c));
  const auto centroid = net::extract_centroid(map.cast<float>(), c.tau);
  const auto history = net::encode_history<double>(random_history(4, 2), c);
  std::mt19937_64 rng(1);
  const auto target = avil::oracle::random_tensor<double>({12}, rng);

  std::vector<nn::Tensor64> inputs;
  for (const auto* g : {&params.theta2, &params.theta3, &params.theta4}) {
    for (const auto& p : *g) inputs.push_back(p.value.cast<double>());
  }
  const auto report = nn::grad_check(
      [&](nn::Tape64& t, std::span<const nn::Var> in) {
        const auto head = net::policy_head(t, centroid, history, in.subspan(0, 2), in.subspan(2, 2), in.subspan(4, 8), c);
        return net::bc_objective(t, head.action, target);
      },
      inputs, 17, 1e-6, 1e-6);
  EXPECT_LT(report.max_relative_error, 1e-3);
  EXPECT_GT(report.checked, 40000u);
}
