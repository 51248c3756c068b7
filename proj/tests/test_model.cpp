#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "freshcast/nn/checkpoint.hpp"
#include "freshcast/nn/model.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace freshcast;
using namespace freshcast::nn;
using fctest::TempDir;

namespace {

std::vector<PreprocessedImage> batch(int n, int size) {
  std::vector<PreprocessedImage> out;
  for (int i = 0; i < n; ++i) out.push_back(preprocess(fctest::synthetic_image(i % 3, 1 + i % 4, 1 + i % 3, i), size));
  return out;
}

MultiHeadModel<float>& eval_mode(MultiHeadModel<float>& m) {
  m.set_training(false);
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(Presets, TenConfigurationsWithDistinctIds) {
  const auto presets = model_presets();
  ASSERT_EQ(presets.size(), 10u);
  std::set<std::string> ids;
  for (const auto& p : presets) ids.insert(p.model_id);
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_EQ(find_preset("e").model_id, "mobilenetv2_vgg16");
  EXPECT_EQ(find_preset("deit").key, 'I');
  EXPECT_THROW(find_preset("Z"), RegistryError);
  EXPECT_THROW(find_preset("alexnet"), RegistryError);
}

class EveryPreset : public ::testing::TestWithParam<char> {};

TEST_P(EveryPreset, HeadShapesAndValidProbabilities) {
  auto preset = find_preset(std::string(1, GetParam()));
  MultiHeadModel<float> model(preset.spec);
  const auto images = batch(3, model.input_size());
  auto x = images_to_tensor<float>(images, model.input_size());
  const auto out = model.forward(x);
  EXPECT_EQ(out.vegetable_logits.shape(), (Shape{3, 8}));
  EXPECT_EQ(out.spoilage_logits.shape(), (Shape{3, 3}));
  EXPECT_EQ(out.day.shape(), (Shape{3, 1}));

  eval_mode(model);
  const auto preds = model.predict(images);
  ASSERT_EQ(preds.size(), 3u);
  for (const auto& p : preds) {
    EXPECT_TRUE(probabilities_valid(p.vegetable_probs));
    EXPECT_TRUE(probabilities_valid(p.spoilage_probs));
    EXPECT_TRUE(std::isfinite(p.day_estimate));
  }
  // Eval mode is deterministic and batch-independent.
  const auto again = model.predict(images);
  const auto single = model.predict(std::span(images).subspan(1, 1));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(preds[i].vegetable_probs, again[i].vegetable_probs);
  EXPECT_LT(max_abs_diff(preds[1].spoilage_probs, single[0].spoilage_probs), 1e-5);
  EXPECT_NEAR(preds[1].day_estimate, single[0].day_estimate, 1e-4);
}

TEST_P(EveryPreset, FusedWidthIsSumOfBranchWidths) {
  const auto spec = find_preset(std::string(1, GetParam())).spec;
  MultiHeadModel<float> model(spec);
  std::int64_t expected = backbone_info(spec.classification_backbone, spec.variant).feature_dim;
  if (spec.regression_backbone) expected += backbone_info(*spec.regression_backbone, spec.variant).feature_dim;
  EXPECT_EQ(model.fused_dim(), expected);
  NoGradGuard g;
  const auto f = model.fused_features(images_to_tensor<float>(batch(2, model.input_size()), model.input_size()));
  EXPECT_EQ(f.shape(), (Shape{2, expected}));
}

INSTANTIATE_TEST_SUITE_P(AllConfigurations, EveryPreset,
                         ::testing::Values('A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J'));

TEST(Model, FusionHasMoreParametersThanItsBranches) {
  MultiHeadModel<float> a(find_preset("A").spec);
  MultiHeadModel<float> g(find_preset("G").spec);
  MultiHeadModel<float> h(find_preset("H").spec);
  EXPECT_LT(a.parameter_count(), h.parameter_count());
  EXPECT_LT(g.parameter_count(), h.parameter_count());
}

TEST(Model, GradientsReachBothBranches) {
  MultiHeadModel<float> model(find_preset("H").spec);
  model.set_training(true);
  auto out = model.forward(images_to_tensor<float>(batch(4, model.input_size()), model.input_size()));
  auto loss = add(add(sum(square(out.vegetable_logits)), sum(square(out.spoilage_logits))), sum(square(out.day)));
  loss.backward();
  auto nonzero = [](Module<float>& m) {
    std::size_t n = 0;
    for (auto* p : m.parameters())
      if (p->has_grad())
        for (float v : p->grad()) n += v != 0.0f;
    return n;
  };
  EXPECT_GT(nonzero(model.classification_branch()), 0u);
  ASSERT_NE(model.regression_branch(), nullptr);
  EXPECT_GT(nonzero(*model.regression_branch()), 0u);
}

TEST(Model, SwappingBranchesPermutesFusedFeatures) {
  FusionModelSpec s = find_preset("H").spec;
  FusionModelSpec swapped = s;
  swapped.classification_backbone = *s.regression_backbone;
  swapped.regression_backbone = s.classification_backbone;
  MultiHeadModel<float> m1(s), m2(swapped);
  eval_mode(m1);
  eval_mode(m2);
  NoGradGuard g;
  const auto x = images_to_tensor<float>(batch(2, m1.input_size()), m1.input_size());
  const auto f1 = m1.fused_features(x), f2 = m2.fused_features(x);
  const auto d1 = backbone_info(s.classification_backbone, s.variant).feature_dim;
  const auto d = m1.fused_dim();
  ASSERT_EQ(d, m2.fused_dim());
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t j = 0; j < d; ++j) {
      const auto k = j < d1 ? j + (d - d1) : j - d1;
      EXPECT_NEAR(f1.data()[static_cast<std::size_t>(b * d + j)], f2.data()[static_cast<std::size_t>(b * d + k)], 1e-6);
    }
}

TEST(Model, CapsuleNormsLieInUnitInterval) {
  std::mt19937_64 rng(3);
  CapsuleNet<float> caps(Variant::tiny, rng);
  NoGradGuard g;
  const auto v = caps.capsules(images_to_tensor<float>(batch(3, 32), 32));
  ASSERT_EQ(v.rank(), 3u);
  const auto dim = static_cast<std::size_t>(v.dim(2));
  for (std::size_t i = 0; i < v.numel() / dim; ++i) {
    double sq = 0;
    for (std::size_t k = 0; k < dim; ++k) sq += v.data()[i * dim + k] * v.data()[i * dim + k];
    EXPECT_GT(std::sqrt(sq), 0.0);
    EXPECT_LT(std::sqrt(sq), 1.0);
  }
}

TEST(Model, SoftmaxIsShiftInvariant) {
  std::mt19937_64 rng(1);
  auto logits = init::normal<double>({5, 8}, 3.0, rng);
  const auto p = softmax(logits, -1);
  const auto q = softmax(add_scalar(logits, 1000.0), -1);
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.data()[i], q.data()[i], 1e-12);
}

TEST(Model, RejectsWrongInputSize) {
  MultiHeadModel<float> model(find_preset("A").spec);
  eval_mode(model);
  const auto wrong = batch(1, 48);
  EXPECT_THROW(model.predict(wrong), ShapeError);
  EXPECT_THROW(model.forward(Tensor<float>::zeros({1, 3, 31, 32})), ShapeError);
  model.set_training(true);
  EXPECT_THROW(model.predict(batch(1, 32)), ConfigError);
}

TEST(Model, RegistryAndSpecErrors) {
  EXPECT_THROW(backbone_from_name("alexnet"), RegistryError);
  for (auto id : kAllBackbones) EXPECT_EQ(backbone_from_name(backbone_name(id)), id);
  FusionModelSpec s;
  s.mode = FusionMode::fusion;
  EXPECT_THROW(MultiHeadModel<float>{s}, SpecError);
  s = {};
  s.dropout = 1.0;
  EXPECT_THROW(s.validate(), SpecError);
}

TEST(Model, SpecJsonRoundTrip) {
  for (const auto& p : model_presets(Variant::full)) {
    const auto back = fusion_spec_from_json(json::parse(to_json(p.spec).dump()));
    EXPECT_EQ(to_json(back), to_json(p.spec));
  }
  EXPECT_THROW(fusion_spec_from_json(json{{"mode", "single"}}), SpecError);
}

TEST(Model, FullVariantUsesFullResolution) {
  for (auto id : kAllBackbones) EXPECT_EQ(backbone_info(id, Variant::full).input_size, 224);
  std::mt19937_64 rng(0);
  CnnLight<float> mnv2(Variant::full, rng);
  EXPECT_EQ(mnv2.info().feature_dim, 1280);
  EXPECT_GT(mnv2.parameter_count(), 2'000'000u);
  EXPECT_LT(mnv2.parameter_count(), 2'500'000u);
}

TEST(Checkpoint, RoundTripReproducesPredictions) {
  TempDir dir;
  auto spec = find_preset("J").spec;
  MultiHeadModel<float> a(spec);
  eval_mode(a);
  save_module(a, dir / "m.fcw");
  spec.seed = 99;
  MultiHeadModel<float> b(spec);
  eval_mode(b);
  const auto images = batch(2, a.input_size());
  EXPECT_NE(a.predict(images)[0].vegetable_probs, b.predict(images)[0].vegetable_probs);
  load_module(b, dir / "m.fcw");
  const auto pa = a.predict(images), pb = b.predict(images);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(pa[i].vegetable_probs, pb[i].vegetable_probs);
    EXPECT_EQ(pa[i].day_estimate, pb[i].day_estimate);
  }
}

TEST(Checkpoint, MismatchesAreReported) {
  TempDir dir;
  MultiHeadModel<float> a(find_preset("A").spec);
  save_module(a, dir / "a.fcw");
  MultiHeadModel<float> g(find_preset("G").spec);
  EXPECT_THROW(load_module(g, dir / "a.fcw"), CheckpointError);
  fctest::TempDir other;
  std::ofstream(other / "bad.fcw") << "nope";
  EXPECT_THROW(load_module(a, other / "bad.fcw"), CheckpointError);
}

TEST(Pretrained, MissingWeightsAreReported) {
  TempDir dir;
  auto spec = find_preset("A").spec;
  spec.pretrained = true;
  spec.weights_dir = dir.path();
  EXPECT_THROW(MultiHeadModel<float>{spec}, WeightsUnavailableError);
}

TEST(Pretrained, WeightsLoadAndFreeze) {
  TempDir dir;
  std::mt19937_64 rng(123);
  CnnLight<float> donor(Variant::tiny, rng);
  save_module(donor, pretrained_weights_path(dir.path(), BackboneId::cnn_light, Variant::tiny));
  auto spec = find_preset("A").spec;
  spec.pretrained = true;
  spec.weights_dir = dir.path();
  MultiHeadModel<float> model(spec);
  EXPECT_TRUE(model.classification_branch().pretrained());
  const auto want = state_of(donor);
  const auto got = state_of(model.classification_branch());
  ASSERT_EQ(want.size(), got.size());
  for (const auto& [name, t] : want) EXPECT_EQ(t.data, got.at(name).data) << name;
  for (auto* p : model.classification_branch().parameters()) EXPECT_FALSE(p->requires_grad());
  model.unfreeze();
  for (auto* p : model.classification_branch().parameters()) EXPECT_TRUE(p->requires_grad());
}
