#include <gtest/gtest.h>

#include <cmath>

#include "freshcast/dataset/scan.hpp"
#include "freshcast/noise/corruptor.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace freshcast;
using fctest::TempDir;

namespace {

RgbImage grey(int size, std::uint8_t v) {
  RgbImage img;
  img.height = img.width = size;
  img.pixels.assign(static_cast<std::size_t>(size * size * 3), v);
  return img;
}

}  // namespace

TEST(Noise, GaussianMatchesRequestedSpread) {
  const auto img = grey(128, 128);
  NoiseSpec spec{NoiseKind::gaussian, 10.0, 2, 0};
  const auto out = apply_noise(img, spec, 42);
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double d = static_cast<double>(out.pixels[i]) - img.pixels[i];
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(img.pixels.size());
  EXPECT_NEAR(sum / n, 0.0, 0.2);
  EXPECT_NEAR(std::sqrt(sq / n), 10.0, 0.3);
}

TEST(Noise, DeterministicPerSeed) {
  const auto img = fctest::synthetic_image(1, 2, 1, 0);
  for (auto kind : {NoiseKind::gaussian, NoiseKind::salt_pepper}) {
    NoiseSpec spec{kind, kind == NoiseKind::gaussian ? 25.0 : 0.1, 2, 0};
    EXPECT_EQ(apply_noise(img, spec, 5), apply_noise(img, spec, 5));
    EXPECT_FALSE(apply_noise(img, spec, 5) == apply_noise(img, spec, 6));
  }
}

TEST(Noise, ZeroIntensityIsIdentity) {
  const auto img = fctest::synthetic_image(0, 1, 1, 0);
  EXPECT_EQ(apply_noise(img, {NoiseKind::gaussian, 0.0, 2, 0}, 1), img);
  EXPECT_EQ(apply_noise(img, {NoiseKind::salt_pepper, 0.0, 2, 0}, 1), img);
}

TEST(Noise, SaltPepperHitsExactFraction) {
  const auto img = grey(40, 100);
  for (double frac : {0.01, 0.05, 0.25, 1.0}) {
    const auto out = apply_noise(img, {NoiseKind::salt_pepper, frac, 2, 0}, 3);
    std::size_t changed = 0;
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
      const auto* px = &out.pixels[p * 3];
      if (px[0] != 100) {
        ++changed;
        EXPECT_TRUE(px[0] == 0 || px[0] == 255);
        EXPECT_EQ(px[0], px[1]);
        EXPECT_EQ(px[1], px[2]);
      }
    }
    EXPECT_EQ(changed, static_cast<std::size_t>(std::llround(frac * 1600))) << frac;
  }
}

TEST(Noise, SpecValidationAndJson) {
  EXPECT_THROW(validate(NoiseSpec{NoiseKind::gaussian, -1.0, 2, 0}), SpecError);
  EXPECT_THROW(validate(NoiseSpec{NoiseKind::salt_pepper, 1.5, 2, 0}), SpecError);
  EXPECT_THROW(validate(NoiseSpec{NoiseKind::gaussian, 5.0, -1, 0}), SpecError);
  EXPECT_THROW(noise_kind_from_name("speckle"), SpecError);
  const NoiseSpec s{NoiseKind::salt_pepper, 0.2, 3, 99};
  const auto back = noise_spec_from_json(to_json(s));
  EXPECT_EQ(back.kind, s.kind);
  EXPECT_EQ(back.per_folder_count, 3);
  EXPECT_EQ(back.master_seed, 99u);
}

class CorruptTree : public ::testing::Test {
 protected:
  void SetUp() override { fctest::write_synthetic_dataset(dir_ / "clean", {3, 4, 6, 24}); }
  TempDir dir_;
};

TEST_F(CorruptTree, ExactlyTwoPerSixImageFolder) {
  const NoiseSpec spec{NoiseKind::gaussian, 25.0, 2, 17};
  const auto m = corrupt_dataset(dir_ / "clean", dir_ / "noisy", spec, 1);
  ASSERT_EQ(m.folders.size(), 12u);
  EXPECT_EQ(m.n_images, 72u);
  EXPECT_EQ(m.n_corrupted, 24u);
  EXPECT_NEAR(m.realized_fraction(), 1.0 / 3.0, 1e-12);

  const auto clean = fctest::tree_contents(dir_ / "clean");
  const auto noisy = fctest::tree_contents(dir_ / "noisy");
  ASSERT_EQ(clean.size(), noisy.size());
  std::map<std::string, int> changed_per_folder;
  for (const auto& [rel, bytes] : clean)
    if (noisy.at(rel) != bytes) ++changed_per_folder[std::filesystem::path(rel).parent_path().generic_string()];
  ASSERT_EQ(changed_per_folder.size(), 12u);
  for (const auto& [folder, n] : changed_per_folder) EXPECT_EQ(n, 2) << folder;
  for (const auto& f : m.folders)
    for (const auto& c : f.corrupted) EXPECT_NE(clean.at(c.file), noisy.at(c.file));

  // The noisy tree is still a valid dataset with the same labels.
  EXPECT_EQ(scan_dataset(dir_ / "noisy").samples.size(), 72u);
}

TEST_F(CorruptTree, ByteIdenticalAcrossRunsAndWorkerCounts) {
  const NoiseSpec spec{NoiseKind::salt_pepper, 0.05, 2, 1234};
  corrupt_dataset(dir_ / "clean", dir_ / "a", spec, 1);
  corrupt_dataset(dir_ / "clean", dir_ / "b", spec, 1);
  const auto m4 = corrupt_dataset(dir_ / "clean", dir_ / "c", spec, 4);
  const auto a = fctest::tree_contents(dir_ / "a");
  EXPECT_EQ(a, fctest::tree_contents(dir_ / "b"));
  EXPECT_EQ(a, fctest::tree_contents(dir_ / "c"));
  const auto m1 = corrupt_dataset(dir_ / "clean", dir_ / "d", spec, 1);
  EXPECT_EQ(to_json(m1).dump(), to_json(m4).dump());
}

TEST_F(CorruptTree, DifferentSeedSelectsDifferently) {
  const auto a = corrupt_dataset(dir_ / "clean", dir_ / "a", {NoiseKind::gaussian, 25.0, 2, 1}, 1);
  const auto b = corrupt_dataset(dir_ / "clean", dir_ / "b", {NoiseKind::gaussian, 25.0, 2, 2}, 1);
  EXPECT_NE(to_json(a).dump(), to_json(b).dump());
}

TEST_F(CorruptTree, CountZeroCopiesTreeUnchanged) {
  const auto m = corrupt_dataset(dir_ / "clean", dir_ / "copy", {NoiseKind::gaussian, 25.0, 0, 1}, 2);
  EXPECT_EQ(m.n_corrupted, 0u);
  EXPECT_EQ(fctest::tree_contents(dir_ / "clean"), fctest::tree_contents(dir_ / "copy"));
}

TEST_F(CorruptTree, SmallFoldersAreSkippedAndReported) {
  const auto m = corrupt_dataset(dir_ / "clean", dir_ / "noisy", {NoiseKind::gaussian, 25.0, 7, 1}, 1);
  EXPECT_EQ(m.n_corrupted, 0u);
  for (const auto& f : m.folders) {
    EXPECT_TRUE(f.skipped);
    EXPECT_FALSE(f.skip_reason.empty());
  }
}

TEST_F(CorruptTree, ManifestRoundTripAndErrors) {
  const auto m = corrupt_dataset(dir_ / "clean", dir_ / "noisy", {NoiseKind::gaussian, 25.0, 2, 8}, 1);
  const auto back = corruption_manifest_from_json(json::parse(to_json(m).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
  EXPECT_THROW(corrupt_dataset(dir_ / "clean", dir_ / "clean", {}, 1), ConfigError);
  EXPECT_THROW(corrupt_dataset(dir_ / "nope", dir_ / "x", {}, 1), EmptyDatasetError);
  EXPECT_EQ(default_corruption_manifest_path(dir_ / "noisy"), dir_.path() / "noisy.corruption.json");
}
