#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "freshcast/eval/reports.hpp"

using namespace freshcast;
using namespace freshcast::eval;

namespace {

// Precision/recall route from a full confusion matrix.
double oracle_f1(const std::vector<int>& t, const std::vector<int>& p, int k, bool weighted) {
  std::vector<std::vector<long>> cm(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k), 0));
  for (std::size_t i = 0; i < t.size(); ++i) ++cm[static_cast<std::size_t>(t[i])][static_cast<std::size_t>(p[i])];
  long double acc = 0;
  for (int c = 0; c < k; ++c) {
    long row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
      col += cm[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
    }
    const long tp = cm[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    const long double prec = col ? static_cast<long double>(tp) / col : 0, rec = row ? static_cast<long double>(tp) / row : 0;
    const long double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
    acc += weighted ? f * row : f;
  }
  return static_cast<double>(acc / (weighted ? static_cast<long double>(t.size()) : k));
}

MetricsReport report(std::string id, std::string ds, double vf, double sf, double m, double s) {
  return {std::move(id), std::move(ds), vf, sf, m, s, {}};
}

}  // namespace

TEST(F1, HandExamples) {
  const std::vector<int> t{0, 1, 1, 2}, p{0, 1, 2, 2};
  EXPECT_NEAR(macro_f1(t, p, 3), 7.0 / 9.0, 1e-15);
  EXPECT_EQ(macro_f1(t, t, 3), 1.0);
  // A class that never appears scores 0 but counts in the mean.
  EXPECT_NEAR(macro_f1(t, t, 4), 0.75, 1e-15);
  std::vector<int> balanced, constant(64, 0);
  for (int i = 0; i < 64; ++i) balanced.push_back(i % 8);
  EXPECT_NEAR(macro_f1(balanced, constant, 8), 1.0 / 36.0, 1e-15);
}

TEST(F1, MatchesConfusionMatrixOracle) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 7;
    const int n = 1 + static_cast<int>(rng() % 200);
    std::vector<int> t(static_cast<std::size_t>(n)), p(t.size());
    for (int i = 0; i < n; ++i) {
      t[static_cast<std::size_t>(i)] = static_cast<int>(rng() % static_cast<unsigned>(k));
      p[static_cast<std::size_t>(i)] = rng() % 3 == 0 ? t[static_cast<std::size_t>(i)] : static_cast<int>(rng() % static_cast<unsigned>(k));
    }
    EXPECT_NEAR(macro_f1(t, p, k), oracle_f1(t, p, k, false), 1e-12);
    EXPECT_NEAR(macro_f1(t, p, k, F1Average::weighted), oracle_f1(t, p, k, true), 1e-12);
    const double f = macro_f1(t, p, k);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
  }
}

TEST(F1, InvalidInputs) {
  const std::vector<int> a{0, 1}, b{0}, c{0, 5}, empty;
  EXPECT_THROW(macro_f1(a, b, 2), EvaluationError);
  EXPECT_THROW(macro_f1(a, c, 2), EvaluationError);
  EXPECT_THROW(macro_f1(empty, empty, 2), EvaluationError);
}

TEST(Regression, HandExamples) {
  EXPECT_EQ(mse(std::vector<double>{1, 2}, std::vector<double>{2, 4}), 2.5);
  EXPECT_NEAR(smape(std::vector<double>{2, 1}, std::vector<double>{1, 1}), 100.0 / 3.0, 1e-12);
  EXPECT_EQ(smape(std::vector<double>{0}, std::vector<double>{5}), 200.0);
  EXPECT_EQ(smape(std::vector<double>{0}, std::vector<double>{0}), 0.0);
  EXPECT_THROW(mse(std::vector<double>{1}, std::vector<double>{}), EvaluationError);
}

TEST(Regression, MatchesDirectFormulaAndBounds) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 100;
    std::vector<double> t(n), p(n);
    long double se = 0, sm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = u(rng);
      p[i] = u(rng);
      se += (static_cast<long double>(p[i]) - t[i]) * (static_cast<long double>(p[i]) - t[i]);
      sm += 2 * std::abs(static_cast<long double>(p[i]) - t[i]) / (std::abs(static_cast<long double>(t[i])) + std::abs(p[i]));
    }
    EXPECT_NEAR(mse(t, p), static_cast<double>(se / n), 1e-9);
    const double s = smape(t, p);
    EXPECT_NEAR(s, static_cast<double>(100 * sm / n), 1e-9);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 200.0);
    EXPECT_EQ(smape(t, p), smape(p, t));
  }
}

TEST(Regression, CompensatedSumHandlesCancellation) {
  CompensatedSum s;
  s.add(1e16);
  s.add(1.0);
  s.add(-1e16);
  EXPECT_EQ(s.value(), 1.0);
}

TEST(Evaluate, ScoresAPredictorEndToEnd) {
  std::vector<LabeledImage> data(6);
  for (int i = 0; i < 6; ++i) data[static_cast<std::size_t>(i)] = {{}, i % 2, i % 3, static_cast<double>(i)};
  const Predictor perfect_but_day = [&, calls = 0](std::span<const PreprocessedImage> imgs) mutable {
    std::vector<PredictionTriple> out;
    for (std::size_t i = 0; i < imgs.size(); ++i, ++calls) {
      const auto& d = data[static_cast<std::size_t>(calls)];
      PredictionTriple t{std::vector<double>(2, 0.0), std::vector<double>(3, 0.0), d.day + 1.0};
      t.vegetable_probs[static_cast<std::size_t>(d.vegetable)] = 1.0;
      t.spoilage_probs[static_cast<std::size_t>(d.spoilage)] = 1.0;
      out.push_back(t);
    }
    return out;
  };
  EvaluationOptions opt;
  opt.vegetable_classes = 2;
  opt.batch = 4;
  const auto r = evaluate(perfect_but_day, data, "m", "original", opt);
  EXPECT_EQ(r.vegetable_f1, 1.0);
  EXPECT_EQ(r.spoilage_f1, 1.0);
  EXPECT_EQ(r.mse, 1.0);
  EXPECT_EQ(r.n_samples, 6);
  EXPECT_THROW(evaluate(perfect_but_day, std::span<const LabeledImage>{}, "m", "original"), EvaluationError);
}

TEST(Reports, JsonShapesAndValidation) {
  const auto r = report("vgg16", "noisy", 0.5, 0.6, 1.2, 30.0);
  const auto j = to_json(r);
  EXPECT_EQ(reports_from_json(j).size(), 1u);
  EXPECT_EQ(reports_from_json(json::array({j, j})).size(), 2u);
  EXPECT_EQ(reports_from_json(json{{"reports", {j}}})[0].model_id, "vgg16");
  auto bad = j;
  bad["vegetable_f1"] = 1.5;
  EXPECT_THROW(metrics_report_from_json(bad), EvaluationError);
  bad = j;
  bad.erase("mse");
  EXPECT_THROW(metrics_report_from_json(bad), ParseError);
}

TEST(Diff, HandExampleAndAntisymmetry) {
  const std::vector<MetricsReport> a{report("x", "original", 0.9, 0.8, 1.0, 20.0), report("y", "original", 0.7, 0.6, 2.0, 30.0)};
  const std::vector<MetricsReport> b{report("y", "noisy", 0.5, 0.65, 2.5, 28.0), report("x", "noisy", 0.85, 0.8, 1.5, 22.0)};
  const auto d = diff_table(a, b);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].model_id, "x");
  EXPECT_NEAR(d[0].vegetable_f1_diff, 0.05, 1e-12);
  EXPECT_EQ(d[0].spoilage_f1_diff, 0.0);
  EXPECT_EQ(d[0].mse_diff, -0.5);
  EXPECT_EQ(d[0].smape_diff, -2.0);
  EXPECT_NEAR(d[1].spoilage_f1_diff, -0.05, 1e-12);
  const auto rev = diff_table(b, a);
  for (const auto& row : rev) {
    const auto& fwd = row.model_id == "x" ? d[0] : d[1];
    EXPECT_EQ(row.vegetable_f1_diff, -fwd.vegetable_f1_diff);
    EXPECT_EQ(row.mse_diff, -fwd.mse_diff);
    EXPECT_EQ(row.smape_diff, -fwd.smape_diff);
  }
  for (const auto& row : diff_table(a, a)) {
    EXPECT_EQ(row.vegetable_f1_diff, 0.0);
    EXPECT_EQ(row.mse_diff, 0.0);
  }
}

TEST(Diff, PairingErrors) {
  const std::vector<MetricsReport> a{report("x", "original", 0.9, 0.8, 1.0, 20.0)};
  const std::vector<MetricsReport> none{report("z", "noisy", 0.9, 0.8, 1.0, 20.0)};
  const std::vector<MetricsReport> dup{report("x", "noisy", 0.9, 0.8, 1.0, 20.0), report("x", "noisy", 0.9, 0.8, 1.0, 20.0)};
  EXPECT_THROW(diff_table(a, none), PairingError);
  EXPECT_THROW(diff_table(a, dup), PairingError);
  EXPECT_THROW(diff_table(a, {}), PairingError);
}

TEST(Diff, CsvRoundTrip) {
  const std::vector<MetricsReport> a{report("x", "original", 0.9, 0.8, 1.0, 20.0), report("y", "original", 0.1, 0.2, 3.0, 40.0)};
  const std::vector<MetricsReport> b{report("x", "noisy", 0.33, 0.71, 1.25, 19.5), report("y", "noisy", 0.1, 0.2, 3.0, 40.0)};
  const auto d = diff_table(a, b);
  const auto csv = to_csv(d);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model_id,vegetable_f1,spoilage_f1,mse,smape");
  const auto back = diff_from_csv(csv);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].model_id, d[i].model_id);
    EXPECT_EQ(back[i].vegetable_f1_diff, d[i].vegetable_f1_diff);
    EXPECT_EQ(back[i].smape_diff, d[i].smape_diff);
  }
  EXPECT_EQ(reports_from_csv(to_csv(a))[1].mse, 3.0);
  EXPECT_THROW(diff_from_csv("a,b\n"), ParseError);
  EXPECT_THROW(diff_from_csv(csv + "z,1,2\n"), ParseError);
  EXPECT_THROW(diff_from_csv(csv + "z,1,2,x,4\n"), ParseError);
}
