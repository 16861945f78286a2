#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pva/adapt.hpp"
#include "pva/detect.hpp"
#include "pva/error.hpp"
#include "pva/pipeline.hpp"

namespace {

using namespace pva;

Points gaussian(std::size_t n, std::size_t dim, double mean, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(mean, 1.0);
  Points p(n, std::vector<double>(dim));
  for (auto& v : p)
    for (auto& c : v) c = g(rng);
  return p;
}

TEST(Mmd, IdentityAndSymmetry) {
  const Points x = gaussian(40, 3, 0.0, 1), y = gaussian(30, 3, 0.7, 2);
  EXPECT_LE(std::abs(mmd2(x, x)), 1e-9);
  EXPECT_NEAR(mmd2(x, y), mmd2(y, x), 1e-12);
  EXPECT_GE(mmd2(x, y), 0.0);
  Points xp = x;
  std::reverse(xp.begin(), xp.end());
  std::swap(xp[3], xp[10]);
  EXPECT_NEAR(mmd2(xp, y), mmd2(x, y), 1e-12);
}

TEST(Mmd, SeparatedGaussiansMatchDirectFormula) {
  const Points x = gaussian(256, 1, 0.0, 11), y = gaussian(256, 1, 5.0, 12);
  const double sigma = median_bandwidth(x, y);
  const double v = mmd2(x, y);
  EXPECT_GT(v, 0.5);
  EXPECT_NEAR(v, oracle::mmd2_direct(x, y, sigma), 1e-9);
  MmdConfig fixed{1.5};
  EXPECT_NEAR(mmd2(x, y, fixed), oracle::mmd2_direct(x, y, 1.5), 1e-9);
}

TEST(Mmd, MedianBandwidthOfKnownSet) {
  // Pooled pairwise distances of {0, 1, 3} are 1, 2, 3: median 2.
  const Points x{{0.0}, {1.0}}, y{{3.0}};
  EXPECT_NEAR(median_bandwidth(x, y), 2.0, 1e-12);
  const Points same{{2.0}, {2.0}};
  EXPECT_EQ(median_bandwidth(same, same), 1.0);
}

TEST(Mmd, Errors) {
  const Points x{{0.0, 1.0}}, y{{1.0}};
  EXPECT_THROW(mmd2(x, y), DimensionError);
  EXPECT_THROW(mmd2(Points{}, y), DataError);
  EXPECT_THROW((MmdConfig{0.0}.validate()), ValidationError);
  EXPECT_THROW((MmdConfig{-1.0}.validate()), ValidationError);
}

TEST(Mmd, GradientMatchesFiniteDifference) {
  const Points x = gaussian(6, 2, 0.0, 3), y = gaussian(5, 2, 1.0, 4);
  MmdConfig cfg{1.3};
  const auto g = mmd2_with_grad(x, y, cfg);
  EXPECT_NEAR(g.value, mmd2(x, y, cfg), 1e-12);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t d = 0; d < 2; ++d) {
      Points xp = x, xm = x;
      xp[i][d] += h;
      xm[i][d] -= h;
      EXPECT_NEAR(g.d_x[i][d], (mmd2(xp, y, cfg) - mmd2(xm, y, cfg)) / (2 * h), 1e-7);
    }
  for (std::size_t j = 0; j < y.size(); ++j) {
    Points yp = y, ym = y;
    yp[j][0] += h;
    ym[j][0] -= h;
    EXPECT_NEAR(g.d_y[j][0], (mmd2(x, yp, cfg) - mmd2(x, ym, cfg)) / (2 * h), 1e-7);
  }
}

struct DomainData {
  Cohort cohort;
  std::vector<Segment> src_segs, tgt_segs;
  std::vector<nn::Example> source;
  std::vector<std::span<const float>> target;
};

const DomainData& domain_data() {
  static const DomainData d = [] {
    DomainData out;
    out.cohort = generate_cohort(fixture::small_cohort_spec(), 5);
    out.src_segs = population_segments(out.cohort.population, Domain::ECG);
    for (const auto& rec : out.cohort.patient)
      for (auto& s : segment_recording(rec, Domain::IEGM)) out.tgt_segs.push_back(std::move(s));
    out.source = labeled_examples(out.src_segs);
    for (const auto& s : out.tgt_segs) out.target.emplace_back(s.samples);
    return out;
  }();
  return d;
}

const nn::Model& trained_base() {
  static const nn::Model m = [] {
    nn::Model base = make_detector(3);
    nn::train_supervised(base, domain_data().source, nn::TrainConfig{0.01, 16, 0.9, 8, 1});
    return base;
  }();
  return m;
}

TEST(Adapt, LambdaZeroEqualsSupervised) {
  const auto& d = domain_data();
  const std::span<const nn::Example> src(d.source.data(), 24);
  AdaptConfig cfg;
  cfg.lambda_mmd = 0.0;
  cfg.train = {0.01, 8, 0.9, 2, 4};
  const auto adapted = adapt_with_mask(make_detector(9), src, d.target, nn::FreezeMask::all_fine_tune(), cfg);
  nn::Model sup = make_detector(9);
  nn::train_supervised(sup, src, cfg.train);
  EXPECT_EQ(nn::serialize(adapted.model), nn::serialize(sup));
  for (double v : adapted.epoch_mmd) EXPECT_EQ(v, 0.0);
}

TEST(Adapt, AllFrozenKeepsConvLayers) {
  const auto& d = domain_data();
  AdaptConfig cfg;
  cfg.train = {0.01, 16, 0.9, 1, 0};
  const auto& base = trained_base();
  const auto r = adapt_with_mask(base, d.source, d.target, nn::FreezeMask::all_frozen(), cfg);
  for (std::size_t l = 0; l < 5; ++l) EXPECT_EQ(r.model.layers[l], base.layers[l]);
  EXPECT_NE(r.model.layers[5], base.layers[5]);
}

TEST(Adapt, ReducesFcDiscrepancy) {
  const auto& d = domain_data();
  const auto& base = trained_base();
  AdaptConfig cfg;
  cfg.lambda_mmd = 3.0;
  cfg.train = {0.01, 16, 0.9, 6, 2};
  const auto r = adapt_with_mask(base, d.source, d.target, nn::FreezeMask::all_fine_tune(), cfg);
  std::vector<std::span<const float>> src_in;
  for (const auto& s : d.src_segs) src_in.emplace_back(s.samples);
  for (std::size_t layer : fc_layer_indices(base)) {
    const MmdConfig fixed{median_bandwidth(layer_activations(base, src_in, layer),
                                           layer_activations(base, d.target, layer))};
    const double pre = mmd2(layer_activations(base, src_in, layer), layer_activations(base, d.target, layer), fixed);
    const double post =
        mmd2(layer_activations(r.model, src_in, layer), layer_activations(r.model, d.target, layer), fixed);
    EXPECT_LE(post, pre) << "layer " << layer;
  }
}

TEST(Adapt, EmptyInputsRejected) {
  const auto& d = domain_data();
  AdaptConfig cfg;
  EXPECT_THROW(adapt_with_mask(trained_base(), {}, d.target, nn::FreezeMask{}, cfg), DataError);
  EXPECT_THROW(adapt_with_mask(trained_base(), d.source, {}, nn::FreezeMask{}, cfg), DataError);
  cfg.lambda_mmd = std::nan("");
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(FreezeMaskIndex, Bijection) {
  for (unsigned i = 0; i < 32; ++i) EXPECT_EQ(nn::FreezeMask::from_index(i).to_index(), i);
  EXPECT_EQ(nn::FreezeMask::from_index(1).fine_tune, (std::array<bool, 5>{true, false, false, false, false}));
  EXPECT_THROW(nn::FreezeMask::from_index(32), ValidationError);
}

TEST(Pool, StructureAndDeterminism) {
  const auto& d = domain_data();
  const auto& base = trained_base();
  const std::span<const nn::Example> src(d.source.data(), 16);
  const std::span<const std::span<const float>> tgt(d.target.data(), 16);
  AdaptConfig cfg;
  cfg.train = {0.01, 8, 0.9, 1, 7};
  const CandidatePool pool = build_pool(base, src, tgt, cfg);
  ASSERT_EQ(pool.size(), kPoolSize);
  EXPECT_NO_THROW(pool.validate());
  for (unsigned c = 0; c < kPoolSize; ++c) {
    const auto mask = nn::FreezeMask::from_index(c);
    for (std::size_t l = 0; l < 5; ++l) {
      if (!mask.fine_tune[l]) EXPECT_EQ(pool[c].layers[l], base.layers[l]) << c << "/" << l;
      else EXPECT_NE(pool[c].layers[l], base.layers[l]) << c << "/" << l;
    }
  }
  EXPECT_EQ(pool.serialized_bytes(), kPoolSize * nn::serialize(base).size());
  const CandidatePool again = build_pool(base, src, tgt, cfg, 4);
  for (unsigned c = 0; c < kPoolSize; ++c) EXPECT_EQ(nn::serialize(again[c]), nn::serialize(pool[c]));

  const auto dir = std::filesystem::temp_directory_path() / "pva_pool_test";
  std::filesystem::remove_all(dir);
  save_pool(pool, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "cand_00.pva1"));
  EXPECT_TRUE(std::filesystem::exists(dir / "cand_31.pva1"));
  const CandidatePool back = load_pool(dir);
  for (unsigned c = 0; c < kPoolSize; ++c) EXPECT_EQ(back[c], pool[c]);
}

TEST(Pool, ReplicateAndValidate) {
  const CandidatePool rep = replicate_pool(make_detector(1));
  EXPECT_EQ(rep.size(), kPoolSize);
  CandidatePool short_pool = rep;
  short_pool.models.pop_back();
  EXPECT_THROW(short_pool.validate(), ValidationError);
}

}  // namespace
