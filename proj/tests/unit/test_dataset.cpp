#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "cityalign/dataset.hpp"
#include "cityalign/json_io.hpp"
#include "cityalign/random.hpp"
#include "cityalign/render.hpp"
#include "test_support.hpp"

using namespace cityalign;

namespace {

std::vector<ViewpointRecord> make_records(std::mt19937_64& rng, std::size_t n, double extent = 2000.0) {
  std::vector<ViewpointRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].pano_id = "p" + std::to_string(i);
    out[i].pose.location = Vec3(uniform(rng, -extent, extent), uniform(rng, -extent, extent), 2.5);
    out[i].n_annotations = 8 + static_cast<std::uint32_t>(uniform_index(rng, 20));
  }
  return out;
}

std::array<std::size_t, 3> tally(const std::vector<SplitLabel>& labels) {
  std::array<std::size_t, 3> c{0, 0, 0};
  for (auto l : labels) {
    if (l != SplitLabel::Excluded) ++c[static_cast<int>(l)];
  }
  return c;
}

void touch(const std::filesystem::path& p) { std::ofstream(p) << "x"; }

void write_fake_products(const std::filesystem::path& dir, const std::string& pano) {
  Json views = Json::array();
  for (int k = 0; k < kViewsPerViewpoint; ++k) {
    for (const char* s : kProductSuffixes) touch(dir / product_filename(pano, k, s));
    views.push_back({{"index", k}, {"yaw_deg", 45.0 * k}, {"pitch_deg", 10.0}, {"fov_deg", 90.0}});
  }
  write_json_atomic(dir / (pano + "_views.json"), {{"pano_id", pano}, {"views", views}});
}

}  // namespace

TEST(SplitSizes, FloorThenDistribute) {
  EXPECT_EQ(split_sizes(10, {0.8, 0.1, 0.1}), (std::array<std::size_t, 3>{8, 1, 1}));
  EXPECT_EQ(split_sizes(100, {0.8, 0.1, 0.1}), (std::array<std::size_t, 3>{80, 10, 10}));
  EXPECT_EQ(split_sizes(13, {0.8, 0.1, 0.1}), (std::array<std::size_t, 3>{11, 1, 1}));
  EXPECT_EQ(split_sizes(7, {0.5, 0.25, 0.25}), (std::array<std::size_t, 3>{4, 2, 1}));
  for (std::size_t n = 0; n < 200; ++n) {
    const auto s = split_sizes(n, {0.7, 0.2, 0.1});
    EXPECT_EQ(s[0] + s[1] + s[2], n);
  }
}

TEST(SplitSpecValidation, RejectsBadFractions) {
  SplitSpec s;
  s.fractions = {0.8, 0.1, 0.2};
  EXPECT_THROW(s.validate(), DomainError);
  s.fractions = {1.0, 0.0, 0.0};
  EXPECT_THROW(s.validate(), DomainError);
  s.fractions = {0.8, 0.1, 0.1};
  s.spatial_cell = 0.0;
  EXPECT_NO_THROW(s.validate());
  s.kind = SplitKind::Spatial;
  EXPECT_THROW(s.validate(), DomainError);
}

TEST(SplitRandom, TenRecordsGiveEightOneOne) {
  std::mt19937_64 rng(1);
  const auto recs = make_records(rng, 10);
  SplitSpec spec;
  spec.seed = 5;
  EXPECT_EQ(tally(split_random(recs, spec)), (std::array<std::size_t, 3>{8, 1, 1}));
}

TEST(SplitRandom, DeterministicAndPartition) {
  std::mt19937_64 rng(2);
  auto recs = make_records(rng, 1000);
  for (std::size_t i = 0; i < recs.size(); i += 7) recs[i].indoor = true;
  SplitSpec spec;
  spec.seed = 42;
  const auto a = split_random(recs, spec);
  EXPECT_EQ(a, split_random(recs, spec));
  ASSERT_EQ(a.size(), recs.size());
  std::size_t eligible = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].indoor) {
      EXPECT_EQ(a[i], SplitLabel::Excluded);
    } else {
      ++eligible;
      EXPECT_NE(a[i], SplitLabel::Excluded);
    }
  }
  EXPECT_EQ(tally(a), split_sizes(eligible, spec.fractions));
  spec.seed = 43;
  EXPECT_NE(a, split_random(recs, spec));
}

TEST(SplitRandom, EmptyInputIsAnError) {
  EXPECT_THROW(split_random({}, SplitSpec{}), DomainError);
  SplitSpec spatial;
  spatial.kind = SplitKind::Spatial;
  EXPECT_THROW(split_spatial({}, spatial), DomainError);
}

TEST(SplitSpatial, NearbyViewpointsShareSplit) {
  std::mt19937_64 rng(3);
  SplitSpec spec;
  spec.kind = SplitKind::Spatial;
  spec.spatial_cell = 100.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto recs = make_records(rng, 30);
    // Keep the pair clear of a cell boundary.
    recs[0].pose.location = Vec3(100.0 * static_cast<double>(uniform_index(rng, 20)) + 20.0, 30.0, 2.5);
    recs[1].pose.location = recs[0].pose.location + Vec3(1.0, 0.0, 0.0);
    spec.seed = static_cast<std::uint64_t>(trial);
    const auto labels = split_spatial(recs, spec);
    EXPECT_EQ(labels[0], labels[1]);
  }
}

TEST(SplitSpatial, GridMatchesRehashOracle) {
  std::vector<ViewpointRecord> recs;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      ViewpointRecord r;
      r.pano_id = "g" + std::to_string(i) + "_" + std::to_string(j);
      r.pose.location = Vec3(1000.0 * i + 37.0, 1000.0 * j - 412.0, 2.5);
      recs.push_back(r);
    }
  }
  SplitSpec spec;
  spec.kind = SplitKind::Spatial;
  spec.spatial_cell = 100.0;
  spec.seed = 9;
  const auto labels = split_spatial(recs, spec);
  EXPECT_EQ(tally(labels), (std::array<std::size_t, 3>{80, 10, 10}));

  // Cells recomputed here, assigned with the documented order: sorted keys,
  // seeded shuffle, then consecutive runs.
  std::set<std::pair<std::int64_t, std::int64_t>> keys;
  auto key = [](const Vec3& p) {
    return std::make_pair(static_cast<std::int64_t>(std::floor(p.x() / 100.0)),
                          static_cast<std::int64_t>(std::floor(p.y() / 100.0)));
  };
  for (const auto& r : recs) keys.insert(key(r.pose.location));
  std::vector<std::pair<std::int64_t, std::int64_t>> order(keys.begin(), keys.end());
  std::mt19937_64 rng(spec.seed);
  shuffle(order, rng);
  std::map<std::pair<std::int64_t, std::int64_t>, SplitLabel> cell_label;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cell_label[order[k]] = k < 80 ? SplitLabel::Train : (k < 90 ? SplitLabel::Valid : SplitLabel::Test);
  }
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(labels[i], cell_label[key(recs[i].pose.location)]);
}

TEST(SplitSpatial, NeverDividesACell) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto recs = make_records(rng, 500, 800.0);
    recs[3].indoor = true;
    SplitSpec spec;
    spec.kind = SplitKind::Spatial;
    spec.seed = static_cast<std::uint64_t>(trial);
    spec.spatial_cell = 150.0;
    const auto labels = split_records(recs, spec);
    std::map<std::pair<std::int64_t, std::int64_t>, SplitLabel> seen;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (recs[i].indoor) {
        EXPECT_EQ(labels[i], SplitLabel::Excluded);
        continue;
      }
      ASSERT_NE(labels[i], SplitLabel::Excluded);
      const auto k = spatial_cell_key(recs[i].pose.location, spec.spatial_cell);
      const auto [it, fresh] = seen.emplace(k, labels[i]);
      if (!fresh) {
        EXPECT_EQ(it->second, labels[i]);
      }
    }
  }
}

TEST(SpatialCellKey, FloorsNegativeCoordinates) {
  EXPECT_EQ(spatial_cell_key(Vec3(-0.5, 199.9, 0), 200.0), std::make_pair(std::int64_t{-1}, std::int64_t{0}));
  EXPECT_EQ(spatial_cell_key(Vec3(400.0, -400.0, 0), 200.0), std::make_pair(std::int64_t{2}, std::int64_t{-2}));
}

TEST(Manifest, CompleteMissingAndQuality) {
  const auto dir = testutil::scratch_dir("manifest");
  std::vector<ViewpointRecord> recs(3);
  recs[0].pano_id = "a";
  recs[1].pano_id = "b";
  recs[2].pano_id = "c";
  recs[2].indoor = true;
  write_fake_products(dir, "a");
  write_fake_products(dir, "b");
  const std::vector<SplitLabel> labels{SplitLabel::Train, SplitLabel::Test, SplitLabel::Excluded};

  const auto full = build_manifest(recs, labels, dir);
  EXPECT_EQ(full.entries.size(), 16u);
  EXPECT_TRUE(full.missing.empty());
  EXPECT_EQ(full.pass_ratio, 1.0);
  for (const auto& e : full.entries) {
    EXPECT_EQ(e.files.size(), kProductSuffixes.size());
    EXPECT_EQ(e.yaw_deg, 45.0 * e.view);
    EXPECT_EQ(e.split, e.pano_id == "a" ? SplitLabel::Train : SplitLabel::Test);
  }

  std::set<std::string> half;
  for (int k = 0; k < 8; ++k) half.insert("a_" + std::to_string(k));
  const auto q = build_manifest(recs, labels, dir, half);
  EXPECT_EQ(q.quality_passed, 8u);
  EXPECT_EQ(q.pass_ratio, 0.5);

  std::filesystem::remove(dir / product_filename("b", 3, "dpth.pfm"));
  const auto partial = build_manifest(recs, labels, dir);
  EXPECT_EQ(partial.entries.size(), 15u);
  ASSERT_EQ(partial.missing.size(), 1u);
  EXPECT_EQ(partial.missing[0].view_id, "b_3");
  EXPECT_EQ(partial.missing[0].files, std::vector<std::string>{"b_3_dpth.pfm"});

  const auto doc = manifest_to_json(partial);
  EXPECT_EQ(doc.at("entries").size(), 15u);
  EXPECT_EQ(doc.at("missing").size(), 1u);
}

TEST(QualityList, IgnoresBlanksAndWhitespace) {
  const auto dir = testutil::scratch_dir("quality");
  std::ofstream(dir / "q.txt") << "a_0\n\n  a_1  \r\nb_2\n";
  EXPECT_EQ(read_quality_list(dir / "q.txt"), (std::set<std::string>{"a_0", "a_1", "b_2"}));
}

TEST(CountStats, Examples) {
  std::vector<ViewpointRecord> recs(3);
  recs[0].n_annotations = 8;
  recs[1].n_annotations = 8;
  recs[2].n_annotations = 9;
  const auto s = annotation_count_stats(recs);
  EXPECT_EQ(s.median, 8u);
  EXPECT_EQ(s.max, 9u);
  EXPECT_EQ(s.min, 8u);
  EXPECT_EQ(s.histogram, (std::map<std::uint32_t, std::size_t>{{8, 2}, {9, 1}}));
  EXPECT_TRUE(annotation_count_stats({}).histogram.empty());
}

TEST(CountStats, MatchesDirectTally) {
  std::mt19937_64 rng(5);
  const auto recs = make_records(rng, 1000);
  const auto s = annotation_count_stats(recs);
  std::map<std::uint32_t, std::size_t> hist;
  std::vector<std::uint32_t> v;
  for (const auto& r : recs) {
    ++hist[r.n_annotations];
    v.push_back(r.n_annotations);
  }
  std::sort(v.begin(), v.end());
  EXPECT_EQ(s.histogram, hist);
  EXPECT_EQ(s.min, v.front());
  EXPECT_EQ(s.max, v.back());
  EXPECT_EQ(s.median, v[499]);  // nearest rank: ceil(0.5 * 1000) - 1
}

TEST(Sil, Examples) {
  const std::vector<double> gt{1.0, 2.5, 7.0, 0.3};
  EXPECT_EQ(compute_sil(gt, gt), 0.0);
  std::vector<double> twice(gt);
  for (auto& v : twice) v *= 2.0;
  EXPECT_NEAR(compute_sil(twice, gt), 0.0, 1e-15);
  const double l2 = std::log(2.0);
  EXPECT_NEAR(compute_sil({2.0, 3.0}, {1.0, 3.0}), l2 * l2 / 4.0, 1e-15);
}

TEST(Sil, MasksInvalidPixels) {
  const double inf = std::numeric_limits<double>::infinity();
  const double l2 = std::log(2.0);
  EXPECT_NEAR(compute_sil({2.0, 3.0, 5.0, 9.0, 1.0}, {1.0, 3.0, 0.0, inf, 1.0}, {1, 1, 1, 1, 0}), l2 * l2 / 4.0,
              1e-15);
  EXPECT_THROW(compute_sil({1.0}, {0.0}), DomainError);
  EXPECT_THROW(compute_sil({1.0, 2.0}, {1.0}), DomainError);
}

TEST(Sil, ScaleInvariantAndMatchesOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> pred(4096), gt(4096);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      gt[i] = uniform(rng, 1.0, 80.0);
      pred[i] = gt[i] * std::exp(0.2 * standard_normal(rng));
    }
    const double base = compute_sil(pred, gt);
    const double a = std::exp(uniform(rng, -3.0, 3.0));
    std::vector<double> scaled(pred);
    for (auto& v : scaled) v *= a;
    EXPECT_LT(std::abs(compute_sil(scaled, gt) - base), 1e-12);

    long double s = 0, s2 = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const long double d = std::log(static_cast<long double>(pred[i])) - std::log(static_cast<long double>(gt[i]));
      s += d;
      s2 += d * d;
    }
    const long double n = gt.size();
    EXPECT_NEAR(base, static_cast<double>(s2 / n - (s / n) * (s / n)), 1e-12);
  }
}
