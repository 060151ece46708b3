#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "lmf/data.hpp"
#include "lmf/error.hpp"
#include "oracles.hpp"

using namespace lmf;
namespace fs = std::filesystem;

namespace {

std::string error_message(auto&& fn, ErrorKind* kind = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (kind) *kind = e.kind();
    return e.what();
  }
  return "";
}

Dataset random_dataset(std::mt19937_64& rng, std::size_t k, std::size_t d) {
  std::uniform_int_distribution<int> cnt(1, 120);
  std::normal_distribution<double> f(0.0, 1.0);
  std::vector<double> feats;
  std::vector<int> labels;
  for (std::size_t j = 0; j < k; ++j) {
    const int n = cnt(rng);
    for (int i = 0; i < n; ++i) {
      labels.push_back(static_cast<int>(j));
      for (std::size_t c = 0; c < d; ++c) feats.push_back(f(rng));
    }
  }
  // Interleave classes so input order is not class-sorted.
  std::vector<std::size_t> perm(labels.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return Dataset(k, d, feats, labels).subset(perm);
}

std::multiset<std::pair<int, std::vector<double>>> as_multiset(const Dataset& ds) {
  std::multiset<std::pair<int, std::vector<double>>> out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto f = ds.features(i);
    out.emplace(ds.label(i), std::vector<double>(f.begin(), f.end()));
  }
  return out;
}

}  // namespace

TEST_CASE("parse_csv schema and label remapping") {
  const auto ds = parse_csv("x,label,y\n1.5,a,2\n-3,b,4e-1\n0,a,7\n");
  CHECK(ds.num_classes() == 2);
  CHECK(ds.feature_dim() == 2);
  CHECK(class_counts(ds).counts == std::vector<long long>{2, 1});
  CHECK(ds.class_names() == std::vector<std::string>{"a", "b"});
  CHECK(ds.features(1)[0] == -3.0);
  CHECK(ds.features(1)[1] == 0.4);
}

TEST_CASE("parse_csv errors") {
  ErrorKind kind{};
  CHECK(error_message([] { parse_csv("label,x\n"); }, &kind).find("empty dataset") !=
        std::string::npos);
  CHECK(kind == ErrorKind::InvalidInput);

  const std::string bad =
      "label,x,y\n"  // row 1
      "a,1,2\n"
      "a,1,2\n"
      "b,1,2\n"
      "b,1,2\n"
      "a,1,2\n"
      "a,1,oops\n"  // row 7
      "a,1,2\n";
  const auto msg = error_message([&] { parse_csv(bad); }, &kind);
  CHECK(kind == ErrorKind::Parse);
  CHECK(msg.find("row 7") != std::string::npos);

  CHECK(error_message([] { parse_csv("label,x\na,1\nb,1,2\n"); }, &kind).find("row 3") !=
        std::string::npos);
  CHECK(kind == ErrorKind::Parse);
  CHECK(error_message([] { parse_csv("cls,x\na,1\n"); }, &kind).find("label") !=
        std::string::npos);
  CHECK(kind == ErrorKind::Parse);
  CHECK(!error_message([] { parse_csv("label,x\na,nan\n"); }, &kind).empty());
  CHECK(kind == ErrorKind::Parse);
  error_message([] { load_csv("/definitely/not/here.csv"); }, &kind);
  CHECK(kind == ErrorKind::Io);
}

TEST_CASE("csv save and load round trip is exact") {
  std::mt19937_64 rng(3);
  const auto ds = random_dataset(rng, 3, 4);
  fs::create_directories(LMF_TEST_TMP);
  const fs::path p = fs::path(LMF_TEST_TMP) / "rt.csv";
  save_csv(ds, p);
  const auto back = load_csv(p).remap_to(ds.class_names());
  CHECK(back.size() == ds.size());
  CHECK(std::equal(ds.labels().begin(), ds.labels().end(), back.labels().begin()));
  CHECK(std::equal(ds.feature_matrix().begin(), ds.feature_matrix().end(),
                   back.feature_matrix().begin()));
}

TEST_CASE("remap_to adds missing classes with zero count") {
  const auto ds = parse_csv("label,x\nb,1\nb,2\n");
  const auto m = ds.remap_to({"a", "b", "c"});
  CHECK(class_counts(m).counts == std::vector<long long>{0, 2, 0});
  CHECK_THROWS_AS(ds.remap_to({"a"}), Error);
}

TEST_CASE("synth_longtail counts") {
  LongTailSpec s;
  s.num_classes = 4;
  s.max_count = 1000;
  s.imbalance_ratio = 10.0;
  s.feature_dim = 3;
  CHECK(longtail_counts(s) == std::vector<long long>{1000, 464, 215, 100});
  CHECK(class_counts(synth_longtail(s)).counts == std::vector<long long>{1000, 464, 215, 100});

  s.imbalance_ratio = 1.0;
  CHECK(longtail_counts(s) == std::vector<long long>(4, 1000));

  s.imbalance_ratio = 0.5;
  CHECK_THROWS_AS(longtail_counts(s), Error);
  s.imbalance_ratio = 10.0;
  s.max_count = 1;
  ErrorKind kind{};
  error_message([&] { longtail_counts(s); }, &kind);
  CHECK(kind == ErrorKind::InvalidSpec);
}

TEST_CASE("synth_longtail is deterministic per seed") {
  LongTailSpec s;
  s.num_classes = 5;
  s.max_count = 300;
  s.imbalance_ratio = 6.0;
  s.seed = 99;
  const auto a = synth_longtail(s), b = synth_longtail(s);
  CHECK(std::equal(a.feature_matrix().begin(), a.feature_matrix().end(),
                   b.feature_matrix().begin(), b.feature_matrix().end()));
  s.seed = 100;
  const auto c = synth_longtail(s);
  CHECK(!std::equal(a.feature_matrix().begin(), a.feature_matrix().end(),
                    c.feature_matrix().begin()));
}

TEST_CASE("property: long-tail law") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    LongTailSpec s;
    s.num_classes = 2 + rng() % 10;
    s.max_count = 100 + static_cast<long long>(rng() % 5000);
    s.imbalance_ratio = 1.0 + static_cast<double>(rng() % 50);
    const auto c = longtail_counts(s);
    for (std::size_t j = 1; j < c.size(); ++j) CHECK(c[j] <= c[j - 1]);
    CHECK(c.front() == s.max_count);
    const double exact_min = static_cast<double>(s.max_count) / s.imbalance_ratio;
    CHECK(std::abs(static_cast<double>(c.back()) - exact_min) <= 0.5);
  }
}

TEST_CASE("class means are pairwise separated") {
  for (std::size_t d : {1, 2, 3, 10}) {
    for (double sep : {0.5, 3.0}) {
      std::vector<std::vector<double>> means;
      for (std::size_t j = 0; j < 30; ++j) means.push_back(class_mean(j, d, sep));
      for (std::size_t i = 0; i < means.size(); ++i) {
        for (std::size_t j = i + 1; j < means.size(); ++j) {
          double dist2 = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            dist2 += (means[i][c] - means[j][c]) * (means[i][c] - means[j][c]);
          }
          CHECK(std::sqrt(dist2) >= sep * (1.0 - 1e-12));
        }
      }
    }
  }
}

TEST_CASE("built-in dataset profiles") {
  const auto odir = paper_profile(PaperProfile::ODIR).counts;
  CHECK(odir == std::vector<long long>{186, 205, 1126, 198, 90, 162, 2011, 496});
  CHECK(paper_profile_class_names(PaperProfile::ODIR)[4] == "H");
  CHECK(odir[4] == 90);

  const auto ham = paper_profile(PaperProfile::HAM).counts;
  CHECK(ham == std::vector<long long>{229, 360, 769, 81, 779, 4693, 100});
  CHECK(*std::min_element(ham.begin(), ham.end()) == 81);
  CHECK(paper_profile_class_names(PaperProfile::HAM)[3] == "DF");

  const auto isic = paper_profile(PaperProfile::ISIC);
  CHECK(isic.total() == 17733);
  CHECK(isic.counts[3] == 167);

  CHECK(parse_profile("ISIC") == PaperProfile::ISIC);
  ErrorKind kind{};
  error_message([] { parse_profile("cifar"); }, &kind);
  CHECK(kind == ErrorKind::InvalidInput);

  LongTailSpec geom;
  geom.feature_dim = 4;
  const auto ds = synth_from_counts(paper_profile(PaperProfile::ODIR), geom,
                                    paper_profile_class_names(PaperProfile::ODIR));
  CHECK(class_counts(ds).counts == odir);
}

TEST_CASE("class_counts examples") {
  const Dataset a(3, 1, {0, 0, 0, 0}, {0, 0, 1, 2});
  CHECK(class_counts(a).counts == std::vector<long long>{2, 1, 1});
  const Dataset b(3, 1, {0, 0, 0}, {0, 1, 1});
  CHECK(class_counts(b).counts == std::vector<long long>{1, 2, 0});
  CHECK(class_counts(b).total() == 3);
}

TEST_CASE("apportionment examples") {
  const SplitRatios r;
  CHECK(apportion(20, r) == std::array<long long, 3>{14, 3, 3});
  CHECK(apportion(10, r) == std::array<long long, 3>{7, 2, 1});
  CHECK(apportion(1, r) == std::array<long long, 3>{1, 0, 0});
  for (long long n = 0; n < 3000; ++n) {
    CHECK(apportion(n, r) == oracle::apportion_percent(n, {70, 15, 15}));
  }
  CHECK(apportion(37, SplitRatios{0.8, 0.1, 0.1}) == oracle::apportion_percent(37, {80, 10, 10}));
}

TEST_CASE("stratified_split examples") {
  std::vector<int> labels(20, 0);
  labels.insert(labels.end(), 10, 1);
  std::vector<double> feats(labels.size());
  std::iota(feats.begin(), feats.end(), 0.0);
  const Dataset ds(2, 1, feats, labels);
  const auto s = stratified_split(ds, SplitRatios{}, 1);
  CHECK(class_counts(s.train).counts == std::vector<long long>{14, 7});
  CHECK(class_counts(s.val).counts == std::vector<long long>{3, 2});
  CHECK(class_counts(s.test).counts == std::vector<long long>{3, 1});

  const auto all = stratified_split(ds, SplitRatios{1.0, 0.0, 0.0}, 1);
  CHECK(all.train.size() == ds.size());
  CHECK(all.val.empty());
  CHECK(all.test.empty());

  CHECK_THROWS_AS(stratified_split(ds, SplitRatios{0.7, 0.2, 0.2}, 1), Error);
}

TEST_CASE("stratified_split reports empty classes") {
  const Dataset ds(3, 1, {1, 2, 3}, {0, 0, 2});
  const auto s = stratified_split(ds, SplitRatios{}, 4);
  CHECK(s.empty_classes == std::vector<int>{1});
}

TEST_CASE("property: split conservation, stratification and determinism") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const auto ds = random_dataset(rng, 2 + rng() % 6, 2);
    const std::uint64_t seed = rng();
    const auto s = stratified_split(ds, SplitRatios{}, seed);

    auto joined = as_multiset(s.train);
    joined.merge(as_multiset(s.val));
    joined.merge(as_multiset(s.test));
    CHECK(joined == as_multiset(ds));

    const auto n = class_counts(ds).counts;
    const auto tr = class_counts(s.train).counts;
    const auto va = class_counts(s.val).counts;
    const auto te = class_counts(s.test).counts;
    for (std::size_t j = 0; j < n.size(); ++j) {
      CHECK(std::abs(tr[j] - 0.70 * n[j]) < 1.0);
      CHECK(std::abs(va[j] - 0.15 * n[j]) < 1.0);
      CHECK(std::abs(te[j] - 0.15 * n[j]) < 1.0);
    }

    const auto again = stratified_split(ds, SplitRatios{}, seed);
    CHECK(std::equal(again.train.feature_matrix().begin(), again.train.feature_matrix().end(),
                     s.train.feature_matrix().begin(), s.train.feature_matrix().end()));
    CHECK(std::equal(again.test.labels().begin(), again.test.labels().end(),
                     s.test.labels().begin(), s.test.labels().end()));
  }
}
