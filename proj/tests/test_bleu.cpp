#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmvr/bleu.hpp"
#include "mmvr/rng.hpp"
#include "support/bleu_oracle.hpp"

using namespace mmvr;
using mmvr::testing::naive_bleu;

namespace {

Caption ids(std::vector<int> v) { return Caption{{}, std::move(v)}; }
Caption enc(const std::string& s) { return Vocabulary::standard().encode(s); }

std::vector<int> random_ids(Rng& rng, int alphabet, int min_len, int max_len) {
  std::uniform_int_distribution<int> len(min_len, max_len), tok(3, 3 + alphabet - 1);
  std::vector<int> v(static_cast<std::size_t>(len(rng)));
  for (int& t : v) t = tok(rng);
  return v;
}

}  // namespace

TEST_CASE("bleu worked example") {
  // "the cat" against "the cat sat": perfect precisions, brevity penalty e^(1 - 3/2)
  const Caption cand = ids({100, 101});
  const Caption ref = ids({100, 101, 102});
  const BleuScore s = bleu(cand, {ref}, 2);
  CHECK(s.value == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(s.brevity_penalty == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  REQUIRE(s.precisions.size() == 2);
  CHECK(s.precisions[0] == 1.0);
  CHECK(s.precisions[1] == 1.0);
  CHECK(bleu(cand, {ref}, 1).value == doctest::Approx(0.6065306597126334).epsilon(1e-12));
}

TEST_CASE("bleu identities") {
  for (int n = 1; n <= 4; ++n) {
    CHECK(bleu(enc("a red circle and two blue squares"), {enc("a red circle and two blue squares")}, n).value ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  // nothing in common at unigram level
  CHECK(bleu(enc("a red circle"), {enc("two blue squares")}, 1).value == 0.0);
  // markers are ignored
  Caption with_markers = ids({Vocabulary::kBos, 10, 11, Vocabulary::kEos, Vocabulary::kPad});
  CHECK(bleu(with_markers, {ids({10, 11})}, 2).value == doctest::Approx(1.0));
  // empty candidate is defined and flagged
  const BleuScore empty = bleu(ids({Vocabulary::kEos}), {enc("a red circle")}, 2);
  CHECK(empty.degenerate);
  CHECK(empty.value == 0.0);
  // closest reference length wins, ties go to the shorter one
  CHECK(bleu(ids({5, 6, 7}), {ids({5, 6, 7, 8}), ids({5, 6, 7, 8, 9, 10})}, 1).brevity_penalty ==
        doctest::Approx(std::exp(1.0 - 4.0 / 3.0)));
  CHECK(bleu(ids({5, 6, 7}), {ids({5, 6}), ids({5, 6, 7, 8})}, 1).brevity_penalty == 1.0);
}

TEST_CASE("bleu errors") {
  CHECK_THROWS_AS(bleu(enc("a red circle"), {enc("a red circle")}, 0), Error);
  CHECK_THROWS_AS(bleu(enc("a red circle"), {enc("a red circle")}, 5), Error);
  CHECK_THROWS_AS(bleu(enc("a red circle"), {}, 2), Error);
  CHECK_THROWS_AS(bleu(enc("a red circle"), {ids({Vocabulary::kEos})}, 2), Error);
}

TEST_CASE("bleu agrees with a naive implementation on 1000 random pairs") {
  Rng rng = make_stream(2024);
  std::uniform_int_distribution<int> nrefs(1, 3), order(1, 4);
  for (int i = 0; i < 1000; ++i) {
    // small alphabet so higher-order matches actually happen
    const auto cand = random_ids(rng, 5, 1, 10);
    std::vector<std::vector<int>> refs;
    std::vector<Caption> ref_caps;
    for (int r = nrefs(rng); r > 0; --r) {
      refs.push_back(random_ids(rng, 5, 1, 12));
      ref_caps.push_back(ids(refs.back()));
    }
    const int n = order(rng);
    const double got = bleu(ids(cand), ref_caps, n).value;
    CHECK(got == doctest::Approx(naive_bleu(cand, refs, n)).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("bleu is invariant to relabeling the vocabulary") {
  Rng rng = make_stream(31);
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin() + 3, perm.end(), rng);  // keep markers fixed
  auto relabel = [&](std::vector<int> v) {
    for (int& t : v) t = perm[static_cast<std::size_t>(t)];
    return v;
  };
  for (int i = 0; i < 200; ++i) {
    const auto cand = random_ids(rng, 6, 1, 8);
    const auto ref = random_ids(rng, 6, 1, 8);
    for (int n = 1; n <= 4; ++n) {
      CHECK(bleu(ids(cand), {ids(ref)}, n).value == bleu(ids(relabel(cand)), {ids(relabel(ref))}, n).value);
    }
  }
}

TEST_CASE("bleu does not decrease when a reference is added") {
  Rng rng = make_stream(32);
  for (int i = 0; i < 200; ++i) {
    const auto cand = random_ids(rng, 5, 2, 8);
    const auto r1 = random_ids(rng, 5, 2, cand.size() > 2 ? static_cast<int>(cand.size()) : 2);
    // same length as r1 so the brevity penalty cannot move
    const auto r2 = random_ids(rng, 5, static_cast<int>(r1.size()), static_cast<int>(r1.size()));
    for (int n = 1; n <= 4; ++n) {
      CHECK(bleu(ids(cand), {ids(r1), ids(r2)}, n).value >= bleu(ids(cand), {ids(r1)}, n).value - 1e-15);
    }
  }
}

TEST_CASE("scale factor") {
  const Caption c = enc("a red circle");
  CHECK(scale_factor(c, {c}, 1) == doctest::Approx(0.0));
  CHECK(scale_factor(c, {c}, 3) == doctest::Approx(0.0));
  CHECK(scale_factor(c, {enc("two blue squares")}, 1) == doctest::Approx(1.0));
  const double s = scale_factor(ids({100, 101}), {ids({100, 101, 102})}, 2);
  CHECK(s == doctest::Approx((1.0 - std::exp(-0.5)) / 2.0));
  Rng rng = make_stream(33);
  for (int i = 0; i < 200; ++i) {
    const int n = 1 + i % 4;
    const double f = scale_factor(ids(random_ids(rng, 5, 1, 8)), {ids(random_ids(rng, 5, 1, 8))}, n);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0 / n + 1e-15);
  }
}
