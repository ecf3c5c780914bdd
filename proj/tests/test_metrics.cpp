#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mmvr/corpus.hpp"
#include "mmvr/metrics.hpp"

using namespace mmvr;

namespace {

Detection det(double x, double y, double w, double h, double conf) {
  Detection d;
  d.x = x;
  d.y = y;
  d.w = w;
  d.h = h;
  d.confidence = conf;
  return d;
}

Detection random_detection(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w = 0.01 + 0.99 * u(rng), h = 0.01 + 0.99 * u(rng);
  return det((1.0 - w) * u(rng), (1.0 - h) * u(rng), w, h, u(rng));
}

Tensor one_hot(std::size_t k, std::size_t hot) {
  Tensor t = Tensor::zeros({k});
  t.data[hot] = 1.0;
  return t;
}

}  // namespace

TEST_CASE("detection score closed forms") {
  const std::vector<Detection> full{det(0, 0, 1, 1, 1.0)};
  CHECK(detection_score(full) == 1.0);
  const std::vector<Detection> quarters{det(0, 0, 0.5, 0.5, 0.5), det(0.5, 0.5, 0.5, 0.5, 0.5)};
  CHECK(detection_score(quarters) == 0.25);
  const std::vector<Detection> faint{det(0.2, 0.2, 0.5, 0.5, 0.05)};
  CHECK(detection_score(faint) == 0.0);
  CHECK(detection_score(std::vector<Detection>{}) == 0.0);
  // the threshold is strict
  CHECK(detection_score(std::vector<Detection>{det(0, 0, 1, 1, kDetectionThreshold)}) == 0.0);
  // display threshold is a separate knob
  CHECK(detection_score(quarters, kDisplayThreshold) == 0.0);
  CHECK(detection_score(full, kDisplayThreshold) == 1.0);
}

TEST_CASE("detection validation") {
  CHECK_THROWS_AS(validate_detection(det(0, 0, 0, 0.5, 0.5)), Error);
  CHECK_THROWS_AS(validate_detection(det(0.8, 0, 0.5, 0.5, 0.5)), Error);
  CHECK_THROWS_AS(validate_detection(det(-0.1, 0, 0.5, 0.5, 0.5)), Error);
  CHECK_THROWS_AS(validate_detection(det(0, 0, 0.5, 0.5, 1.5)), Error);
  CHECK_NOTHROW(validate_detection(det(0, 0, 1, 1, 0)));
}

TEST_CASE("detection score properties over 1000 random lists") {
  Rng rng = make_stream(404);
  std::uniform_int_distribution<int> count(0, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<Detection> list(static_cast<std::size_t>(count(rng)));
    for (auto& d : list) d = random_detection(rng);
    const double base = detection_score(list);
    CHECK(base >= 0.0);

    // hand-expanded sum for short lists
    if (list.size() <= 3) {
      double expected = 0.0;
      for (const auto& d : list) expected += d.confidence > 0.1 ? d.w * d.h * d.confidence : 0.0;
      CHECK(base == doctest::Approx(expected).epsilon(1e-15));
    }

    auto shuffled = list;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(detection_score(shuffled) == doctest::Approx(base).epsilon(1e-14));

    Detection extra = random_detection(rng);
    extra.confidence = 0.11 + 0.89 * u(rng);
    auto grown = list;
    grown.push_back(extra);
    CHECK(detection_score(grown) > base);

    const double t1 = u(rng), t2 = t1 + (1.0 - t1) * u(rng);
    CHECK(detection_score(list, t2) <= detection_score(list, t1));
  }
}

TEST_CASE("inception score analytics") {
  SUBCASE("identical distributions score exactly 1") {
    std::vector<Tensor> probs(20, Tensor({4}, {0.1, 0.2, 0.3, 0.4}));
    const auto s = inception_score_from_probs(probs, 10);
    CHECK(s.mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.std == doctest::Approx(0.0));
    CHECK(inception_score_from_probs(probs, 1).mean == doctest::Approx(s.mean).epsilon(1e-12));
  }
  SUBCASE("confident uniform coverage of K classes scores K") {
    for (std::size_t k : {2, 5, 12}) {
      std::vector<Tensor> probs;
      for (std::size_t i = 0; i < k * 10; ++i) probs.push_back(one_hot(k, i % k));
      const auto s = inception_score_from_probs(probs, 10);
      CHECK(std::abs(s.mean - static_cast<double>(k)) <= 1e-9);
      CHECK(std::abs(s.std) <= 1e-9);
    }
  }
  SUBCASE("bounded below by one and by the class count above") {
    Rng rng = make_stream(405);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<Tensor> probs;
    for (int i = 0; i < 50; ++i) {
      Tensor p = Tensor::zeros({6});
      double z = 0;
      for (double& v : p.data) z += v = u(rng);
      for (double& v : p.data) v /= z;
      probs.push_back(p);
    }
    const auto s = inception_score_from_probs(probs, 5);
    CHECK(s.mean >= 1.0);
    CHECK(s.mean <= 6.0);
  }
  SUBCASE("too few images are rejected") {
    std::vector<Tensor> probs(3, one_hot(3, 0));
    CHECK_THROWS_AS(inception_score_from_probs(probs, 10), Error);
    CHECK_THROWS_AS(inception_score_from_probs(probs, 0), Error);
  }
  SUBCASE("copies of one image through a classifier score 1") {
    const ClassifierModel clf(ClassifierModel::Hyper{}, 406);
    const Tensor img = render(SceneSpec{{{ShapeClass::kSquare, Color::kGreen, 6, SizeClass::kLarge}}});
    const std::vector<Tensor> images(10, img);
    const auto s = inception_score(images, clf, 10);
    CHECK(s.mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(inception_score(images, clf, 10).mean == s.mean);
  }
}
