#include <doctest.h>

#include <vector>

#include "hierlid/error.hpp"
#include "hierlid/segmenter.hpp"

using namespace hierlid;
using segmenter::ClassifiedPhoton;
using segmenter::PhotonClass;

namespace {

ClassifiedPhoton photon(const std::string& track, double along, double height,
                        PhotonClass cls = PhotonClass::Canopy, bool conf = true) {
  ClassifiedPhoton p;
  p.track_id = track;
  p.along_m = along;
  p.height_m = height;
  p.cls = cls;
  p.high_confidence = conf;
  return p;
}

data::SegmentTable make_segment(double n_photons, double conf, bool forested) {
  data::SegmentTable t;
  t.ids = {"s1"};
  t.track_ids = {"tr1"};
  t.quality = {{n_photons, conf, forested}};
  t.predictors.names = {"mean"};
  t.predictors.values = Eigen::MatrixXd::Constant(1, 1, 5.0);
  return t;
}

}  // namespace

TEST_CASE("600 photons uniform over 180 m give 2 segments and 12 subcells") {
  std::vector<ClassifiedPhoton> photons;
  for (int i = 0; i < 600; ++i)
    photons.push_back(photon("tr1", 180.0 * i / 599.0, 10.0));
  const auto built = segmenter::build_segments(photons);
  CHECK(built.segments.size() == 2);
  CHECK(built.subcells.size() == 12);
  CHECK(built.segments.track_ids[0] == "tr1");
}

TEST_CASE("all-noise tracks raise EmptyTrack after the discard") {
  std::vector<ClassifiedPhoton> photons = {
      photon("tr1", 0.0, 1.0, PhotonClass::Noise),
      photon("tr1", 50.0, 2.0, PhotonClass::Noise),
  };
  try {
    segmenter::build_segments(photons);
    FAIL("expected EmptyTrack");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyTrack);
  }
}

TEST_CASE("photons spanning exactly 90 m form one segment") {
  std::vector<ClassifiedPhoton> photons;
  for (int i = 0; i <= 90; ++i) photons.push_back(photon("tr1", i, 8.0));
  const auto built = segmenter::build_segments(photons);
  CHECK(built.segments.size() == 1);
  CHECK(built.segments.quality[0].n_photons == doctest::Approx(91.0));
}

TEST_CASE("segment photon counts conserve the non-noise total per track") {
  std::vector<ClassifiedPhoton> photons;
  int non_noise = 0;
  for (int i = 0; i < 777; ++i) {
    const double along = 0.37 * i;
    const bool noise = i % 7 == 0;
    photons.push_back(photon("tr1", along, 5.0,
                             noise ? PhotonClass::Noise : PhotonClass::Canopy));
    if (!noise) ++non_noise;
  }
  const auto built = segmenter::build_segments(photons);
  double total = 0.0;
  for (const auto& q : built.segments.quality) total += q.n_photons;
  CHECK(total == doctest::Approx(static_cast<double>(non_noise)));
}

TEST_CASE("quality filter fixtures") {
  const segmenter::FilterThresholds thresholds;

  SUBCASE("99 photons at high confidence is rejected") {
    CHECK(segmenter::quality_filter(make_segment(99, 0.9, true), thresholds).size() == 0);
  }
  SUBCASE("boundary values 100 and 0.60 are retained") {
    CHECK(segmenter::quality_filter(make_segment(100, 0.60, true), thresholds).size() == 1);
  }
  SUBCASE("confidence 0.59 is rejected at any count") {
    CHECK(segmenter::quality_filter(make_segment(500, 0.59, true), thresholds).size() == 0);
  }
  SUBCASE("non-forested segments are rejected") {
    CHECK(segmenter::quality_filter(make_segment(500, 0.9, false), thresholds).size() == 0);
  }
}

TEST_CASE("filtering is idempotent") {
  std::vector<ClassifiedPhoton> photons;
  for (int i = 0; i < 2000; ++i)
    photons.push_back(photon("tr1", 0.2 * i, 6.0, PhotonClass::Canopy, i % 3 != 0));
  const auto built = segmenter::build_segments(photons);
  const auto once = segmenter::quality_filter(built.segments);
  const auto twice = segmenter::quality_filter(once);
  REQUIRE(once.size() == twice.size());
  CHECK(once.ids == twice.ids);
  CHECK(once.predictors.values == twice.predictors.values);
}

TEST_CASE("noise photons are excluded from metrics") {
  std::vector<ClassifiedPhoton> photons;
  for (int i = 0; i < 200; ++i) photons.push_back(photon("tr1", 0.4 * i, 10.0));
  for (int i = 0; i < 50; ++i)
    photons.push_back(photon("tr1", 1.6 * i, 500.0, PhotonClass::Noise));
  const auto built = segmenter::build_segments(photons);
  const auto col = built.segments.predictors.column("max");
  CHECK(built.segments.predictors.values(0, col) == doctest::Approx(10.0));
}

TEST_CASE("segment and subcell lengths must stay in the 1:6 ratio") {
  segmenter::BuildOptions opts;
  opts.segment_length_m = 120.0;
  opts.subcell_length_m = 15.0;
  CHECK_THROWS_AS(segmenter::build_segments({photon("tr1", 0.0, 5.0)}, opts), Error);
}
