#include "hierlid/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "hierlid/csv.hpp"
#include "hierlid/error.hpp"

namespace hierlid::segmenter {

PhotonClass photon_class_from_string(const std::string& s) {
  if (s == "ground") return PhotonClass::Ground;
  if (s == "canopy") return PhotonClass::Canopy;
  if (s == "top_of_canopy") return PhotonClass::TopOfCanopy;
  if (s == "noise") return PhotonClass::Noise;
  throw Error(ErrorKind::TypeError, "unknown photon class '" + s + "'");
}

std::string photon_class_to_string(PhotonClass c) {
  switch (c) {
    case PhotonClass::Ground: return "ground";
    case PhotonClass::Canopy: return "canopy";
    case PhotonClass::TopOfCanopy: return "top_of_canopy";
    case PhotonClass::Noise: return "noise";
  }
  return "ground";
}

std::vector<ClassifiedPhoton> load_photons(const std::filesystem::path& path) {
  const csv::Table t = csv::read_table(path);
  const std::size_t c_track = t.column("track_id");
  const std::size_t c_along = t.column("along_m");
  const std::size_t c_height = t.column("height_m");
  const std::size_t c_cls = t.column("cls");
  const std::size_t c_conf = t.column("high_confidence");

  std::vector<ClassifiedPhoton> photons;
  photons.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    ClassifiedPhoton p;
    p.track_id = t.rows[i][c_track];
    p.along_m = csv::parse_double(t, i, c_along);
    p.height_m = csv::parse_double(t, i, c_height);
    if (!std::isfinite(p.along_m) || !std::isfinite(p.height_m))
      throw Error(ErrorKind::InvariantViolation, i, "non-finite photon coordinate");
    try {
      p.cls = photon_class_from_string(t.rows[i][c_cls]);
    } catch (const Error&) {
      throw Error(ErrorKind::TypeError, i,
                  "column 'cls': '" + t.rows[i][c_cls] + "' is not a photon class");
    }
    p.high_confidence = csv::parse_bool(t, i, c_conf);
    photons.push_back(std::move(p));
  }
  return photons;
}

namespace {

// Window index with the right edge owned by the window on its left.
std::size_t window_index(double offset, double length) {
  double idx = std::floor(offset / length);
  if (idx > 0.0 && offset == idx * length) idx -= 1.0;
  return static_cast<std::size_t>(idx);
}

MetricSet metrics_of(const std::vector<const ClassifiedPhoton*>& photons,
                     double cover_threshold) {
  if (photons.empty()) return MetricSet{};
  std::vector<double> heights;
  std::vector<bool> canopy;
  heights.reserve(photons.size());
  canopy.reserve(photons.size());
  for (const auto* p : photons) {
    heights.push_back(p->height_m);
    canopy.push_back(p->cls == PhotonClass::Canopy ||
                     p->cls == PhotonClass::TopOfCanopy);
  }
  return compute_height_metrics(heights, canopy, cover_threshold);
}

double high_conf_fraction(const std::vector<const ClassifiedPhoton*>& photons) {
  if (photons.empty()) return 0.0;
  std::size_t high = 0;
  for (const auto* p : photons)
    if (p->high_confidence) ++high;
  return static_cast<double>(high) / static_cast<double>(photons.size());
}

}  // namespace

BuildResult build_segments(std::vector<ClassifiedPhoton> photons,
                           const BuildOptions& opts) {
  if (!(opts.segment_length_m > 0.0) || !(opts.subcell_length_m > 0.0))
    throw Error(ErrorKind::ConfigError, "window lengths must be positive");
  const double ratio = opts.segment_length_m / opts.subcell_length_m;
  if (std::abs(ratio - 6.0) > 1e-9)
    throw Error(ErrorKind::ConfigError,
                "segment length must equal six subcell lengths");
  if (photons.empty()) throw Error(ErrorKind::EmptyInput, "no photons");

  // Tracks in order of first appearance; photons sorted along track.
  std::vector<std::string> track_order;
  std::unordered_map<std::string, std::vector<const ClassifiedPhoton*>> by_track;
  for (const auto& p : photons) {
    auto [it, inserted] = by_track.try_emplace(p.track_id);
    if (inserted) track_order.push_back(p.track_id);
    if (p.cls != PhotonClass::Noise) it->second.push_back(&p);
  }

  BuildResult result;
  auto& seg = result.segments;
  auto& sub = result.subcells;
  const auto names = metric_names();
  seg.predictors.names = names;
  sub.predictors.names = names;
  std::vector<std::vector<double>> seg_rows;
  std::vector<std::vector<double>> sub_rows;

  for (const auto& track_id : track_order) {
    auto& track = by_track.at(track_id);
    if (track.empty())
      throw Error(ErrorKind::EmptyTrack,
                  "track '" + track_id + "' has no photons after noise discard");
    std::stable_sort(track.begin(), track.end(),
                     [](const ClassifiedPhoton* a, const ClassifiedPhoton* b) {
                       return a->along_m < b->along_m;
                     });
    const double start = track.front()->along_m;
    const double span = track.back()->along_m - start;
    const std::size_t n_segments =
        span == 0.0 ? 1 : window_index(span, opts.segment_length_m) + 1;

    std::vector<std::vector<const ClassifiedPhoton*>> seg_photons(n_segments);
    std::vector<std::vector<std::vector<const ClassifiedPhoton*>>> cell_photons(
        n_segments, std::vector<std::vector<const ClassifiedPhoton*>>(6));
    for (const auto* p : track) {
      const double offset = p->along_m - start;
      const std::size_t si = window_index(offset, opts.segment_length_m);
      seg_photons[si].push_back(p);
      const double local = offset - static_cast<double>(si) * opts.segment_length_m;
      std::size_t ci = local == 0.0 ? 0 : window_index(local, opts.subcell_length_m);
      if (ci > 5) ci = 5;
      cell_photons[si][ci].push_back(p);
    }

    for (std::size_t si = 0; si < n_segments; ++si) {
      const std::string seg_id = track_id + "_s" + std::to_string(si);
      seg.ids.push_back(seg_id);
      seg.track_ids.push_back(track_id);
      data::SegmentQuality q;
      q.n_photons = static_cast<double>(seg_photons[si].size());
      q.high_conf_fraction = high_conf_fraction(seg_photons[si]);
      q.forested = true;  // no forest mask at this stage
      seg.quality.push_back(q);
      seg_rows.push_back(metric_values(metrics_of(seg_photons[si], opts.cover_threshold_m)));

      for (std::size_t ci = 0; ci < 6; ++ci) {
        sub.ids.push_back(seg_id + "_c" + std::to_string(ci));
        sub.segment_ids.push_back(seg_id);
        sub_rows.push_back(
            metric_values(metrics_of(cell_photons[si][ci], opts.cover_threshold_m)));
      }
    }
  }

  seg.predictors.values.resize(static_cast<Eigen::Index>(seg_rows.size()),
                               static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < seg_rows.size(); ++i)
    for (std::size_t j = 0; j < names.size(); ++j)
      seg.predictors.values(static_cast<Eigen::Index>(i),
                            static_cast<Eigen::Index>(j)) = seg_rows[i][j];
  sub.predictors.values.resize(static_cast<Eigen::Index>(sub_rows.size()),
                               static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < sub_rows.size(); ++i)
    for (std::size_t j = 0; j < names.size(); ++j)
      sub.predictors.values(static_cast<Eigen::Index>(i),
                            static_cast<Eigen::Index>(j)) = sub_rows[i][j];

  data::validate_segments(seg);
  data::validate_subcells(sub);
  return result;
}

data::SegmentTable quality_filter(const data::SegmentTable& segments,
                                  const FilterThresholds& thresholds) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& q = segments.quality[i];
    if (q.n_photons >= thresholds.min_photons &&
        q.high_conf_fraction >= thresholds.min_conf && q.forested)
      keep.push_back(i);
  }
  return segments.take(keep);
}

}  // namespace hierlid::segmenter
