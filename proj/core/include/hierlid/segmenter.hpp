#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hierlid/metrics.hpp"
#include "hierlid/types.hpp"

namespace hierlid::segmenter {

enum class PhotonClass { Ground, Canopy, TopOfCanopy, Noise };

PhotonClass photon_class_from_string(const std::string& s);
std::string photon_class_to_string(PhotonClass c);

struct ClassifiedPhoton {
  std::string track_id;
  double along_m = 0.0;   // along-track distance
  double height_m = 0.0;  // height above ground
  PhotonClass cls = PhotonClass::Ground;
  bool high_confidence = false;
};

/// photons.csv: track_id,along_m,height_m,cls,high_confidence
std::vector<ClassifiedPhoton> load_photons(const std::filesystem::path& path);

struct BuildOptions {
  double segment_length_m = 90.0;
  double subcell_length_m = 15.0;
  double cover_threshold_m = 1.3;
};

struct BuildResult {
  data::SegmentTable segments;
  data::SubcellTable subcells;
};

/// Split each track into contiguous segment windows aligned to the track
/// start and compute metrics per segment and per subcell. Noise photons are
/// discarded before windowing; a photon landing exactly on a window boundary
/// belongs to the window on its left. Segment ids are "<track>_s<k>",
/// subcell ids "<segment>_c<j>". Tracks that are empty after the noise
/// discard raise Error(EmptyTrack).
BuildResult build_segments(std::vector<ClassifiedPhoton> photons,
                           const BuildOptions& opts = {});

struct FilterThresholds {
  double min_photons = 100.0;
  double min_conf = 0.6;
};

/// Keep segments with n_photons >= min_photons, high_conf_fraction >=
/// min_conf and forested. Both thresholds are inclusive. Idempotent.
data::SegmentTable quality_filter(const data::SegmentTable& segments,
                                  const FilterThresholds& thresholds = {});

}  // namespace hierlid::segmenter
