#include <doctest.h>

#include "hierlid/error.hpp"
#include "hierlid/types.hpp"

using namespace hierlid;

namespace {

data::TreeRecord tree(const std::string& id, const std::string& plot) {
  data::TreeRecord t;
  t.tree_id = id;
  t.plot_id = plot;
  t.dbh = 15.0;
  t.height = 12.0;
  return t;
}

data::FieldPlot plot(const std::string& id) {
  data::FieldPlot p;
  p.plot_id = id;
  p.area_ha = 0.02;
  return p;
}

}  // namespace

TEST_CASE("two trees on an existing plot link cleanly") {
  const auto report =
      data::validate_linkage({tree("t1", "P1"), tree("t2", "P1")}, {plot("P1")});
  CHECK(report.n_trees == 2);
  CHECK(report.orphan_tree_ids.empty());
  CHECK(report.empty_plot_ids.empty());
}

TEST_CASE("a tree referencing an absent plot is an orphan") {
  try {
    data::validate_linkage({tree("t1", "P9")}, {plot("P1")});
    FAIL("expected OrphanTree");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::OrphanTree);
    CHECK(std::string(e.what()).find("t1") != std::string::npos);
  }
  const auto report = data::link_report({tree("t1", "P9")}, {plot("P1")});
  REQUIRE(report.orphan_tree_ids.size() == 1);
  CHECK(report.orphan_tree_ids[0] == "t1");
}

TEST_CASE("plots without trees are legal and flagged empty") {
  const auto report = data::validate_linkage({tree("t1", "P1")}, {plot("P1"), plot("P2")});
  REQUIRE(report.empty_plot_ids.size() == 1);
  CHECK(report.empty_plot_ids[0] == "P2");
}
