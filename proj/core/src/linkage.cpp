#include <unordered_map>
#include <unordered_set>

#include "hierlid/error.hpp"
#include "hierlid/types.hpp"

namespace hierlid::data {

LinkReport link_report(const std::vector<TreeRecord>& trees,
                       const std::vector<FieldPlot>& plots) {
  LinkReport report;
  report.n_trees = trees.size();
  report.n_plots = plots.size();

  std::unordered_set<std::string> plot_ids;
  for (const auto& p : plots) plot_ids.insert(p.plot_id);

  std::unordered_set<std::string> occupied;
  for (const auto& t : trees) {
    if (plot_ids.count(t.plot_id) == 0)
      report.orphan_tree_ids.push_back(t.tree_id);
    else
      occupied.insert(t.plot_id);
  }
  // Empty plots are legal; real inventories contain treeless plots.
  for (const auto& p : plots)
    if (occupied.count(p.plot_id) == 0) report.empty_plot_ids.push_back(p.plot_id);
  return report;
}

LinkReport validate_linkage(const std::vector<TreeRecord>& trees,
                            const std::vector<FieldPlot>& plots) {
  LinkReport report = link_report(trees, plots);
  if (!report.orphan_tree_ids.empty()) {
    std::string msg = "tree '" + report.orphan_tree_ids.front() +
                      "' references a missing plot";
    if (report.orphan_tree_ids.size() > 1)
      msg += " (and " + std::to_string(report.orphan_tree_ids.size() - 1) +
             " more orphan trees)";
    throw Error(ErrorKind::OrphanTree, msg);
  }
  return report;
}

}  // namespace hierlid::data
