#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pacq/env/episode.hpp"

namespace pacq::eval {

struct PathwayNode {
  long reaching = 0;
  long terminating = 0;
  double bacc_as = 0.0;  // percent over terminating studies, 0 when none
  double bacc_ef = 0.0;
};

// Nodes are keyed by the SET of acquired views (bitmask); edges keep the
// acquisition order via (parent set, added view).
struct PathwayTree {
  int n_views = 0;
  long n_studies = 0;
  std::map<std::uint32_t, PathwayNode> nodes;
  std::map<std::pair<std::uint32_t, int>, long> edges;
};

PathwayTree build_pathway_tree(const std::vector<env::EpisodeTrace>& traces, int n_views);

// Throws DataError unless reaching == terminating + sum(outgoing) at every
// node, terminal counts partition the studies, and every edge count fits
// under its parent's reaching count.
void check_flow(const PathwayTree& tree);

void save_pathways_dot(const PathwayTree& tree, const std::string& path);
void save_pathways_json(const PathwayTree& tree, const std::string& path);

}  // namespace pacq::eval
