#include "pacq/eval/pathways.hpp"

#include <fstream>
#include <map>
#include <string>

#include <algorithm>

#include "json.hpp"
#include "pacq/common/errors.hpp"
#include "pacq/eval/metrics.hpp"
#include "pacq/synth/generator.hpp"

namespace pacq::eval {

namespace {

std::string set_label(std::uint32_t key, int n_views) {
  if (key == 0) return "start";
  std::string out;
  for (int v = 0; v < n_views; ++v) {
    if (!(key >> v & 1u)) continue;
    if (!out.empty()) out += "+";
    out += synth::view_name(v);
  }
  return out;
}

}  // namespace

PathwayTree build_pathway_tree(const std::vector<env::EpisodeTrace>& traces, int n_views) {
  if (traces.empty()) throw ShapeError("pathways: no traces");
  if (n_views < 1 || n_views > 32) throw ConfigError("pathways: n_views must lie in [1,32]");

  PathwayTree tree;
  tree.n_views = n_views;
  tree.n_studies = static_cast<long>(traces.size());

  std::map<std::uint32_t, std::vector<int>> pa, ya, pe, ye;
  for (const auto& t : traces) {
    std::uint32_t key = 0;
    tree.nodes[key].reaching++;
    for (int v : t.acquired_order) {
      if (v < 0 || v >= n_views) throw ConfigError("pathways: view index out of range");
      tree.edges[{key, v}]++;
      key |= 1u << v;
      tree.nodes[key].reaching++;
    }
    tree.nodes[key].terminating++;
    pa[key].push_back(t.pred_as);
    ya[key].push_back(t.y_as);
    pe[key].push_back(t.pred_ef);
    ye[key].push_back(t.y_ef_cat);
  }
  auto classes_over = [](const std::vector<int>& a, const std::vector<int>& b) {
    int hi = 0;
    for (int x : a) hi = std::max(hi, x);
    for (int x : b) hi = std::max(hi, x);
    return hi + 1;
  };
  for (auto& [key, node] : tree.nodes) {
    if (node.terminating == 0) continue;
    node.bacc_as = 100.0 * balanced_accuracy(pa[key], ya[key], classes_over(pa[key], ya[key]));
    node.bacc_ef = 100.0 * balanced_accuracy(pe[key], ye[key], classes_over(pe[key], ye[key]));
  }
  return tree;
}

void check_flow(const PathwayTree& tree) {
  long terminating = 0;
  for (const auto& [key, node] : tree.nodes) {
    long out = 0;
    for (const auto& [edge, count] : tree.edges) {
      if (edge.first != key) continue;
      if (count > node.reaching)
        throw DataError(DataError::Kind::Other, "pathways: edge count exceeds parent reach at " +
                                                    set_label(key, tree.n_views));
      out += count;
    }
    if (node.reaching != node.terminating + out)
      throw DataError(DataError::Kind::Other,
                      "pathways: flow violated at " + set_label(key, tree.n_views));
    terminating += node.terminating;
  }
  auto root = tree.nodes.find(0);
  if (root == tree.nodes.end() || root->second.reaching != tree.n_studies)
    throw DataError(DataError::Kind::Other, "pathways: root must reach every study");
  if (terminating != tree.n_studies)
    throw DataError(DataError::Kind::Other,
                    "pathways: terminal counts do not partition the studies");
}

void save_pathways_dot(const PathwayTree& tree, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError(DataError::Kind::Other, "pathways: cannot write " + path);
  f << "digraph pathways {\n  rankdir=LR;\n  node [shape=box];\n";
  for (const auto& [key, node] : tree.nodes) {
    f << "  n" << key << " [label=\"" << set_label(key, tree.n_views) << "\\nreach "
      << node.reaching << ", stop " << node.terminating;
    if (node.terminating > 0) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "\\nbACC %.1f/%.1f", node.bacc_as, node.bacc_ef);
      f << buf;
    }
    f << "\"];\n";
  }
  for (const auto& [edge, count] : tree.edges) {
    std::uint32_t child = edge.first | (1u << edge.second);
    f << "  n" << edge.first << " -> n" << child << " [label=\""
      << synth::view_name(edge.second) << " x" << count << "\"];\n";
  }
  f << "}\n";
}

void save_pathways_json(const PathwayTree& tree, const std::string& path) {
  nlohmann::json j;
  j["n_views"] = tree.n_views;
  j["n_studies"] = tree.n_studies;
  auto nodes = nlohmann::json::array();
  for (const auto& [key, node] : tree.nodes) {
    nlohmann::json n;
    n["set"] = key;
    n["label"] = set_label(key, tree.n_views);
    n["reaching"] = node.reaching;
    n["terminating"] = node.terminating;
    n["bacc_as"] = node.bacc_as;
    n["bacc_ef"] = node.bacc_ef;
    nodes.push_back(n);
  }
  j["nodes"] = nodes;
  auto edges = nlohmann::json::array();
  for (const auto& [edge, count] : tree.edges) {
    nlohmann::json e;
    e["parent"] = edge.first;
    e["view"] = edge.second;
    e["count"] = count;
    edges.push_back(e);
  }
  j["edges"] = edges;
  std::ofstream f(path);
  if (!f) throw DataError(DataError::Kind::Other, "pathways: cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace pacq::eval
