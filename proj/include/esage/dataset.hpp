#pragma once

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "esage/graph.hpp"
#include "esage/rng.hpp"

namespace esage {

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string loc(const std::filesystem::path& file, std::size_t line) {
  return file.filename().string() + ":" + std::to_string(line);
}

inline double parse_double(std::string_view s, const std::filesystem::path& file,
                           std::size_t line) {
  char* end = nullptr;
  const std::string tmp(s);
  const double v = std::strtod(tmp.c_str(), &end);
  if (end == tmp.c_str() || *end != '\0')
    throw Error("load error: " + loc(file, line) + ": bad number '" + tmp + "'");
  return v;
}

inline long parse_long(std::string_view s, const std::filesystem::path& file,
                       std::size_t line) {
  char* end = nullptr;
  const std::string tmp(s);
  const long v = std::strtol(tmp.c_str(), &end, 10);
  if (end == tmp.c_str() || *end != '\0')
    throw Error("load error: " + loc(file, line) + ": bad integer '" + tmp + "'");
  return v;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("load error: cannot open " + file.string());
  std::vector<std::string> lines;
  std::string s;
  while (std::getline(in, s)) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    lines.push_back(s);
  }
  return lines;
}

}  // namespace detail

// --- Canonical TSV dataset directory ---------------------------------------
//
// nodes.tsv   node_id<TAB>label<TAB>f1,f2,...,fk     ids dense ascending
// edges.tsv   u<TAB>v                                 u < v, no duplicates
// splits.tsv  node_id<TAB>{train|val|test}            absent nodes unsplit

inline std::pair<Graph, Splits> load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path nodes_file = dir / "nodes.tsv";
  const fs::path edges_file = dir / "edges.tsv";
  const fs::path splits_file = dir / "splits.tsv";

  const auto node_lines = detail::read_lines(nodes_file);
  std::size_t n = 0;
  for (const auto& l : node_lines)
    if (!l.empty()) ++n;
  if (n == 0) throw Error("load error: " + nodes_file.string() + ": no nodes");

  Matrix feats;
  std::vector<int> labels;
  labels.reserve(n);
  int max_label = -1;
  std::size_t node_idx = 0;
  for (std::size_t ln = 0; ln < node_lines.size(); ++ln) {
    if (node_lines[ln].empty()) continue;
    const auto fields = detail::split(node_lines[ln], '\t');
    if (fields.size() != 3)
      throw Error("load error: " + detail::loc(nodes_file, ln + 1) +
                  ": expected node_id<TAB>label<TAB>features");
    const long id = detail::parse_long(fields[0], nodes_file, ln + 1);
    if (id != static_cast<long>(node_idx))
      throw Error("load error: " + detail::loc(nodes_file, ln + 1) +
                  ": node ids must be dense ascending, saw " + std::to_string(id));
    const long label = detail::parse_long(fields[1], nodes_file, ln + 1);
    if (label < 0)
      throw Error("load error: " + detail::loc(nodes_file, ln + 1) + ": negative label");
    const auto vals = detail::split(fields[2], ',');
    if (node_idx == 0) {
      feats = Matrix(n, vals.size());
    } else if (vals.size() != feats.cols) {
      throw Error("load error: " + detail::loc(nodes_file, ln + 1) +
                  ": inconsistent feature dimension (" + std::to_string(vals.size()) +
                  " vs " + std::to_string(feats.cols) + ")");
    }
    for (std::size_t j = 0; j < vals.size(); ++j)
      feats(node_idx, j) = detail::parse_double(vals[j], nodes_file, ln + 1);
    labels.push_back(static_cast<int>(label));
    max_label = std::max(max_label, static_cast<int>(label));
    ++node_idx;
  }

  std::vector<std::pair<NodeId, NodeId>> edges;
  const auto edge_lines = detail::read_lines(edges_file);
  for (std::size_t ln = 0; ln < edge_lines.size(); ++ln) {
    if (edge_lines[ln].empty()) continue;
    const auto fields = detail::split(edge_lines[ln], '\t');
    if (fields.size() != 2)
      throw Error("load error: " + detail::loc(edges_file, ln + 1) + ": expected u<TAB>v");
    const long u = detail::parse_long(fields[0], edges_file, ln + 1);
    const long v = detail::parse_long(fields[1], edges_file, ln + 1);
    if (u < 0 || v < 0 || u >= static_cast<long>(n) || v >= static_cast<long>(n))
      throw Error("load error: " + detail::loc(edges_file, ln + 1) + ": node id out of range");
    if (u == v)
      throw Error("load error: " + detail::loc(edges_file, ln + 1) + ": self-loop (" +
                  std::to_string(u) + "," + std::to_string(v) + ")");
    if (u >= v)
      throw Error("load error: " + detail::loc(edges_file, ln + 1) + ": edges must have u < v");
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }

  Graph g;
  try {
    g = make_graph(std::move(feats), std::move(labels), max_label + 1, edges);
  } catch (const Error& e) {
    throw Error("load error: " + edges_file.string() + ": " + e.what());
  }

  Splits s;
  if (std::filesystem::exists(splits_file)) {
    const auto split_lines = detail::read_lines(splits_file);
    for (std::size_t ln = 0; ln < split_lines.size(); ++ln) {
      if (split_lines[ln].empty()) continue;
      const auto fields = detail::split(split_lines[ln], '\t');
      if (fields.size() != 2)
        throw Error("load error: " + detail::loc(splits_file, ln + 1) +
                    ": expected node_id<TAB>{train|val|test}");
      const long id = detail::parse_long(fields[0], splits_file, ln + 1);
      if (id < 0 || id >= static_cast<long>(n))
        throw Error("load error: " + detail::loc(splits_file, ln + 1) + ": node id out of range");
      if (fields[1] == "train")
        s.train.push_back(static_cast<NodeId>(id));
      else if (fields[1] == "val")
        s.val.push_back(static_cast<NodeId>(id));
      else if (fields[1] == "test")
        s.test.push_back(static_cast<NodeId>(id));
      else
        throw Error("load error: " + detail::loc(splits_file, ln + 1) + ": unknown split tag '" +
                    std::string(fields[1]) + "'");
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  try {
    validate_splits(s, n);
  } catch (const Error& e) {
    throw Error("load error: " + splits_file.string() + ": " + e.what());
  }
  return {std::move(g), std::move(s)};
}

inline void save_dataset(const std::filesystem::path& dir, const Graph& g,
                         const Splits& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "nodes.tsv");
    if (!out) throw Error("save error: cannot write " + (dir / "nodes.tsv").string());
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      out << i << '\t' << g.labels[i] << '\t';
      for (std::size_t j = 0; j < g.feat_dim(); ++j) {
        if (j) out << ',';
        out << detail::fmt17(g.features(i, j));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "edges.tsv");
    for (EdgeId e = 0; e < g.num_edges(); ++e) {
      auto [u, v] = g.edge_endpoints(e);
      out << u << '\t' << v << '\n';
    }
  }
  {
    std::ofstream out(dir / "splits.tsv");
    for (NodeId id : s.train) out << id << "\ttrain\n";
    for (NodeId id : s.val) out << id << "\tval\n";
    for (NodeId id : s.test) out << id << "\ttest\n";
  }
}

// --- Classic citation-network import ----------------------------------------
//
// content file: id<TAB>f1<TAB>...<TAB>fk<TAB>label   (whitespace-tolerant)
// cites file:   cited<TAB>citing
//
// String ids are remapped to dense indices in file order, label strings to
// class ids in lexicographic order. Feature rows are L1-normalized. The split
// follows the common semi-supervised protocol (seeded shuffle, 140 train /
// 500 val / rest test by default).

struct ImportResult {
  Graph graph;
  Splits splits;
  std::size_t skipped_unknown = 0;    // citations naming an unknown id
  std::size_t skipped_duplicate = 0;  // duplicate or self citations
};

struct ImportOptions {
  std::size_t train_count = 140;
  std::size_t val_count = 500;
  std::uint64_t seed = 0;
};

inline ImportResult import_content_cites(const std::filesystem::path& content_path,
                                         const std::filesystem::path& cites_path,
                                         const ImportOptions& opt = {}) {
  auto tokenize = [](const std::string& line) {
    std::vector<std::string> toks;
    std::istringstream ss(line);
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
  };

  const auto content_lines = detail::read_lines(content_path);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t ln = 0; ln < content_lines.size(); ++ln) {
    if (content_lines[ln].empty()) continue;
    auto toks = tokenize(content_lines[ln]);
    if (toks.size() < 3)
      throw Error("import error: " + detail::loc(content_path, ln + 1) +
                  ": expected id, features, label");
    if (!rows.empty() && toks.size() != rows.front().size())
      throw Error("import error: " + detail::loc(content_path, ln + 1) +
                  ": inconsistent field count");
    rows.push_back(std::move(toks));
  }
  if (rows.empty()) throw Error("import error: " + content_path.string() + ": no rows");

  const std::size_t n = rows.size();
  const std::size_t k = rows.front().size() - 2;
  std::unordered_map<std::string, NodeId> id_of;
  id_of.reserve(n);
  std::map<std::string, int> label_ids;  // lexicographic class order
  for (const auto& r : rows) label_ids[r.back()] = 0;
  int next = 0;
  for (auto& [name, id] : label_ids) id = next++;

  Matrix feats(n, k);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i];
    if (!id_of.emplace(r.front(), static_cast<NodeId>(i)).second)
      throw Error("import error: duplicate node id '" + r.front() + "' in " +
                  content_path.string());
    double l1 = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = detail::parse_double(r[j + 1], content_path, i + 1);
      feats(i, j) = v;
      l1 += std::abs(v);
    }
    if (l1 > 0.0)
      for (std::size_t j = 0; j < k; ++j) feats(i, j) /= l1;
    labels[i] = label_ids.at(r.back());
  }

  ImportResult out;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::unordered_set<std::uint64_t> seen;
  const auto cite_lines = detail::read_lines(cites_path);
  for (std::size_t ln = 0; ln < cite_lines.size(); ++ln) {
    if (cite_lines[ln].empty()) continue;
    auto toks = tokenize(cite_lines[ln]);
    if (toks.size() != 2)
      throw Error("import error: " + detail::loc(cites_path, ln + 1) +
                  ": expected cited<TAB>citing");
    const auto a = id_of.find(toks[0]);
    const auto b = id_of.find(toks[1]);
    if (a == id_of.end() || b == id_of.end()) {
      ++out.skipped_unknown;
      continue;
    }
    NodeId u = a->second, v = b->second;
    if (u == v) {
      ++out.skipped_duplicate;
      continue;
    }
    if (u > v) std::swap(u, v);
    const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | v;
    if (!seen.insert(key).second) {
      ++out.skipped_duplicate;
      continue;
    }
    edges.emplace_back(u, v);
  }

  out.graph = make_graph(std::move(feats), std::move(labels),
                         static_cast<int>(label_ids.size()), edges);

  // Seeded shuffle, then the common semi-supervised protocol: the train set
  // is stratified (an equal share per class, 20 per class for the classic
  // 140/7 setting), the next val_count nodes validate, the rest test.
  std::vector<NodeId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<NodeId>(i);
  Rng rng(opt.seed, /*stream=*/0x5e1ecULL);
  rng.shuffle(order);
  const std::size_t n_train = std::min(opt.train_count, n);
  const std::size_t per_class =
      std::max<std::size_t>(n_train / label_ids.size(), 1);
  std::vector<std::size_t> taken(label_ids.size(), 0);
  std::vector<char> in_train(n, 0);
  std::size_t picked = 0;
  for (NodeId id : order) {
    if (picked == n_train) break;
    auto& count = taken[out.graph.labels[id]];
    if (count < per_class) {
      ++count;
      in_train[id] = 1;
      ++picked;
    }
  }
  for (NodeId id : order) {  // top up if some class ran short
    if (picked == n_train) break;
    if (!in_train[id]) {
      in_train[id] = 1;
      ++picked;
    }
  }
  std::vector<NodeId> rest;
  rest.reserve(n - picked);
  for (NodeId id : order) {
    if (in_train[id])
      out.splits.train.push_back(id);
    else
      rest.push_back(id);
  }
  const std::size_t n_val = std::min(opt.val_count, rest.size());
  out.splits.val.assign(rest.begin(), rest.begin() + n_val);
  out.splits.test.assign(rest.begin() + n_val, rest.end());
  std::sort(out.splits.train.begin(), out.splits.train.end());
  std::sort(out.splits.val.begin(), out.splits.val.end());
  std::sort(out.splits.test.begin(), out.splits.test.end());
  return out;
}

// --- Planted-partition generator --------------------------------------------
//
// Node i gets class i % num_classes. Same-class pairs connect with p_in,
// cross-class pairs with p_out. Features are the class basis vector plus
// Gaussian noise. Split 60/20/20 by seeded shuffle. Pure function of its
// arguments.

inline std::pair<Graph, Splits> generate_planted_partition(
    std::size_t n, int num_classes, double p_in, double p_out, std::size_t feat_dim,
    double noise, std::uint64_t seed) {
  if (!(p_out >= 0.0 && p_out < p_in && p_in <= 1.0))
    throw Error("generate_planted_partition: need 0 <= p_out < p_in <= 1");
  if (num_classes <= 0 || n < static_cast<std::size_t>(num_classes))
    throw Error("generate_planted_partition: need n >= num_classes >= 1");
  if (feat_dim == 0) throw Error("generate_planted_partition: feat_dim must be positive");

  const std::size_t c = static_cast<std::size_t>(num_classes);
  std::vector<std::pair<NodeId, NodeId>> edges;
  Rng edge_rng(seed, /*stream=*/1);

  // Bernoulli(p) over a contiguous index range via geometric skips.
  auto scan = [&](std::size_t count, double p, auto&& emit) {
    if (p <= 0.0 || count == 0) return;
    if (p >= 1.0) {
      for (std::size_t t = 0; t < count; ++t) emit(t);
      return;
    }
    std::size_t t = edge_rng.skip_gap(p);
    while (t < count) {
      emit(t);
      t += 1 + edge_rng.skip_gap(p);
    }
  };

  // Same-class pairs, class by class; members of class q are {q, q+c, ...}.
  for (std::size_t q = 0; q < c; ++q) {
    std::vector<NodeId> members;
    for (std::size_t u = q; u < n; u += c) members.push_back(static_cast<NodeId>(u));
    for (std::size_t i = 0; i + 1 < members.size(); ++i) {
      scan(members.size() - i - 1, p_in, [&](std::size_t t) {
        edges.emplace_back(members[i], members[i + 1 + t]);
      });
    }
  }
  // Cross-class pairs: scan all pairs u<v at p_out, dropping same-class hits.
  for (std::size_t u = 0; u + 1 < n; ++u) {
    scan(n - u - 1, p_out, [&](std::size_t t) {
      const std::size_t v = u + 1 + t;
      if (u % c != v % c)
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    });
  }
  std::sort(edges.begin(), edges.end());

  Matrix feats(n, feat_dim);
  Rng feat_rng(seed, /*stream=*/2);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t q = i % c;
    labels[i] = static_cast<int>(q);
    for (std::size_t j = 0; j < feat_dim; ++j)
      feats(i, j) = (j == q % feat_dim ? 1.0 : 0.0) + noise * feat_rng.normal();
  }

  Graph g = make_graph(std::move(feats), std::move(labels), num_classes, edges);

  std::vector<NodeId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<NodeId>(i);
  Rng split_rng(seed, /*stream=*/3);
  split_rng.shuffle(order);
  const std::size_t n_train = (n * 6) / 10;
  const std::size_t n_val = (n * 2) / 10;
  Splits s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return {std::move(g), std::move(s)};
}

// --- Synthetic citation corpus ----------------------------------------------
//
// Emits content/cites files shaped like the classic citation datasets: string
// node ids, 0/1 bag-of-words rows, string labels, homophilous edges. Used as
// a desk-scale stand-in when the real corpora are not on disk; goes through
// import_content_cites like any other citation data.

struct CorpusParams {
  std::size_t nodes = 2708;
  int classes = 7;
  std::size_t vocab = 1433;
  std::size_t edges = 5278;
  double homophily = 0.72;      // probability an edge stays within class
  std::size_t topic_words = 48; // vocabulary slots favored by each class
  double p_topic = 0.048;       // word probability on a class topic slot
  double p_background = 0.011;  // word probability elsewhere
  std::uint64_t seed = 7;
};

inline void make_citation_corpus(const std::filesystem::path& content_path,
                                 const std::filesystem::path& cites_path,
                                 const CorpusParams& p = {}) {
  Rng rng(p.seed, /*stream=*/0xc0ffee);
  const std::size_t n = p.nodes;
  const std::size_t c = static_cast<std::size_t>(p.classes);

  std::vector<int> cls(n);
  for (std::size_t i = 0; i < n; ++i) cls[i] = static_cast<int>(rng.below(c));

  // Each class favors an overlapping block of vocabulary slots.
  std::vector<std::vector<std::uint32_t>> topics(c);
  std::vector<std::uint32_t> slots(p.vocab);
  for (std::size_t j = 0; j < p.vocab; ++j) slots[j] = static_cast<std::uint32_t>(j);
  for (std::size_t q = 0; q < c; ++q)
    topics[q] = rng.sample(slots, p.topic_words);

  // Paper ids: shuffled numeric strings, so importers must really remap.
  std::vector<std::uint32_t> paper_id(n);
  for (std::size_t i = 0; i < n; ++i) paper_id[i] = static_cast<std::uint32_t>(100000 + i);
  rng.shuffle(paper_id);

  std::ofstream content(content_path);
  if (!content) throw Error("corpus: cannot write " + content_path.string());
  std::vector<char> row(p.vocab);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(row.begin(), row.end(), 0);
    for (std::size_t j = 0; j < p.vocab; ++j)
      if (rng.bernoulli(p.p_background)) row[j] = 1;
    for (std::uint32_t w : topics[cls[i]])
      if (rng.bernoulli(p.p_topic)) row[w] = 1;
    bool any = false;
    for (char v : row) any = any || v;
    if (!any) row[topics[cls[i]][0]] = 1;  // every paper has at least one word
    content << paper_id[i];
    for (std::size_t j = 0; j < p.vocab; ++j) content << '\t' << int(row[j]);
    content << "\tC" << cls[i] << '\n';
  }

  // Homophilous edge sampling with rejection of duplicates and self-loops.
  std::vector<std::vector<NodeId>> by_class(c);
  for (std::size_t i = 0; i < n; ++i) by_class[cls[i]].push_back(static_cast<NodeId>(i));
  std::unordered_set<std::uint64_t> seen;
  std::ofstream cites(cites_path);
  if (!cites) throw Error("corpus: cannot write " + cites_path.string());
  std::size_t made = 0;
  while (made < p.edges) {
    const NodeId u = static_cast<NodeId>(rng.below(n));
    NodeId v;
    if (rng.bernoulli(p.homophily)) {
      const auto& pool = by_class[cls[u]];
      v = pool[rng.below(pool.size())];
    } else {
      v = static_cast<NodeId>(rng.below(n));
    }
    if (u == v) continue;
    const NodeId a = std::min(u, v), b = std::max(u, v);
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | b;
    if (!seen.insert(key).second) continue;
    cites << paper_id[a] << '\t' << paper_id[b] << '\n';
    ++made;
  }
}

}  // namespace esage
