#pragma once

// Parse trees, unlabeled syntactic trees (USTs) and the bracketed text form.

#include <cctype>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pcfgcm/grammar.hpp"

namespace pcfgcm {

inline constexpr int kLeafLabel = -1;
inline constexpr int kUnlabeled = -2;

struct TreeNode {
  // Non-terminal id for labeled internal nodes, kUnlabeled for UST internal
  // nodes, kLeafLabel for terminal leaves.
  int label = kLeafLabel;
  int symbol = -1;  // alphabet index, leaves only
  int parent = -1;
  std::vector<int> children;
  int begin = 0;  // covered span [begin, end), 0-based
  int end = 0;

  bool is_leaf() const noexcept { return label == kLeafLabel; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Node storage shared by labeled parse trees and USTs.
class TreeShape {
 public:
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  int root() const noexcept { return root_; }
  const TreeNode& node(int k) const { return nodes_.at(static_cast<std::size_t>(k)); }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  int leaf_count() const noexcept { return static_cast<int>(leaves_.size()); }
  // Node index of the leaf at 0-based sequence position `pos`.
  int leaf_node(int pos) const { return leaves_.at(static_cast<std::size_t>(pos)); }
  int depth(int k) const { return depth_.at(static_cast<std::size_t>(k)); }

  Sequence yield() const {
    Sequence out;
    out.reserve(leaves_.size());
    for (int k : leaves_) out.push_back(nodes_[static_cast<std::size_t>(k)].symbol);
    return out;
  }

  // Number of edges on the path between two nodes.
  int path_length(int a, int b) const {
    int da = depth(a), db = depth(b), len = 0;
    while (da > db) { a = node(a).parent; --da; ++len; }
    while (db > da) { b = node(b).parent; --db; ++len; }
    while (a != b) {
      a = node(a).parent;
      b = node(b).parent;
      len += 2;
    }
    return len;
  }

 protected:
  // Computes depths, spans and the left-to-right leaf order from the root.
  void index_from_root() {
    leaves_.clear();
    depth_.assign(nodes_.size(), 0);
    if (nodes_.empty()) return;
    if (root_ < 0 || static_cast<std::size_t>(root_) >= nodes_.size())
      throw TreeError("tree has no root");
    std::vector<std::pair<int, bool>> stack{{root_, false}};
    std::vector<char> seen(nodes_.size(), 0);
    while (!stack.empty()) {
      auto [k, done] = stack.back();
      stack.pop_back();
      TreeNode& n = nodes_[static_cast<std::size_t>(k)];
      if (done) {
        n.begin = nodes_[static_cast<std::size_t>(n.children.front())].begin;
        n.end = nodes_[static_cast<std::size_t>(n.children.back())].end;
        continue;
      }
      if (seen[static_cast<std::size_t>(k)]++) throw TreeError("tree node reachable twice");
      if (n.is_leaf()) {
        if (!n.children.empty()) throw TreeError("leaf with children");
        n.begin = static_cast<int>(leaves_.size());
        n.end = n.begin + 1;
        leaves_.push_back(k);
        continue;
      }
      if (n.children.empty()) throw TreeError("internal node without children");
      stack.emplace_back(k, true);
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
        nodes_[static_cast<std::size_t>(*it)].parent = k;
        depth_[static_cast<std::size_t>(*it)] = depth_[static_cast<std::size_t>(k)] + 1;
        stack.emplace_back(*it, false);
      }
    }
    nodes_[static_cast<std::size_t>(root_)].parent = -1;
  }

  std::vector<TreeNode> nodes_;
  int root_ = -1;
  std::vector<int> leaves_;
  std::vector<int> depth_;
};

class ParseTree : public TreeShape {
 public:
  ParseTree() = default;

  int add_leaf(int symbol) {
    TreeNode n;
    n.label = kLeafLabel;
    n.symbol = symbol;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
  }

  int add_node(int label, std::vector<int> children) {
    TreeNode n;
    n.label = label;
    n.children = std::move(children);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
  }

  // Marks `k` as root and indexes the tree; call once building is finished.
  void set_root(int k) {
    root_ = k;
    index_from_root();
  }

  friend bool operator==(const ParseTree& a, const ParseTree& b) {
    return a.root_ == b.root_ && a.nodes_ == b.nodes_;
  }
};

class Ust : public TreeShape {
 public:
  Ust() = default;
  explicit Ust(const TreeShape& tree) {
    nodes_ = tree.nodes();
    for (auto& n : nodes_)
      if (!n.is_leaf()) n.label = kUnlabeled;
    root_ = tree.root();
    index_from_root();
  }

  // Structural equality of node layouts; two trees built in a different node
  // order compare through their canonical bracketed form.
  friend bool operator==(const Ust& a, const Ust& b);
};

inline Ust ust_of(const ParseTree& tree) { return Ust(tree); }

/// Probability of a tree as the product of the probabilities of the rules
/// used at its internal nodes. Throws if a node matches no rule.
inline double tree_probability(const ParseTree& tree, const Grammar& g) {
  double p = 1.0;
  for (const TreeNode& n : tree.nodes()) {
    if (n.is_leaf()) continue;
    std::array<int, 3> rhs{-1, -1, -1};
    RuleKind kind;
    if (n.children.size() == 1) {
      const TreeNode& c = tree.node(n.children[0]);
      if (!c.is_leaf()) throw TreeError("unary node over a non-terminal");
      kind = RuleKind::lexical;
      rhs[0] = c.symbol;
    } else if (n.children.size() == 2 || n.children.size() == 3) {
      kind = n.children.size() == 2 ? RuleKind::branching : RuleKind::contact;
      for (std::size_t k = 0; k < n.children.size(); ++k) {
        const TreeNode& c = tree.node(n.children[k]);
        if (c.is_leaf()) throw TreeError("terminal below a non-lexical node");
        rhs[k] = c.label;
      }
    } else {
      throw TreeError("node arity matches no rule kind");
    }
    const auto idx = g.find_rule(kind, n.label, rhs);
    if (!idx) throw TreeError("tree uses a rule missing from the grammar");
    p *= g.rule(*idx).prob;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Bracketed form: (v0 (l1 A) (v1 (l2 C) (l1 D)))
// USTs print internal labels as '*'.

namespace detail {

template <class LabelFn>
void write_bracketed(std::ostream& out, const TreeShape& t, int k, const Alphabet& alphabet,
                     const LabelFn& label_of) {
  const TreeNode& n = t.node(k);
  if (n.is_leaf()) {
    out << alphabet.symbol(n.symbol);
    return;
  }
  out << '(' << label_of(n.label);
  for (int c : n.children) {
    out << ' ';
    write_bracketed(out, t, c, alphabet, label_of);
  }
  out << ')';
}

inline void write_shape(std::ostream& out, const TreeShape& t, int k) {
  const TreeNode& n = t.node(k);
  if (n.is_leaf()) {
    out << n.symbol;
    return;
  }
  out << '(';
  for (std::size_t c = 0; c < n.children.size(); ++c) {
    if (c) out << ' ';
    write_shape(out, t, n.children[c]);
  }
  out << ')';
}

}  // namespace detail

inline bool operator==(const Ust& a, const Ust& b) {
  if (a.empty() || b.empty()) return a.empty() && b.empty();
  std::ostringstream sa, sb;
  detail::write_shape(sa, a, a.root());
  detail::write_shape(sb, b, b.root());
  return sa.str() == sb.str();
}

inline std::string to_bracketed(const ParseTree& t, const Grammar& g) {
  if (t.empty()) return "()";
  std::ostringstream out;
  detail::write_bracketed(out, t, t.root(), g.alphabet(),
                          [&](int label) -> const std::string& { return g.name_of(label); });
  return out.str();
}

inline std::string to_bracketed(const Ust& t, const Alphabet& alphabet) {
  if (t.empty()) return "()";
  std::ostringstream out;
  detail::write_bracketed(out, t, t.root(), alphabet, [](int) { return '*'; });
  return out.str();
}

/// Reads one bracketed tree with labels resolved against `g`.
inline ParseTree parse_bracketed(std::string_view text, const Grammar& g) {
  ParseTree tree;
  std::size_t pos = 0;
  auto skip = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto atom = [&] {
    skip();
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) &&
           text[pos] != '(' && text[pos] != ')')
      ++pos;
    if (pos == start) throw TreeError("expected a label at offset " + std::to_string(start));
    return std::string(text.substr(start, pos - start));
  };
  // Recursive descent; depth bounded by tree height.
  auto parse_node = [&](auto&& self) -> int {
    skip();
    if (pos >= text.size() || text[pos] != '(')
      throw TreeError("expected '(' at offset " + std::to_string(pos));
    ++pos;
    const std::string label = atom();
    const auto id = g.id_of(label);
    if (!id) throw TreeError("unknown label '" + label + "'");
    std::vector<int> children;
    for (;;) {
      skip();
      if (pos >= text.size()) throw TreeError("unterminated tree");
      if (text[pos] == ')') {
        ++pos;
        break;
      }
      if (text[pos] == '(') {
        children.push_back(self(self));
      } else {
        const std::string sym = atom();
        std::optional<int> k;
        if (sym.size() == 1) k = g.alphabet().index_of(sym[0]);
        if (!k) throw TreeError("unknown terminal '" + sym + "'");
        children.push_back(tree.add_leaf(*k));
      }
    }
    if (children.empty()) throw TreeError("empty node '" + label + "'");
    return tree.add_node(*id, std::move(children));
  };
  const int root = parse_node(parse_node);
  skip();
  if (pos != text.size()) throw TreeError("trailing text after tree");
  tree.set_root(root);
  return tree;
}

}  // namespace pcfgcm
