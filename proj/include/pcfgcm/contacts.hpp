#pragma once

// Partial contact maps and tree consistency.
//
// A map compatible with the grammar has pairs (i, j), 1-based, i < j, with
// j - i >= 3, no shared positions and no crossing pairs (nesting is fine).
// A tree is consistent with a map when every pair's leaves are at most
// `delta` edges apart; the lexical node above each terminal is on the path,
// so a contact rule realizes its pair at distance exactly 4.

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pcfgcm/tree.hpp"

namespace pcfgcm {

inline constexpr int kDefaultDelta = 4;
inline constexpr int kMinSeparation = 3;
inline constexpr int kUnboundedDelta = std::numeric_limits<int>::max();

using ContactPair = std::pair<int, int>;

class ContactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContactMap {
 public:
  ContactMap() = default;
  ContactMap(int length, std::vector<ContactPair> pairs) : length_(length), pairs_(std::move(pairs)) {
    if (length_ < 0) throw ContactError("negative map length");
    for (auto& [i, j] : pairs_)
      if (i > j) std::swap(i, j);
    std::sort(pairs_.begin(), pairs_.end());
    pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());
  }

  int length() const noexcept { return length_; }
  const std::vector<ContactPair>& pairs() const noexcept { return pairs_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }
  bool contains(ContactPair p) const {
    if (p.first > p.second) std::swap(p.first, p.second);
    return std::binary_search(pairs_.begin(), pairs_.end(), p);
  }

  friend bool operator==(const ContactMap&, const ContactMap&) = default;

 private:
  int length_ = 0;
  std::vector<ContactPair> pairs_;
};

struct ContactViolation {
  enum class Kind { out_of_range, separation, overlap, crossing };
  Kind kind;
  ContactPair pair;
  ContactPair other{0, 0};  // second pair involved, for overlap and crossing

  std::string describe() const {
    std::ostringstream out;
    auto show = [&](ContactPair p) { out << '(' << p.first << ',' << p.second << ')'; };
    switch (kind) {
      case Kind::out_of_range: out << "pair "; show(pair); out << " out of range"; break;
      case Kind::separation:
        out << "pair "; show(pair); out << " separated by less than " << kMinSeparation;
        break;
      case Kind::overlap: out << "pairs "; show(pair); out << " and "; show(other); out << " share a position"; break;
      case Kind::crossing: out << "pairs "; show(pair); out << " and "; show(other); out << " cross"; break;
    }
    return out.str();
  }
};

/// All reasons why `map` is not compatible with the grammar; empty when valid.
inline std::vector<ContactViolation> validate(const ContactMap& map) {
  using Kind = ContactViolation::Kind;
  std::vector<ContactViolation> out;
  const auto& ps = map.pairs();
  for (const auto& p : ps) {
    if (p.first < 1 || p.second > map.length() || p.first == p.second)
      out.push_back({Kind::out_of_range, p});
    else if (p.second - p.first < kMinSeparation)
      out.push_back({Kind::separation, p});
  }
  for (std::size_t a = 0; a < ps.size(); ++a) {
    for (std::size_t b = a + 1; b < ps.size(); ++b) {
      const auto [i, j] = ps[a];
      const auto [k, l] = ps[b];
      if (i == k || i == l || j == k || j == l) out.push_back({Kind::overlap, ps[a], ps[b]});
      else if ((i < k && k < j && j < l) || (k < i && i < l && l < j))
        out.push_back({Kind::crossing, ps[a], ps[b]});
    }
  }
  return out;
}

inline bool is_valid(const ContactMap& map) { return validate(map).empty(); }

inline void require_valid(const ContactMap& map) {
  const auto v = validate(map);
  if (!v.empty()) throw ContactError("invalid contact map: " + v.front().describe());
}

/// Edges between the i-th and j-th terminal leaves (1-based positions).
inline int leaf_distance(const TreeShape& tree, int i, int j) {
  if (i < 1 || j < 1 || i > tree.leaf_count() || j > tree.leaf_count() || i == j)
    throw ContactError("leaf positions out of range");
  return tree.path_length(tree.leaf_node(i - 1), tree.leaf_node(j - 1));
}

inline bool is_consistent(const TreeShape& tree, const ContactMap& map, int delta = kDefaultDelta) {
  if (tree.leaf_count() != map.length())
    throw ContactError("tree yield length " + std::to_string(tree.leaf_count()) +
                       " differs from map length " + std::to_string(map.length()));
  return std::all_of(map.pairs().begin(), map.pairs().end(), [&](const ContactPair& p) {
    return leaf_distance(tree, p.first, p.second) <= delta;
  });
}

// ---------------------------------------------------------------------------
// Contact-pair file:
//   length: 27
//   2 26
//   # comment

inline ContactMap read_contacts(std::istream& in) {
  std::optional<int> length;
  std::vector<ContactPair> pairs;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
    std::istringstream ls(raw);
    std::string first;
    if (!(ls >> first)) continue;
    auto fail = [&](const std::string& what) {
      throw ContactError("contact file line " + std::to_string(line_no) + ": " + what);
    };
    if (first == "length:") {
      int n;
      if (!(ls >> n) || n < 0) fail("bad length");
      length = n;
    } else {
      int i, j;
      std::istringstream fs(first);
      if (!(fs >> i) || !fs.eof() || !(ls >> j)) fail("expected 'i j'");
      std::string rest;
      if (ls >> rest) fail("trailing text");
      pairs.emplace_back(i, j);
    }
  }
  if (!length) throw ContactError("contact file lacks a 'length:' header");
  return ContactMap(*length, std::move(pairs));
}

inline void write_contacts(std::ostream& out, const ContactMap& map) {
  out << "length: " << map.length() << '\n';
  for (const auto& [i, j] : map.pairs()) out << i << ' ' << j << '\n';
}

inline ContactMap load_contacts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContactError("cannot open contact file " + path);
  return read_contacts(in);
}

inline void save_contacts(const std::string& path, const ContactMap& map) {
  std::ofstream out(path);
  if (!out) throw ContactError("cannot write contact file " + path);
  write_contacts(out, map);
}

}  // namespace pcfgcm
