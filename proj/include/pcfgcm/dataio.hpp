#pragma once

// Sequence and dataset input/output: FASTA, negative windows, manifests.
//
// Manifest (flat key=value, paths relative to the manifest's directory):
//
//   alphabet=protein            # or the literal symbols, e.g. "abcd"
//   positives=pos.fa
//   negatives=neg.fa            # optional
//   contacts=contacts.txt       # optional, shared by all positives
//   full_contacts=full.txt      # optional, reference structure
//   item_contacts=items.txt     # optional, per-sequence maps
//   length=21                   # optional, motif length
//   notes=free text             # optional

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcfgcm/contacts.hpp"
#include "pcfgcm/estimation.hpp"
#include "pcfgcm/grammar.hpp"

namespace pcfgcm {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SequenceRecord {
  std::string id;
  std::string residues;

  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

/// FASTA records checked against `alphabet`; symbols missing from it are
/// retried upper-cased. Whitespace inside sequence lines is ignored.
inline std::vector<SequenceRecord> read_fasta(std::istream& in, const Alphabet& alphabet,
                                              const std::string& source = "<fasta>") {
  std::vector<SequenceRecord> out;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  auto close_record = [&] {
    if (!out.empty() && out.back().residues.empty())
      throw DataError(source + ": record '" + out.back().id + "' has no sequence");
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '>') {
      close_record();
      std::string id = line.substr(1);
      const auto ws = id.find_first_of(" \t");
      if (ws != std::string::npos) id.resize(ws);
      if (id.empty()) fail("empty record identifier");
      out.push_back({std::move(id), {}});
      continue;
    }
    if (line[0] == ';') continue;
    if (out.empty()) fail("sequence data before the first '>' header");
    for (std::size_t col = 0; col < line.size(); ++col) {
      const char raw = line[col];
      if (std::isspace(static_cast<unsigned char>(raw))) continue;
      char c = raw;
      if (!alphabet.index_of(c)) c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
      if (!alphabet.index_of(c))
        fail("symbol '" + std::string(1, raw) + "' at column " + std::to_string(col + 1) +
             " (residue " + std::to_string(out.back().residues.size() + 1) + " of '" +
             out.back().id + "') is not in the alphabet");
      out.back().residues.push_back(c);
    }
  }
  close_record();
  return out;
}

inline std::vector<SequenceRecord> read_fasta(const std::string& path, const Alphabet& alphabet) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open FASTA file " + path);
  return read_fasta(in, alphabet, path);
}

inline void write_fasta(std::ostream& out, const std::vector<SequenceRecord>& records,
                        std::size_t width = 60) {
  for (const auto& r : records) {
    out << '>' << r.id << '\n';
    for (std::size_t i = 0; i < r.residues.size(); i += width)
      out << r.residues.substr(i, width) << '\n';
  }
}

inline void write_fasta(const std::string& path, const std::vector<SequenceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write FASTA file " + path);
  write_fasta(out, records);
}

/// Consecutive windows of `window` residues taken every `stride` residues;
/// a trailing remainder shorter than the window is dropped.
inline std::vector<SequenceRecord> cut_negatives(const std::vector<SequenceRecord>& long_sequences,
                                                 int window, int stride = 0) {
  if (window < 2) throw DataError("window must be >= 2");
  if (stride == 0) stride = window;
  if (stride < 1) throw DataError("stride must be >= 1");
  std::vector<SequenceRecord> out;
  for (const auto& src : long_sequences) {
    const auto len = src.residues.size();
    for (std::size_t start = 0; start + static_cast<std::size_t>(window) <= len;
         start += static_cast<std::size_t>(stride)) {
      out.push_back({src.id + "/" + std::to_string(start + 1) + "-" +
                         std::to_string(start + static_cast<std::size_t>(window)),
                     src.residues.substr(start, static_cast<std::size_t>(window))});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-sequence contact maps: blocks of "> id" followed by a contact file body.

inline std::map<std::string, ContactMap> read_item_contacts(std::istream& in) {
  std::map<std::string, ContactMap> out;
  std::string line, id;
  std::ostringstream body;
  auto flush = [&] {
    if (id.empty()) return;
    std::istringstream bin(body.str());
    out[id] = read_contacts(bin);
    body.str({});
  };
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '>') {
      flush();
      std::istringstream ls(line.substr(first + 1));
      id.clear();
      ls >> id;
      if (id.empty()) throw DataError("item contact block without identifier");
      continue;
    }
    if (id.empty()) {
      if (first == std::string::npos || line[first] == '#') continue;
      throw DataError("item contact data before the first '>' block");
    }
    body << line << '\n';
  }
  flush();
  return out;
}

inline void write_item_contacts(std::ostream& out, const std::map<std::string, ContactMap>& maps) {
  for (const auto& [id, m] : maps) {
    out << "> " << id << '\n';
    write_contacts(out, m);
  }
}

// ---------------------------------------------------------------------------

struct Manifest {
  std::filesystem::path base_dir;
  std::string alphabet = "protein";
  std::optional<std::filesystem::path> positives;
  std::optional<std::filesystem::path> negatives;
  std::optional<std::filesystem::path> contacts;
  std::optional<std::filesystem::path> full_contacts;
  std::optional<std::filesystem::path> item_contacts;
  int length = 0;  // 0: not fixed
  std::string notes;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }
};

inline Alphabet alphabet_from_name(const std::string& name) {
  if (name == "protein") return Alphabet::protein();
  return Alphabet(name);
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "alphabet") m.alphabet = value;
    else if (key == "positives") m.positives = value;
    else if (key == "negatives") m.negatives = value;
    else if (key == "contacts") m.contacts = value;
    else if (key == "full_contacts") m.full_contacts = value;
    else if (key == "item_contacts") m.item_contacts = value;
    else if (key == "length") {
      try {
        m.length = std::stoi(value);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad length '" + value + "'");
      }
    } else if (key == "notes") m.notes = value;
    else throw DataError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  if (!m.positives) throw DataError(path + ": manifest lacks 'positives='");
  return m;
}

struct Dataset {
  Alphabet alphabet = Alphabet::protein();
  std::vector<SequenceRecord> positives;
  std::optional<ContactMap> shared_map;
  std::map<std::string, ContactMap> per_item_maps;
  std::optional<ContactMap> full_map;  // reference contacts, need not be compatible
  std::vector<SequenceRecord> negatives;
  int motif_length = 0;
  std::string notes;

  // Map constraining positive `id`: its own map, else the shared one.
  const ContactMap* map_for(const std::string& id) const {
    if (auto it = per_item_maps.find(id); it != per_item_maps.end()) return &it->second;
    return shared_map ? &*shared_map : nullptr;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Checks the dataset invariants; throws DataError on the first violation.
inline void validate_dataset(const Dataset& d) {
  auto check_seq = [&](const SequenceRecord& r) {
    for (std::size_t i = 0; i < r.residues.size(); ++i)
      if (!d.alphabet.index_of(r.residues[i]))
        throw DataError("sequence '" + r.id + "' has symbol '" + std::string(1, r.residues[i]) +
                        "' at position " + std::to_string(i + 1) + " outside the alphabet");
  };
  for (const auto& r : d.positives) check_seq(r);
  for (const auto& r : d.negatives) check_seq(r);
  auto check_map = [&](const ContactMap& m, const std::string& what) {
    const auto v = validate(m);
    if (!v.empty()) throw DataError(what + ": " + v.front().describe());
  };
  if (d.shared_map) {
    check_map(*d.shared_map, "shared contact map");
    if (d.motif_length && d.shared_map->length() != d.motif_length)
      throw DataError("contact map length " + std::to_string(d.shared_map->length()) +
                      " differs from motif length " + std::to_string(d.motif_length));
    for (const auto& r : d.positives)
      if (static_cast<int>(r.residues.size()) != d.shared_map->length())
        throw DataError("positive '" + r.id + "' has length " + std::to_string(r.residues.size()) +
                        " but the shared contact map has length " +
                        std::to_string(d.shared_map->length()));
  }
  if (d.motif_length)
    for (const auto& r : d.positives)
      if (static_cast<int>(r.residues.size()) != d.motif_length)
        throw DataError("positive '" + r.id + "' does not have the motif length " +
                        std::to_string(d.motif_length));
  if (d.full_map)
    for (const auto& [i, j] : d.full_map->pairs())
      if (i < 1 || j > d.full_map->length() || i == j)
        throw DataError("full contact map pair out of range");
  for (const auto& [id, m] : d.per_item_maps) {
    check_map(m, "contact map of '" + id + "'");
    auto it = std::find_if(d.positives.begin(), d.positives.end(),
                           [&](const SequenceRecord& r) { return r.id == id; });
    if (it == d.positives.end()) throw DataError("contact map for unknown sequence '" + id + "'");
    if (static_cast<int>(it->residues.size()) != m.length())
      throw DataError("contact map of '" + id + "' has the wrong length");
  }
}

inline Dataset load_dataset(const Manifest& m) {
  Dataset d;
  d.alphabet = alphabet_from_name(m.alphabet);
  d.motif_length = m.length;
  d.notes = m.notes;
  d.positives = read_fasta(m.resolve(*m.positives).string(), d.alphabet);
  if (m.negatives) d.negatives = read_fasta(m.resolve(*m.negatives).string(), d.alphabet);
  try {
    if (m.contacts) d.shared_map = load_contacts(m.resolve(*m.contacts).string());
    if (m.full_contacts) d.full_map = load_contacts(m.resolve(*m.full_contacts).string());
  } catch (const ContactError& e) {
    throw DataError(e.what());
  }
  if (m.item_contacts) {
    std::ifstream in(m.resolve(*m.item_contacts));
    if (!in) throw DataError("cannot open item contact file " + m.resolve(*m.item_contacts).string());
    d.per_item_maps = read_item_contacts(in);
  }
  validate_dataset(d);
  return d;
}

inline Dataset load_dataset(const std::string& manifest_path) {
  return load_dataset(read_manifest(manifest_path));
}

/// Writes the dataset as a manifest plus data files into `dir`.
inline void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir);
  std::ofstream man(dir / "manifest.txt");
  if (!man) throw DataError("cannot write manifest in " + dir.string());
  man << "alphabet=" << d.alphabet.symbols() << '\n';
  write_fasta((dir / "positives.fa").string(), d.positives);
  man << "positives=positives.fa\n";
  if (!d.negatives.empty()) {
    write_fasta((dir / "negatives.fa").string(), d.negatives);
    man << "negatives=negatives.fa\n";
  }
  if (d.shared_map) {
    save_contacts((dir / "contacts.txt").string(), *d.shared_map);
    man << "contacts=contacts.txt\n";
  }
  if (d.full_map) {
    save_contacts((dir / "full_contacts.txt").string(), *d.full_map);
    man << "full_contacts=full_contacts.txt\n";
  }
  if (!d.per_item_maps.empty()) {
    std::ofstream items(dir / "item_contacts.txt");
    write_item_contacts(items, d.per_item_maps);
    man << "item_contacts=item_contacts.txt\n";
  }
  if (d.motif_length) man << "length=" << d.motif_length << '\n';
  if (!d.notes.empty()) man << "notes=" << d.notes << '\n';
}

/// Training sample over the positives at `indices`. With `use_maps` each item
/// carries its contact map; otherwise every map is empty.
inline TrainingSample training_sample(const Dataset& d, const std::vector<std::size_t>& indices,
                                      bool use_maps) {
  TrainingSample s;
  if (use_maps) s.shared_map = d.shared_map;
  for (std::size_t i : indices) {
    const auto& r = d.positives.at(i);
    SampleItem item{d.alphabet.encode(r.residues), ContactMap(static_cast<int>(r.residues.size()), {})};
    if (use_maps)
      if (const ContactMap* m = d.map_for(r.id)) item.map = *m;
    s.items.push_back(std::move(item));
  }
  return s;
}

inline TrainingSample training_sample(const Dataset& d, bool use_maps) {
  std::vector<std::size_t> all(d.positives.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return training_sample(d, all, use_maps);
}

}  // namespace pcfgcm
