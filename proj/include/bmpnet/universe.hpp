#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bmp {

// Attribute-object composite concept, by vocabulary index.
struct Pair {
  std::uint32_t attr = 0;
  std::uint32_t obj = 0;
  auto operator<=>(const Pair&) const = default;
};

enum class ConceptKind { Attribute, Object };

// Vocabularies plus the seen set K and unseen set U. The candidate set is
// K ∪ U sorted by (attr, obj); a pair's candidate id is its index there.
// Concept indices place attributes first: attribute a is a, object o is
// num_attributes() + o.
class PairUniverse {
 public:
  PairUniverse() = default;
  PairUniverse(std::vector<std::string> attributes, std::vector<std::string> objects,
               std::vector<Pair> seen, std::vector<Pair> unseen);

  // Every attribute-object combination outside K becomes unseen.
  static PairUniverse cartesian(std::vector<std::string> attributes,
                                std::vector<std::string> objects, std::vector<Pair> seen);

  std::size_t num_attributes() const { return attributes_.size(); }
  std::size_t num_objects() const { return objects_.size(); }
  std::size_t num_concepts() const { return attributes_.size() + objects_.size(); }
  const std::vector<std::string>& attributes() const { return attributes_; }
  const std::vector<std::string>& objects() const { return objects_; }

  const std::vector<Pair>& seen() const { return seen_; }
  const std::vector<Pair>& unseen() const { return unseen_; }
  const std::vector<Pair>& candidates() const { return candidates_; }

  bool valid(Pair p) const { return p.attr < num_attributes() && p.obj < num_objects(); }
  bool is_seen(Pair p) const { return valid(p) && status_[slot(p)] == kSeen; }
  bool is_unseen(Pair p) const { return valid(p) && status_[slot(p)] == kUnseen; }
  bool contains(Pair p) const { return valid(p) && status_[slot(p)] != kAbsent; }
  std::optional<std::size_t> candidate_index(Pair p) const;
  bool candidate_is_unseen(std::size_t id) const { return is_unseen(candidates_.at(id)); }

  std::size_t concept_index(ConceptKind kind, std::uint32_t id) const {
    return kind == ConceptKind::Attribute ? id : num_attributes() + id;
  }
  void check_concept(ConceptKind kind, std::uint32_t id) const;

  // Edge-blocking mask over all concepts for `kind` concept `id` queried as
  // part of input pair `input`: the cross-type entry i is blocked when the
  // pair it forms with the queried concept is unseen or is the input pair.
  // Same-type entries are never blocked.
  std::vector<std::uint8_t> blocking_mask(ConceptKind kind, std::uint32_t id, Pair input) const;

  std::string pair_name(Pair p) const;

 private:
  enum : std::uint8_t { kAbsent = 0, kSeen = 1, kUnseen = 2 };
  std::size_t slot(Pair p) const { return static_cast<std::size_t>(p.attr) * num_objects() + p.obj; }

  std::vector<std::string> attributes_;
  std::vector<std::string> objects_;
  std::vector<Pair> seen_;
  std::vector<Pair> unseen_;
  std::vector<Pair> candidates_;
  std::vector<std::uint8_t> status_;
  std::vector<std::int64_t> candidate_id_;
};

}  // namespace bmp
