#include "bmpnet/universe.hpp"

#include <algorithm>

#include "bmpnet/error.hpp"

namespace bmp {

namespace {

void sort_unique(std::vector<Pair>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

PairUniverse::PairUniverse(std::vector<std::string> attributes, std::vector<std::string> objects,
                           std::vector<Pair> seen, std::vector<Pair> unseen)
    : attributes_(std::move(attributes)),
      objects_(std::move(objects)),
      seen_(std::move(seen)),
      unseen_(std::move(unseen)) {
  sort_unique(seen_);
  sort_unique(unseen_);
  status_.assign(num_attributes() * num_objects(), kAbsent);
  for (const auto* set : {&seen_, &unseen_}) {
    for (Pair p : *set) {
      if (!valid(p)) {
        throw Error("universe: pair <" + std::to_string(p.attr) + "," + std::to_string(p.obj) +
                    "> references an unknown attribute or object");
      }
      if (status_[slot(p)] != kAbsent) {
        throw Error("universe: pair " + pair_name(p) + " is both seen and unseen");
      }
      status_[slot(p)] = set == &seen_ ? kSeen : kUnseen;
    }
  }
  candidates_ = seen_;
  candidates_.insert(candidates_.end(), unseen_.begin(), unseen_.end());
  std::sort(candidates_.begin(), candidates_.end());
  candidate_id_.assign(status_.size(), -1);
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    candidate_id_[slot(candidates_[i])] = static_cast<std::int64_t>(i);
  }
}

PairUniverse PairUniverse::cartesian(std::vector<std::string> attributes,
                                     std::vector<std::string> objects, std::vector<Pair> seen) {
  sort_unique(seen);
  std::vector<Pair> unseen;
  for (std::uint32_t a = 0; a < attributes.size(); ++a) {
    for (std::uint32_t o = 0; o < objects.size(); ++o) {
      if (!std::binary_search(seen.begin(), seen.end(), Pair{a, o})) unseen.push_back({a, o});
    }
  }
  return PairUniverse(std::move(attributes), std::move(objects), std::move(seen), std::move(unseen));
}

std::optional<std::size_t> PairUniverse::candidate_index(Pair p) const {
  if (!valid(p) || candidate_id_[slot(p)] < 0) return std::nullopt;
  return static_cast<std::size_t>(candidate_id_[slot(p)]);
}

void PairUniverse::check_concept(ConceptKind kind, std::uint32_t id) const {
  const std::size_t limit = kind == ConceptKind::Attribute ? num_attributes() : num_objects();
  if (id >= limit) {
    throw Error(std::string("universe: unknown ") +
                (kind == ConceptKind::Attribute ? "attribute" : "object") + " id " + std::to_string(id));
  }
}

std::vector<std::uint8_t> PairUniverse::blocking_mask(ConceptKind kind, std::uint32_t id,
                                                      Pair input) const {
  check_concept(kind, id);
  if (!valid(input)) throw Error("universe: input pair " + pair_name(input) + " is out of range");
  std::vector<std::uint8_t> mask(num_concepts(), 0);
  if (kind == ConceptKind::Attribute) {
    for (std::uint32_t o = 0; o < num_objects(); ++o) {
      const Pair p{id, o};
      if (is_unseen(p) || p == input) mask[num_attributes() + o] = 1;
    }
  } else {
    for (std::uint32_t a = 0; a < num_attributes(); ++a) {
      const Pair p{a, id};
      if (is_unseen(p) || p == input) mask[a] = 1;
    }
  }
  return mask;
}

std::string PairUniverse::pair_name(Pair p) const {
  auto name = [](const std::vector<std::string>& v, std::uint32_t i) {
    return i < v.size() ? v[i] : "#" + std::to_string(i);
  };
  return "<" + name(attributes_, p.attr) + "," + name(objects_, p.obj) + ">";
}

}  // namespace bmp
