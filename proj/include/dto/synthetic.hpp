#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dto/story_data.hpp"

namespace dto {

// Small counterfactual-story corpus. Each story sends a character to one
// place; the counterfactual event names a different place, and the edited
// ending is the original ending with the place-specific activity swapped in.
// Everything else in the ending is shared, so the two endings differ by a
// controlled token substitution.
std::vector<StoryRecord> synthetic_corpus(std::size_t count, std::uint64_t seed,
                                          const std::string& id_prefix = "syn");

// Every text field of the records, for vocabulary building.
std::vector<std::string> corpus_texts(const std::vector<StoryRecord>& records);

// Texts covering every word the generator can emit, so a vocabulary built
// from them encodes any synthetic split without unknown tokens.
std::vector<std::string> synthetic_lexicon();

}  // namespace dto
