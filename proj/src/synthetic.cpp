#include "dto/synthetic.hpp"

#include <array>
#include <random>

namespace dto {

namespace {

struct Place {
  const char* name;
  const char* activity;
};

constexpr std::array<Place, 8> kPlaces = {{
    {"beach", "swam in the sea"},
    {"park", "played on the grass"},
    {"library", "read old books"},
    {"mountains", "hiked up the trail"},
    {"museum", "looked at paintings"},
    {"lake", "fished from the dock"},
    {"zoo", "watched the lions"},
    {"market", "bought fresh fruit"},
}};
constexpr std::array<const char*, 8> kNames = {"Tom", "Anna", "Sam", "Lily",
                                               "Ben", "Mia", "Jack", "Emma"};
constexpr std::array<const char*, 7> kDays = {"Monday", "Tuesday", "Wednesday", "Thursday",
                                              "Friday", "Saturday", "Sunday"};
constexpr std::array<const char*, 4> kMoods = {"happy", "tired", "calm", "excited"};

std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

std::string ending(const std::string& name, const Place& place, const std::string& mood) {
  return name + " " + place.activity + " all afternoon. Then " + name + " went home " + mood + ".";
}

}  // namespace

std::vector<StoryRecord> synthetic_corpus(std::size_t count, std::uint64_t seed,
                                          const std::string& id_prefix) {
  std::mt19937_64 rng(seed);
  std::vector<StoryRecord> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::string name = kNames[draw(rng, kNames.size())];
    const std::string day = kDays[draw(rng, kDays.size())];
    const std::string mood = kMoods[draw(rng, kMoods.size())];
    const std::size_t a = draw(rng, kPlaces.size());
    const std::size_t b = (a + 1 + draw(rng, kPlaces.size() - 1)) % kPlaces.size();

    StoryRecord r;
    r.story_id = id_prefix + "-" + std::to_string(k);
    r.premise = name + " had a free day on " + day + ".";
    r.initial_event = name + " decided to go to the " + kPlaces[a].name + ".";
    r.counterfactual_event = name + " decided to go to the " + kPlaces[b].name + ".";
    r.original_ending = ending(name, kPlaces[a], mood);
    r.edited_ending = ending(name, kPlaces[b], mood);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> corpus_texts(const std::vector<StoryRecord>& records) {
  std::vector<std::string> texts;
  for (const auto& r : records) {
    texts.push_back(r.premise);
    texts.push_back(r.initial_event);
    texts.push_back(r.counterfactual_event);
    if (r.original_ending) texts.push_back(*r.original_ending);
    texts.push_back(r.edited_ending);
  }
  return texts;
}

std::vector<std::string> synthetic_lexicon() {
  std::vector<std::string> texts;
  for (const auto& p : kPlaces) texts.push_back(std::string(p.name) + " " + p.activity);
  for (const char* n : kNames) texts.emplace_back(n);
  for (const char* d : kDays) texts.emplace_back(d);
  for (const char* m : kMoods) texts.emplace_back(m);
  texts.emplace_back("had a free day on . decided to go to the all afternoon . Then went home");
  return texts;
}

}  // namespace dto
