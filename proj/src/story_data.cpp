#include "dto/story_data.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "dto/errors.hpp"

namespace dto {

TaskMode parse_task_mode(std::string_view s) {
  if (s == "full") return TaskMode::kFull;
  if (s == "ablated") return TaskMode::kAblated;
  if (s == "art") return TaskMode::kArt;
  throw ConfigError("unknown task mode '" + std::string(s) + "' (expected full, ablated, art)");
}

std::string to_string(TaskMode m) {
  switch (m) {
    case TaskMode::kFull: return "full";
    case TaskMode::kAblated: return "ablated";
    case TaskMode::kArt: return "art";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation" || s == "val" || s == "dev") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected train, validation, test)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

FieldMap FieldMap::from_json(const json& j) {
  FieldMap f;
  auto set = [&](const char* key, std::string& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::string>();
  };
  set("story_id", f.story_id);
  set("premise", f.premise);
  set("initial", f.initial);
  set("counterfactual", f.counterfactual);
  set("original_ending", f.original_ending);
  set("edited_ending", f.edited_ending);
  set("edited_endings", f.edited_endings);
  set("art_id", f.art_id);
  set("art_premise", f.art_premise);
  set("art_event_a", f.art_event_a);
  set("art_event_b", f.art_event_b);
  set("art_label", f.art_label);
  set("art_ending", f.art_ending);
  return f;
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += ch;
    }
  }
  return out;
}

namespace {

// A text field may be a plain string or a list of sentences.
std::string text_of(const json& v, const std::string& field) {
  if (v.is_string()) return normalize_whitespace(v.get<std::string>());
  if (v.is_array()) {
    std::string joined;
    for (const auto& part : v) {
      if (!part.is_string()) throw ParseError("field '" + field + "' has a non-text element");
      if (!joined.empty()) joined += ' ';
      joined += part.get<std::string>();
    }
    return normalize_whitespace(joined);
  }
  throw ParseError("field '" + field + "' is neither text nor a list of texts");
}

std::string required(const json& raw, const std::string& key) {
  if (!raw.is_object() || !raw.contains(key) || raw.at(key).is_null()) throw MissingField(key);
  auto s = text_of(raw.at(key), key);
  if (s.empty()) throw EmptyField(key);
  return s;
}

std::string id_of(const json& raw, const std::string& key, const std::optional<std::string>& fb) {
  if (raw.is_object() && raw.contains(key)) {
    const auto& v = raw.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
  }
  if (fb) return *fb;
  throw MissingField(key);
}

std::vector<std::string> edited_endings_of(const json& raw, const FieldMap& f) {
  std::vector<std::string> endings;
  if (raw.contains(f.edited_endings) && !raw.at(f.edited_endings).is_null()) {
    const auto& v = raw.at(f.edited_endings);
    if (!v.is_array()) throw ParseError("field '" + f.edited_endings + "' must be a list");
    for (const auto& e : v) endings.push_back(text_of(e, f.edited_endings));
  } else if (raw.contains(f.edited_ending) && !raw.at(f.edited_ending).is_null()) {
    endings.push_back(text_of(raw.at(f.edited_ending), f.edited_ending));
  } else {
    throw MissingField(f.edited_ending);
  }
  if (endings.empty()) throw EmptyField(f.edited_endings);
  for (const auto& e : endings) {
    if (e.empty()) throw EmptyField(f.edited_ending);
  }
  return endings;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

}  // namespace

std::vector<StoryRecord> parse_story_record(const json& raw, const FieldMap& f, TaskMode mode,
                                            std::optional<std::string> fallback_id) {
  if (mode == TaskMode::kArt) {
    throw ConfigError("parse_story_record: art mode uses parse_art_record");
  }
  StoryRecord base;
  base.story_id = id_of(raw, f.story_id, fallback_id);
  base.premise = required(raw, f.premise);
  base.initial_event = required(raw, f.initial);
  base.counterfactual_event = required(raw, f.counterfactual);
  if (mode == TaskMode::kFull) base.original_ending = required(raw, f.original_ending);

  const auto endings = edited_endings_of(raw, f);
  std::vector<StoryRecord> out;
  out.reserve(endings.size());
  for (std::size_t k = 0; k < endings.size(); ++k) {
    StoryRecord r = base;
    if (endings.size() > 1) r.story_id += "#" + std::to_string(k);
    r.edited_ending = endings[k];
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<StoryRecord> expand_split(const std::vector<json>& records, Split split,
                                      const FieldMap& fields, TaskMode mode) {
  std::vector<StoryRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto parsed = parse_story_record(records[i], fields, mode, std::to_string(i));
    if (split == Split::kTrain && parsed.size() != 1) {
      throw ParseError("train record " + parsed.front().story_id.substr(0, parsed.front().story_id.find('#')) +
                       " carries " + std::to_string(parsed.size()) +
                       " edited endings; train expects exactly one");
    }
    for (auto& r : parsed) out.push_back(std::move(r));
  }
  return out;
}

ArtRecord parse_art_record(const json& raw, const FieldMap& f,
                           std::optional<std::string> fallback_id) {
  ArtRecord r;
  r.record_id = id_of(raw, f.art_id, fallback_id);
  r.premise = required(raw, f.art_premise);
  r.event_a = required(raw, f.art_event_a);
  r.event_b = required(raw, f.art_event_b);
  r.ending = required(raw, f.art_ending);
  if (!raw.contains(f.art_label)) throw MissingField(f.art_label);
  const auto& lab = raw.at(f.art_label);
  if ((lab.is_number_integer() && lab.get<int>() == 1) ||
      (lab.is_string() && (lab == "1" || lab == "A" || lab == "a"))) {
    r.consistent_label = ArtLabel::kA;
  } else if ((lab.is_number_integer() && lab.get<int>() == 2) ||
             (lab.is_string() && (lab == "2" || lab == "B" || lab == "b"))) {
    r.consistent_label = ArtLabel::kB;
  } else {
    throw ParseError("field '" + f.art_label + "' must identify event A (1) or B (2)");
  }
  return r;
}

json to_json(const StoryRecord& r) {
  json j = {{"story_id", r.story_id},
            {"premise", r.premise},
            {"initial", r.initial_event},
            {"counterfactual", r.counterfactual_event},
            {"edited_ending", r.edited_ending}};
  if (r.original_ending) j["original_ending"] = *r.original_ending;
  return j;
}

json to_json(const ArtRecord& r) {
  return {{"story_id", r.record_id},
          {"obs1", r.premise},
          {"hyp1", r.event_a},
          {"hyp2", r.event_b},
          {"label", r.consistent_label == ArtLabel::kA ? 1 : 2},
          {"obs2", r.ending}};
}

AssembledInput assemble_input(const AnyRecord& record, TaskMode mode, const Tokenizer& tokenizer,
                              std::size_t max_len) {
  if (max_len < 8) throw PreconditionViolation("assemble_input: max_len must be >= 8");
  std::vector<const std::string*> parts;
  if (mode == TaskMode::kArt) {
    const auto* art = std::get_if<ArtRecord>(&record);
    if (!art) throw ConfigError("art mode requires an ART record");
    parts = {&art->premise, &art->event_a, &art->event_b};
  } else {
    const auto* s = std::get_if<StoryRecord>(&record);
    if (!s) throw ConfigError(to_string(mode) + " mode requires a story record");
    if (mode == TaskMode::kFull) {
      if (!s->original_ending) throw MissingField("original_ending");
      parts = {&s->premise, &s->initial_event, &*s->original_ending, &s->counterfactual_event};
    } else {
      parts = {&s->premise, &s->initial_event, &s->counterfactual_event};
    }
  }

  const int sep = tokenizer.id(std::string(Tokenizer::kSepText));
  AssembledInput out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) {
      out.text += " ";
      out.text += Tokenizer::kSepText;
      out.text += " ";
      out.token_ids.push_back(sep);
    }
    out.text += *parts[i];
    const auto ids = tokenizer.encode(*parts[i]);
    out.token_ids.insert(out.token_ids.end(), ids.begin(), ids.end());
  }
  if (out.token_ids.size() > max_len) {
    out.token_ids.resize(max_len);
    out.truncated = true;
  }
  return out;
}

Example make_example(const AnyRecord& record, TaskMode mode, const Tokenizer& tokenizer,
                     std::size_t max_len) {
  Example ex;
  ex.id = record_id(record);
  ex.input = assemble_input(record, mode, tokenizer, max_len);
  ex.target = record_target(record);
  if (mode == TaskMode::kFull) {
    ex.original = std::get<StoryRecord>(record).original_ending;
  }
  return ex;
}

SplitStats ending_stats(const std::vector<std::string>& endings) {
  SplitStats st;
  st.count = endings.size();
  if (endings.empty()) return st;
  double sum = 0.0, tok = 0.0;
  for (const auto& e : endings) {
    sum += static_cast<double>(utf8_length(e));
    tok += static_cast<double>(Tokenizer::split(e).size());
  }
  const double n = static_cast<double>(endings.size());
  st.mean_chars = sum / n;
  st.mean_tokens = tok / n;
  double ss = 0.0;
  for (const auto& e : endings) {
    const double d = static_cast<double>(utf8_length(e)) - st.mean_chars;
    ss += d * d;
  }
  st.sd_chars = std::sqrt(ss / n);
  return st;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (normalize_whitespace(line).empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path);
  for (const auto& r : rows) out << r.dump() << '\n';
}

std::vector<AnyRecord> load_records(const std::string& path, Split split, TaskMode mode,
                                    const FieldMap& fields) {
  const auto raw = read_jsonl(path);
  std::vector<AnyRecord> out;
  if (mode == TaskMode::kArt) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      out.emplace_back(parse_art_record(raw[i], fields, std::to_string(i)));
    }
  } else {
    for (auto& r : expand_split(raw, split, fields, mode)) out.emplace_back(std::move(r));
  }
  return out;
}

const std::string& record_id(const AnyRecord& r) {
  return std::visit(
      [](const auto& v) -> const std::string& {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, StoryRecord>) {
          return v.story_id;
        } else {
          return v.record_id;
        }
      },
      r);
}

const std::string& record_target(const AnyRecord& r) {
  return std::visit(
      [](const auto& v) -> const std::string& {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, StoryRecord>) {
          return v.edited_ending;
        } else {
          return v.ending;
        }
      },
      r);
}

}  // namespace dto
