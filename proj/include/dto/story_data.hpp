#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dto/tokenizer.hpp"

namespace dto {

using json = nlohmann::json;

enum class TaskMode { kFull, kAblated, kArt };
enum class Split { kTrain, kValidation, kTest };

TaskMode parse_task_mode(std::string_view s);
std::string to_string(TaskMode m);
Split parse_split(std::string_view s);
std::string to_string(Split s);

// One counterfactual story. `original_ending` is set only in full mode.
struct StoryRecord {
  std::string story_id;
  std::string premise;
  std::string initial_event;
  std::optional<std::string> original_ending;
  std::string counterfactual_event;
  std::string edited_ending;

  bool operator==(const StoryRecord&) const = default;
};

enum class ArtLabel { kA, kB };

// ART instance repurposed for generation: the ending is the target, the label
// is metadata and never enters the model input.
struct ArtRecord {
  std::string record_id;
  std::string premise;
  std::string event_a;
  std::string event_b;
  ArtLabel consistent_label = ArtLabel::kA;
  std::string ending;

  bool operator==(const ArtRecord&) const = default;
};

using AnyRecord = std::variant<StoryRecord, ArtRecord>;

struct AssembledInput {
  std::string text;
  std::vector<int> token_ids;
  bool truncated = false;
};

// JSON key names for each story role. Defaults follow the public TimeTravel
// release; the ART block follows the public ART release.
struct FieldMap {
  std::string story_id = "story_id";
  std::string premise = "premise";
  std::string initial = "initial";
  std::string counterfactual = "counterfactual";
  std::string original_ending = "original_ending";
  std::string edited_ending = "edited_ending";
  std::string edited_endings = "edited_endings";

  std::string art_id = "story_id";
  std::string art_premise = "obs1";
  std::string art_event_a = "hyp1";
  std::string art_event_b = "hyp2";
  std::string art_label = "label";
  std::string art_ending = "obs2";

  static FieldMap from_json(const json& j);
};

// Collapses runs of whitespace to one space and strips both ends.
std::string normalize_whitespace(std::string_view s);

// Parses one raw document into one StoryRecord per edited ending. `edited_ending`
// may be a string or a list of sentences (one ending); `edited_endings` is a
// list of endings, each a string or a list of sentences. With several endings,
// ids get a "#k" suffix (k from 0). In ablated mode the original ending is
// dropped. `fallback_id` is used when the document has no id field.
std::vector<StoryRecord> parse_story_record(const json& raw, const FieldMap& fields = {},
                                            TaskMode mode = TaskMode::kFull,
                                            std::optional<std::string> fallback_id = {});

// Flattens a split. Train documents must carry exactly one edited ending.
std::vector<StoryRecord> expand_split(const std::vector<json>& records, Split split,
                                      const FieldMap& fields = {},
                                      TaskMode mode = TaskMode::kFull);

ArtRecord parse_art_record(const json& raw, const FieldMap& fields = {},
                           std::optional<std::string> fallback_id = {});

json to_json(const StoryRecord& r);
json to_json(const ArtRecord& r);

// Concatenates the mode's elements with one separator token between
// consecutive elements and right-truncates to `max_len` tokens.
//   full:    premise, initial, original ending, counterfactual
//   ablated: premise, initial, counterfactual
//   art:     premise, event A, event B
AssembledInput assemble_input(const AnyRecord& record, TaskMode mode, const Tokenizer& tokenizer,
                              std::size_t max_len = 1024);

// A record prepared for training or evaluation.
struct Example {
  std::string id;
  AssembledInput input;
  std::string target;                   // edited ending (or ART ending)
  std::optional<std::string> original;  // original ending, full mode only
};

Example make_example(const AnyRecord& record, TaskMode mode, const Tokenizer& tokenizer,
                     std::size_t max_len = 1024);

struct SplitStats {
  std::size_t count = 0;
  double mean_chars = 0.0;
  double sd_chars = 0.0;  // population
  double mean_tokens = 0.0;
};

// Ending-length statistics over the target endings of `endings`.
SplitStats ending_stats(const std::vector<std::string>& endings);

// Loads a JSON-lines file. Blank lines are skipped.
std::vector<json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<json>& rows);

// Reads and flattens a dataset file for the given mode.
std::vector<AnyRecord> load_records(const std::string& path, Split split, TaskMode mode,
                                    const FieldMap& fields = {});

const std::string& record_id(const AnyRecord& r);
const std::string& record_target(const AnyRecord& r);

}  // namespace dto
