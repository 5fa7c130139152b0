#include "dto/models.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "dto/errors.hpp"

namespace dto {

using ad::Var;

GeneratorModel::GeneratorModel(Tokenizer tok, const ModelConfig& config, std::uint64_t seed,
                               std::size_t max_output_len)
    : tokenizer(std::move(tok)), net(config, seed, true), max_output_len(max_output_len) {
  if (static_cast<std::size_t>(config.vocab_size) != tokenizer.size()) {
    throw ConfigError("generator vocab_size differs from the tokenizer size");
  }
}

GeneratorModel GeneratorModel::frozen_copy() const {
  return GeneratorModel(tokenizer, net.clone(false), max_output_len);
}

ScorerModel::ScorerModel(Tokenizer tok, const Seq2SeqTransformer& net)
    : tokenizer_(std::move(tok)), net_(net.clone(false)) {
  if (static_cast<std::size_t>(net_.config().vocab_size) != tokenizer_.size()) {
    throw ConfigError("scorer vocab_size differs from the tokenizer size");
  }
}

namespace {

Var decoder_inputs(const Seq2SeqTransformer& net, const std::vector<int>& target) {
  std::vector<int> ids;
  ids.reserve(target.size() + 1);
  ids.push_back(Tokenizer::kBos);
  ids.insert(ids.end(), target.begin(), target.end());
  return ad::embedding(net.embedding(), ids);
}

std::vector<int> with_eos(const std::vector<int>& target) {
  std::vector<int> out = target;
  out.push_back(Tokenizer::kEos);
  return out;
}

std::size_t argmax_row(const Matrix& m, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < m.cols(); ++c) {
    if (m(r, c) > m(r, best)) best = c;
  }
  return best;
}

}  // namespace

Var teacher_forced_logits(const Seq2SeqTransformer& net, const std::vector<int>& input_ids,
                          const std::vector<int>& target) {
  const Var memory = net.encode_tokens(input_ids);
  return net.logits(net.decode_rows(decoder_inputs(net, target), memory));
}

Var sequence_mean_logprob(const Seq2SeqTransformer& net, const std::vector<int>& input_ids,
                          const std::vector<int>& target) {
  const Var lp = ad::log_softmax_rows(teacher_forced_logits(net, input_ids, target));
  return ad::mean(ad::pick(lp, with_eos(target)));
}

Var scorer_forward(const ScorerModel& scorer, const ScorerSource& source,
                   const std::vector<int>& target) {
  if (target.empty()) throw EmptyTarget("scorer_forward: empty target");
  const auto& net = scorer.net();
  Var memory;
  if (const auto* ids = std::get_if<std::vector<int>>(&source)) {
    memory = net.encode_tokens(*ids);
  } else {
    const auto& soft = std::get<SoftSequence>(source);
    if (soft.length() > scorer.context_limit()) {
      throw ContextOverflow("soft source of " + std::to_string(soft.length()) +
                            " slots exceeds scorer context " +
                            std::to_string(scorer.context_limit()));
    }
    memory = net.encode_rows(soft.embeddings);
  }
  if (target.size() + 1 > scorer.context_limit()) {
    throw ContextOverflow("target exceeds scorer context");
  }
  const Var lp = ad::log_softmax_rows(net.logits(net.decode_rows(decoder_inputs(net, target), memory)));
  return ad::pick(lp, with_eos(target));
}

DecodeResult soft_decode(const GeneratorModel& gen, const AssembledInput& input,
                         const DecodeOptions& options, std::mt19937_64* rng) {
  if (options.max_len == 0) throw PreconditionViolation("soft_decode: max_len must be >= 1");
  if (!(options.temperature > 0.0)) throw NonPositiveTemperature("soft_decode: temperature must be > 0");
  const auto& net = gen.net;
  std::optional<std::mt19937_64> local_rng;
  if (options.gumbel && !rng) {
    local_rng.emplace(options.gumbel->seed);
    rng = &*local_rng;
  }

  const Var memory = net.encode_tokens(input.token_ids);
  auto state = net.start_decoding(memory);
  Var next = ad::embedding(net.embedding(), {Tokenizer::kBos});

  std::size_t slots = options.max_len;
  if (options.teacher_tokens) slots = std::min(slots, options.teacher_tokens->size() + 1);

  DecodeResult out;
  std::vector<Var> rows;
  for (std::size_t t = 0; t < slots; ++t) {
    const Var logits = net.logits(net.decode_step(state, next));
    Var p;
    if (options.gumbel) {
      p = gumbel_softmax_sample(logits, *options.gumbel, *rng).probs;
    } else if (options.temperature == 1.0) {
      p = ad::softmax_rows(logits);
    } else {
      p = ad::softmax_rows(ad::scale(logits, 1.0 / options.temperature));
    }
    rows.push_back(p);
    const int tok = static_cast<int>(argmax_row(p.value(), 0));
    out.tokens.push_back(tok);
    if (options.teacher_tokens) {
      if (t < options.teacher_tokens->size()) {
        next = ad::embedding(net.embedding(), {(*options.teacher_tokens)[t]});
      }
      if (t + 1 == slots && tok == Tokenizer::kEos) out.ended = true;
      continue;
    }
    if (tok == Tokenizer::kEos) {
      out.ended = true;
      break;
    }
    next = ad::matmul(p, net.embedding());
  }
  out.probs = {ad::concat_rows(rows)};
  out.soft = expected_embeddings(out.probs, net.embedding());
  return out;
}

std::vector<int> hard_decode(const GeneratorModel& gen, const AssembledInput& input,
                             std::size_t max_len) {
  const auto& net = gen.net;
  const Var memory = net.encode_tokens(input.token_ids);
  auto state = net.start_decoding(memory);
  int tok = Tokenizer::kBos;
  std::vector<int> out;
  for (std::size_t t = 0; t < max_len; ++t) {
    const Var logits = net.logits(net.decode_step(state, ad::embedding(net.embedding(), {tok})));
    tok = static_cast<int>(argmax_row(logits.value(), 0));
    if (tok == Tokenizer::kEos) break;
    out.push_back(tok);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'D', 'T', 'O', 'C', 'K', 'P', 'T', '1'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw CorruptArchive("checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

struct RawArchive {
  nlohmann::json header;
  std::vector<Matrix> params;
};

RawArchive read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptArchive("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < sizeof(kMagic) + 4 + 8 + 8 || std::memcmp(buf.data(), kMagic, 8) != 0) {
    throw CorruptArchive(path + " is not a checkpoint archive");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(buf, pos);
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint format version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto body_end = buf.size() - sizeof(std::uint64_t);
  std::size_t tail = body_end;
  const auto stored = take<std::uint64_t>(buf, tail);
  if (fnv1a(buf.substr(0, body_end)) != stored) {
    throw CorruptArchive(path + ": checksum mismatch (truncated or modified)");
  }
  const auto header_len = take<std::uint64_t>(buf, pos);
  if (pos + header_len > body_end) throw CorruptArchive("checkpoint header truncated");
  RawArchive a;
  try {
    a.header = nlohmann::json::parse(buf.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptArchive(std::string("checkpoint header unreadable: ") + e.what());
  }
  pos += header_len;
  if (a.header.value("version", -1) != kCheckpointVersion) {
    throw VersionMismatch("checkpoint header version mismatch");
  }
  for (const auto& p : a.header.at("parameters")) {
    const auto rows = p.at("rows").get<std::size_t>();
    const auto cols = p.at("cols").get<std::size_t>();
    if (pos + rows * cols * sizeof(double) > body_end) {
      throw CorruptArchive("checkpoint parameter block truncated");
    }
    Matrix m(rows, cols);
    std::memcpy(m.data(), buf.data() + pos, rows * cols * sizeof(double));
    pos += rows * cols * sizeof(double);
    a.params.push_back(std::move(m));
  }
  if (pos != body_end) throw CorruptArchive("checkpoint has trailing bytes");
  return a;
}

void assign_params(Seq2SeqTransformer& net, const RawArchive& a) {
  auto& params = net.parameters();
  const auto& names = a.header.at("parameters");
  if (names.size() != params.size()) throw VersionMismatch("parameter count differs");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names[i].at("name").get<std::string>() != params[i].name ||
        !a.params[i].same_shape(params[i].var.value())) {
      throw VersionMismatch("parameter " + params[i].name + " differs in name or shape");
    }
    params[i].var.mutable_value() = a.params[i];
  }
}

}  // namespace

void save_checkpoint(const Seq2SeqTransformer& net, const Tokenizer& tokenizer,
                     const std::string& path, const std::string& kind,
                     const nlohmann::json& extra) {
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["kind"] = kind;
  header["config"] = net.config().to_json();
  header["vocabulary"] = tokenizer.tokens();
  header["unk"] = tokenizer.unk_id() ? nlohmann::json(tokenizer.token(*tokenizer.unk_id()))
                                     : nlohmann::json(nullptr);
  header["extra"] = extra;
  auto& shapes = header["parameters"] = nlohmann::json::array();
  for (const auto& p : net.parameters()) {
    shapes.push_back({{"name", p.name}, {"rows", p.var.rows()}, {"cols", p.var.cols()}});
  }
  const std::string hdr = header.dump();

  std::string buf(kMagic, sizeof(kMagic));
  put(buf, static_cast<std::uint32_t>(kCheckpointVersion));
  put(buf, static_cast<std::uint64_t>(hdr.size()));
  buf += hdr;
  for (const auto& p : net.parameters()) {
    const auto& v = p.var.value().values();
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  put(buf, fnv1a(buf));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

LoadedCheckpoint load_checkpoint(const std::string& path, bool trainable) {
  const auto a = read_archive(path);
  LoadedCheckpoint out;
  out.kind = a.header.value("kind", "");
  out.extra = a.header.value("extra", nlohmann::json::object());
  std::optional<std::string> unk;
  if (a.header.contains("unk") && a.header.at("unk").is_string()) unk = a.header.at("unk");
  out.tokenizer = Tokenizer(a.header.at("vocabulary").get<std::vector<std::string>>(), unk);
  out.net = Seq2SeqTransformer(ModelConfig::from_json(a.header.at("config")), 0, trainable);
  assign_params(out.net, a);
  return out;
}

void load_checkpoint_into(Seq2SeqTransformer& net, const std::string& path) {
  const auto a = read_archive(path);
  if (!(ModelConfig::from_json(a.header.at("config")) == net.config())) {
    throw VersionMismatch("checkpoint architecture differs from the target model");
  }
  assign_params(net, a);
}

void save_generator(const GeneratorModel& gen, const std::string& path) {
  save_checkpoint(gen.net, gen.tokenizer, path, "generator",
                  {{"max_output_len", gen.max_output_len}});
}

GeneratorModel load_generator(const std::string& path) {
  auto c = load_checkpoint(path, true);
  if (c.kind != "generator") throw VersionMismatch(path + " holds a " + c.kind + ", not a generator");
  return GeneratorModel(std::move(c.tokenizer), std::move(c.net),
                        c.extra.value("max_output_len", std::size_t{250}));
}

void save_scorer(const ScorerModel& scorer, const std::string& path) {
  save_checkpoint(scorer.net(), scorer.tokenizer(), path, "scorer");
}

ScorerModel load_scorer(const std::string& path) {
  auto c = load_checkpoint(path, false);
  if (c.kind != "scorer") throw VersionMismatch(path + " holds a " + c.kind + ", not a scorer");
  return ScorerModel(std::move(c.tokenizer), c.net);
}

}  // namespace dto
