#include "sensia/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sensia/errors.hpp"

namespace sensia {

namespace {

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kTokenEmbedding:
      return "token_embedding";
    case ParamGroup::kSenseProjection:
      return "sense_projection";
    case ParamGroup::kContextNet:
      return "context_net";
    case ParamGroup::kWeightHead:
      return "weight_head";
    case ParamGroup::kOutputHead:
      return "output_head";
  }
  return "unknown";
}

ParamGroup parse_group(const std::string& s, std::size_t line) {
  for (ParamGroup g : {ParamGroup::kTokenEmbedding, ParamGroup::kSenseProjection,
                       ParamGroup::kContextNet, ParamGroup::kWeightHead,
                       ParamGroup::kOutputHead}) {
    if (s == group_name(g)) return g;
  }
  throw ParseError("unknown parameter group '" + s + "'", line);
}

void write_f32_le(std::ostream& out, double v) {
  const auto f = static_cast<float>(v);
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char buf[4];
  std::memcpy(buf, &bits, 4);
  out.write(buf, 4);
}

}  // namespace

void save_checkpoint(const BackpackModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot open checkpoint for writing: " + path);
  const ModelConfig& c = model.config();
  out << "SENSIA-CHECKPOINT\n"
      << "format_version=" << kCheckpointFormatVersion << "\n"
      << "seed=" << model.seed() << "\n"
      << "model.vocab_size=" << c.vocab_size << "\n"
      << "model.d_model=" << c.d_model << "\n"
      << "model.n_layers=" << c.n_layers << "\n"
      << "model.n_heads=" << c.n_heads << "\n"
      << "model.n_senses=" << c.n_senses << "\n"
      << "model.max_positions=" << c.max_positions << "\n"
      << "model.tie_output=" << (c.tie_output ? 1 : 0) << "\n"
      << "param_count=" << model.parameters().size() << "\n";
  std::size_t offset = 0;
  for (const Parameter& p : model.parameters()) {
    out << "param " << p.name << " " << group_name(p.group) << " ";
    const auto& shape = p.tensor.shape();
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
    out << " " << offset << "\n";
    offset += p.tensor.size();
  }
  out << "end\n";
  for (const Parameter& p : model.parameters()) {
    for (double v : p.tensor.values()) write_f32_le(out, v);
  }
  if (!out) throw InvalidArgument("failed writing checkpoint: " + path);
}

BackpackModel load_checkpoint(const std::string& path) { return CheckpointReader::read(path); }

BackpackModel CheckpointReader::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open checkpoint: " + path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != "SENSIA-CHECKPOINT") {
    throw ParseError("not a checkpoint file", line_no);
  }
  BackpackModel model;
  struct Entry {
    std::string name;
    ParamGroup group;
    ad::Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  std::size_t expected_params = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line == "end") break;
    if (line.starts_with("param ")) {
      std::istringstream ls(line.substr(6));
      Entry e;
      std::string group, dims;
      if (!(ls >> e.name >> group >> dims >> e.offset)) throw ParseError("bad param line", line_no);
      e.group = parse_group(group, line_no);
      std::istringstream ds(dims);
      std::string dim;
      while (std::getline(ds, dim, 'x')) e.shape.push_back(std::stoul(dim));
      entries.push_back(std::move(e));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", line_no);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    ModelConfig& c = model.config_;
    if (key == "format_version") {
      if (std::stoi(value) != kCheckpointFormatVersion) {
        throw ParseError("unsupported checkpoint version " + value, line_no);
      }
    } else if (key == "seed") {
      model.seed_ = std::stoull(value);
    } else if (key == "model.vocab_size") {
      c.vocab_size = std::stoul(value);
    } else if (key == "model.d_model") {
      c.d_model = std::stoul(value);
    } else if (key == "model.n_layers") {
      c.n_layers = std::stoul(value);
    } else if (key == "model.n_heads") {
      c.n_heads = std::stoul(value);
    } else if (key == "model.n_senses") {
      c.n_senses = std::stoul(value);
    } else if (key == "model.max_positions") {
      c.max_positions = std::stoul(value);
    } else if (key == "model.tie_output") {
      c.tie_output = value == "1";
    } else if (key == "param_count") {
      expected_params = std::stoul(value);
    } else {
      throw ParseError("unknown header key '" + key + "'", line_no);
    }
  }
  if (line != "end") throw ParseError("missing end of header", line_no);
  if (entries.size() != expected_params) throw ParseError("param_count mismatch", line_no);
  model.config_.validate();

  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (const Entry& e : entries) {
    const std::size_t n = ad::shape_size(e.shape);
    if ((e.offset + n) * 4 > raw.size()) throw ParseError("truncated parameter data for " + e.name, line_no);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, raw.data() + (e.offset + i) * 4, 4);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      values[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    model.params_.push_back({e.name, e.group, ad::Tensor::from(e.shape, std::move(values), true)});
  }
  // Reference model with the same config must expose the same manifest.
  BackpackModel reference(model.config_, 0);
  for (const Parameter& p : reference.parameters()) {
    const Parameter* q = model.find(p.name);
    if (!q || q->tensor.shape() != p.tensor.shape()) {
      throw ParseError("checkpoint manifest does not match config at " + p.name, line_no);
    }
  }
  return model;
}

}  // namespace sensia
