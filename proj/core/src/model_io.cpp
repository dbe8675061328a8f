#include "prosody/strings.hpp"
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "prosody/training.hpp"

namespace prosody {

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < line.size()) {
    const std::size_t pos = line.find(' ', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    if (pos > start) out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

class ModelReader {
 public:
  ModelReader(std::istream& in, std::string_view source)
      : in_(in), source_(source) {}

  std::string next_line() {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file");
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  /// Next line must be "key <rest>"; returns <rest>.
  std::string expect_key(std::string_view key) {
    const std::string line = next_line();
    if (line.size() < key.size() || line.compare(0, key.size(), key) != 0 ||
        (line.size() > key.size() && line[key.size()] != ' ')) {
      fail(fmt("expected '{}', found '{}'", key, line));
    }
    return line.size() > key.size() ? line.substr(key.size() + 1) : "";
  }

  std::size_t parse_count(std::string_view text, std::string_view what) {
    std::size_t value = 0;
    bool any = false;
    for (char c : text) {
      if (c < '0' || c > '9') fail(fmt("bad {} '{}'", what, text));
      value = value * 10 + static_cast<std::size_t>(c - '0');
      any = true;
    }
    if (!any) fail(fmt("bad {} '{}'", what, text));
    return value;
  }

  double parse_value(std::string_view text, std::string_view what) {
    try {
      return parse_double(text);
    } catch (const std::invalid_argument&) {
      fail(fmt("bad {} '{}'", what, text));
    }
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ModelFormatError(
        fmt("{}:{}: {}", source_, line_no_, message));
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::string_view source_;
  std::size_t line_no_ = 0;
};

}  // namespace

std::string serialize_model(const ModelBundle& bundle) {
  const TrainConfig& c = bundle.config;
  std::string out;
  out += "prosody-model\n";
  out += fmt("schema_version {}\n", kModelSchemaVersion);
  out += fmt("level {}\n", level_name(c.level));
  out += fmt("topology {}\n", c.topology);
  out += fmt("hidden {}\n", c.hidden);
  out += fmt("features {}\n", feature_mode_name(c.features));
  out += fmt("cascade {}\n", c.cascade ? 1 : 0);
  out += fmt("input_dim {}\n", bundle.network.input_dim);
  out += fmt("learning_rate {}\n", format_double(c.learning_rate));
  out += fmt("momentum {}\n", format_double(c.momentum));
  out += fmt("batch_size {}\n", c.batch_size);
  out += fmt("patience {}\n", c.patience);
  out += fmt("max_epochs {}\n", c.max_epochs);
  out += fmt("seed {}\n", c.seed);
  out += fmt("select_by_f {}\n", c.select_by_f ? 1 : 0);
  out += "tag_order B NB O\n";

  if (c.features == FeatureMode::OneHot) {
    const auto& chars = bundle.dictionary.known_chars();
    out += fmt("dictionary {}\n", chars.size());
    for (const auto& ch : chars) {
      out += ch;
      out += '\n';
    }
  } else {
    if (bundle.embedding_source.empty()) {
      throw std::invalid_argument(
          "serialize_model: embedding-mode bundles record the embedding file "
          "by path; set embedding_source");
    }
    out += fmt("embedding_file {}\n", bundle.embedding_source);
    out += fmt("embedding_dim {}\n", bundle.embeddings.dim());
  }

  for (const auto& view : bundle.param_views()) {
    out += fmt("tensor {} {} {}\n", view.name, view.rows, view.cols);
    for (std::size_t r = 0; r < view.rows; ++r) {
      for (std::size_t col = 0; col < view.cols; ++col) {
        if (col > 0) out += ' ';
        out += format_double(view.values[r * view.cols + col]);
      }
      out += '\n';
    }
  }
  out += "end\n";
  return out;
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
  const std::string text = serialize_model(bundle);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(
        fmt("{}: cannot open for writing", path.string()));
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw std::runtime_error(fmt("{}: write failed", path.string()));
  }
}

ModelBundle load_model(std::istream& in, std::string_view source) {
  ModelReader reader(in, source);
  if (reader.next_line() != "prosody-model") {
    reader.fail("not a prosody-model file");
  }
  const std::size_t version =
      reader.parse_count(reader.expect_key("schema_version"), "version");
  if (version != static_cast<std::size_t>(kModelSchemaVersion)) {
    reader.fail(fmt("schema_version {} is not supported (expected {})",
                            version, kModelSchemaVersion));
  }

  TrainConfig config;
  {
    const std::string text = reader.expect_key("level");
    const auto level = parse_level(text);
    if (!level) reader.fail(fmt("unknown level '{}'", text));
    config.level = *level;
  }
  config.topology = reader.expect_key("topology");
  config.hidden = reader.parse_count(reader.expect_key("hidden"), "hidden size");
  {
    const std::string text = reader.expect_key("features");
    if (text == "onehot") {
      config.features = FeatureMode::OneHot;
    } else if (text == "embedding") {
      config.features = FeatureMode::Embedding;
    } else {
      reader.fail(fmt("unknown feature mode '{}'", text));
    }
  }
  config.cascade =
      reader.parse_count(reader.expect_key("cascade"), "cascade flag") != 0;
  const std::size_t input_dim =
      reader.parse_count(reader.expect_key("input_dim"), "input dimension");
  config.learning_rate =
      reader.parse_value(reader.expect_key("learning_rate"), "learning rate");
  config.momentum =
      reader.parse_value(reader.expect_key("momentum"), "momentum");
  config.batch_size =
      reader.parse_count(reader.expect_key("batch_size"), "batch size");
  config.patience =
      reader.parse_count(reader.expect_key("patience"), "patience");
  config.max_epochs =
      reader.parse_count(reader.expect_key("max_epochs"), "epoch limit");
  config.seed = reader.parse_count(reader.expect_key("seed"), "seed");
  config.select_by_f =
      reader.parse_count(reader.expect_key("select_by_f"), "flag") != 0;
  if (reader.expect_key("tag_order") != "B NB O") {
    reader.fail("tag order does not match this build (B NB O)");
  }

  ModelBundle bundle;
  bundle.config = config;
  if (config.features == FeatureMode::OneHot) {
    const std::size_t n =
        reader.parse_count(reader.expect_key("dictionary"), "dictionary size");
    std::vector<std::string> chars;
    chars.reserve(n);
    for (std::size_t i = 0; i < n; ++i) chars.push_back(reader.next_line());
    bundle.dictionary = CharDictionary(std::move(chars));
  } else {
    bundle.embedding_source = reader.expect_key("embedding_file");
    const std::size_t dim = reader.parse_count(
        reader.expect_key("embedding_dim"), "embedding dimension");
    try {
      bundle.embeddings = load_embeddings_text(
          std::filesystem::path(bundle.embedding_source));
    } catch (const std::exception& e) {
      reader.fail(fmt("cannot load referenced embeddings: {}",
                              e.what()));
    }
    if (bundle.embeddings.dim() != dim) {
      reader.fail(fmt(
          "embedding file '{}' has dimension {} but the model was trained "
          "with {}",
          bundle.embedding_source, bundle.embeddings.dim(), dim));
    }
  }

  if (bundle.base_dim() + (config.cascade ? 1 : 0) != input_dim) {
    reader.fail(fmt(
        "input_dim {} does not match feature dimension {} (+{} cascade)",
        input_dim, bundle.base_dim(), config.cascade ? 1 : 0));
  }

  // Build the right shapes, then overwrite every value from the file.
  Rng dummy(0);
  try {
    bundle.network = make_network(config.topology, input_dim, config.hidden,
                                  dummy);
  } catch (const std::invalid_argument& e) {
    reader.fail(e.what());
  }
  bundle.transitions = make_transitions(dummy);

  std::unordered_map<std::string, ParamView> by_name;
  for (auto& view : bundle.param_views()) by_name.emplace(view.name, view);
  std::unordered_map<std::string, bool> filled;
  for (const auto& [name, view] : by_name) filled[name] = false;

  while (true) {
    const std::string line = reader.next_line();
    if (line == "end") break;
    const auto fields = split_spaces(line);
    if (fields.size() != 4 || fields[0] != "tensor") {
      reader.fail(fmt("expected 'tensor <name> <rows> <cols>' or "
                              "'end', found '{}'",
                              line));
    }
    const std::string name(fields[1]);
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      reader.fail(fmt("tensor '{}' does not exist in a {} H={} model",
                              name, config.topology, config.hidden));
    }
    if (filled[name]) reader.fail(fmt("tensor '{}' repeated", name));
    const std::size_t rows = reader.parse_count(fields[2], "row count");
    const std::size_t cols = reader.parse_count(fields[3], "column count");
    ParamView& view = it->second;
    if (rows != view.rows || cols != view.cols) {
      reader.fail(fmt("tensor '{}' is {}x{} in the file but {}x{} in "
                              "this architecture",
                              name, rows, cols, view.rows, view.cols));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const std::string row_line = reader.next_line();
      const auto values = split_spaces(row_line);
      if (values.size() != cols) {
        reader.fail(fmt("tensor '{}' row {} has {} values, expected "
                                "{}",
                                name, r, values.size(), cols));
      }
      for (std::size_t col = 0; col < cols; ++col) {
        view.values[r * cols + col] =
            reader.parse_value(values[col], "tensor value");
      }
    }
    filled[name] = true;
  }

  for (const auto& [name, done] : filled) {
    if (!done) reader.fail(fmt("tensor '{}' missing", name));
  }
  return bundle;
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ModelFormatError(
        fmt("{}: cannot open model file", path.string()));
  }
  return load_model(in, path.string());
}

}  // namespace prosody
