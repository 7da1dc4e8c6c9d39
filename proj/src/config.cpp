#include "rpulstm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rpulstm {

using nlohmann::json;

std::string ModelConfig::display_name() const {
  if (!name.empty()) return name;
  return "LSTM" + std::to_string(depth) + "-" + std::to_string(hidden);
}

void ExperimentConfig::validate() const {
  if (model.depth < 1) throw std::invalid_argument("model.depth: must be >= 1");
  if (model.hidden < 1) throw std::invalid_argument("model.hidden: must be >= 1");
  training.validate();
  rpu.validate();
  if (output.checkpoint_every < 1) {
    throw std::invalid_argument("output.checkpoint_every: must be >= 1");
  }
}

std::size_t ExperimentConfig::test_chars_for(std::size_t corpus_chars) const {
  return data.test_chars > 0 ? data.test_chars : corpus_chars / 10;
}

LstmShape ExperimentConfig::shape(std::size_t vocab) const {
  return LstmShape::character_model(model.depth, model.hidden, vocab);
}

NetworkOptions ExperimentConfig::network_options() const {
  return {training.mode, rpu, training.seed, model.zero_head_init};
}

namespace {

class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw std::invalid_argument(where() + ": expected an object");
  }

  template <typename Fn>
  void field(const std::string& key, Fn&& assign) {
    known_.insert(key);
    auto it = obj_.find(key);
    if (it != obj_.end()) assign(*it, path_.empty() ? key : path_ + "." + key);
  }

  void real(const std::string& key, double& out) {
    field(key, [&](const json& v, const std::string& p) {
      if (!v.is_number()) throw std::invalid_argument(p + ": expected a number");
      out = v.get<double>();
    });
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    field(key, [&](const json& v, const std::string& p) {
      if (!v.is_number_integer()) throw std::invalid_argument(p + ": expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) {
          out = v.get<Int>();
          return;
        }
        throw std::invalid_argument(p + ": expected a non-negative integer");
      } else {
        out = v.get<Int>();
      }
    });
  }

  void boolean(const std::string& key, bool& out) {
    field(key, [&](const json& v, const std::string& p) {
      if (!v.is_boolean()) throw std::invalid_argument(p + ": expected true or false");
      out = v.get<bool>();
    });
  }

  void string(const std::string& key, std::string& out) {
    field(key, [&](const json& v, const std::string& p) {
      if (!v.is_string()) throw std::invalid_argument(p + ": expected a string");
      out = v.get<std::string>();
    });
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!known_.count(key)) {
        throw std::invalid_argument("unknown key " + (path_.empty() ? key : path_ + "." + key));
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> known_;
};

template <typename Fn>
void wrap(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    // Enum parsers report without the key path.
    if (msg.rfind(path, 0) == 0) throw;
    throw std::invalid_argument(path + ": " + msg);
  }
}

void read_rpu(const json& doc, RpuConfig& rpu) {
  ObjectReader r(doc, "rpu");
  r.integer("bl", rpu.bl);
  r.real("dw_min", rpu.dw_min);
  r.real("dw_min_dtod", rpu.dw_min_dtod);
  r.real("dw_min_ctoc", rpu.dw_min_ctoc);
  r.real("asym_dtod", rpu.asym_dtod);
  r.real("w_bound", rpu.w_bound);
  r.real("w_bound_dtod", rpu.w_bound_dtod);
  r.real("noise_sigma", rpu.noise_sigma);
  r.real("out_bound", rpu.out_bound);
  r.integer("in_bits", rpu.in_bits);
  r.integer("out_bits", rpu.out_bits);
  r.field("rounding", [&](const json& v, const std::string& p) {
    if (!v.is_string()) throw std::invalid_argument(p + ": expected a string");
    wrap(p, [&] { rpu.rounding = rounding_from_string(v.get<std::string>()); });
  });
  r.real("states_multiplier", rpu.states_multiplier);
  r.finish();
}

TileMode mode_from_string(const std::string& text) {
  if (text == "analog") return TileMode::analog;
  if (text == "fp") return TileMode::fp;
  throw std::invalid_argument("expected \"analog\" or \"fp\", got \"" + text + "\"");
}

}  // namespace

json rpu_to_json(const RpuConfig& c) {
  return json{{"bl", c.bl},
              {"dw_min", c.dw_min},
              {"dw_min_dtod", c.dw_min_dtod},
              {"dw_min_ctoc", c.dw_min_ctoc},
              {"asym_dtod", c.asym_dtod},
              {"w_bound", c.w_bound},
              {"w_bound_dtod", c.w_bound_dtod},
              {"noise_sigma", c.noise_sigma},
              {"out_bound", c.out_bound},
              {"in_bits", c.in_bits},
              {"out_bits", c.out_bits},
              {"rounding", std::string(to_string(c.rounding))},
              {"states_multiplier", c.states_multiplier}};
}

json to_json(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.training;
  return json{
      {"model",
       {{"depth", cfg.model.depth},
        {"hidden", cfg.model.hidden},
        {"name", cfg.model.name},
        {"zero_head_init", cfg.model.zero_head_init}}},
      {"training",
       {{"lr", t.lr},
        {"dropout_p", t.dropout_p},
        {"bptt", t.bptt},
        {"epochs", t.epochs},
        {"seed", t.seed},
        {"mode", t.mode == TileMode::analog ? "analog" : "fp"},
        {"noiseless_eval", t.noiseless_eval},
        {"eval_every_windows", t.eval_every_windows}}},
      {"rpu", rpu_to_json(cfg.rpu)},
      {"data", {{"path", cfg.data.path}, {"test_chars", cfg.data.test_chars}}},
      {"output",
       {{"dir", cfg.output.dir},
        {"record_wall_time", cfg.output.record_wall_time},
        {"checkpoint_every", cfg.output.checkpoint_every}}},
  };
}

ExperimentConfig parse_config(const json& doc, ExperimentConfig cfg) {
  ObjectReader top(doc, "");
  top.field("model", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.integer("depth", cfg.model.depth);
    r.integer("hidden", cfg.model.hidden);
    r.string("name", cfg.model.name);
    r.boolean("zero_head_init", cfg.model.zero_head_init);
    r.finish();
  });
  top.field("training", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.real("lr", cfg.training.lr);
    r.real("dropout_p", cfg.training.dropout_p);
    r.integer("bptt", cfg.training.bptt);
    r.integer("epochs", cfg.training.epochs);
    r.integer("seed", cfg.training.seed);
    r.field("mode", [&](const json& m, const std::string& mp) {
      if (!m.is_string()) throw std::invalid_argument(mp + ": expected a string");
      wrap(mp, [&] { cfg.training.mode = mode_from_string(m.get<std::string>()); });
    });
    r.boolean("noiseless_eval", cfg.training.noiseless_eval);
    r.integer("eval_every_windows", cfg.training.eval_every_windows);
    r.finish();
  });
  top.field("rpu", [&](const json& v, const std::string&) { read_rpu(v, cfg.rpu); });
  top.field("data", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.string("path", cfg.data.path);
    r.integer("test_chars", cfg.data.test_chars);
    r.finish();
  });
  top.field("output", [&](const json& v, const std::string& p) {
    ObjectReader r(v, p);
    r.string("dir", cfg.output.dir);
    r.boolean("record_wall_time", cfg.output.record_wall_time);
    r.integer("checkpoint_every", cfg.output.checkpoint_every);
    r.finish();
  });
  top.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc, std::move(base));
}

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

}  // namespace rpulstm
