#include "brightvae/config_json.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace brightvae {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items())
    if (!known.count(key))
      throw std::invalid_argument("unknown key \"" + key + "\" in " + where + " config");
}

BrightVAEConfig model_config_from(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  reject_unknown_keys(j,
                      {"channels", "codebook_size", "heads", "beta", "lambda_rest",
                       "lambda_latent", "lambda_similarity", "similarity_loss",
                       "two_receptive_fields", "skip_connection", "use_attencoder",
                       "use_attenquant", "use_similarity_loss", "seed"},
                      "model");
  BrightVAEConfig cfg;
  cfg.channels = j.value("channels", cfg.channels);
  cfg.codebook_size = j.value("codebook_size", cfg.codebook_size);
  cfg.heads = j.value("heads", cfg.heads);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.lambda_rest = j.value("lambda_rest", cfg.lambda_rest);
  cfg.lambda_latent = j.value("lambda_latent", cfg.lambda_latent);
  cfg.lambda_similarity = j.value("lambda_similarity", cfg.lambda_similarity);
  if (j.contains("similarity_loss"))
    cfg.similarity_loss_kind =
        similarity_kind_from_string(j.at("similarity_loss").get<std::string>());
  cfg.two_receptive_fields = j.value("two_receptive_fields", cfg.two_receptive_fields);
  cfg.skip_connection = j.value("skip_connection", cfg.skip_connection);
  cfg.use_attencoder = j.value("use_attencoder", cfg.use_attencoder);
  cfg.use_attenquant = j.value("use_attenquant", cfg.use_attenquant);
  cfg.use_similarity_loss = j.value("use_similarity_loss", cfg.use_similarity_loss);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  reject_unknown_keys(j,
                      {"epochs", "batch_size", "lr_max", "lr_min", "warmup_epochs",
                       "cycle_epochs", "seed", "checkpoint_every", "eval_every", "grad_clip",
                       "precision", "extractor", "extractor_seed", "kld_bins", "device"},
                      "train");
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr_max = j.value("lr_max", cfg.lr_max);
  cfg.lr_min = j.value("lr_min", cfg.lr_min);
  cfg.warmup_epochs = j.value("warmup_epochs", cfg.warmup_epochs);
  cfg.cycle_epochs = j.value("cycle_epochs", cfg.cycle_epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.eval_every = j.value("eval_every", cfg.eval_every);
  cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
  cfg.precision = j.value("precision", cfg.precision);
  cfg.extractor = j.value("extractor", cfg.extractor);
  cfg.extractor_seed = j.value("extractor_seed", cfg.extractor_seed);
  cfg.kld_bins = j.value("kld_bins", cfg.kld_bins);
  cfg.device = j.value("device", cfg.device);
  cfg.validate();
  return cfg;
}

json to_json_obj(const BrightVAEConfig& cfg) {
  return json{{"channels", cfg.channels},
              {"codebook_size", cfg.codebook_size},
              {"heads", cfg.heads},
              {"beta", cfg.beta},
              {"lambda_rest", cfg.lambda_rest},
              {"lambda_latent", cfg.lambda_latent},
              {"lambda_similarity", cfg.lambda_similarity},
              {"similarity_loss", to_string(cfg.similarity_loss_kind)},
              {"two_receptive_fields", cfg.two_receptive_fields},
              {"skip_connection", cfg.skip_connection},
              {"use_attencoder", cfg.use_attencoder},
              {"use_attenquant", cfg.use_attenquant},
              {"use_similarity_loss", cfg.use_similarity_loss},
              {"seed", cfg.seed}};
}

json to_json_obj(const TrainConfig& cfg) {
  return json{{"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"lr_max", cfg.lr_max},
              {"lr_min", cfg.lr_min},
              {"warmup_epochs", cfg.warmup_epochs},
              {"cycle_epochs", cfg.cycle_epochs},
              {"seed", cfg.seed},
              {"checkpoint_every", cfg.checkpoint_every},
              {"eval_every", cfg.eval_every},
              {"grad_clip", cfg.grad_clip},
              {"precision", cfg.precision},
              {"extractor", cfg.extractor},
              {"extractor_seed", cfg.extractor_seed},
              {"kld_bins", cfg.kld_bins},
              {"device", cfg.device}};
}

json parse_or_throw(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw std::invalid_argument("malformed JSON in " + what);
  return j;
}

}  // namespace

BrightVAEConfig model_config_from_json(const std::string& json_text) {
  return model_config_from(parse_or_throw(json_text, "model config"));
}

TrainConfig train_config_from_json(const std::string& json_text) {
  return train_config_from(parse_or_throw(json_text, "train config"));
}

FullConfig parse_config_text(const std::string& json_text) {
  json j = parse_or_throw(json_text, "config");
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  reject_unknown_keys(j, {"model", "train"}, "top-level");
  FullConfig cfg;
  if (j.contains("model")) cfg.model = model_config_from(j.at("model"));
  if (j.contains("train")) cfg.train = train_config_from(j.at("train"));
  return cfg;
}

FullConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string to_json_string(const BrightVAEConfig& cfg) { return to_json_obj(cfg).dump(2); }

std::string to_json_string(const TrainConfig& cfg) { return to_json_obj(cfg).dump(2); }

std::string to_json_string(const FullConfig& cfg) {
  return json{{"model", to_json_obj(cfg.model)}, {"train", to_json_obj(cfg.train)}}.dump(2);
}

uint64_t config_hash(const std::string& canonical_json) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canonical_json) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace brightvae
