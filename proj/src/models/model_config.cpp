#include "phonecls/errors.hpp"
#include "phonecls/models/classifier.hpp"

namespace phonecls {

using nlohmann::json;

void CnnEncoderConfig::validate() const {
  if (stages.size() != 2) throw ConfigError("CNN encoder needs exactly two conv + pool stages");
  Eigen::Index h = input_height, w = input_width;
  for (const auto& st : stages) {
    if (st.out_channels <= 0 || st.kernel <= 0 || st.pool <= 0) {
      throw ConfigError("CNN stage sizes must be positive");
    }
    h -= st.kernel - 1;
    w -= st.kernel - 1;
    if (h < st.pool || w < st.pool) throw ConfigError("CNN stages shrink the feature map below one cell");
    h /= st.pool;
    w /= st.pool;
  }
}

Eigen::Index CnnEncoderConfig::output_dim() const {
  validate();
  Eigen::Index h = input_height, w = input_width;
  for (const auto& st : stages) {
    h = (h - st.kernel + 1) / st.pool;
    w = (w - st.kernel + 1) / st.pool;
  }
  return h * w * stages.back().out_channels;
}

json CnnEncoderConfig::to_json() const {
  json s = json::array();
  for (const auto& st : stages) s.push_back({{"out_channels", st.out_channels}, {"kernel", st.kernel}, {"pool", st.pool}});
  return {{"input_height", input_height}, {"input_width", input_width}, {"stages", s},
          {"activation", "relu"}, {"trainable", trainable}};
}

CnnEncoderConfig CnnEncoderConfig::from_json(const json& j) {
  CnnEncoderConfig c;
  c.input_height = j.value("input_height", c.input_height);
  c.input_width = j.value("input_width", c.input_width);
  c.trainable = j.value("trainable", c.trainable);
  if (j.contains("stages")) {
    c.stages.clear();
    for (const auto& s : j.at("stages")) {
      c.stages.push_back({s.at("out_channels").get<int>(), s.at("kernel").get<int>(), s.at("pool").get<int>()});
    }
  }
  c.validate();
  return c;
}

void ClassifierHeadConfig::validate() const {
  if (n_classes <= 0) throw ConfigError("classifier head needs a positive class count");
  for (int d : hidden_dims) {
    if (d <= 0) throw ConfigError("classifier hidden widths must be positive");
  }
}

json ClassifierHeadConfig::to_json() const {
  return {{"hidden_dims", hidden_dims}, {"n_classes", n_classes}, {"activation", "relu"}};
}

ClassifierHeadConfig ClassifierHeadConfig::from_json(const json& j) {
  ClassifierHeadConfig c;
  c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.validate();
  return c;
}

void SslBackendHandle::validate() const {
  if (backend_id.empty()) throw ConfigError("SSL backend_id is empty");
  if (hidden_layers != 6 && hidden_layers != 12 && hidden_layers != 24) {
    throw ConfigError("SSL hidden_layers must be 6, 12 or 24");
  }
  if (embedding_dim <= 0) throw ConfigError("SSL embedding_dim must be positive");
  if (layer_index < -1 || layer_index > hidden_layers) throw ConfigError("SSL layer_index out of range");
  if (sample_rate_hz <= 0) throw ConfigError("SSL sample rate must be positive");
}

std::string SslBackendHandle::scheme() const { return backend_id.substr(0, backend_id.find(':')); }

json SslBackendHandle::to_json() const {
  return {{"backend_id", backend_id}, {"hidden_layers", hidden_layers}, {"trainable", trainable},
          {"embedding_dim", embedding_dim}, {"layer_index", layer_index}, {"sample_rate_hz", sample_rate_hz}};
}

SslBackendHandle SslBackendHandle::from_json(const json& j) {
  SslBackendHandle h;
  h.backend_id = j.value("backend_id", h.backend_id);
  h.hidden_layers = j.value("hidden_layers", h.hidden_layers);
  h.trainable = j.value("trainable", h.trainable);
  h.embedding_dim = j.value("embedding_dim", h.embedding_dim);
  h.layer_index = j.value("layer_index", h.layer_index);
  h.sample_rate_hz = j.value("sample_rate_hz", h.sample_rate_hz);
  h.validate();
  return h;
}

int FrontEndGeometry::frame_count(int samples) {
  int len = samples;
  for (int i = 0; i < kLayers; ++i) {
    if (len < kKernels[i]) return 0;
    len = (len - kKernels[i]) / kStrides[i] + 1;
  }
  return len;
}

int FrontEndGeometry::receptive_field() {
  int field = 1, jump = 1;
  for (int i = 0; i < kLayers; ++i) {
    field += (kKernels[i] - 1) * jump;
    jump *= kStrides[i];
  }
  return field;
}

int FrontEndGeometry::total_stride() {
  int jump = 1;
  for (int s : kStrides) jump *= s;
  return jump;
}

std::string to_string(EncoderKind kind) { return kind == EncoderKind::cnn ? "cnn" : "ssl"; }

EncoderKind parse_encoder_kind(const std::string& text) {
  if (text == "cnn") return EncoderKind::cnn;
  if (text == "ssl") return EncoderKind::ssl;
  throw ConfigError("unknown encoder kind '" + text + "'");
}

json ModelConfig::to_json() const {
  json j = {{"encoder", to_string(encoder)}, {"head", head.to_json()}, {"init_seed", init_seed}};
  if (encoder == EncoderKind::cnn) {
    j["cnn"] = cnn.to_json();
  } else {
    j["ssl"] = ssl.to_json();
  }
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.encoder = parse_encoder_kind(j.value("encoder", std::string("cnn")));
  if (j.contains("cnn")) c.cnn = CnnEncoderConfig::from_json(j.at("cnn"));
  if (j.contains("ssl")) c.ssl = SslBackendHandle::from_json(j.at("ssl"));
  if (j.contains("head")) c.head = ClassifierHeadConfig::from_json(j.at("head"));
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

}  // namespace phonecls
