#include "tea/model_config_io.hpp"

#include <json.hpp>

namespace tea {

using nlohmann::json;

namespace {

const char* to_string(FineGrainedSource s) {
  return s == FineGrainedSource::SceneText ? "scene_text" : "scene_text_and_objects";
}
const char* to_string(GlobalFeatureSource s) {
  return s == GlobalFeatureSource::PooledEntities ? "pooled_entities" : "external_file";
}

}  // namespace

std::string model_config_to_json(const ModelConfig& c) {
  json j;
  j["d"] = c.d;
  j["d_z"] = c.d_z;
  j["heads"] = c.heads;
  j["encoder_layers"] = c.encoder_layers;
  j["decoder_layers"] = c.decoder_layers;
  j["ff_width"] = c.ff_width;
  j["vocab_size"] = c.vocab_size;
  j["max_answer_len"] = c.max_answer_len;
  j["max_input_len"] = c.max_input_len;
  j["text_slots"] = c.text_slots;
  j["object_slots"] = c.object_slots;
  j["relpos_buckets"] = c.relpos_buckets;
  j["relpos_max_distance"] = c.relpos_max_distance;
  j["frame_local_attention"] = c.frame_local_attention;
  j["dropout"] = c.dropout;
  j["enable_spatial_bias"] = c.enable_spatial_bias;
  j["enable_temporal_adapter"] = c.enable_temporal_adapter;
  j["enable_clues"] = c.enable_clues;
  j["per_layer_spatial_bias"] = c.per_layer_spatial_bias;
  j["spatial"] = {{"d_s", c.spatial.d_s},
                  {"base", c.spatial.base},
                  {"delta_scale", c.spatial.delta_scale},
                  {"init_std", c.spatial.init_std},
                  {"multi_granularity", c.spatial.multi_granularity},
                  {"all_phases", c.spatial.all_phases}};
  j["adapter"] = {{"reduction", c.adapter.reduction},
                  {"kernel_t", c.adapter.kernel_t},
                  {"kernel_e", c.adapter.kernel_e},
                  {"depthwise", c.adapter.depthwise}};
  j["clues"] = {{"num_clues", c.clues.num_clues},
                {"layers", c.clues.layers},
                {"fine_grained_source", to_string(c.clues.fine_grained_source)},
                {"global_feature_source", to_string(c.clues.global_feature_source)},
                {"external_dim", c.clues.external_dim}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.d = j.at("d");
  c.d_z = j.at("d_z");
  c.heads = j.at("heads");
  c.encoder_layers = j.at("encoder_layers");
  c.decoder_layers = j.at("decoder_layers");
  c.ff_width = j.at("ff_width");
  c.vocab_size = j.at("vocab_size");
  c.max_answer_len = j.at("max_answer_len");
  c.max_input_len = j.at("max_input_len");
  c.text_slots = j.at("text_slots");
  c.object_slots = j.at("object_slots");
  c.relpos_buckets = j.at("relpos_buckets");
  c.relpos_max_distance = j.at("relpos_max_distance");
  c.frame_local_attention = j.at("frame_local_attention");
  c.dropout = j.at("dropout");
  c.enable_spatial_bias = j.at("enable_spatial_bias");
  c.enable_temporal_adapter = j.at("enable_temporal_adapter");
  c.enable_clues = j.at("enable_clues");
  c.per_layer_spatial_bias = j.at("per_layer_spatial_bias");
  const auto& s = j.at("spatial");
  c.spatial.d_s = s.at("d_s");
  c.spatial.base = s.at("base");
  c.spatial.delta_scale = s.at("delta_scale");
  c.spatial.init_std = s.at("init_std");
  c.spatial.multi_granularity = s.at("multi_granularity");
  c.spatial.all_phases = s.value("all_phases", false);
  c.spatial.heads = c.heads;
  const auto& a = j.at("adapter");
  c.adapter.reduction = a.at("reduction");
  c.adapter.kernel_t = a.at("kernel_t");
  c.adapter.kernel_e = a.at("kernel_e");
  c.adapter.depthwise = a.at("depthwise");
  const auto& cl = j.at("clues");
  c.clues.num_clues = cl.at("num_clues");
  c.clues.layers = cl.at("layers");
  c.clues.fine_grained_source = cl.at("fine_grained_source") == "scene_text"
                                    ? FineGrainedSource::SceneText
                                    : FineGrainedSource::SceneTextAndObjects;
  c.clues.global_feature_source = cl.at("global_feature_source") == "pooled_entities"
                                      ? GlobalFeatureSource::PooledEntities
                                      : GlobalFeatureSource::ExternalFile;
  c.clues.external_dim = cl.at("external_dim");
  return c;
}

}  // namespace tea
