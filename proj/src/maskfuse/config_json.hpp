#ifndef MASKFUSE_CONFIG_JSON_HPP_
#define MASKFUSE_CONFIG_JSON_HPP_

#include <filesystem>
#include <string>

#include <json.hpp>

#include "maskfuse/pipeline.hpp"

namespace maskfuse {

using Json = nlohmann::ordered_json;

Json config_to_json(const PipelineConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected (kConfig).
// Accepts either a bare config or a report carrying one under "config".
PipelineConfig config_from_json(const Json& j);

Json report_to_json(const MetricsReport& report);
// Report plus the resolved config and manifest path for auditing.
Json report_document(const MetricsReport& report, const PipelineConfig& cfg,
                     const std::filesystem::path& manifest);
Json pipeline_document(const PipelineResult& result, const PipelineConfig& cfg,
                       const std::filesystem::path& manifest);

// class,iou rows; empty iou for classes absent from both maps.
std::string per_class_csv(const MetricsReport& report);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace maskfuse

#endif  // MASKFUSE_CONFIG_JSON_HPP_
