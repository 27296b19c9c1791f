#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibn/errors.hpp"
#include "ibn/service/store.hpp"

namespace ibn::service {

struct ModelVersion {
  std::string id;
  std::string checkpoint; // relative to the registry directory
  nlohmann::json metrics = nlohmann::json::object();
  std::string created_at;

  bool operator==(const ModelVersion&) const = default;
};

struct RegistryFailure {
  std::string reason;
  std::string at;

  bool operator==(const RegistryFailure&) const = default;
};

/// Append-only list of model versions with one active version. Every change is
/// an event in registry.jsonl; opening the directory replays them. Not
/// synchronized: the owning service serializes access.
class ModelRegistry {
public:
  ModelRegistry() = default;
  explicit ModelRegistry(const std::filesystem::path& dir)
      : dir_(dir), log_(dir / "registry.jsonl") {
    for (const auto& e : log_.replay())
      apply(e);
  }

  const std::filesystem::path& dir() const { return dir_; }
  const std::vector<ModelVersion>& versions() const { return versions_; }
  const std::vector<RegistryFailure>& failures() const { return failures_; }
  const std::optional<std::string>& active() const { return active_; }
  bool empty() const { return versions_.empty(); }

  const ModelVersion& version(const std::string& id) const {
    for (const auto& v : versions_)
      if (v.id == id)
        return v;
    throw NotFoundError("no model version '" + id + "'");
  }

  const ModelVersion& active_version() const {
    if (!active_)
      throw StateError("no active model version");
    return version(*active_);
  }

  std::filesystem::path checkpoint_path(const ModelVersion& v) const { return dir_ / v.checkpoint; }

  std::string next_id() const { return "v" + std::to_string(versions_.size() + 1); }

  void add(const ModelVersion& v) {
    for (const auto& existing : versions_)
      if (existing.id == v.id)
        throw StateError("model version '" + v.id + "' already registered");
    nlohmann::json e{{"event", "register"},
                     {"id", v.id},
                     {"checkpoint", v.checkpoint},
                     {"metrics", v.metrics},
                     {"created_at", v.created_at}};
    log_.append(e);
    apply(e);
  }

  void activate(const std::string& id, const std::string& at) {
    version(id);
    nlohmann::json e{{"event", "activate"}, {"id", id}, {"at", at}};
    log_.append(e);
    apply(e);
  }

  void record_failure(const std::string& reason, const std::string& at) {
    nlohmann::json e{{"event", "failed"}, {"reason", reason}, {"at", at}};
    log_.append(e);
    apply(e);
  }

private:
  void apply(const nlohmann::json& e) {
    const std::string kind = e.at("event").get<std::string>();
    if (kind == "register") {
      versions_.push_back({e.at("id").get<std::string>(), e.at("checkpoint").get<std::string>(),
                           e.at("metrics"), e.at("created_at").get<std::string>()});
    } else if (kind == "activate") {
      active_ = e.at("id").get<std::string>();
    } else if (kind == "failed") {
      failures_.push_back({e.at("reason").get<std::string>(), e.at("at").get<std::string>()});
    } else {
      throw IoError("unknown registry event '" + kind + "'");
    }
  }

  std::filesystem::path dir_;
  EventLog log_;
  std::vector<ModelVersion> versions_;
  std::vector<RegistryFailure> failures_;
  std::optional<std::string> active_;
};

} // namespace ibn::service
