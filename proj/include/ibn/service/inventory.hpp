#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibn/errors.hpp"
#include "ibn/pipeline/intent.hpp"
#include "ibn/tokenizer/text.hpp"

namespace ibn::service {

struct Device {
  std::string name;
  std::string vendor;
  std::string device_type;
  std::string location;
};

/// Static device list the simulated inner loop validates payloads against.
/// Vendors, types and locations are compared lowercased.
class Inventory {
public:
  Inventory() = default;
  explicit Inventory(std::vector<Device> devices) : devices_(std::move(devices)) {
    for (auto& d : devices_) {
      if (d.name.empty() || d.vendor.empty() || d.device_type.empty())
        throw ValidationError("inventory device needs name, vendor and device_type");
      d.vendor = tokenizer::to_lower(d.vendor);
      d.device_type = tokenizer::to_lower(d.device_type);
      d.location = tokenizer::to_lower(d.location);
      vendors_.insert(d.vendor);
      types_.insert(d.device_type);
    }
  }

  static Inventory from_json(const nlohmann::json& j) {
    std::vector<Device> devices;
    try {
      for (const auto& d : j.at("devices"))
        devices.push_back({d.at("name").get<std::string>(), d.at("vendor").get<std::string>(),
                           d.at("device_type").get<std::string>(), d.value("location", std::string{})});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("inventory: ") + e.what());
    }
    return Inventory(std::move(devices));
  }

  static Inventory load(const std::string& path) {
    std::ifstream in(path);
    if (!in)
      throw IoError("cannot open inventory " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path + ": " + e.what());
    }
  }

  bool knows_vendor(const std::string& v) const { return vendors_.count(v) > 0; }
  bool knows_type(const std::string& t) const { return types_.count(t) > 0; }
  const std::vector<Device>& devices() const { return devices_; }

  struct Check {
    bool ok = false;
    std::string reason;
    std::vector<std::string> matched;
  };

  /// Every target must name a known vendor (when given) and device type.
  /// Matches are narrowed by the location filter when the inventory has it.
  Check validate(const pipeline::IntentPayload& p) const {
    Check c;
    if (p.targets.empty()) {
      c.reason = "no target devices";
      return c;
    }
    for (const auto& t : p.targets) {
      if (t.vendor && !knows_vendor(*t.vendor)) {
        c.reason = "unknown vendor '" + *t.vendor + "'";
        return c;
      }
      if (!knows_type(t.device_type)) {
        c.reason = "unknown device type '" + t.device_type + "'";
        return c;
      }
    }
    for (const auto& d : devices_)
      for (const auto& t : p.targets)
        if (d.device_type == t.device_type && (!t.vendor || d.vendor == *t.vendor) &&
            (!p.filters.location || d.location == *p.filters.location)) {
          c.matched.push_back(d.name);
          break;
        }
    c.ok = true;
    return c;
  }

private:
  std::vector<Device> devices_;
  std::set<std::string> vendors_;
  std::set<std::string> types_;
};

} // namespace ibn::service
