#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pts {

enum class Errc {
  domain,
  unsupported_attribute,
  no_such_color,
  ambiguous_selector,
  attribute_kind_mismatch,
  invalid_shape,
  invalid_scene,
  placement_exhausted,
  incompatible_scene,
  malformed_symbolic,
  chain_parse,
  inapplicable,
  invalid_config,
  io,
  divergence,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::domain: return "domain-error";
    case Errc::unsupported_attribute: return "unsupported-attribute";
    case Errc::no_such_color: return "no-such-color";
    case Errc::ambiguous_selector: return "ambiguous-selector";
    case Errc::attribute_kind_mismatch: return "attribute-kind-mismatch";
    case Errc::invalid_shape: return "invalid-shape";
    case Errc::invalid_scene: return "invalid-scene";
    case Errc::placement_exhausted: return "placement-exhausted";
    case Errc::incompatible_scene: return "incompatible-scene";
    case Errc::malformed_symbolic: return "malformed-symbolic";
    case Errc::chain_parse: return "chain-parse";
    case Errc::inapplicable: return "inapplicable";
    case Errc::invalid_config: return "invalid-config";
    case Errc::io: return "io-error";
    case Errc::divergence: return "divergence";
  }
  return "unknown";
}

// Every failure raised by the toolkit carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace pts
