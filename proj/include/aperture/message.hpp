#pragma once

#include "aperture/image.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace aperture {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);

struct ContentPart {
    enum class Kind { Text, Image };

    Kind kind = Kind::Text;
    std::string text;
    std::shared_ptr<const Image> image;

    static ContentPart text_part(std::string t) { return {Kind::Text, std::move(t), nullptr}; }
    static ContentPart image_part(std::shared_ptr<const Image> img) { return {Kind::Image, {}, std::move(img)}; }
};

/// Geometry of the view attached to a tool-result message, for backends that
/// simulate perception instead of decoding pixels.
struct ViewInfo {
    PixelRect rect;
    std::shared_ptr<const Mask> mask;
    bool empty_mask = false;
};

struct Message {
    Role role = Role::User;
    std::vector<ContentPart> content;
    bool tool_result = false;
    std::optional<ViewInfo> view;

    static Message text(Role role, std::string body) { return {role, {ContentPart::text_part(std::move(body))}, false, {}}; }

    /// Concatenation of the text parts.
    std::string text_content() const;
};

/// Whitespace-delimited words plus one token per attached image.
int count_tokens(const Message& message);

} // namespace aperture
