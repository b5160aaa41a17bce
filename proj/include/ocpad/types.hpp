#pragma once

#include <string>
#include <string_view>

namespace ocpad {

/// Ground-truth label. Numeric values match the BCE target convention.
enum class Label { attack = 0, bonafide = 1 };

enum class Group { train, dev, eval };

inline double target_of(Label y) { return y == Label::bonafide ? 1.0 : 0.0; }

std::string_view to_string(Label y);
std::string_view to_string(Group g);
Label parse_label(std::string_view s);
Group parse_group(std::string_view s);

}  // namespace ocpad
