#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "bpunch/graph.hpp"

namespace bpunch {

/// Text model format, one record per line:
///
///   bpmodel 1
///   input <C> <H> <W>
///   layer <id> <kind> [key=value ...] inputs=<id>[,<id>...]
///   structure <id> <conv-branches|nonconv-branches> bytes=<n> branches=<a,b>|<c>
///
/// Layer keys: filters, channels, kernel (KhxKw), stride, pad, size, factor,
/// scalar, affine (none|bias|bn). Blank lines and '#' comments are ignored.
/// See docs/formats.md.
ModelGraph parse_model(std::string_view text);
std::string format_model(const ModelGraph& model);

ModelGraph load_model(const std::filesystem::path& path);
void save_model(const ModelGraph& model, const std::filesystem::path& path);

}  // namespace bpunch
