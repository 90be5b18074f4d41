#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "eeprecode/model.hpp"

namespace eeprecode {

// Channel files store the factors (A, phi), never H itself.
//
// CSV: first line "K,N" (two integers), then K*N rows "k,n,a_kn,phi_k" with
// zero-based indices, a_kn the real amplitude and phi_k the phase of user k in
// radians. Values are written with 17 significant digits so a save/load cycle
// is bit-exact. Blank lines and lines starting with '#' are ignored.
//
// JSON: {"K": int, "N": int, "entries": [{"k", "n", "a", "phi"}, ...]}.

enum class ChannelFormat { kCsv, kJson };

/// JSON for ".json" extensions, CSV otherwise.
ChannelFormat format_for_path(const std::filesystem::path& path);

void write_channel_csv(std::ostream& out, const ChannelMatrix& channel);
ChannelMatrix read_channel_csv(std::istream& in);

std::string channel_to_json(const ChannelMatrix& channel);
ChannelMatrix channel_from_json(const std::string& text);

void save_channel(const std::filesystem::path& path, const ChannelMatrix& channel,
                  ChannelFormat format);
void save_channel(const std::filesystem::path& path, const ChannelMatrix& channel);
ChannelMatrix load_channel(const std::filesystem::path& path);

}  // namespace eeprecode
