#include "eeprecode/channel_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace eeprecode {

namespace {

struct Entry {
  long k;
  long n;
  double a;
  double phi;
};

std::string format17(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream stream(line);
  std::string field;
  while (std::getline(stream, field, ',')) fields.push_back(field);
  return fields;
}

long parse_index(const std::string& text, int line_no) {
  char* end = nullptr;
  errno = 0;
  const long value = std::strtol(text.c_str(), &end, 10);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  if (errno != 0 || end == text.c_str() || (end && *end != '\0'))
    throw InvalidInput("channel file line " + std::to_string(line_no) + ": bad integer '" +
                       text + "'");
  return value;
}

double parse_real(const std::string& text, int line_no) {
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  if (end == text.c_str() || (end && *end != '\0'))
    throw InvalidInput("channel file line " + std::to_string(line_no) + ": bad number '" +
                       text + "'");
  return value;
}

// Validates the entry table and assembles the channel.
ChannelMatrix build(long users, long feeds, const std::vector<Entry>& entries) {
  if (users < 1 || feeds < 1)
    throw InvalidInput("channel file: dimensions must be positive");
  if (static_cast<long>(entries.size()) != users * feeds)
    throw InvalidInput("channel file: expected " + std::to_string(users * feeds) +
                       " entries, found " + std::to_string(entries.size()));
  MatrixXd gains(users, feeds);
  VectorXd phases(users);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> seen =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(users, feeds, false);
  std::vector<bool> phase_set(static_cast<std::size_t>(users), false);
  for (const auto& e : entries) {
    if (e.k < 0 || e.k >= users || e.n < 0 || e.n >= feeds)
      throw InvalidInput("channel file: index (" + std::to_string(e.k) + "," +
                         std::to_string(e.n) + ") outside " + std::to_string(users) + "x" +
                         std::to_string(feeds));
    if (!std::isfinite(e.a) || !std::isfinite(e.phi))
      throw InvalidInput("channel file: non-finite entry at (" + std::to_string(e.k) + "," +
                         std::to_string(e.n) + ")");
    if (seen(e.k, e.n))
      throw InvalidInput("channel file: duplicate entry (" + std::to_string(e.k) + "," +
                         std::to_string(e.n) + ")");
    seen(e.k, e.n) = true;
    gains(e.k, e.n) = e.a;
    const auto slot = static_cast<std::size_t>(e.k);
    if (phase_set[slot] && phases(e.k) != e.phi)
      throw InvalidInput("channel file: inconsistent phase for user " + std::to_string(e.k));
    phases(e.k) = e.phi;
    phase_set[slot] = true;
  }
  return assemble_channel(phases, gains);
}

std::vector<Entry> entries_of(const ChannelMatrix& channel) {
  std::vector<Entry> entries;
  for (Index k = 0; k < channel.users(); ++k)
    for (Index n = 0; n < channel.feeds(); ++n)
      entries.push_back({static_cast<long>(k), static_cast<long>(n), channel.gains(k, n),
                         channel.phases(k)});
  return entries;
}

}  // namespace

ChannelFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".json" ? ChannelFormat::kJson : ChannelFormat::kCsv;
}

void write_channel_csv(std::ostream& out, const ChannelMatrix& channel) {
  out << channel.users() << ',' << channel.feeds() << '\n';
  for (const auto& e : entries_of(channel))
    out << e.k << ',' << e.n << ',' << format17(e.a) << ',' << format17(e.phi) << '\n';
}

ChannelMatrix read_channel_csv(std::istream& in) {
  std::string line;
  int line_no = 0;
  long users = -1;
  long feeds = -1;
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_fields(line);
    if (users < 0) {
      if (fields.size() != 2)
        throw InvalidInput("channel file line " + std::to_string(line_no) +
                           ": header must be 'K,N'");
      users = parse_index(fields[0], line_no);
      feeds = parse_index(fields[1], line_no);
      continue;
    }
    if (fields.size() != 4)
      throw InvalidInput("channel file line " + std::to_string(line_no) +
                         ": expected 'k,n,a_kn,phi_k'");
    entries.push_back({parse_index(fields[0], line_no), parse_index(fields[1], line_no),
                       parse_real(fields[2], line_no), parse_real(fields[3], line_no)});
  }
  if (users < 0) throw InvalidInput("channel file: missing 'K,N' header");
  return build(users, feeds, entries);
}

std::string channel_to_json(const ChannelMatrix& channel) {
  nlohmann::json doc;
  doc["K"] = channel.users();
  doc["N"] = channel.feeds();
  doc["entries"] = nlohmann::json::array();
  for (const auto& e : entries_of(channel))
    doc["entries"].push_back({{"k", e.k}, {"n", e.n}, {"a", e.a}, {"phi", e.phi}});
  return doc.dump(1);
}

ChannelMatrix channel_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    std::vector<Entry> entries;
    for (const auto& item : doc.at("entries")) {
      // nlohmann writes NaN/inf as null; treat it as a non-finite value.
      auto real = [&](const char* key) {
        const auto& v = item.at(key);
        return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
      };
      entries.push_back(
          {item.at("k").get<long>(), item.at("n").get<long>(), real("a"), real("phi")});
    }
    return build(doc.at("K").get<long>(), doc.at("N").get<long>(), entries);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("channel JSON: ") + e.what());
  }
}

void save_channel(const std::filesystem::path& path, const ChannelMatrix& channel,
                  ChannelFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  if (format == ChannelFormat::kJson)
    out << channel_to_json(channel) << '\n';
  else
    write_channel_csv(out, channel);
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void save_channel(const std::filesystem::path& path, const ChannelMatrix& channel) {
  save_channel(path, channel, format_for_path(path));
}

ChannelMatrix load_channel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open channel file '" + path.string() + "'");
  if (format_for_path(path) == ChannelFormat::kJson) {
    std::stringstream buffer;
    buffer << in.rdbuf();
    return channel_from_json(buffer.str());
  }
  return read_channel_csv(in);
}

}  // namespace eeprecode
