#include "relimine/artifacts.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace relimine {

static_assert(std::endian::native == std::endian::little, "artifact files assume a little-endian host");

namespace {

constexpr char kSegMagic[8] = {'R', 'L', 'M', 'S', 'E', 'G', '0', '1'};
constexpr char kEmbMagic[8] = {'R', 'L', 'M', 'E', 'M', 'B', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ArtifactError("truncated file " + path);
  return v;
}

void check_magic(std::istream& in, const char (&magic)[8], const std::string& path) {
  char buf[8];
  in.read(buf, 8);
  if (!in || std::memcmp(buf, magic, 8) != 0) throw ArtifactError("bad magic in " + path);
  if (get<std::uint32_t>(in, path) != kVersion) throw ArtifactError("unsupported version in " + path);
}

}  // namespace

std::string segment_id(const Segment& s) {
  return s.participantId + "/" + std::string(to_string(s.task)) + "/w" + std::to_string(s.windowSeconds) +
         "/s" + std::to_string(s.startSecond);
}

void write_segments(const std::vector<Segment>& segments, const std::string& binPath,
                    const std::string& indexPath) {
  std::ofstream bin(binPath, std::ios::binary | std::ios::trunc);
  if (!bin) throw ArtifactError("cannot write " + binPath);
  bin.write(kSegMagic, 8);
  put(bin, kVersion);
  put(bin, static_cast<std::uint64_t>(segments.size()));
  std::string index;
  for (const auto& s : segments) {
    if (s.eventIds.size() != s.vectors.size()) throw ArtifactError("segment ids and vectors differ in length");
    put(bin, static_cast<std::uint64_t>(s.vectors.size()));
    for (auto id : s.eventIds) put(bin, static_cast<std::uint64_t>(id));
    for (const auto& v : s.vectors) bin.write(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
    nlohmann::json j{{"id", segment_id(s)},
                     {"participant", s.participantId},
                     {"task", to_string(s.task)},
                     {"window", s.windowSeconds},
                     {"start", s.startSecond},
                     {"events", s.vectors.size()}};
    j["overreliance"] = s.overreliance ? nlohmann::json(*s.overreliance) : nlohmann::json(nullptr);
    index += j.dump() + "\n";
  }
  if (!bin) throw ArtifactError("write failed for " + binPath);
  write_text_file(indexPath, index);
}

std::vector<Segment> read_segments(const std::string& binPath, const std::string& indexPath) {
  std::ifstream bin(binPath, std::ios::binary);
  if (!bin) throw ArtifactError("cannot open " + binPath);
  check_magic(bin, kSegMagic, binPath);
  const auto count = get<std::uint64_t>(bin, binPath);
  std::istringstream index(read_text_file(indexPath));
  std::vector<Segment> out;
  out.reserve(count);
  std::string line;
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!std::getline(index, line)) throw ArtifactError("index shorter than " + binPath);
    Segment s;
    std::uint64_t expected = 0;
    try {
      const auto j = nlohmann::json::parse(line);
      s.participantId = j.at("participant").get<std::string>();
      auto task = parse_task(j.at("task").get<std::string>());
      if (!task) throw ArtifactError("bad task in " + indexPath);
      s.task = *task;
      s.windowSeconds = j.at("window").get<int>();
      s.startSecond = j.at("start").get<std::int64_t>();
      if (!j.at("overreliance").is_null()) s.overreliance = j.at("overreliance").get<double>();
      expected = j.at("events").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ArtifactError("bad index line in " + indexPath + ": " + e.what());
    }
    const auto n = get<std::uint64_t>(bin, binPath);
    if (n != expected) throw ArtifactError("index and " + binPath + " disagree");
    s.eventIds.resize(n);
    for (auto& id : s.eventIds) id = get<std::uint64_t>(bin, binPath);
    s.vectors.resize(n);
    for (auto& v : s.vectors) {
      bin.read(reinterpret_cast<char*>(v.data()), sizeof(double) * v.size());
      if (!bin) throw ArtifactError("truncated file " + binPath);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_embeddings(const RowMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write " + path);
  out.write(kEmbMagic, 8);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(m.rows()));
  put(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!out) throw ArtifactError("write failed for " + path);
}

RowMatrix read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open " + path);
  check_magic(in, kEmbMagic, path);
  const auto rows = get<std::uint64_t>(in, path);
  const auto cols = get<std::uint64_t>(in, path);
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw ArtifactError("truncated file " + path);
  return m;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write " + path);
  out << text;
  if (!out) throw ArtifactError("write failed for " + path);
}

}  // namespace relimine
