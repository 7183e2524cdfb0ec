#include "softmesh/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

SOFTMESH_BEGIN_NAMESPACE

static_assert(std::endian::native == std::endian::little,
              "checkpoint arrays are stored little-endian");

namespace {

constexpr const char* kMagic = "softmesh-checkpoint v1";

std::string shape_token(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

Shape parse_shape(const std::string& token) {
  Shape s;
  if (token == "scalar") return s;
  std::istringstream in(token);
  std::string part;
  while (std::getline(in, part, 'x')) s.push_back(std::stoll(part));
  return s;
}

// "entry=name shape=AxB offset=N count=M"
struct Entry {
  std::string name;
  Shape shape;
  std::int64_t offset = 0;
  std::int64_t count = 0;
};

Entry parse_entry(const std::string& line) {
  Entry e;
  std::istringstream in(line);
  std::string tok;
  bool have[4] = {false, false, false, false};
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw CheckpointError("bad entry line: " + line);
    const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
    try {
      if (key == "entry") {
        e.name = value;
        have[0] = true;
      } else if (key == "shape") {
        e.shape = parse_shape(value);
        have[1] = true;
      } else if (key == "offset") {
        e.offset = std::stoll(value);
        have[2] = true;
      } else if (key == "count") {
        e.count = std::stoll(value);
        have[3] = true;
      }
    } catch (const std::logic_error&) {
      throw CheckpointError("bad entry line: " + line);
    }
  }
  if (!(have[0] && have[1] && have[2] && have[3])) {
    throw CheckpointError("incomplete entry line: " + line);
  }
  if (numel_of(e.shape) != e.count) {
    throw CheckpointError("entry " + e.name + ": shape " + shape_token(e.shape) +
                          " does not match count " + std::to_string(e.count));
  }
  return e;
}

}  // namespace

const CheckpointArray& CheckpointFile::at(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw CheckpointError("checkpoint has no entry " + name);
}

void write_checkpoint(const std::string& path, const CheckpointFile& file) {
  std::ostringstream header;
  header << kMagic << '\n';
  header << "config_hash=" << config_hash(file.config) << '\n';
  header << "dtype=" << kRealName << '\n';
  header << "iteration=" << file.iteration << '\n';
  std::istringstream cfg(print_config(file.config));
  std::string line;
  while (std::getline(cfg, line)) {
    const auto eq = line.find(" = ");
    header << "config." << line.substr(0, eq) << '=' << line.substr(eq + 3)
           << '\n';
  }
  std::set<std::string> names;
  std::int64_t offset = 0;
  for (const auto& a : file.arrays) {
    if (!names.insert(a.name).second) {
      throw CheckpointError("duplicate entry " + a.name);
    }
    if (static_cast<std::int64_t>(a.values.size()) != numel_of(a.shape)) {
      throw CheckpointError("entry " + a.name + ": value count mismatch");
    }
    header << "entry=" << a.name << " shape=" << shape_token(a.shape)
           << " offset=" << offset << " count=" << a.values.size() << '\n';
    offset += static_cast<std::int64_t>(a.values.size() * sizeof(Real));
  }
  header << "end_header\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::ios_base::failure("cannot write " + tmp);
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& a : file.arrays) {
      out.write(reinterpret_cast<const char*>(a.values.data()),
                static_cast<std::streamsize>(a.values.size() * sizeof(Real)));
    }
    if (!out) throw std::ios_base::failure("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::ios_base::failure("cannot rename " + tmp + " to " + path);
  }
}

CheckpointFile read_checkpoint(const std::string& path,
                               const std::string& expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw CheckpointError(path + ": not a softmesh checkpoint");
  }
  CheckpointFile file;
  std::string stored_hash, dtype;
  bool have_iteration = false;
  std::vector<Entry> entries;
  std::ostringstream config_text;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end_header") {
      ended = true;
      break;
    }
    if (line.rfind("entry=", 0) == 0) {
      entries.push_back(parse_entry(line));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CheckpointError(path + ": bad header line: " + line);
    }
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "config_hash") {
      stored_hash = value;
    } else if (key == "dtype") {
      dtype = value;
    } else if (key == "iteration") {
      try {
        file.iteration = std::stoll(value);
      } catch (const std::logic_error&) {
        throw CheckpointError(path + ": bad iteration");
      }
      have_iteration = true;
    } else if (key.rfind("config.", 0) == 0) {
      config_text << key.substr(7) << " = " << value << '\n';
    } else {
      throw CheckpointError(path + ": unknown header key " + key);
    }
  }
  if (!ended) throw CheckpointError(path + ": truncated header");
  if (!have_iteration) throw CheckpointError(path + ": missing iteration");
  if (dtype != kRealName) {
    throw CheckpointError(path + ": dtype " + dtype + " but this build uses " +
                          kRealName);
  }
  try {
    std::istringstream cfg(config_text.str());
    file.config = parse_config(cfg);
  } catch (const ConfigError& e) {
    throw CheckpointError(path + ": embedded config: " + e.what());
  }
  file.config_hash = config_hash(file.config);
  if (stored_hash != file.config_hash) {
    throw CheckpointError(path + ": config_hash " + stored_hash +
                          " does not match the embedded config (" +
                          file.config_hash + ")");
  }
  if (!expected_hash.empty() && stored_hash != expected_hash) {
    throw CheckpointError(path + ": config_hash " + stored_hash +
                          " does not match expected " + expected_hash);
  }

  std::int64_t expected_offset = 0;
  for (const auto& e : entries) {
    if (e.offset != expected_offset) {
      throw CheckpointError(path + ": entry " + e.name + " has offset " +
                            std::to_string(e.offset) + ", expected " +
                            std::to_string(expected_offset));
    }
    CheckpointArray a;
    a.name = e.name;
    a.shape = e.shape;
    a.values.resize(static_cast<std::size_t>(e.count));
    in.read(reinterpret_cast<char*>(a.values.data()),
            static_cast<std::streamsize>(a.values.size() * sizeof(Real)));
    if (in.gcount() !=
        static_cast<std::streamsize>(a.values.size() * sizeof(Real))) {
      throw CheckpointError(path + ": entry " + e.name + " is truncated");
    }
    expected_offset += e.count * static_cast<std::int64_t>(sizeof(Real));
    file.arrays.push_back(std::move(a));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError(path + ": trailing bytes after last entry");
  }
  return file;
}

SOFTMESH_END_NAMESPACE
