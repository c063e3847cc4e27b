#include "longtail/serialize.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "longtail/errors.hpp"

namespace longtail {

namespace {

constexpr char kMagic[8] = {'L', 'T', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_array(std::ostream& os, const DenseArray& a) {
  write_u64(os, a.shape.size());
  for (std::size_t d : a.shape) write_u64(os, d);
  os.write(reinterpret_cast<const char*>(a.values.data()),
           static_cast<std::streamsize>(a.values.size() * sizeof(double)));
}

void write_tensor(std::ostream& os, const ParamTensor& p) {
  write_string(os, p.name);
  os.put(static_cast<char>(p.section));
  write_array(os, p.data);
}

void write_map(std::ostream& os, const std::map<std::string, DenseArray>& m) {
  write_u64(os, m.size());
  for (const auto& [name, arr] : m) {
    write_string(os, name);
    write_array(os, arr);
  }
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw ParseError("checkpoint: truncated");
  return v;
}

std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw ParseError("checkpoint: truncated");
  return v;
}

std::string read_string(std::istream& is) {
  const std::uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw ParseError("checkpoint: truncated string");
  return s;
}

DenseArray read_array(std::istream& is) {
  const std::uint64_t nd = read_u64(is);
  std::vector<std::size_t> shape(nd);
  for (auto& d : shape) d = read_u64(is);
  DenseArray a = DenseArray::zeros(shape);
  is.read(reinterpret_cast<char*>(a.values.data()),
          static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  if (!is) throw ParseError("checkpoint: truncated array");
  return a;
}

ParamTensor read_tensor(std::istream& is) {
  ParamTensor p;
  p.name = read_string(is);
  const int sec = is.get();
  if (sec < 0 || sec > 2) throw ParseError("checkpoint: bad section byte");
  p.section = static_cast<Section>(sec);
  p.data = read_array(is);
  return p;
}

std::map<std::string, DenseArray> read_map(std::istream& is) {
  std::map<std::string, DenseArray> m;
  const std::uint64_t n = read_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = read_string(is);
    m.emplace(std::move(name), read_array(is));
  }
  return m;
}

void write_dims(std::ostream& os, const ModelDims& d) {
  write_u64(os, d.num_users);
  write_u64(os, d.num_items);
  write_u64(os, d.embedding_dim);
  write_u64(os, d.hidden_dim);
  write_u64(os, d.attention_dim);
  write_u64(os, d.max_seq_len);
  write_u64(os, d.extractor_layers);
}

ModelDims read_dims(std::istream& is) {
  ModelDims d;
  d.num_users = read_u64(is);
  d.num_items = read_u64(is);
  d.embedding_dim = read_u64(is);
  d.hidden_dim = read_u64(is);
  d.attention_dim = read_u64(is);
  d.max_seq_len = read_u64(is);
  d.extractor_layers = read_u64(is);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrunkParams& trunk,
                     const PluginSet* plugins, const AdamOptimizer* trunk_opt,
                     const std::string& config_json, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot write " + path);
  os.write(kMagic, sizeof(kMagic));
  write_string(os, arch_name(trunk.arch));
  write_dims(os, trunk.dims);
  write_u64(os, trunk.params.size());
  for (const auto& p : trunk.params) write_tensor(os, p);

  if (plugins == nullptr) {
    os.put(0);
  } else if (plugins->variant == PluginVariant::naive) {
    os.put(1);
    write_u64(os, plugins->naive.size());
    for (const auto& pl : plugins->naive) {
      write_i64(os, pl.group);
      write_u64(os, pl.residuals.size());
      for (const auto& p : pl.residuals) write_tensor(os, p);
    }
  } else {
    os.put(2);
    write_u64(os, plugins->light.size());
    for (const auto& pl : plugins->light) {
      write_i64(os, pl.group);
      write_u64(os, pl.params.size());
      for (const auto& p : pl.params) write_tensor(os, p);
    }
  }

  if (trunk_opt == nullptr) {
    os.put(0);
  } else {
    os.put(1);
    write_map(os, trunk_opt->first_moments());
    write_map(os, trunk_opt->second_moments());
    write_i64(os, trunk_opt->steps());
  }

  write_string(os, config_json);
  write_u64(os, seed);
  if (!os) throw ArgumentError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("not a checkpoint file: " + path);

  Checkpoint c;
  c.trunk.arch = arch_from_name(read_string(is));
  c.trunk.dims = read_dims(is);
  const std::uint64_t np = read_u64(is);
  for (std::uint64_t i = 0; i < np; ++i) c.trunk.params.push_back(read_tensor(is));

  const int variant = is.get();
  if (variant == 1 || variant == 2) {
    PluginSet set;
    set.variant = variant == 1 ? PluginVariant::naive : PluginVariant::light;
    const std::uint64_t ng = read_u64(is);
    for (std::uint64_t g = 0; g < ng; ++g) {
      const int group = static_cast<int>(read_i64(is));
      const std::uint64_t cnt = read_u64(is);
      if (variant == 1) {
        NaivePlugin pl;
        pl.group = group;
        for (std::uint64_t i = 0; i < cnt; ++i) pl.residuals.push_back(read_tensor(is));
        set.naive.push_back(std::move(pl));
      } else {
        LightPlugin pl;
        pl.group = group;
        for (std::uint64_t i = 0; i < cnt; ++i) pl.params.push_back(read_tensor(is));
        set.light.push_back(std::move(pl));
      }
    }
    c.plugins = std::move(set);
  } else if (variant != 0) {
    throw ParseError("checkpoint: bad plugin variant byte");
  }

  const int has_opt = is.get();
  if (has_opt == 1) {
    c.trunk_m = read_map(is);
    c.trunk_v = read_map(is);
    c.trunk_steps = read_i64(is);
  } else if (has_opt != 0) {
    throw ParseError("checkpoint: bad optimizer flag");
  }

  c.config_json = read_string(is);
  c.seed = read_u64(is);
  return c;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return fnv1a_hex(buf.str());
}

}  // namespace longtail
