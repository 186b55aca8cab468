#include "mojito/checkpoint.hpp"

#include <cstring>
#include <set>

#include "mojito/util.hpp"

namespace mojito {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

void put_doubles(std::string& out, const std::vector<double>& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw ContractError("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  void doubles(std::vector<double>& out, std::size_t n) {
    need(n * sizeof(double));
    out.resize(n);
    std::memcpy(out.data(), bytes.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
  }
};

}  // namespace

std::string serialize_checkpoint(const ParameterStore& store, const std::string& config_text) {
  std::string out = kCheckpointMagic;
  put_u32(out, static_cast<std::uint32_t>(config_text.size()));
  out += config_text;
  put_u64(out, store.size());
  store.for_each([&](const std::string& path, const Tensor& t, const AdamState& st) {
    put_u32(out, static_cast<std::uint32_t>(path.size()));
    out += path;
    put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    put_doubles(out, t.values());
    put_doubles(out, st.m);
    put_doubles(out, st.v);
    put_u64(out, st.step);
  });
  return out;
}

void write_checkpoint(const std::string& path, const ParameterStore& store,
                      const std::string& config_text) {
  atomic_write_file(path, serialize_checkpoint(store, config_text));
}

std::string checkpoint_config_text(const std::string& bytes) {
  const std::string magic = kCheckpointMagic;
  if (bytes.size() < magic.size() || bytes.compare(0, magic.size(), magic) != 0) {
    throw ContractError("not a MOJITO-CKPT-1 checkpoint");
  }
  Reader r{bytes, magic.size()};
  const std::uint32_t len = r.u32();
  return r.str(len);
}

std::string read_checkpoint_config(const std::string& path) {
  return checkpoint_config_text(read_file(path));
}

void load_checkpoint_bytes(const std::string& bytes, ParameterStore& store) {
  const std::string magic = kCheckpointMagic;
  if (bytes.size() < magic.size() || bytes.compare(0, magic.size(), magic) != 0) {
    throw ContractError("not a MOJITO-CKPT-1 checkpoint");
  }
  Reader r{bytes, magic.size()};
  r.str(r.u32());  // config snapshot, already consumed by callers that need it
  const std::uint64_t n = r.u64();
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string path = r.str(r.u32());
    const std::uint32_t ndim = r.u32();
    Shape shape(ndim);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<std::size_t>(r.u64());
      numel *= shape[d];
    }
    if (!store.contains(path)) {
      throw ContractError("checkpoint parameter '" + path + "' is unknown to this model");
    }
    Tensor& t = store.get(path);
    if (t.shape() != shape) {
      throw DimensionError("checkpoint parameter '" + path + "' has shape " + shape_str(shape) +
                           " but the model expects " + shape_str(t.shape()));
    }
    r.doubles(t.values(), numel);
    AdamState& st = store.adam_state(path);
    r.doubles(st.m, numel);
    r.doubles(st.v, numel);
    st.step = r.u64();
    seen.insert(path);
  }
  if (seen.size() != store.size()) {
    throw ContractError("checkpoint is missing " + std::to_string(store.size() - seen.size()) +
                        " model parameter(s)");
  }
}

void load_checkpoint(const std::string& path, ParameterStore& store) {
  load_checkpoint_bytes(read_file(path), store);
}

}  // namespace mojito
