#include "evsal/checkpoint.hpp"

#include <string_view>

#include "evsal/binary_io.hpp"
#include "evsal/error.hpp"

namespace evsal {

namespace {

constexpr std::string_view kMagic = "SESTCKPT";

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  for (const CheckpointRecord& r : records) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.name.size()));
    w.put_bytes(r.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.value.rank()));
    for (std::size_t d : r.value.shape()) w.put<std::uint64_t>(d);
    for (double v : r.value.data()) w.put<double>(v);
  }
  return w.take();
}

std::vector<CheckpointRecord> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || r.get_bytes(kMagic.size()) != kMagic) {
    throw Error(ErrorKind::BadMagic, "not a checkpoint");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::BadFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<CheckpointRecord> out;
  while (!r.done()) {
    CheckpointRecord rec;
    const auto len = r.get<std::uint32_t>();
    if (len > r.remaining()) throw Error(ErrorKind::TruncatedFile, "record name overruns file");
    rec.name = r.get_bytes(len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > r.remaining() / sizeof(std::uint64_t)) {
      throw Error(ErrorKind::TruncatedFile, "record dims overrun file");
    }
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.get<std::uint64_t>();
      if (d != 0 && numel > r.remaining() / d) {
        throw Error(ErrorKind::TruncatedFile, "record " + rec.name + " overruns file");
      }
      numel *= d;
    }
    if (numel > r.remaining() / sizeof(double)) {
      throw Error(ErrorKind::TruncatedFile, "record " + rec.name + " overruns file");
    }
    std::vector<double> data(numel);
    for (double& v : data) v = r.get<double>();
    rec.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(rec));
  }
  return out;
}

void save_checkpoint(const std::vector<CheckpointRecord>& records,
                     const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(records));
}

std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void append_parameter_records(std::vector<CheckpointRecord>& out,
                              const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) {
    out.push_back({p->name, p->value});
    out.push_back({p->name + ".adam_m", p->first_moment});
    out.push_back({p->name + ".adam_v", p->second_moment});
    out.push_back({p->name + ".adam_step", Tensor::scalar(static_cast<double>(p->step))});
  }
}

const CheckpointRecord* find_record(const std::vector<CheckpointRecord>& records,
                                    const std::string& name) {
  for (const CheckpointRecord& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

void restore_parameters(const std::vector<CheckpointRecord>& records,
                        const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    const CheckpointRecord* v = find_record(records, p->name);
    if (!v) throw Error(ErrorKind::BadFormat, "checkpoint lacks parameter " + p->name);
    if (v->value.shape() != p->value.shape()) {
      throw Error(ErrorKind::ShapeMismatch, "parameter " + p->name + " has shape " +
                                                shape_string(v->value.shape()) + ", expected " +
                                                shape_string(p->value.shape()));
    }
    p->value = v->value;
    p->grad = Tensor(p->value.shape());
    const CheckpointRecord* m = find_record(records, p->name + ".adam_m");
    const CheckpointRecord* s = find_record(records, p->name + ".adam_v");
    const CheckpointRecord* step = find_record(records, p->name + ".adam_step");
    if (m && s && step && m->value.shape() == p->value.shape() &&
        s->value.shape() == p->value.shape() && step->value.numel() == 1) {
      p->first_moment = m->value;
      p->second_moment = s->value;
      p->step = static_cast<std::int64_t>(step->value.item());
    } else {
      p->first_moment = Tensor(p->value.shape());
      p->second_moment = Tensor(p->value.shape());
      p->step = 0;
    }
  }
}

}  // namespace evsal
