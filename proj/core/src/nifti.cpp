#include "vseg/nifti.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vseg {
namespace {

struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

int bitpix_of(NiftiDatatype dt) {
  switch (dt) {
    case NiftiDatatype::u8: return 8;
    case NiftiDatatype::i16: return 16;
    case NiftiDatatype::f32: return 32;
  }
  return 0;
}

bool is_gzip(const std::vector<unsigned char>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in) {
  z_stream strm{};
  if (inflateInit2(&strm, 16 + MAX_WBITS) != Z_OK)
    throw RuntimeFailure("zlib inflateInit failed");
  std::vector<unsigned char> out;
  out.reserve(in.size() * 4);
  std::vector<unsigned char> buf(1 << 16);
  strm.next_in = const_cast<unsigned char*>(in.data());
  strm.avail_in = static_cast<uInt>(in.size());
  int ret = Z_OK;
  do {
    strm.next_out = buf.data();
    strm.avail_out = static_cast<uInt>(buf.size());
    ret = inflate(&strm, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&strm);
      throw ValidationError("corrupt gzip stream");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - strm.avail_out));
  } while (ret != Z_STREAM_END);
  inflateEnd(&strm);
  return out;
}

}  // namespace

Volume3D read_nifti(const std::string& path, VolumeKind kind,
                    std::vector<std::string>* warnings) {
  std::vector<unsigned char> bytes = read_file_bytes(path);
  if (is_gzip(bytes)) bytes = gunzip(bytes);

  if (bytes.size() < sizeof(Nifti1Header))
    throw ValidationError("malformed-header: file shorter than 348 bytes: " + path);
  Nifti1Header hdr;
  std::memcpy(&hdr, bytes.data(), sizeof(hdr));

  if (hdr.sizeof_hdr != 348)
    throw ValidationError("malformed-header: sizeof_hdr != 348 in " + path);
  if (std::memcmp(hdr.magic, "n+1", 4) != 0)
    throw ValidationError("malformed-header: magic is not \"n+1\" in " + path);
  if (!(hdr.dim[0] == 3 || (hdr.dim[0] == 4 && hdr.dim[4] == 1)))
    throw ValidationError("malformed-header: dim[0] must be 3 (or 4 with dim[4]=1) in " + path);
  if (hdr.datatype != static_cast<short>(NiftiDatatype::u8) &&
      hdr.datatype != static_cast<short>(NiftiDatatype::i16) &&
      hdr.datatype != static_cast<short>(NiftiDatatype::f32))
    throw ValidationError("unsupported-datatype: code " + std::to_string(hdr.datatype) +
                          " in " + path);

  Volume3D v;
  v.kind = kind;
  for (int i = 0; i < 3; ++i) {
    v.dims[i] = hdr.dim[i + 1];
    if (v.dims[i] <= 0)
      throw ValidationError("malformed-header: non-positive dim in " + path);
    if (hdr.pixdim[i + 1] > 0.0f) {
      v.spacing[i] = hdr.pixdim[i + 1];
    } else {
      v.spacing[i] = 1.0;
      if (warnings) warnings->push_back("non-positive pixdim replaced by 1.0");
    }
  }
  if (warnings) {
    if (hdr.qform_code != 0 || hdr.sform_code != 0)
      warnings->push_back("orientation (qform/sform) ignored; spacing-only model");
    if (bytes.size() > 348 && bytes[348] != 0)
      warnings->push_back("header extensions ignored");
  }

  const std::int64_t count = v.voxel_count();
  const int elem = bitpix_of(static_cast<NiftiDatatype>(hdr.datatype)) / 8;
  const std::size_t offset = static_cast<std::size_t>(hdr.vox_offset);
  if (offset < 348) throw ValidationError("malformed-header: vox_offset < 348 in " + path);
  if (bytes.size() < offset + static_cast<std::size_t>(count) * elem)
    throw ValidationError("truncated-payload: fewer voxels than header promises in " + path);

  const unsigned char* p = bytes.data() + offset;
  v.data.resize(static_cast<std::size_t>(count));
  const bool scaled = hdr.scl_slope != 0.0f;
  const float slope = scaled ? hdr.scl_slope : 1.0f;
  const float inter = scaled ? hdr.scl_inter : 0.0f;
  switch (static_cast<NiftiDatatype>(hdr.datatype)) {
    case NiftiDatatype::u8:
      for (std::int64_t i = 0; i < count; ++i) v.data[i] = slope * p[i] + inter;
      break;
    case NiftiDatatype::i16:
      for (std::int64_t i = 0; i < count; ++i) {
        std::int16_t raw;
        std::memcpy(&raw, p + 2 * i, 2);
        v.data[i] = slope * raw + inter;
      }
      break;
    case NiftiDatatype::f32:
      if (scaled && (hdr.scl_slope != 1.0f || hdr.scl_inter != 0.0f)) {
        for (std::int64_t i = 0; i < count; ++i) {
          float raw;
          std::memcpy(&raw, p + 4 * i, 4);
          v.data[i] = slope * raw + inter;
        }
      } else {
        std::memcpy(v.data.data(), p, static_cast<std::size_t>(count) * 4);
      }
      break;
  }
  v.validate();
  return v;
}

void write_nifti(const Volume3D& v, const std::string& path, const VolumeHeaderInfo& info) {
  v.validate();
  Nifti1Header hdr{};
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = 3;
  for (int i = 0; i < 3; ++i) hdr.dim[i + 1] = static_cast<std::int16_t>(v.dims[i]);
  for (int i = 4; i < 8; ++i) hdr.dim[i] = 1;
  hdr.datatype = static_cast<std::int16_t>(info.datatype);
  hdr.bitpix = static_cast<std::int16_t>(bitpix_of(info.datatype));
  hdr.pixdim[0] = 1.0f;
  for (int i = 0; i < 3; ++i) hdr.pixdim[i + 1] = static_cast<float>(v.spacing[i]);
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.scl_inter = 0.0f;
  std::strncpy(hdr.descrip, info.description.c_str(), sizeof(hdr.descrip) - 1);
  std::memcpy(hdr.magic, "n+1", 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("io-failure: cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
  const char extender[4] = {0, 0, 0, 0};
  out.write(extender, 4);

  const std::int64_t count = v.voxel_count();
  switch (info.datatype) {
    case NiftiDatatype::u8: {
      std::vector<std::uint8_t> buf(static_cast<std::size_t>(count));
      for (std::int64_t i = 0; i < count; ++i) {
        const float r = std::nearbyint(v.data[i]);
        buf[i] = static_cast<std::uint8_t>(std::min(255.0f, std::max(0.0f, r)));
      }
      out.write(reinterpret_cast<const char*>(buf.data()), count);
      break;
    }
    case NiftiDatatype::i16: {
      std::vector<std::int16_t> buf(static_cast<std::size_t>(count));
      for (std::int64_t i = 0; i < count; ++i) {
        const float r = std::nearbyint(v.data[i]);
        buf[i] = static_cast<std::int16_t>(std::min(32767.0f, std::max(-32768.0f, r)));
      }
      out.write(reinterpret_cast<const char*>(buf.data()), count * 2);
      break;
    }
    case NiftiDatatype::f32:
      out.write(reinterpret_cast<const char*>(v.data.data()), count * 4);
      break;
  }
  if (!out) throw RuntimeFailure("io-failure: short write: " + path);
}

void write_raw_with_sidecar(const Volume3D& v, const std::string& path) {
  v.validate();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("io-failure: cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(v.data.data()), v.voxel_count() * 4);
    if (!out) throw RuntimeFailure("io-failure: short write: " + path);
  }
  std::ofstream meta(path + ".meta", std::ios::trunc);
  if (!meta) throw RuntimeFailure("io-failure: cannot open for writing: " + path + ".meta");
  meta << "dims = " << v.dims[0] << " " << v.dims[1] << " " << v.dims[2] << "\n"
       << "spacing = " << v.spacing[0] << " " << v.spacing[1] << " " << v.spacing[2] << "\n"
       << "kind = " << to_string(v.kind) << "\n";
}

Volume3D read_raw_with_sidecar(const std::string& path) {
  std::ifstream meta(path + ".meta");
  if (!meta) throw ValidationError("missing sidecar: " + path + ".meta");
  Volume3D v;
  std::string line;
  bool have_dims = false;
  while (std::getline(meta, line)) {
    std::istringstream ls(line);
    std::string key, eq;
    if (!(ls >> key >> eq) || eq != "=") continue;
    if (key == "dims") {
      ls >> v.dims[0] >> v.dims[1] >> v.dims[2];
      have_dims = true;
    } else if (key == "spacing") {
      ls >> v.spacing[0] >> v.spacing[1] >> v.spacing[2];
    } else if (key == "kind") {
      std::string k;
      ls >> k;
      v.kind = volume_kind_from_string(k);
    }
  }
  if (!have_dims) throw ValidationError("sidecar lacks dims key: " + path + ".meta");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  v.data.resize(static_cast<std::size_t>(v.voxel_count()));
  in.read(reinterpret_cast<char*>(v.data.data()), v.voxel_count() * 4);
  if (in.gcount() != v.voxel_count() * 4)
    throw ValidationError("truncated-payload: raw file shorter than dims promise: " + path);
  v.validate();
  return v;
}

}  // namespace vseg
