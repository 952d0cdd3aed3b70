#pragma once

#include <string>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

enum class NiftiDatatype : short {
  u8 = 2,    // NIFTI_TYPE_UINT8
  i16 = 4,   // NIFTI_TYPE_INT16
  f32 = 16,  // NIFTI_TYPE_FLOAT32
};

struct VolumeHeaderInfo {
  NiftiDatatype datatype = NiftiDatatype::f32;
  std::string description;  // truncated to 80 bytes on write
};

// Single-file NIfTI-1 (.nii) reader. Gzipped .nii.gz is accepted and
// inflated transparently. Errors: ValidationError for malformed-header /
// unsupported-datatype / truncated-payload, RuntimeFailure for I/O.
// Ignored header features (orientation, extensions) are appended to
// *warnings when given.
Volume3D read_nifti(const std::string& path,
                    VolumeKind kind = VolumeKind::intensity,
                    std::vector<std::string>* warnings = nullptr);

// Emits a single-file NIfTI-1: 348-byte header, 4-byte extender,
// payload at vox_offset 352. float32 is written unscaled
// (scl_slope=1, scl_inter=0); integer types are rounded and clamped.
void write_nifti(const Volume3D& v, const std::string& path,
                 const VolumeHeaderInfo& info = {});

// Raw fallback: header-less little-endian float32 payload at `path`, plus
// a sidecar "<path>.meta" with keys dims, spacing, kind.
void write_raw_with_sidecar(const Volume3D& v, const std::string& path);
Volume3D read_raw_with_sidecar(const std::string& path);

}  // namespace vseg
