#pragma once

#include <string>
#include <variant>

#include "voxreg/features.hpp"
#include "voxreg/field.hpp"
#include "voxreg/metrics.hpp"
#include "voxreg/volume.hpp"

namespace voxreg {

// --- NIfTI-1 (single file .nii / .nii.gz, or .hdr/.img pair) ----------------

/// Integer-typed images without intensity scaling come back as LabelVolume,
/// everything else as a float Volume3 with slope/intercept applied.
using NiftiImage = std::variant<Volume3, LabelVolume>;

NiftiImage read_nifti(const std::string& path);
Volume3 read_nifti_volume(const std::string& path);
LabelVolume read_nifti_labels(const std::string& path);

/// float32, little-endian. Paths ending in ".gz" are gzip-compressed.
void write_nifti(const Volume3& vol, const std::string& path);
/// uint8 when every label fits, int16 otherwise.
void write_nifti(const LabelVolume& labels, const std::string& path);

// --- FVL1 feature / displacement exchange ----------------------------------

inline constexpr std::size_t kFvl1HeaderBytes = 44;

FeatureVolume read_fvl1(const std::string& path);
inline FeatureVolume ingest_features(const std::string& path) { return read_fvl1(path); }
void write_fvl1(const FeatureVolume& fv, const std::string& path);

/// Displacement fields are 3-channel FVL1; the header stride is the
/// resolution tag (1 = full, g = control grid).
void write_fvl1(const DisplacementField& u, const std::string& path);
DisplacementField read_displacement(const std::string& path);

std::string encode_fvl1(const FeatureVolume& fv);
FeatureVolume decode_fvl1(const std::string& bytes);

// --- JSON ------------------------------------------------------------------

void write_metrics(const MetricsReport& report, const std::string& path);
MetricsReport read_metrics(const std::string& path);

void write_basis(const PcaBasis& basis, const std::string& path);
PcaBasis read_basis(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace voxreg
