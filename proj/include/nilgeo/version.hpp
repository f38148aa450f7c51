#pragma once

namespace nilgeo {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kFamilyFormat = "nilgeo-family/1";
inline constexpr const char* kReportFormat = "nilgeo-report/1";
inline constexpr const char* kManifestFormat = "nilgeo-manifest/1";

} // namespace nilgeo
