#pragma once

#include "clvlab/analysis.hpp"
#include "clvlab/clv.hpp"
#include "clvlab/fembv.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

namespace clvlab::report {

// Artifact writers. Numbers use io::format_double (round-trip exact); a
// missing value is written as `nan`.

/// `t,ftle_1..ftle_d,theta_12,theta_13,...,theta_(d-1)d,ok`
void write_clv_csv(std::ostream& out, std::span<const ClvResult> clvs);

/// [{"t": .., "ok": .., "vectors": [[phi_1], [phi_2], ...]}, ...]
void write_clv_vectors_json(std::ostream& out, std::span<const ClvResult> clvs);

/// `t,theta12,state,flow_theta`; flow_theta is nan when not computed.
void write_alignment_csv(std::ostream& out, const AlignmentSeries& series);

/// `p,loss,p_normalized,loss_normalized,curvature,selected`
void write_lcurve_csv(std::ostream& out, const LCurve& curve);

/// delta.csv, tv.csv, failures.csv and grid.json under `dir`. Matrix files
/// have a header `N\n,<n values>` and one row per N value.
void write_grid_report(const std::filesystem::path& dir, const GridSearchReport& report,
                       const std::string& metric_json);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace clvlab::report
