#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lyapcert/certnet.hpp"
#include "lyapcert/sim.hpp"
#include "lyapcert/trainer.hpp"
#include "lyapcert/violation.hpp"

namespace lyapcert {

/// %.17g, enough digits to round-trip any double.
std::string format_double(double x);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Header t,x0..x{p-1},dx0..dx{p-1}[,d0..d{p-1}]; the disturbance block is
/// present only for perturbed rollouts.
std::string trajectory_csv(const Trajectory& traj);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// {"version":1,"arch":{"p":..,"h":..},"theta":[..]}
std::string checkpoint_json(const CertificateParams& params);
CertificateParams parse_checkpoint(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const CertificateParams& params);
/// Throws CheckpointError on a missing file, a bad version or a dimension mismatch.
CertificateParams load_checkpoint(const std::filesystem::path& path);
CertificateParams load_checkpoint(const std::filesystem::path& path, const MlpArchitecture& expected);

std::string loss_csv(const std::vector<EpochLog>& log);
std::string phases_csv(const std::vector<PhaseLog>& phases);
std::string satisfaction_csv(const std::vector<SatisfactionRow>& rows, const std::string& certificate,
                             const std::string& perturbation_class);

/// Git blob hash (SHA-1 of "blob <size>\0" + content) of the dataset's
/// little-endian float64 bytes, states then derivatives, column-major.
std::string dataset_hash(const Dataset& data);
std::string git_blob_sha1(const std::string& content);

}  // namespace lyapcert
