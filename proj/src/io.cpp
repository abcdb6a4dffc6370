#include "lyapcert/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdio>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "lyapcert/errors.hpp"

namespace lyapcert {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trajectory_csv(const Trajectory& traj) {
  const int p = traj.dim();
  const bool with_d = traj.disturbances.rows() == traj.states.rows() && traj.disturbances.size() > 0;
  std::string out = "t";
  for (int i = 0; i < p; ++i) out += ",x" + std::to_string(i);
  for (int i = 0; i < p; ++i) out += ",dx" + std::to_string(i);
  if (with_d)
    for (int i = 0; i < p; ++i) out += ",d" + std::to_string(i);
  out += '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    out += format_double(traj.times[k]);
    for (int i = 0; i < p; ++i) out += ',' + format_double(traj.states(r, i));
    for (int i = 0; i < p; ++i) out += ',' + format_double(traj.derivs(r, i));
    if (with_d)
      for (int i = 0; i < p; ++i) out += ',' + format_double(traj.disturbances(r, i));
    out += '\n';
  }
  return out;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  write_text_file(path, trajectory_csv(traj));
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ShapeMismatch("empty trajectory CSV");
  int x_cols = 0, d_cols = 0, dx_cols = 0;
  {
    std::istringstream hs(line);
    std::string name;
    while (std::getline(hs, name, ',')) {
      if (name.rfind("dx", 0) == 0)
        ++dx_cols;
      else if (name.rfind('x', 0) == 0)
        ++x_cols;
      else if (name.rfind('d', 0) == 0)
        ++d_cols;
    }
  }
  if (x_cols == 0 || dx_cols != x_cols || (d_cols != 0 && d_cols != x_cols))
    throw ShapeMismatch("trajectory CSV header has inconsistent column blocks");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != static_cast<std::size_t>(1 + x_cols + dx_cols + d_cols))
      throw ShapeMismatch("trajectory CSV row has the wrong number of cells");
    rows.push_back(std::move(row));
  }
  Trajectory t;
  const auto n = static_cast<Eigen::Index>(rows.size());
  t.states.resize(n, x_cols);
  t.derivs.resize(n, x_cols);
  if (d_cols) t.disturbances.resize(n, x_cols);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& row = rows[static_cast<std::size_t>(k)];
    t.times.push_back(row[0]);
    for (int i = 0; i < x_cols; ++i) {
      t.states(k, i) = row[1 + i];
      t.derivs(k, i) = row[1 + x_cols + i];
      if (d_cols) t.disturbances(k, i) = row[1 + 2 * x_cols + i];
    }
  }
  if (n > 0) t.initial_condition = t.states.row(0).transpose();
  return t;
}

std::string checkpoint_json(const CertificateParams& params) {
  const auto theta = params.flatten();
  std::string out = "{\"version\":1,\"arch\":{\"p\":" + std::to_string(params.arch.input_dim) +
                    ",\"h\":" + std::to_string(params.arch.hidden) + "},\"theta\":[";
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (i) out += ',';
    out += format_double(theta[i]);
  }
  out += "]}\n";
  return out;
}

CertificateParams parse_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("version") || j["version"] != 1)
    throw CheckpointError("unsupported checkpoint version");
  if (!j.contains("arch") || !j["arch"].contains("p") || !j["arch"].contains("h") || !j.contains("theta"))
    throw CheckpointError("checkpoint is missing arch or theta");
  MlpArchitecture arch;
  arch.input_dim = j["arch"]["p"].get<int>();
  arch.hidden = j["arch"]["h"].get<int>();
  try {
    arch.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint architecture invalid: ") + e.what());
  }
  const auto theta = j["theta"].get<std::vector<double>>();
  if (theta.size() != arch.param_count())
    throw CheckpointError("checkpoint theta has " + std::to_string(theta.size()) + " entries, expected " +
                          std::to_string(arch.param_count()));
  return CertificateParams::unflatten(arch, theta);
}

void save_checkpoint(const std::filesystem::path& path, const CertificateParams& params) {
  write_text_file(path, checkpoint_json(params));
}

CertificateParams load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  return parse_checkpoint(read_text_file(path));
}

CertificateParams load_checkpoint(const std::filesystem::path& path, const MlpArchitecture& expected) {
  auto params = load_checkpoint(path);
  if (params.arch.input_dim != expected.input_dim || params.arch.hidden != expected.hidden)
    throw CheckpointError("checkpoint dimension does not match the configured architecture");
  return params;
}

std::string loss_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss,lr\n";
  for (const auto& e : log)
    out += std::to_string(e.epoch) + ',' + format_double(e.loss) + ',' + format_double(e.lr) + '\n';
  return out;
}

std::string phases_csv(const std::vector<PhaseLog>& phases) {
  std::string out = "phase,loss_start,loss_end\n";
  for (const auto& p : phases)
    out += std::to_string(p.phase) + ',' + format_double(p.loss_start) + ',' + format_double(p.loss_end) + '\n';
  return out;
}

std::string satisfaction_csv(const std::vector<SatisfactionRow>& rows, const std::string& certificate,
                             const std::string& perturbation_class) {
  std::string out = "eta,traj_rate,point_rate,certificate,perturbation_class\n";
  for (const auto& r : rows)
    out += format_double(r.eta) + ',' + format_double(r.traj_rate) + ',' + format_double(r.point_rate) + ',' +
           certificate + ',' + perturbation_class + '\n';
  return out;
}

std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::string payload = header + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(payload.data(), payload.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string dataset_hash(const Dataset& data) {
  static_assert(std::endian::native == std::endian::little, "dataset hash assumes little-endian doubles");
  std::string bytes;
  bytes.append(reinterpret_cast<const char*>(data.states.data()), sizeof(double) * data.states.size());
  bytes.append(reinterpret_cast<const char*>(data.derivs.data()), sizeof(double) * data.derivs.size());
  return git_blob_sha1(bytes);
}

}  // namespace lyapcert
