#include "stsb/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include <CLI11.hpp>

#include "stsb/datagen.hpp"
#include "stsb/gp_atoms.hpp"
#include "stsb/random.hpp"
#include "stsb/stickbreak.hpp"

namespace fs = std::filesystem;

namespace stsb {

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset CSV

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyDataset, "file is empty");
  const auto header = split_csv(line);
  auto find_col = [&](const char* name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::MissingColumn, name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c1 = find_col("s1"), c2 = find_col("s2"), ct = find_col("t"), cy = find_col("y");
  std::vector<std::size_t> cx;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != c1 && j != c2 && j != ct && j != cy) cx.push_back(j);
  }

  Dataset data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw Error(ErrorCode::ParseError, "expected " + std::to_string(header.size()) + " fields", line_no);
    Observation o;
    double t = 0.0;
    if (!parse_double(f[c1], o.point.s1) || !parse_double(f[c2], o.point.s2) || !parse_double(f[ct], t)) {
      throw Error(ErrorCode::ParseError, "malformed coordinate", line_no);
    }
    try {
      o.point.t = parse_time_index(t);
    } catch (const Error&) {
      throw Error(ErrorCode::ContinuousTime, "time index must be a positive integer", line_no);
    }
    if (f[cy].empty()) {
      o.missing = true;
      o.y = 0.0;
    } else if (!parse_double(f[cy], o.y)) {
      throw Error(ErrorCode::ParseError, "malformed response", line_no);
    }
    for (std::size_t j : cx) {
      double x;
      if (!parse_double(f[j], x)) throw Error(ErrorCode::ParseError, "malformed covariate", line_no);
      o.x.push_back(x);
    }
    data.observations.push_back(std::move(o));
  }
  return data;
}

Dataset load_csv(const fs::path& path) {
  auto in = open_in(path);
  return read_dataset(in);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "s1,s2,t,y";
  for (std::size_t j = 0; j < data.covariate_dim(); ++j) out << ",x" << j + 1;
  out << '\n';
  for (const auto& o : data.observations) {
    out << format_number(o.point.s1) << ',' << format_number(o.point.s2) << ',' << o.point.t << ',';
    if (!o.missing) out << format_number(o.y);
    for (double x : o.x) out << ',' << format_number(x);
    out << '\n';
  }
}

void write_csv(const fs::path& path, const Dataset& data) {
  auto out = open_out(path);
  write_dataset(out, data);
}

// ---------------------------------------------------------------------------
// Config

namespace {

using Setter = std::function<void(Config&, const std::string&)>;
using Getter = std::function<std::string(const Config&)>;

struct Key {
  const char* name;
  Setter set;
  Getter get;
};

double to_double(const std::string& key, const std::string& v) {
  double d;
  if (!parse_double(v, d) || !std::isfinite(d)) throw Error(ErrorCode::BadValue, key);
  return d;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t n = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), n);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) throw Error(ErrorCode::BadValue, key);
  return n;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::BadValue, key);
}

std::string opt_text(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

#define STSB_DOUBLE(name, field)                                                         \
  Key {                                                                                  \
    name, [](Config& c, const std::string& v) { c.field = to_double(name, v); },         \
        [](const Config& c) { return format_number(c.field); }                           \
  }
#define STSB_SIZE(name, field)                                                           \
  Key {                                                                                  \
    name, [](Config& c, const std::string& v) { c.field = to_size(name, v); },           \
        [](const Config& c) { return std::to_string(c.field); }                          \
  }
#define STSB_BOOL(name, field)                                                           \
  Key {                                                                                  \
    name, [](Config& c, const std::string& v) { c.field = to_bool(name, v); },           \
        [](const Config& c) { return std::string(c.field ? "true" : "false"); }          \
  }
#define STSB_OPTIONAL(name, field)                                                       \
  Key {                                                                                  \
    name, [](Config& c, const std::string& v) { c.field = to_double(name, v); },         \
        [](const Config& c) { return opt_text(c.field); }                                \
  }

const std::vector<Key>& config_keys() {
  static const std::vector<Key> keys = {
      STSB_SIZE("truncation", mcmc.truncation),
      STSB_SIZE("n_iter", mcmc.n_iter),
      STSB_SIZE("n_burn", mcmc.n_burn),
      STSB_SIZE("thin", mcmc.thin),
      Key{"seed", [](Config& c, const std::string& v) { c.mcmc.seed = to_size("seed", v); },
          [](const Config& c) { return std::to_string(c.mcmc.seed); }},
      STSB_DOUBLE("proposal_knot", mcmc.proposal.knot),
      STSB_DOUBLE("proposal_gamma", mcmc.proposal.gamma),
      STSB_DOUBLE("proposal_lambda", mcmc.proposal.lambda),
      STSB_DOUBLE("proposal_shape", mcmc.proposal.shape),
      STSB_BOOL("adapt", mcmc.adapt),
      STSB_BOOL("varying_atoms", mcmc.varying_atoms),
      STSB_BOOL("update_shapes", mcmc.update_shapes),
      STSB_BOOL("update_knots", mcmc.update_knots),
      STSB_BOOL("update_kernel", mcmc.update_kernel),
      STSB_DOUBLE("gp_decay", mcmc.gp_decay),
      STSB_DOUBLE("gp_rho", mcmc.gp_rho),
      STSB_OPTIONAL("gp_var", mcmc.gp_var),
      STSB_SIZE("va_size_guard", mcmc.va_size_guard),
      STSB_DOUBLE("va_subsample", mcmc.va_subsample),
      STSB_DOUBLE("a_min", hyper.a_range.lo),
      STSB_DOUBLE("a_max", hyper.a_range.hi),
      STSB_DOUBLE("b_min", hyper.b_range.lo),
      STSB_DOUBLE("b_max", hyper.b_range.hi),
      STSB_OPTIONAL("base_mean", hyper.base_mean),
      STSB_OPTIONAL("base_variance", hyper.base_variance),
      STSB_DOUBLE("noise_shape", hyper.noise_shape),
      STSB_DOUBLE("noise_rate", hyper.noise_rate),
      STSB_DOUBLE("atom_var_shape", hyper.atom_var_shape),
      STSB_DOUBLE("atom_var_rate", hyper.atom_var_rate),
      STSB_DOUBLE("gamma_min", hyper.gamma_range.lo),
      STSB_DOUBLE("gamma_max", hyper.gamma_range.hi),
      STSB_DOUBLE("lambda_slab_a", hyper.lambda_slab_a),
      STSB_DOUBLE("lambda_slab_b", hyper.lambda_slab_b),
      STSB_DOUBLE("omega_a", hyper.omega_a),
      STSB_DOUBLE("omega_b", hyper.omega_b),
      STSB_DOUBLE("bandwidth_shape", hyper.bandwidth_shape),
      STSB_OPTIONAL("nu_max", hyper.nu_max),
      STSB_DOUBLE("regression_prior_var", hyper.regression_prior_var),
  };
  return keys;
}

#undef STSB_DOUBLE
#undef STSB_SIZE
#undef STSB_BOOL
#undef STSB_OPTIONAL

}  // namespace

std::vector<std::pair<std::string, std::string>> Config::echo() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys()) out.emplace_back(k.name, k.get(*this));
  return out;
}

Config parse_config_text(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, "expected key=value", line_no);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto& keys = config_keys();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) { return key == k.name; });
    if (it == keys.end()) throw Error(ErrorCode::UnknownKey, key, line_no);
    it->set(cfg, value);
  }
  try {
    cfg.hyper.validate();
    cfg.mcmc.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::BadValue, e.what());
  }
  return cfg;
}

Config parse_config(const fs::path& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Trace CSV

void write_trace(std::ostream& out, const ChainTrace& tr) {
  out << "iter,param,value\n";
  auto meta = [&](const std::string& name, const std::string& value) { out << "-1," << name << ',' << value << '\n'; };
  meta("kind", to_string(tr.kind));
  meta("M", std::to_string(tr.truncation));
  meta("p", std::to_string(tr.covariate_dim));
  meta("h1", format_number(tr.shape.h1));
  meta("h2", format_number(tr.shape.h2));
  meta("ht", format_number(tr.shape.ht));
  meta("base_mean", format_number(tr.base.mean));
  meta("base_var", format_number(tr.base.variance));
  meta("atom_var_shape", format_number(tr.atom_var_shape));
  meta("atom_var_rate", format_number(tr.atom_var_rate));
  meta("seed", std::to_string(tr.seed));
  meta("varying_atoms", tr.varying_atoms ? "1" : "0");
  meta("n_pred", std::to_string(tr.prediction_points.size()));
  for (std::size_t j = 0; j < tr.prediction_points.size(); ++j) {
    const auto& p = tr.prediction_points[j];
    const std::string s = "." + std::to_string(j + 1);
    meta("pred_s1" + s, format_number(p.s1));
    meta("pred_s2" + s, format_number(p.s2));
    meta("pred_t" + s, std::to_string(p.t));
    if (j < tr.prediction_x.size()) {
      for (std::size_t q = 0; q < tr.prediction_x[j].size(); ++q) {
        meta("pred_x" + s + "." + std::to_string(q + 1), format_number(tr.prediction_x[j][q]));
      }
    }
  }
  for (std::size_t r = 0; r < tr.records.size(); ++r) {
    const TraceRecord& rec = tr.records[r];
    const std::string it = std::to_string(rec.iter) + ",";
    auto row = [&](const std::string& name, double v) { out << it << name << ',' << format_number(v) << '\n'; };
    auto vec = [&](const char* name, const std::vector<double>& v) {
      for (std::size_t k = 0; k < v.size(); ++k) row(std::string(name) + "." + std::to_string(k + 1), v[k]);
    };
    vec("v", rec.v);
    for (std::size_t k = 0; k < rec.knots.size(); ++k) {
      const std::string s = "." + std::to_string(k + 1);
      row("psi1" + s, rec.knots[k].psi1);
      row("psi2" + s, rec.knots[k].psi2);
      row("zeta" + s, rec.knots[k].zeta);
    }
    row("gamma", rec.gamma);
    row("lambda", rec.lambda);
    row("omega", rec.omega_lambda);
    row("a", rec.a);
    row("b", rec.b);
    vec("mu", rec.mu);
    vec("sigma2", rec.sigma2);
    row("sigma2_eps", rec.sigma2_eps);
    vec("beta", rec.beta);
    row("occupied", static_cast<double>(rec.occupied));
    row("loglik", rec.log_likelihood);
    if (tr.varying_atoms) {
      row("urn_new_mass", rec.urn_new_mass);
      vec("pred_mean", tr.pred_mean[r]);
      vec("pred_var", tr.pred_var[r]);
      vec("pred_draw", tr.pred_draw[r]);
    }
  }
}

void write_trace_csv(const fs::path& path, const ChainTrace& trace) {
  auto out = open_out(path);
  write_trace(out, trace);
}

ChainTrace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "iter,param,value") {
    throw Error(ErrorCode::ParseError, "trace header must be iter,param,value", 1);
  }
  ChainTrace tr;
  std::size_t line_no = 1;
  long current_iter = -2;
  std::size_t n_pred = 0;
  auto ensure = [](std::vector<double>& v, std::size_t k) {
    if (v.size() < k) v.resize(k, 0.0);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 3) throw Error(ErrorCode::ParseError, "expected 3 fields", line_no);
    long iter;
    {
      const auto res = std::from_chars(f[0].data(), f[0].data() + f[0].size(), iter);
      if (res.ec != std::errc() || res.ptr != f[0].data() + f[0].size()) {
        throw Error(ErrorCode::ParseError, "malformed iteration", line_no);
      }
    }
    // Split "name.k[.q]" into the name and 1-based indices.
    std::string name = f[1];
    std::vector<std::size_t> idx;
    while (true) {
      const auto dot = name.rfind('.');
      if (dot == std::string::npos) break;
      std::size_t k;
      const std::string tail = name.substr(dot + 1);
      const auto res = std::from_chars(tail.data(), tail.data() + tail.size(), k);
      if (res.ec != std::errc() || res.ptr != tail.data() + tail.size() || k == 0) break;
      idx.insert(idx.begin(), k);
      name.resize(dot);
    }
    if (iter == -1 && name == "kind") {
      try {
        tr.kind = parse_kernel_kind(f[2]);
      } catch (const Error&) {
        throw Error(ErrorCode::ParseError, "unknown kernel kind", line_no);
      }
      continue;
    }
    double v;
    if (!parse_double(f[2], v) && f[2] != "nan" && f[2] != "-nan") throw Error(ErrorCode::ParseError, "malformed value", line_no);
    if (f[2] == "nan" || f[2] == "-nan") v = std::numeric_limits<double>::quiet_NaN();
    const std::size_t k = idx.empty() ? 0 : idx[0];

    if (iter == -1) {
      if (name == "M") tr.truncation = static_cast<std::size_t>(v);
      else if (name == "p") tr.covariate_dim = static_cast<std::size_t>(v);
      else if (name == "h1") tr.shape.h1 = v;
      else if (name == "h2") tr.shape.h2 = v;
      else if (name == "ht") tr.shape.ht = v;
      else if (name == "base_mean") tr.base.mean = v;
      else if (name == "base_var") tr.base.variance = v;
      else if (name == "atom_var_shape") tr.atom_var_shape = v;
      else if (name == "atom_var_rate") tr.atom_var_rate = v;
      else if (name == "seed") tr.seed = static_cast<std::uint64_t>(v);
      else if (name == "varying_atoms") tr.varying_atoms = v != 0.0;
      else if (name == "n_pred") {
        n_pred = static_cast<std::size_t>(v);
        tr.prediction_points.resize(n_pred);
        tr.prediction_x.resize(n_pred);
      } else if ((name == "pred_s1" || name == "pred_s2" || name == "pred_t" || name == "pred_x") && k >= 1 &&
                 k <= n_pred) {
        auto& p = tr.prediction_points[k - 1];
        if (name == "pred_s1") p.s1 = v;
        else if (name == "pred_s2") p.s2 = v;
        else if (name == "pred_t") p.t = static_cast<int>(v);
        else if (idx.size() == 2) ensure(tr.prediction_x[k - 1], idx[1]), tr.prediction_x[k - 1][idx[1] - 1] = v;
      } else {
        throw Error(ErrorCode::ParseError, "unknown setting '" + f[1] + "'", line_no);
      }
      continue;
    }
    if (iter < 0) throw Error(ErrorCode::ParseError, "negative iteration", line_no);
    if (iter != current_iter) {
      current_iter = iter;
      TraceRecord rec;
      rec.iter = static_cast<std::size_t>(iter);
      rec.v.resize(tr.truncation);
      rec.knots.resize(tr.truncation);
      rec.mu.resize(tr.truncation);
      rec.sigma2.resize(tr.truncation);
      rec.beta.resize(tr.covariate_dim);
      tr.records.push_back(std::move(rec));
      if (tr.varying_atoms) {
        tr.pred_mean.emplace_back(n_pred, 0.0);
        tr.pred_var.emplace_back(n_pred, 0.0);
        tr.pred_draw.emplace_back(n_pred, 0.0);
      }
    }
    TraceRecord& rec = tr.records.back();
    auto at = [&](std::vector<double>& vec) -> double& {
      if (k < 1 || k > vec.size()) throw Error(ErrorCode::ParseError, "index out of range", line_no);
      return vec[k - 1];
    };
    auto knot = [&]() -> Knot& {
      if (k < 1 || k > rec.knots.size()) throw Error(ErrorCode::ParseError, "index out of range", line_no);
      return rec.knots[k - 1];
    };
    if (name == "v") at(rec.v) = v;
    else if (name == "psi1") knot().psi1 = v;
    else if (name == "psi2") knot().psi2 = v;
    else if (name == "zeta") knot().zeta = v;
    else if (name == "gamma") rec.gamma = v;
    else if (name == "lambda") rec.lambda = v;
    else if (name == "omega") rec.omega_lambda = v;
    else if (name == "a") rec.a = v;
    else if (name == "b") rec.b = v;
    else if (name == "mu") at(rec.mu) = v;
    else if (name == "sigma2") at(rec.sigma2) = v;
    else if (name == "sigma2_eps") rec.sigma2_eps = v;
    else if (name == "beta") at(rec.beta) = v;
    else if (name == "occupied") rec.occupied = static_cast<std::size_t>(v);
    else if (name == "loglik") rec.log_likelihood = v;
    else if (name == "urn_new_mass") rec.urn_new_mass = v;
    else if (tr.varying_atoms && name == "pred_mean") at(tr.pred_mean.back()) = v;
    else if (tr.varying_atoms && name == "pred_var") at(tr.pred_var.back()) = v;
    else if (tr.varying_atoms && name == "pred_draw") at(tr.pred_draw.back()) = v;
    else throw Error(ErrorCode::ParseError, "unknown parameter '" + f[1] + "'", line_no);
  }
  if (!tr.varying_atoms) tr.prediction_x.clear();
  return tr;
}

ChainTrace read_trace_csv(const fs::path& path) {
  auto in = open_in(path);
  return read_trace(in);
}

// ---------------------------------------------------------------------------
// Predictions

void write_predictions(std::ostream& out, const PredictionResult& pred) {
  out << "s1,s2,t,mean,sd,q05,q50,q95\n";
  const bool q = !pred.q05.empty();
  for (std::size_t i = 0; i < pred.points.size(); ++i) {
    const auto& p = pred.points[i];
    out << format_number(p.s1) << ',' << format_number(p.s2) << ',' << p.t << ',' << format_number(pred.mean[i]) << ','
        << format_number(pred.sd[i]) << ',';
    if (q) out << format_number(pred.q05[i]) << ',' << format_number(pred.q50[i]) << ',' << format_number(pred.q95[i]);
    else out << ",,";
    out << '\n';
  }
}

void write_predictions_csv(const fs::path& path, const PredictionResult& pred) {
  auto out = open_out(path);
  write_predictions(out, pred);
}

PredictionResult read_predictions_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyDataset, "predictions file is empty");
  const auto header = split_csv(line);
  const char* names[] = {"s1", "s2", "t", "mean", "sd", "q05", "q50", "q95"};
  std::size_t col[8];
  for (int j = 0; j < 8; ++j) {
    const auto it = std::find(header.begin(), header.end(), names[j]);
    if (it == header.end()) throw Error(ErrorCode::MissingColumn, names[j]);
    col[j] = static_cast<std::size_t>(it - header.begin());
  }
  PredictionResult pred;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw Error(ErrorCode::ParseError, "wrong field count", line_no);
    double v[8] = {};
    for (int j = 0; j < 8; ++j) {
      if (j >= 5 && f[col[j]].empty()) continue;
      if (!parse_double(f[col[j]], v[j])) throw Error(ErrorCode::ParseError, std::string("malformed ") + names[j], line_no);
    }
    pred.points.push_back({v[0], v[1], parse_time_index(v[2])});
    pred.mean.push_back(v[3]);
    pred.sd.push_back(v[4]);
    if (!f[col[5]].empty()) {
      pred.q05.push_back(v[5]);
      pred.q50.push_back(v[6]);
      pred.q95.push_back(v[7]);
    }
  }
  return pred;
}

// ---------------------------------------------------------------------------
// Manifest

std::string sha256_file(const fs::path& path) {
  auto in = open_in(path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error(ErrorCode::IoError, "digest initialisation failed");
  }
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  std::ostringstream os;
  os << "command: " << m.command << '\n';
  os << "version: " << m.version << '\n';
  os << "seed: " << m.seed << '\n';
  os << "duration_seconds: " << format_number(m.duration_seconds) << '\n';
  os << "[config]\n";
  for (const auto& [k, v] : m.config) os << k << '=' << v << '\n';
  os << "[inputs]\n";
  for (const auto& p : m.inputs) os << sha256_file(p) << "  " << p.string() << '\n';
  os << "[outputs]\n";
  for (const auto& p : m.outputs) os << sha256_file(p) << "  " << p.string() << '\n';
  const fs::path tmp = path.string() + ".tmp";
  {
    auto out = open_out(tmp);
    out << os.str();
    if (!out) throw Error(ErrorCode::IoError, "failed writing manifest");
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string config;
  int threads = 1;
  std::string out_dir = ".";
};

struct ShapeOptions {
  double h1 = 0.0, h2 = 0.0, ht = 0.0;
  double gamma = 1.0, lambda = 0.0;

  KernelShape shape() const { return {h1, h2, ht, gamma, lambda}; }
};

void add_shape_options(CLI::App* cmd, ShapeOptions& s) {
  cmd->add_option("--h1", s.h1, "separable bandwidth along s1");
  cmd->add_option("--h2", s.h2, "separable bandwidth along s2");
  cmd->add_option("--ht", s.ht, "separable bandwidth in time");
  cmd->add_option("--gamma", s.gamma, "Gneiting time scaling");
  cmd->add_option("--lambda", s.lambda, "Gneiting interaction in [0,1]");
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size("list", trim(item)));
  return out;
}

// Tracks the operation in progress so failures name it.
struct Step {
  std::string name;
  void operator()(std::string n) { name = std::move(n); }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct PriorOptions {
  std::string kernel = "gneiting";
  double a = 1.0, b = 1.0;
  std::size_t m = 100;
  int t_max = 10;
  ShapeOptions shape;
};

PriorConfig make_prior(const PriorOptions& o) {
  PriorConfig pc;
  pc.domain = SpaceTimeDomain{{0.0, 1.0}, {0.0, 1.0}, o.t_max};
  pc.truncation = o.m;
  pc.a = o.a;
  pc.b = o.b;
  pc.kind = parse_kernel_kind(o.kernel);
  pc.shape = default_shape(pc.kind, pc.domain, o.shape.shape());
  return pc;
}

void add_prior_options(CLI::App* cmd, PriorOptions& o) {
  cmd->add_option("--kernel", o.kernel, "gneiting, separable or constant");
  cmd->add_option("--a", o.a, "stick shape a");
  cmd->add_option("--b", o.b, "stick shape b");
  cmd->add_option("--M", o.m, "truncation");
  cmd->add_option("--T", o.t_max, "number of time points");
  add_shape_options(cmd, o.shape);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Spatio-temporal stick-breaking mixtures"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Globals g;
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--config", g.config, "key=value configuration file");
  app.add_option("--threads", g.threads, "worker cap (computation is single-threaded)")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "directory for outputs");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  std::string sim_model;
  std::size_t sim_n = 200;
  int sim_t = 24;
  double sim_rho = 0.2, sim_omega = 10.0, sim_delta = 10.0, sim_radius = 0.1, sim_holdout = 0.0;
  std::string sim_locations = "thomas", sim_time_mode = "independent", sim_out = "data.csv";
  sim->add_option("--model", sim_model, "scenario41 or a covariance model name/number")->required();
  sim->add_option("--n", sim_n, "locations per time point");
  sim->add_option("--T", sim_t, "number of time points");
  sim->add_option("--rho", sim_rho, "scenario lengthscale");
  sim->add_option("--locations", sim_locations, "thomas or uniform");
  sim->add_option("--omega", sim_omega, "Thomas parent intensity");
  sim->add_option("--delta", sim_delta, "Thomas mean daughters per parent");
  sim->add_option("--radius", sim_radius, "Thomas cluster radius");
  sim->add_option("--time-mode", sim_time_mode, "independent or replicate");
  sim->add_option("--holdout", sim_holdout, "fraction of rows written to test.csv instead");
  sim->add_option("--out", sim_out, "dataset file name");

  // fit
  auto* fit = app.add_subcommand("fit", "run the posterior sampler");
  std::string fit_data, fit_kernel = "gneiting", fit_trace = "trace.csv", fit_predict_at;
  bool fit_va = false;
  ShapeOptions fit_shape;
  fit->add_option("--data", fit_data, "dataset CSV")->required();
  fit->add_option("--kernel", fit_kernel, "gneiting, separable or constant");
  fit->add_flag("--varying-atoms", fit_va, "Gaussian-process atoms");
  fit->add_option("--predict-at", fit_predict_at, "points CSV predicted during a varying-atoms fit");
  fit->add_option("--trace", fit_trace, "trace file name");
  add_shape_options(fit, fit_shape);

  // predict
  auto* pred = app.add_subcommand("predict", "posterior predictive summaries");
  std::string pred_trace, pred_points, pred_out = "predictions.csv", pred_density_at, pred_density_out = "density.csv";
  std::size_t pred_grid = 201;
  pred->add_option("--trace", pred_trace, "trace CSV")->required();
  pred->add_option("--points", pred_points, "points CSV (dataset schema)")->required();
  pred->add_option("--out", pred_out, "predictions file name");
  pred->add_option("--density-at", pred_density_at, "s1,s2,t for a predictive density curve");
  pred->add_option("--grid", pred_grid, "density grid size");

  // covariance
  auto* cov = app.add_subcommand("covariance", "co-clustering covariance table");
  PriorOptions cov_prior;
  double cov_max_u = 0.5;
  std::size_t cov_nu = 11;
  int cov_t0 = 1, cov_max_lag = 5;
  add_prior_options(cov, cov_prior);
  cov->add_option("--max-distance", cov_max_u, "largest spatial lag");
  cov->add_option("--n-distance", cov_nu, "number of spatial lags");
  cov->add_option("--t0", cov_t0, "reference time");
  cov->add_option("--max-lag", cov_max_lag, "largest time lag");

  // clusters
  auto* clu = app.add_subcommand("clusters", "expected number of occupied components");
  PriorOptions clu_prior;
  std::string clu_ns = "10,100,1000";
  std::size_t clu_reps = 50;
  add_prior_options(clu, clu_prior);
  clu->add_option("--ns", clu_ns, "comma-separated sample sizes");
  clu->add_option("--reps", clu_reps, "prior replicates");

  // weights
  auto* wts = app.add_subcommand("weights", "mixture weight maps");
  PriorOptions wts_prior;
  wts_prior.m = 20;
  std::string wts_components = "1,2,3", wts_trace;
  std::size_t wts_grid = 21;
  int wts_t = 1;
  add_prior_options(wts, wts_prior);
  wts->add_option("--components", wts_components, "1-based components");
  wts->add_option("--grid", wts_grid, "grid points per axis");
  wts->add_option("--t", wts_t, "time point");
  wts->add_option("--trace", wts_trace, "use the last record of a trace instead of a prior draw");

  // score
  auto* sco = app.add_subcommand("score", "ESPE of predictions against truth");
  std::string sco_pred, sco_truth, sco_out = "score.csv";
  int sco_window = 0;
  sco->add_option("--predictions", sco_pred, "predictions CSV")->required();
  sco->add_option("--truth", sco_truth, "dataset CSV with true responses")->required();
  sco->add_option("--window", sco_window, "write residuals.csv aggregated over this many time steps");
  sco->add_option("--out", sco_out, "score file name");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto start = Clock::now();
  std::string command;
  Step step;
  try {
    const fs::path out_dir(g.out_dir);
    step("create output directory");
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.seed = g.seed;
    manifest.config.emplace_back("threads", std::to_string(g.threads));

    if (sim->parsed()) {
      command = "simulate";
      Rng rng = make_substream(g.seed, 0);
      Dataset data;
      if (sim_model == "scenario41" || sim_model == "regime") {
        step("scenario_regime");
        data = scenario_regime(sim_n, sim_t, sim_rho, rng);
        manifest.config.emplace_back("model", "scenario41");
        manifest.config.emplace_back("rho", format_number(sim_rho));
      } else {
        step("parse model");
        CovModelSpec spec = default_cov_spec(parse_cov_model(sim_model));
        spec.time_mode = parse_time_mode(sim_time_mode);
        std::vector<Location> locs;
        const Window window{};
        if (sim_locations == "thomas") {
          step("thomas_process");
          locs = thomas_process(sim_omega, sim_delta, sim_radius, window, rng);
        } else if (sim_locations == "uniform") {
          for (std::size_t i = 0; i < sim_n; ++i) locs.push_back({rnd::uniform(rng), rnd::uniform(rng)});
        } else {
          throw Error(ErrorCode::BadValue, "locations must be thomas or uniform");
        }
        step("simulate_field");
        data = simulate_dataset(spec, locs, sim_t, rng);
        data.domain = SpaceTimeDomain{window.s1, window.s2, sim_t};
        manifest.config.emplace_back("model", to_string(spec.tag));
        manifest.config.emplace_back("time_mode", spec.time_dependent() ? "n/a" : to_string(spec.time_mode));
        manifest.config.emplace_back("locations", sim_locations);
      }
      manifest.config.emplace_back("n", std::to_string(sim_n));
      manifest.config.emplace_back("T", std::to_string(sim_t));
      const fs::path out = out_dir / sim_out;
      step("write_csv");
      if (sim_holdout > 0.0) {
        if (!(sim_holdout < 1.0)) throw Error(ErrorCode::BadValue, "holdout must lie in [0, 1)");
        Dataset train, test;
        for (const auto& o : data.observations) {
          (rnd::uniform(rng) < sim_holdout ? test : train).observations.push_back(o);
        }
        write_csv(out, train);
        write_csv(out_dir / "test.csv", test);
        manifest.outputs = {out, out_dir / "test.csv"};
        manifest.config.emplace_back("holdout", format_number(sim_holdout));
      } else {
        write_csv(out, data);
        manifest.outputs = {out};
      }
    } else if (fit->parsed()) {
      command = "fit";
      step("parse_config");
      Config cfg = g.config.empty() ? Config{} : parse_config(g.config);
      if (app.count("--seed") > 0) cfg.mcmc.seed = g.seed;
      if (fit_va) cfg.mcmc.varying_atoms = true;
      manifest.seed = cfg.mcmc.seed;
      step("load_csv");
      const Dataset data = load_csv(fit_data);
      manifest.inputs.push_back(fit_data);
      const KernelKind kind = parse_kernel_kind(fit_kernel);
      Rng rng = make_substream(cfg.mcmc.seed, 1);
      ChainTrace trace;
      if (cfg.mcmc.varying_atoms) {
        std::vector<SpaceTimePoint> pts;
        std::vector<std::vector<double>> xs;
        if (!fit_predict_at.empty()) {
          step("load_csv");
          const Dataset targets = load_csv(fit_predict_at);
          manifest.inputs.push_back(fit_predict_at);
          for (const auto& o : targets.observations) {
            pts.push_back(o.point);
            xs.push_back(o.x);
          }
        }
        if (data.covariate_dim() == 0) xs.clear();
        step("run_chain_va");
        trace = run_chain_va(data, cfg.mcmc, cfg.hyper, kind, rng, fit_shape.shape(), pts, xs);
      } else {
        step("run_chain");
        trace = run_chain(data, cfg.mcmc, cfg.hyper, kind, rng, fit_shape.shape());
      }
      step("write_trace_csv");
      const fs::path out = out_dir / fit_trace;
      write_trace_csv(out, trace);
      manifest.outputs = {out};
      manifest.config = cfg.echo();
      manifest.config.emplace_back("kernel", to_string(kind));
      manifest.config.emplace_back("threads", std::to_string(g.threads));
      std::cout << "kept " << trace.records.size() << " records; trace written to " << out.string() << '\n';
    } else if (pred->parsed()) {
      command = "predict";
      step("read_trace_csv");
      const ChainTrace trace = read_trace_csv(pred_trace);
      step("load_csv");
      const Dataset pts = load_csv(pred_points);
      manifest.inputs = {pred_trace, pred_points};
      std::vector<SpaceTimePoint> points;
      std::vector<std::vector<double>> xs;
      for (const auto& o : pts.observations) {
        points.push_back(o.point);
        if (pts.covariate_dim() > 0) xs.push_back(o.x);
      }
      Rng rng = make_substream(g.seed, 2);
      step("posterior_predictive");
      const PredictionResult res = posterior_predictive(trace, points, xs, rng);
      step("write_predictions_csv");
      const fs::path out = out_dir / pred_out;
      write_predictions_csv(out, res);
      manifest.outputs = {out};
      if (!pred_density_at.empty()) {
        step("predictive_density");
        std::vector<double> v;
        std::stringstream ss(pred_density_at);
        std::string item;
        while (std::getline(ss, item, ',')) v.push_back(to_double("density-at", trim(item)));
        if (v.size() != 3) throw Error(ErrorCode::BadValue, "density-at needs s1,s2,t");
        const SpaceTimePoint p{v[0], v[1], parse_time_index(v[2])};
        const std::vector<SpaceTimePoint> one{p};
        Rng rng_point = make_substream(g.seed, 3);
        const PredictionResult mom = posterior_predictive(trace, one, {}, rng_point, false);
        std::vector<double> grid(std::max<std::size_t>(pred_grid, 2));
        const double lo = mom.mean[0] - 6.0 * mom.sd[0], hi = mom.mean[0] + 6.0 * mom.sd[0];
        for (std::size_t i = 0; i < grid.size(); ++i) {
          grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid.size() - 1);
        }
        const auto dens = predictive_density(trace, p, grid, rng_point);
        const fs::path dout = out_dir / pred_density_out;
        auto os = open_out(dout);
        os << "y,density\n";
        for (std::size_t i = 0; i < grid.size(); ++i) os << format_number(grid[i]) << ',' << format_number(dens[i]) << '\n';
        os.close();
        manifest.outputs.push_back(dout);
      }
    } else if (cov->parsed()) {
      command = "covariance";
      step("covariance table");
      const PriorConfig pc = make_prior(cov_prior);
      const fs::path out = out_dir / "covariance.csv";
      std::ostringstream os;
      os << "u,lag,g,coclustering\n";
      const Location origin{0.5, 0.5};
      for (int lag = 0; lag <= cov_max_lag; ++lag) {
        for (std::size_t i = 0; i < cov_nu; ++i) {
          const double u = cov_nu == 1 ? 0.0 : cov_max_u * static_cast<double>(i) / static_cast<double>(cov_nu - 1);
          const double gv = g_quadrature(pc.kind, pc.shape, pc.domain, origin, {origin.s1 + u, origin.s2}, cov_t0,
                                         cov_t0 + lag);
          os << format_number(u) << ',' << lag << ',' << format_number(gv) << ','
             << format_number(coclustering_closed_form(pc.a, pc.b, std::min(gv, 1.0))) << '\n';
        }
      }
      auto f = open_out(out);
      f << os.str();
      f.close();
      manifest.outputs = {out};
      manifest.config.emplace_back("kernel", cov_prior.kernel);
      manifest.config.emplace_back("gamma", format_number(cov_prior.shape.gamma));
      manifest.config.emplace_back("lambda", format_number(cov_prior.shape.lambda));
    } else if (clu->parsed()) {
      command = "clusters";
      step("cluster_count_curve");
      const PriorConfig pc = make_prior(clu_prior);
      const auto ns = parse_index_list(clu_ns);
      Rng rng = make_substream(g.seed, 4);
      const auto curve = cluster_count_curve(pc, ns, clu_reps, rng);
      const fs::path out = out_dir / "clusters.csv";
      auto f = open_out(out);
      f << "n,expected_clusters\n";
      for (std::size_t j = 0; j < ns.size(); ++j) f << ns[j] << ',' << format_number(curve[j]) << '\n';
      f.close();
      manifest.outputs = {out};
      manifest.config.emplace_back("kernel", clu_prior.kernel);
    } else if (wts->parsed()) {
      command = "weights";
      StickState st;
      SpaceTimeDomain domain{{0.0, 1.0}, {0.0, 1.0}, wts_prior.t_max};
      if (!wts_trace.empty()) {
        step("read_trace_csv");
        const ChainTrace tr = read_trace_csv(wts_trace);
        if (tr.records.empty()) throw Error(ErrorCode::EmptyTrace, "trace has no kept records");
        const TraceRecord& r = tr.records.back();
        st.v = r.v;
        st.knots = r.knots;
        st.kind = tr.kind;
        st.shape = tr.shape;
        st.shape.gamma = r.gamma;
        st.shape.lambda = r.lambda;
        manifest.inputs.push_back(wts_trace);
      } else {
        step("sample_prior");
        Rng rng = make_substream(g.seed, 5);
        const PriorConfig pc = make_prior(wts_prior);
        st = sample_prior(pc, rng).sticks;
      }
      std::vector<std::size_t> comps;
      for (std::size_t c : parse_index_list(wts_components)) {
        if (c == 0) throw Error(ErrorCode::BadValue, "components are 1-based");
        comps.push_back(c - 1);
      }
      step("weight_map");
      const auto grid = spatial_grid(domain, wts_grid, wts_grid, wts_t);
      const WeightMap map = weight_map(st, grid, comps);
      const fs::path out = out_dir / "weights.csv";
      auto f = open_out(out);
      f << "s1,s2,t,component,pi\n";
      for (std::size_t i = 0; i < map.points.size(); ++i) {
        for (std::size_t j = 0; j < comps.size(); ++j) {
          f << format_number(map.points[i].s1) << ',' << format_number(map.points[i].s2) << ',' << map.points[i].t
            << ',' << comps[j] + 1 << ',' << format_number(map.at(i, j)) << '\n';
        }
      }
      f.close();
      manifest.outputs = {out};
    } else if (sco->parsed()) {
      command = "score";
      step("read_predictions_csv");
      const PredictionResult p = read_predictions_csv(sco_pred);
      step("load_csv");
      const Dataset truth = load_csv(sco_truth);
      manifest.inputs = {sco_pred, sco_truth};
      if (truth.size() != p.points.size()) throw Error(ErrorCode::LengthMismatch, "predictions and truth differ in length");
      std::vector<double> yhat, y;
      std::vector<SpaceTimePoint> pts;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto& o = truth.observations[i];
        if (o.missing) continue;
        yhat.push_back(p.mean[i]);
        y.push_back(o.y);
        pts.push_back(o.point);
      }
      step("espe");
      const Espe e = espe(yhat, y);
      const fs::path out = out_dir / sco_out;
      auto f = open_out(out);
      f << "n,espe_sum,espe_mean\n" << y.size() << ',' << format_number(e.sum) << ',' << format_number(e.mean) << '\n';
      f.close();
      manifest.outputs = {out};
      std::cout << "espe_sum=" << format_number(e.sum) << " espe_mean=" << format_number(e.mean) << '\n';
      if (sco_window > 0) {
        step("residual_map");
        const auto rows = residual_map(yhat, y, pts, sco_window);
        const fs::path rout = out_dir / "residuals.csv";
        auto rf = open_out(rout);
        rf << "s1,s2,t_first,t_last,count,mean_sq_residual\n";
        for (const auto& r : rows) {
          rf << format_number(r.s1) << ',' << format_number(r.s2) << ',' << r.t_first << ',' << r.t_last << ','
             << r.count << ',' << format_number(r.mean_sq_residual) << '\n';
        }
        rf.close();
        manifest.outputs.push_back(rout);
      }
    }
    step("write_manifest");
    manifest.command = command;
    manifest.duration_seconds = seconds_since(start);
    write_manifest(out_dir / (command + ".manifest"), manifest);
  } catch (const std::exception& e) {
    std::cerr << "stsb " << command << ": " << step.name << " failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace stsb
