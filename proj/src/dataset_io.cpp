#include "oslow/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oslow/common.hpp"
#include "oslow/sha256.hpp"

namespace oslow::io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("short write on '" + path + "'");
}

std::string sha256_file(const std::string& path) {
  return Sha256::hash_hex(read_file(path));
}

namespace {
void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}
}  // namespace

std::string dataset_to_csv(const Tensor& data) {
  std::string out;
  out.reserve(data.numel() * 20);
  for (std::size_t c = 0; c < data.cols(); ++c) {
    if (c) out += ',';
    out += "x" + std::to_string(c + 1);
  }
  out += '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t c = 0; c < data.cols(); ++c) {
      if (c) out += ',';
      append_double(out, data.at(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_dataset_csv(const std::string& path, const Tensor& data) {
  write_file(path, dataset_to_csv(data));
}

Tensor read_dataset_csv(const std::string& path) {
  std::string text = read_file(path);
  std::vector<double> values;
  std::size_t cols = 0, rows = 0;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos)
    throw io_error("'" + path + "': missing csv header");
  cols = 1;
  for (std::size_t i = 0; i < pos; ++i)
    if (text[i] == ',') ++cols;
  ++pos;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    if (eol > pos) {
      std::size_t field = 0, start = pos;
      for (std::size_t i = pos; i <= eol; ++i) {
        if (i == eol || text[i] == ',') {
          double v;
          auto res = std::from_chars(text.data() + start, text.data() + i, v);
          if (res.ec != std::errc{})
            throw io_error("'" + path + "': bad number at row " +
                           std::to_string(rows + 2));
          values.push_back(v);
          start = i + 1;
          ++field;
        }
      }
      if (field != cols)
        throw io_error("'" + path + "': ragged row " +
                       std::to_string(rows + 2));
      ++rows;
    }
    pos = eol + 1;
  }
  if (rows == 0) throw io_error("'" + path + "': empty dataset");
  return Tensor({rows, cols}, std::move(values));
}

namespace {

nlohmann::json spec_to_json(const scm::ScmSpec& spec) {
  nlohmann::json dag;
  dag["d"] = spec.dag.d;
  dag["kind"] = scm::to_string(spec.dag.kind);
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [p, c] : spec.dag.edges)
    edges.push_back({p + 1, c + 1});  // 1-based on disk
  dag["edges"] = std::move(edges);
  nlohmann::json order = nlohmann::json::array();
  for (int v : spec.dag.generating_order.seq) order.push_back(v + 1);
  dag["generating_order"] = std::move(order);

  nlohmann::json fns = nlohmann::json::array();
  for (const auto& fn : spec.node_fns)
    fns.push_back({{"loc_weights", fn.loc_weights},
                   {"scale_weights", fn.scale_weights},
                   {"offset", fn.offset}});

  return {{"dag", std::move(dag)},
          {"form", scm::to_string(spec.form)},
          {"noise", scm::to_string(spec.noise)},
          {"mode", scm::to_string(spec.mode)},
          {"normalize_during_generation", spec.normalize_during_generation},
          {"noise_scale", spec.noise_scale},
          {"node_functions", std::move(fns)}};
}

scm::ScmSpec spec_from_json(const nlohmann::json& j) {
  scm::ScmSpec spec;
  const auto& dag = j.at("dag");
  spec.dag.d = dag.at("d").get<std::size_t>();
  spec.dag.kind = scm::graph_from_string(dag.at("kind").get<std::string>());
  for (const auto& e : dag.at("edges"))
    spec.dag.edges.emplace_back(e.at(0).get<int>() - 1,
                                e.at(1).get<int>() - 1);
  for (const auto& v : dag.at("generating_order"))
    spec.dag.generating_order.seq.push_back(v.get<int>() - 1);
  if (!spec.dag.generating_order.valid())
    throw io_error("sidecar: invalid generating order");

  spec.form = scm::form_from_string(j.at("form").get<std::string>());
  spec.noise = scm::noise_from_string(j.at("noise").get<std::string>());
  spec.mode = scm::mode_from_string(j.at("mode").get<std::string>());
  spec.normalize_during_generation =
      j.at("normalize_during_generation").get<bool>();
  spec.noise_scale = j.at("noise_scale").get<double>();
  for (const auto& fj : j.at("node_functions")) {
    scm::NodeFunctions fn;
    fn.loc_weights = fj.at("loc_weights").get<std::vector<double>>();
    fn.scale_weights = fj.at("scale_weights").get<std::vector<double>>();
    fn.offset = fj.at("offset").get<double>();
    spec.node_fns.push_back(std::move(fn));
  }
  if (spec.node_fns.size() != spec.dag.d)
    throw io_error("sidecar: node function count mismatch");
  return spec;
}

}  // namespace

std::string sidecar_to_json(const scm::Dataset& ds, std::size_t n,
                            const std::string& csv_sha256) {
  nlohmann::json j;
  j["format"] = "oslow-dataset";
  j["version"] = 1;
  j["seed"] = ds.seed;
  j["n"] = n;
  j["csv_sha256"] = csv_sha256;
  j["spec"] = spec_to_json(ds.spec);
  return j.dump(1) + "\n";
}

void write_sidecar(const std::string& path, const scm::Dataset& ds,
                   std::size_t n, const std::string& csv_sha256) {
  write_file(path, sidecar_to_json(ds, n, csv_sha256));
}

Sidecar read_sidecar(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed sidecar '" + path + "': " + e.what());
  }
  if (j.value("format", "") != "oslow-dataset")
    throw io_error("'" + path + "' is not an oslow dataset sidecar");
  Sidecar sc;
  sc.seed = j.at("seed").get<std::uint64_t>();
  sc.n = j.at("n").get<std::size_t>();
  sc.csv_sha256 = j.value("csv_sha256", "");
  sc.spec = spec_from_json(j.at("spec"));
  return sc;
}

}  // namespace oslow::io
