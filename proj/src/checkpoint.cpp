#include "grfp/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "grfp/tensor_io.hpp"

namespace fs = std::filesystem;

namespace grfp {

namespace {

std::map<std::string, std::string> read_manifest(const std::string& dir) {
  std::ifstream in((fs::path(dir) / "manifest.txt").string());
  if (!in) throw FormatError("cannot open checkpoint manifest in " + dir);
  std::map<std::string, std::string> kv;
  std::string key, value;
  while (in >> key >> value) kv[key] = value;
  return kv;
}

Tensor<float> load_entry(const std::string& dir, const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint " + dir + " is missing entry '" + key + "'");
  return load_tensor((fs::path(dir) / it->second).string());
}

}  // namespace

void save_stgru(const StgruParams<float>& p, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  StgruParams<float> copy = p;
  const auto names = StgruParams<float>::tensor_names();
  auto tensors = copy.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (names[k] == "log_lambda") continue;
    const std::string file = names[k] + ".GRFPTNSR";
    save_tensor(*tensors[k], (fs::path(dir) / file).string());
    manifest << names[k] << '\t' << file << '\n';
  }
  save_tensor(Tensor<float>::scalar(p.lambda()), (fs::path(dir) / "lambda.GRFPTNSR").string());
  manifest << "lambda\tlambda.GRFPTNSR\n";
  manifest << "channels\t" << p.channels << '\n';
  manifest << "conf_channels\t" << p.conf_channels << '\n';
  manifest << "ksize\t" << p.ksize << '\n';
  std::ofstream out((fs::path(dir) / "manifest.txt").string(), std::ios::trunc);
  out << manifest.str();
}

StgruParams<float> load_stgru(const std::string& dir) {
  const auto kv = read_manifest(dir);
  StgruParams<float> p;
  p.channels = std::stoi(kv.at("channels"));
  p.conf_channels = std::stoi(kv.at("conf_channels"));
  p.ksize = std::stoi(kv.at("ksize"));
  p.w_ir = load_entry(dir, kv, "w_ir");
  p.b_r = load_entry(dir, kv, "b_r");
  p.w_xh = load_entry(dir, kv, "w_xh");
  p.w_hh = load_entry(dir, kv, "w_hh");
  p.w_xz = load_entry(dir, kv, "w_xz");
  p.w_hz = load_entry(dir, kv, "w_hz");
  p.b_z = load_entry(dir, kv, "b_z");
  const Tensor<float> lambda = load_entry(dir, kv, "lambda");
  require(lambda.data[0] > 0, "load_stgru: lambda must be positive");
  p.log_lambda = Tensor<float>::scalar(std::log(lambda.data[0]));
  return p;
}

void save_backbone(const BackboneParams<float>& p, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "n_layers\t" << p.layers.size() << '\n';
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string wf = "layer" + std::to_string(l) + "_w.GRFPTNSR";
    const std::string bf = "layer" + std::to_string(l) + "_b.GRFPTNSR";
    save_tensor(p.layers[l].w, (fs::path(dir) / wf).string());
    save_tensor(p.layers[l].b, (fs::path(dir) / bf).string());
    manifest << "layer" << l << "_w\t" << wf << '\n';
    manifest << "layer" << l << "_b\t" << bf << '\n';
    manifest << "layer" << l << "_dilation\t" << p.layers[l].dilation << '\n';
  }
  std::ofstream out((fs::path(dir) / "manifest.txt").string(), std::ios::trunc);
  out << manifest.str();
}

BackboneParams<float> load_backbone(const std::string& dir) {
  const auto kv = read_manifest(dir);
  BackboneParams<float> p;
  const int n = std::stoi(kv.at("n_layers"));
  for (int l = 0; l < n; ++l) {
    BackboneParams<float>::Layer layer;
    layer.w = load_entry(dir, kv, "layer" + std::to_string(l) + "_w");
    layer.b = load_entry(dir, kv, "layer" + std::to_string(l) + "_b");
    layer.dilation = std::stoi(kv.at("layer" + std::to_string(l) + "_dilation"));
    p.layers.push_back(std::move(layer));
  }
  return p;
}

}  // namespace grfp
