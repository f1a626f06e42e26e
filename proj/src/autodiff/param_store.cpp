#include "docir/autodiff/param_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace docir::ad {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
Tensor<T>& ParamStore<T>::add(std::string name, Tensor<T> tensor) {
  if (contains(name)) throw std::invalid_argument("ParamStore: duplicate name '" + name + "'");
  tensor.set_requires_grad(true);
  entries_.push_back({std::move(name), std::move(tensor)});
  return entries_.back().tensor;
}

template <class T>
Tensor<T>& ParamStore<T>::get(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw std::out_of_range("ParamStore: no parameter '" + std::string(name) + "'");
}

template <class T>
const Tensor<T>& ParamStore<T>::get(std::string_view name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

template <class T>
bool ParamStore<T>::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

template <class T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <class T>
void ParamStore<T>::copy_values_from(const ParamStore& other) {
  if (other.entries_.size() != entries_.size()) throw std::invalid_argument("copy_values_from: layout mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i];
    const auto& src = other.entries_[i];
    if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
      throw std::invalid_argument("copy_values_from: layout mismatch at '" + dst.name + "'");
    }
    std::copy(src.tensor.data().begin(), src.tensor.data().end(), dst.tensor.data().begin());
  }
}

namespace {

template <class T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& store) {
  nlohmann::json header;
  header["format"] = "docir-params";
  header["dtype"] = dtype_name<T>();
  auto& tensors = header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : store.entries()) {
    const std::size_t bytes = e.tensor.size() * sizeof(T);
    tensors.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out << header.dump() << '\n';
  for (const auto& e : store.entries()) {
    out.write(reinterpret_cast<const char*>(e.tensor.ptr()), static_cast<std::streamsize>(e.tensor.size() * sizeof(T)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

template <class T>
void load_checkpoint(const std::filesystem::path& path, ParamStore<T>& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  if (header.at("format") != "docir-params") throw std::runtime_error("load_checkpoint: not a parameter file");
  if (header.at("dtype") != dtype_name<T>()) {
    throw std::runtime_error("load_checkpoint: dtype " + header.at("dtype").get<std::string>() + " does not match");
  }
  const auto& tensors = header.at("tensors");
  if (tensors.size() != store.entries().size()) throw std::runtime_error("load_checkpoint: tensor count mismatch");
  const auto payload_start = in.tellg();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& e = store.entries()[i];
    const auto& t = tensors[i];
    if (t.at("name") != e.name || t.at("shape").get<Shape>() != e.tensor.shape()) {
      throw std::runtime_error("load_checkpoint: layout mismatch at '" + e.name + "'");
    }
    in.seekg(payload_start + static_cast<std::streamoff>(t.at("offset").get<std::size_t>()));
    in.read(reinterpret_cast<char*>(e.tensor.ptr()), static_cast<std::streamsize>(e.tensor.size() * sizeof(T)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated payload for '" + e.name + "'");
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template void save_checkpoint(const std::filesystem::path&, const ParamStore<float>&);
template void save_checkpoint(const std::filesystem::path&, const ParamStore<double>&);
template void load_checkpoint(const std::filesystem::path&, ParamStore<float>&);
template void load_checkpoint(const std::filesystem::path&, ParamStore<double>&);

}  // namespace docir::ad
