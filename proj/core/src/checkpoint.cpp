#include "promptseg/checkpoint.hpp"

#include <sstream>

namespace promptseg {

namespace {

void write_module(torch::serialize::OutputArchive& ar, const std::string& prefix,
                  const torch::nn::Module& m) {
    for (const auto& p : m.named_parameters()) ar.write(prefix + p.key(), p.value().detach());
    for (const auto& b : m.named_buffers()) ar.write(prefix + b.key(), b.value(), true);
}

void read_module(torch::serialize::InputArchive& ar, const std::string& prefix, torch::nn::Module& m) {
    torch::NoGradGuard guard;
    auto load_into = [&](const std::string& name, torch::Tensor& dst, bool is_buffer) {
        torch::Tensor t;
        if (!ar.try_read(prefix + name, t, is_buffer)) {
            throw Error(ErrorCode::Parse, "checkpoint is missing tensor '" + prefix + name + "'");
        }
        if (t.sizes() != dst.sizes()) {
            std::ostringstream os;
            os << "checkpoint tensor '" << prefix << name << "' has shape " << t.sizes() << ", expected "
               << dst.sizes();
            throw Error(ErrorCode::Parse, os.str());
        }
        dst.copy_(t);
    };
    for (auto& p : m.named_parameters()) load_into(p.key(), p.value(), false);
    for (auto& b : m.named_buffers()) load_into(b.key(), b.value(), true);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle) {
    if (!bundle.seg) throw Error(ErrorCode::InvalidInput, "checkpoint needs a segmentation network");
    torch::serialize::OutputArchive ar;
    ar.write("format", c10::IValue(std::string(kCheckpointFormat)));
    ar.write("config", c10::IValue(bundle.config.to_kv().to_string()));
    ar.write("metadata", c10::IValue(bundle.metadata.to_string()));
    ar.write("has_cpp", c10::IValue(static_cast<bool>(bundle.cpp)));
    write_module(ar, "seg/", *bundle.seg);
    if (bundle.cpp) write_module(ar, "cpp/", *bundle.cpp);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    try {
        ar.save_to(path.string());
    } catch (const c10::Error& e) {
        throw Error(ErrorCode::Io, "cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::Io, "checkpoint not found: " + path.string());
    }
    torch::serialize::InputArchive ar;
    try {
        ar.load_from(path.string());
    } catch (const c10::Error& e) {
        throw Error(ErrorCode::Parse, "unreadable checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    c10::IValue format, config, metadata, has_cpp;
    if (!ar.try_read("format", format) || !format.isString() ||
        format.toStringRef() != kCheckpointFormat) {
        throw Error(ErrorCode::Parse, "unsupported checkpoint format in " + path.string());
    }
    if (!ar.try_read("config", config) || !ar.try_read("metadata", metadata) ||
        !ar.try_read("has_cpp", has_cpp)) {
        throw Error(ErrorCode::Parse, "checkpoint header is incomplete");
    }

    ModelBundle b;
    b.config = NetworkConfig::from_kv(KeyValueConfig::parse(config.toStringRef()));
    b.metadata = KeyValueConfig::parse(metadata.toStringRef());
    b.seg = SegModel(b.config);
    read_module(ar, "seg/", *b.seg);
    b.seg->eval();
    if (has_cpp.toBool()) {
        b.cpp = CppModel(b.config);
        read_module(ar, "cpp/", *b.cpp);
        b.cpp->eval();
    }
    return b;
}

}  // namespace promptseg
