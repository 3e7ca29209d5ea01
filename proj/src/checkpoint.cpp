#include "splitgs/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace splitgs {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'G', 'S'};

uint64_t fnv1a(const std::string& data) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

class Writer {
public:
    void raw(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u32(uint32_t v) { raw(&v, 4); }
    void i32(int32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i64(int64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void doubles(const double* p, size_t n) {
        u64(n);
        raw(p, n * sizeof(double));
    }
    const std::string& data() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string data) : buf_(std::move(data)) {}
    void raw(void* p, size_t n) {
        if (pos_ + n > buf_.size()) throw IntegrityError("checkpoint: truncated payload");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
    int32_t i32() { int32_t v; raw(&v, 4); return v; }
    uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
    int64_t i64() { int64_t v; raw(&v, 8); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    std::string str() {
        const uint64_t n = u64();
        if (n > buf_.size()) throw IntegrityError("checkpoint: bad string length");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    std::vector<double> doubles() {
        const uint64_t n = u64();
        if (n * sizeof(double) > buf_.size()) throw IntegrityError("checkpoint: bad array length");
        std::vector<double> v(n);
        raw(v.data(), n * sizeof(double));
        return v;
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    std::string buf_;
    size_t pos_ = 0;
};

void write_cloud(Writer& w, const GaussianCloud& cloud) {
    w.u64(cloud.size());
    w.i32(cloud.sh_degree);
    for (const auto& v : cloud.center) w.raw(v.data(), 3 * sizeof(double));
    for (const auto& v : cloud.rotation) w.raw(v.data(), 4 * sizeof(double));
    for (const auto& v : cloud.log_scale) w.raw(v.data(), 3 * sizeof(double));
    w.doubles(cloud.opacity_logit.data(), cloud.opacity_logit.size());
    w.doubles(cloud.sh.data(), static_cast<size_t>(cloud.sh.size()));
}

GaussianCloud read_cloud(Reader& r) {
    GaussianCloud cloud;
    const size_t n = r.u64();
    cloud.sh_degree = r.i32();
    cloud.center.resize(n);
    cloud.rotation.resize(n);
    cloud.log_scale.resize(n);
    for (auto& v : cloud.center) r.raw(v.data(), 3 * sizeof(double));
    for (auto& v : cloud.rotation) r.raw(v.data(), 4 * sizeof(double));
    for (auto& v : cloud.log_scale) r.raw(v.data(), 3 * sizeof(double));
    cloud.opacity_logit = r.doubles();
    auto sh = r.doubles();
    cloud.sh.resize(static_cast<Eigen::Index>(n), cloud.sh_dim());
    if (sh.size() != static_cast<size_t>(cloud.sh.size()))
        throw IntegrityError("checkpoint: sh block size mismatch");
    std::memcpy(cloud.sh.data(), sh.data(), sh.size() * sizeof(double));
    cloud.validate();
    return cloud;
}

void write_mlp(Writer& w, const Mlp& net) {
    w.u64(net.weights.size());
    for (size_t l = 0; l < net.weights.size(); ++l) {
        w.u64(static_cast<uint64_t>(net.weights[l].rows()));
        w.u64(static_cast<uint64_t>(net.weights[l].cols()));
        w.doubles(net.weights[l].data(), static_cast<size_t>(net.weights[l].size()));
        w.doubles(net.biases[l].data(), static_cast<size_t>(net.biases[l].size()));
    }
}

Mlp read_mlp(Reader& r) {
    Mlp net;
    const size_t layers = r.u64();
    for (size_t l = 0; l < layers; ++l) {
        const auto rows = static_cast<Eigen::Index>(r.u64());
        const auto cols = static_cast<Eigen::Index>(r.u64());
        auto wdata = r.doubles();
        auto bdata = r.doubles();
        if (wdata.size() != static_cast<size_t>(rows * cols) ||
            bdata.size() != static_cast<size_t>(rows))
            throw IntegrityError("checkpoint: mlp layer size mismatch");
        Eigen::MatrixXd wm(rows, cols);
        std::memcpy(wm.data(), wdata.data(), wdata.size() * sizeof(double));
        Eigen::VectorXd bv(rows);
        std::memcpy(bv.data(), bdata.data(), bdata.size() * sizeof(double));
        net.weights.push_back(std::move(wm));
        net.biases.push_back(std::move(bv));
    }
    return net;
}

void write_camera(Writer& w, const Camera& cam) {
    w.f64(cam.fx);
    w.f64(cam.fy);
    w.f64(cam.cx);
    w.f64(cam.cy);
    w.i32(cam.width);
    w.i32(cam.height);
    w.f64(cam.near);
    w.f64(cam.far);
    w.raw(cam.world_to_camera.data(), 16 * sizeof(double));
}

Camera read_camera(Reader& r) {
    Camera cam;
    cam.fx = r.f64();
    cam.fy = r.f64();
    cam.cx = r.f64();
    cam.cy = r.f64();
    cam.width = r.i32();
    cam.height = r.i32();
    cam.near = r.f64();
    cam.far = r.f64();
    r.raw(cam.world_to_camera.data(), 16 * sizeof(double));
    return cam;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    Writer w;
    w.str(ckpt.config.to_json_string());

    write_cloud(w, ckpt.scene.static_set.cloud);
    write_mlp(w, ckpt.scene.static_set.app_mlp);
    write_cloud(w, ckpt.scene.dynamic_set.cloud);
    write_mlp(w, ckpt.scene.dynamic_set.deform_mlp);
    write_mlp(w, ckpt.scene.dynamic_set.app_mlp);
    w.i32(ckpt.scene.dynamic_set.use_app_mlp ? 1 : 0);
    w.i32(ckpt.scene.encoding.l_spatial);
    w.i32(ckpt.scene.encoding.l_temporal);
    w.raw(ckpt.scene.background.data(), 3 * sizeof(double));

    w.u64(ckpt.adam.size());
    for (const auto& [name, slot] : ckpt.adam) {
        w.str(name);
        w.doubles(slot.m.data(), slot.m.size());
        w.doubles(slot.v.data(), slot.v.size());
        w.i64(slot.step);
    }

    w.i32(static_cast<int32_t>(ckpt.phase));
    w.i64(ckpt.phase_step);
    w.i64(ckpt.global_step);
    w.str(ckpt.rng_state);
    w.f64(ckpt.depth_align_scale);
    w.f64(ckpt.depth_align_offset);
    w.i32(ckpt.depth_align_done ? 1 : 0);

    w.u64(ckpt.cameras.size());
    for (size_t i = 0; i < ckpt.cameras.size(); ++i) {
        w.f64(ckpt.camera_times[i]);
        write_camera(w, ckpt.cameras[i]);
    }

    const std::string& payload = w.data();
    const uint64_t hash = fnv1a(payload);
    const uint64_t size = payload.size();

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IntegrityError("checkpoint: cannot open for writing: " + path.string());
        out.write(kMagic, 4);
        const uint32_t version = kCheckpointVersion;
        out.write(reinterpret_cast<const char*>(&version), 4);
        out.write(reinterpret_cast<const char*>(&size), 8);
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        out.write(reinterpret_cast<const char*>(&hash), 8);
        if (!out) throw IntegrityError("checkpoint: write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("checkpoint: cannot open: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IntegrityError("checkpoint: bad magic bytes in " + path.string());
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCheckpointVersion)
        throw IntegrityError("checkpoint: file version " + std::to_string(version) +
                             " is not supported (expected " + std::to_string(kCheckpointVersion) +
                             ")");
    uint64_t size = 0;
    in.read(reinterpret_cast<char*>(&size), 8);
    if (!in) throw IntegrityError("checkpoint: truncated header in " + path.string());
    std::string payload(size, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(size));
    uint64_t stored_hash = 0;
    in.read(reinterpret_cast<char*>(&stored_hash), 8);
    if (!in) throw IntegrityError("checkpoint: truncated file: " + path.string());
    if (fnv1a(payload) != stored_hash)
        throw IntegrityError("checkpoint: content hash mismatch (corrupt file): " + path.string());

    Reader r(std::move(payload));
    Checkpoint ckpt;
    ckpt.config = TrainConfig::from_json_string(r.str());
    ckpt.scene.static_set.cloud = read_cloud(r);
    ckpt.scene.static_set.app_mlp = read_mlp(r);
    ckpt.scene.dynamic_set.cloud = read_cloud(r);
    ckpt.scene.dynamic_set.deform_mlp = read_mlp(r);
    ckpt.scene.dynamic_set.app_mlp = read_mlp(r);
    ckpt.scene.dynamic_set.use_app_mlp = r.i32() != 0;
    ckpt.scene.encoding.l_spatial = r.i32();
    ckpt.scene.encoding.l_temporal = r.i32();
    r.raw(ckpt.scene.background.data(), 3 * sizeof(double));

    const size_t slots = r.u64();
    for (size_t i = 0; i < slots; ++i) {
        const std::string name = r.str();
        AdamSlot slot;
        slot.m = r.doubles();
        slot.v = r.doubles();
        slot.step = r.i64();
        ckpt.adam.emplace(name, std::move(slot));
    }

    ckpt.phase = static_cast<TrainPhase>(r.i32());
    ckpt.phase_step = r.i64();
    ckpt.global_step = r.i64();
    ckpt.rng_state = r.str();
    ckpt.depth_align_scale = r.f64();
    ckpt.depth_align_offset = r.f64();
    ckpt.depth_align_done = r.i32() != 0;

    const size_t cams = r.u64();
    for (size_t i = 0; i < cams; ++i) {
        ckpt.camera_times.push_back(r.f64());
        ckpt.cameras.push_back(read_camera(r));
    }
    if (!r.done()) throw IntegrityError("checkpoint: trailing bytes in " + path.string());
    return ckpt;
}

}  // namespace splitgs
