#include "resx/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace resx {

const char* branch_name(BranchKind kind) {
    return kind == BranchKind::linear ? "linear" : "mlp";
}

BranchKind branch_from_name(const std::string& name) {
    if (name == "linear") return BranchKind::linear;
    if (name == "mlp") return BranchKind::mlp;
    throw std::invalid_argument("unknown branch kind: " + name);
}

void ModelConfig::validate() const {
    if (d_in == 0 || d_e == 0 || d_h == 0 || d_out == 0) {
        throw std::invalid_argument("model widths must be positive");
    }
    if (lambda < 0.0 || !std::isfinite(lambda)) {
        throw std::invalid_argument("lambda must be finite and >= 0");
    }
}

ResidualNetParams::ResidualNetParams(std::vector<Tensor> tensors, std::size_t n,
                                     std::size_t per_branch)
    : tensors_(std::move(tensors)), n_(n), per_branch_(per_branch) {}

std::size_t ResidualNetParams::branch_offset(std::size_t i, std::size_t j) const {
    if (i >= n_ || j >= per_branch_) throw std::out_of_range("branch tensor index out of range");
    return 4 + i * per_branch_ + j;
}

const Tensor& ResidualNetParams::branch_tensor(std::size_t i, std::size_t j) const {
    return tensors_[branch_offset(i, j)];
}

Tensor& ResidualNetParams::branch_tensor(std::size_t i, std::size_t j) {
    return tensors_[branch_offset(i, j)];
}

std::span<const Tensor> ResidualNetParams::branch_span(std::size_t i) const {
    return std::span<const Tensor>(tensors_).subspan(branch_offset(i, 0), per_branch_);
}

ResidualNetParams ResidualNetParams::init(const ModelConfig& config, Rng& rng) {
    config.validate();
    std::vector<Tensor> tensors;
    tensors.reserve(4 + config.n * config.tensors_per_branch());
    auto he = [](std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); };

    tensors.push_back(gaussian(rng, config.d_e, config.d_in, he(config.d_in)));
    tensors.push_back(Tensor::zeros(config.d_e));
    tensors.push_back(gaussian(rng, config.d_out, config.d_e, he(config.d_e)));
    tensors.push_back(Tensor::zeros(config.d_out));
    for (std::size_t i = 0; i < config.n; ++i) {
        if (config.branch_kind == BranchKind::linear) {
            tensors.push_back(gaussian(rng, config.d_e, config.d_e, he(config.d_e)));
        } else {
            tensors.push_back(gaussian(rng, config.d_h, config.d_e, he(config.d_e)));
            tensors.push_back(gaussian(rng, config.d_e, config.d_h, he(config.d_h)));
            tensors.push_back(Tensor::zeros(config.d_e));
        }
    }
    return ResidualNetParams(std::move(tensors), config.n, config.tensors_per_branch());
}

ResidualNetParams ResidualNetParams::zeros(const ModelConfig& config) {
    config.validate();
    std::vector<Tensor> tensors;
    tensors.reserve(4 + config.n * config.tensors_per_branch());
    tensors.push_back(Tensor::zeros(config.d_e, config.d_in));
    tensors.push_back(Tensor::zeros(config.d_e));
    tensors.push_back(Tensor::zeros(config.d_out, config.d_e));
    tensors.push_back(Tensor::zeros(config.d_out));
    for (std::size_t i = 0; i < config.n; ++i) {
        if (config.branch_kind == BranchKind::linear) {
            tensors.push_back(Tensor::zeros(config.d_e, config.d_e));
        } else {
            tensors.push_back(Tensor::zeros(config.d_h, config.d_e));
            tensors.push_back(Tensor::zeros(config.d_e, config.d_h));
            tensors.push_back(Tensor::zeros(config.d_e));
        }
    }
    return ResidualNetParams(std::move(tensors), config.n, config.tensors_per_branch());
}

void ResidualNetParams::check_shapes(const ModelConfig& config) const {
    auto expect = [](const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
        const bool ok = cols == 0 ? (t.rank() == 1 && t.size() == rows)
                                  : (t.rank() == 2 && t.rows() == rows && t.cols() == cols);
        if (!ok) throw ShapeError(std::string("params: unexpected shape for ") + what);
    };
    if (n_ != config.n || per_branch_ != config.tensors_per_branch() ||
        tensors_.size() != 4 + config.n * config.tensors_per_branch()) {
        throw ShapeError("params: tensor count does not match config");
    }
    expect(enc_w(), config.d_e, config.d_in, "encoder weight");
    expect(enc_b(), config.d_e, 0, "encoder bias");
    expect(dec_w(), config.d_out, config.d_e, "decoder weight");
    expect(dec_b(), config.d_out, 0, "decoder bias");
    for (std::size_t i = 0; i < config.n; ++i) {
        if (config.branch_kind == BranchKind::linear) {
            expect(branch_tensor(i, 0), config.d_e, config.d_e, "linear branch matrix");
        } else {
            expect(branch_tensor(i, 0), config.d_h, config.d_e, "branch first layer");
            expect(branch_tensor(i, 1), config.d_e, config.d_h, "branch second layer");
            expect(branch_tensor(i, 2), config.d_e, 0, "branch bias");
        }
    }
}

namespace {

Tensor affine(const Tensor& w, const Tensor& b, const Tensor& x) {
    Tensor y = matmul(w, x);
    if (y.rank() == 1) {
        for (std::size_t i = 0; i < y.size(); ++i) y(i) += b(i);
    } else {
        for (std::size_t i = 0; i < y.rows(); ++i) {
            for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b(i);
        }
    }
    return y;
}

void check_block_finite(const Tensor& value, std::size_t block_index) {
    if (!value.all_finite()) {
        throw OverflowError("non-finite activation after block " + std::to_string(block_index),
                            block_index);
    }
}

}  // namespace

Tensor branch_eval(const ResidualNetParams& params, const ModelConfig& config, std::size_t i,
                   const Tensor& z) {
    if (config.branch_kind == BranchKind::linear) {
        return matmul(params.branch_tensor(i, 0), z);
    }
    Tensor h = matmul(params.branch_tensor(i, 0), z);
    for (double& v : h.data()) v = act_eval(config.activation, v);
    return affine(params.branch_tensor(i, 1), params.branch_tensor(i, 2), h);
}

Tensor forward(const ResidualNetParams& params, const ModelConfig& config, const Tensor& x) {
    Tensor z = affine(params.enc_w(), params.enc_b(), x);
    check_block_finite(z, 0);
    for (std::size_t i = 0; i < config.n; ++i) {
        z = add(z, scale(branch_eval(params, config, i, z), config.lambda));
        check_block_finite(z, i + 1);
    }
    Tensor out = affine(params.dec_w(), params.dec_b(), z);
    check_block_finite(out, config.n + 1);
    return out;
}

TowerResult residual_tower(const ResidualNetParams& params, const ModelConfig& config,
                           const Tensor& z) {
    TowerResult result;
    result.output = z;
    result.block_norms.reserve(config.n);
    for (std::size_t i = 0; i < config.n; ++i) {
        result.output =
            add(result.output, scale(branch_eval(params, config, i, result.output), config.lambda));
        check_block_finite(result.output, i + 1);
        result.block_norms.push_back(norm2(result.output));
    }
    return result;
}

std::pair<ResidualNetParams, ModelConfig> zero_pad_depth(const ResidualNetParams& params,
                                                         const ModelConfig& config,
                                                         std::size_t extra) {
    ModelConfig padded_config = config;
    padded_config.n += extra;
    std::vector<Tensor> tensors(params.tensors_.begin(), params.tensors_.end());
    for (std::size_t i = 0; i < extra; ++i) {
        if (config.branch_kind == BranchKind::linear) {
            tensors.push_back(Tensor::zeros(config.d_e, config.d_e));
        } else {
            tensors.push_back(Tensor::zeros(config.d_h, config.d_e));
            tensors.push_back(Tensor::zeros(config.d_e, config.d_h));
            tensors.push_back(Tensor::zeros(config.d_e));
        }
    }
    return {ResidualNetParams(std::move(tensors), padded_config.n, config.tensors_per_branch()),
            padded_config};
}

DiffGraph build_network_graph(const ModelConfig& config) {
    DiffGraph g(config.d_in);
    int z = g.add_affine(0, 0, 1);  // encoder
    const int per_branch = static_cast<int>(config.tensors_per_branch());
    for (std::size_t i = 0; i < config.n; ++i) {
        const int base = 4 + static_cast<int>(i) * per_branch;
        int branch_out;
        if (config.branch_kind == BranchKind::linear) {
            branch_out = g.add_affine(z, base, -1);
        } else {
            int h = g.add_affine(z, base, -1);
            h = g.add_activation(h, config.activation);
            branch_out = g.add_affine(h, base + 1, base + 2);
        }
        z = g.add_sum(z, g.add_scale(branch_out, config.lambda));
    }
    g.add_affine(z, 2, 3);  // decoder
    return g;
}

DiffGraph build_branch_graph(const ModelConfig& config) {
    DiffGraph g(config.d_e);
    if (config.branch_kind == BranchKind::linear) {
        g.add_affine(0, 0, -1);
    } else {
        int h = g.add_affine(0, 0, -1);
        h = g.add_activation(h, config.activation);
        g.add_affine(h, 1, 2);
    }
    return g;
}

namespace {

constexpr char kMagic[5] = {'R', 'E', 'S', 'X', '1'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(out, bits);
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    void expect_magic() {
        need(sizeof kMagic);
        if (std::memcmp(bytes_.data(), kMagic, sizeof kMagic) != 0) {
            throw std::runtime_error("bad checkpoint magic in " + path_);
        }
        pos_ += sizeof kMagic;
    }

    void done() {
        if (pos_ != bytes_.size()) {
            throw std::runtime_error("trailing bytes in checkpoint " + path_);
        }
    }

private:
    void need(std::size_t count) {
        if (pos_ + count > bytes_.size()) {
            throw std::runtime_error("truncated checkpoint " + path_ + " at byte " +
                                     std::to_string(pos_));
        }
    }

    const std::string& bytes_;
    const std::string& path_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const ResidualNetParams& params,
                     const ModelConfig& config) {
    params.check_shapes(config);
    std::string out;
    out.append(kMagic, sizeof kMagic);
    put_u64(out, config.d_in);
    put_u64(out, config.d_e);
    put_u64(out, config.d_h);
    put_u64(out, config.d_out);
    put_u64(out, config.n);
    put_f64(out, config.lambda);
    put_u64(out, config.branch_kind == BranchKind::linear ? 0 : 1);
    put_u64(out, static_cast<std::uint64_t>(config.activation));
    for (const Tensor& t : params.tensors()) {
        for (double v : t.data()) put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("short write to checkpoint: " + path);
}

std::pair<ResidualNetParams, ModelConfig> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r(bytes, path);
    r.expect_magic();
    ModelConfig config;
    config.d_in = r.u64();
    config.d_e = r.u64();
    config.d_h = r.u64();
    config.d_out = r.u64();
    config.n = r.u64();
    config.lambda = r.f64();
    config.branch_kind = r.u64() == 0 ? BranchKind::linear : BranchKind::mlp;
    const std::uint64_t act = r.u64();
    if (act > 2) throw std::runtime_error("bad activation tag in checkpoint " + path);
    config.activation = static_cast<ActKind>(act);
    config.validate();

    ResidualNetParams params = ResidualNetParams::zeros(config);
    for (Tensor& t : params.tensors()) {
        for (double& v : t.data()) v = r.f64();
    }
    r.done();
    return {std::move(params), config};
}

}  // namespace resx
