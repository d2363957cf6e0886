#include "limtr/tensor.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

namespace limtr {

size_t Tensor::numel_of(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

namespace {

// Persistent worker pool. Tasks are static contiguous chunks so the work an
// index receives never depends on scheduling order.
class Pool {
public:
    explicit Pool(int n_workers) : n_workers_(n_workers) {
        for (int i = 1; i < n_workers_; ++i)
            threads_.emplace_back([this, i] { worker_loop(i); });
    }

    ~Pool() {
        {
            std::unique_lock lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    int size() const { return n_workers_; }

    void run(size_t n, const std::function<void(size_t, size_t)>& body) {
        if (n == 0) return;
        int parts = static_cast<int>(std::min<size_t>(n, static_cast<size_t>(n_workers_)));
        if (parts <= 1 || inside_worker) {
            body(0, n);
            return;
        }
        {
            std::unique_lock lk(mu_);
            body_ = &body;
            total_ = n;
            parts_ = parts;
            pending_ = parts - 1;
            ++generation_;
        }
        cv_.notify_all();
        run_chunk(0);
        std::unique_lock lk(mu_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        body_ = nullptr;
    }

private:
    void run_chunk(int part) {
        const size_t chunk = (total_ + parts_ - 1) / parts_;
        const size_t begin = chunk * static_cast<size_t>(part);
        const size_t end = std::min(total_, begin + chunk);
        if (begin < end) (*body_)(begin, end);
    }

    static thread_local bool inside_worker;

    void worker_loop(int index) {
        inside_worker = true;
        uint64_t seen = 0;
        for (;;) {
            const std::function<void(size_t, size_t)>* body = nullptr;
            int parts = 0;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [&] { return stop_ || (generation_ != seen && body_ != nullptr); });
                if (stop_) return;
                seen = generation_;
                body = body_;
                parts = parts_;
            }
            if (index < parts) run_chunk(index);
            {
                std::unique_lock lk(mu_);
                if (index < parts && --pending_ == 0) done_cv_.notify_all();
                // Workers beyond parts still must not re-run this generation.
            }
        }
    }

    int n_workers_;
    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(size_t, size_t)>* body_ = nullptr;
    size_t total_ = 0;
    int parts_ = 0;
    int pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

thread_local bool Pool::inside_worker = false;

int env_worker_count() {
    if (const char* env = std::getenv("LIMTR_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return std::min(v, 64);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(hc == 0 ? 1u : hc, 8u));
}

Pool& pool() {
    static Pool p(env_worker_count());
    return p;
}

}  // namespace

int worker_count() { return pool().size(); }

void parallel_for(size_t n, const std::function<void(size_t, size_t)>& body) {
    pool().run(n, body);
}

void linear_fwd(const double* x, const double* w, const double* b, double* y,
                size_t rows, size_t in_dim, size_t out_dim) {
    parallel_for(rows, [&](size_t r0, size_t r1) {
        for (size_t r = r0; r < r1; ++r) {
            const double* xr = x + r * in_dim;
            double* yr = y + r * out_dim;
            for (size_t o = 0; o < out_dim; ++o) {
                const double* wo = w + o * in_dim;
                double acc = b ? b[o] : 0.0;
                for (size_t i = 0; i < in_dim; ++i) acc += xr[i] * wo[i];
                yr[o] = acc;
            }
        }
    });
}

void linear_bwd_input(const double* gy, const double* w, double* gx,
                      size_t rows, size_t in_dim, size_t out_dim) {
    parallel_for(rows, [&](size_t r0, size_t r1) {
        for (size_t r = r0; r < r1; ++r) {
            const double* gr = gy + r * out_dim;
            double* gxr = gx + r * in_dim;
            for (size_t i = 0; i < in_dim; ++i) gxr[i] = 0.0;
            for (size_t o = 0; o < out_dim; ++o) {
                const double g = gr[o];
                if (g == 0.0) continue;
                const double* wo = w + o * in_dim;
                for (size_t i = 0; i < in_dim; ++i) gxr[i] += g * wo[i];
            }
        }
    });
}

void linear_bwd_params(const double* gy, const double* x, double* gw, double* gb,
                       size_t rows, size_t in_dim, size_t out_dim) {
    // Partition over output features: each worker owns disjoint gw rows and
    // gb entries and walks the batch in index order, so accumulation order is
    // fixed regardless of worker count.
    parallel_for(out_dim, [&](size_t o0, size_t o1) {
        for (size_t o = o0; o < o1; ++o) {
            double* gwo = gw + o * in_dim;
            double gbo = 0.0;
            for (size_t r = 0; r < rows; ++r) {
                const double g = gy[r * out_dim + o];
                if (g == 0.0) continue;
                gbo += g;
                const double* xr = x + r * in_dim;
                for (size_t i = 0; i < in_dim; ++i) gwo[i] += g * xr[i];
            }
            if (gb) gb[o] += gbo;
        }
    });
}

}  // namespace limtr
