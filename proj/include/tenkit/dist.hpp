#pragma once

#include "tenkit/range_finder.hpp"
#include "tenkit/random.hpp"
#include "tenkit/tensor.hpp"
#include "tenkit/tucker.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace tenkit {

// ---------------------------------------------------------------------------
// Block grid
// ---------------------------------------------------------------------------

/// Tensor partitioned into contiguous blocks, one per worker. Worker ids are
/// the entries of the computing-resource tensor P = reshape(1..W) over the
/// grid shape (column-major), so block (s_1..s_N) belongs to worker
/// sub2ind(grid_shape, s).
struct BlockGrid {
    std::vector<Index> tensor_shape;
    std::vector<std::vector<Index>> splits;   // per-mode segment lengths
    std::vector<std::vector<Index>> offsets;  // per-mode segment start indices
    std::vector<Index> grid_shape;            // S_n = splits[n].size()
    std::vector<DenseTensor> blocks;          // indexed by worker id - 1

    Index order() const { return static_cast<Index>(tensor_shape.size()); }
    Index worker_count() const { return static_cast<Index>(blocks.size()); }

    std::size_t block_bytes(Index worker) const {
        return static_cast<std::size_t>(blocks[static_cast<std::size_t>(worker - 1)].size()) *
               sizeof(double);
    }
};

/// Column-major subscripts (1-based) of worker w in the grid.
inline std::vector<Index> ind2sub(const std::vector<Index>& grid_shape, Index w) {
    const Index total = detail::shape_product(grid_shape);
    detail::require(w >= 1 && w <= total, "ind2sub: worker id out of range");
    std::vector<Index> subs(grid_shape.size());
    Index rem = w - 1;
    for (std::size_t n = 0; n < grid_shape.size(); ++n) {
        subs[n] = rem % grid_shape[n] + 1;
        rem /= grid_shape[n];
    }
    return subs;
}

inline Index sub2ind(const std::vector<Index>& grid_shape, const std::vector<Index>& subs) {
    detail::require(subs.size() == grid_shape.size(), "sub2ind: order mismatch");
    Index id = 0, stride = 1;
    for (std::size_t n = 0; n < grid_shape.size(); ++n) {
        detail::require(subs[n] >= 1 && subs[n] <= grid_shape[n], "sub2ind: subscript range");
        id += (subs[n] - 1) * stride;
        stride *= grid_shape[n];
    }
    return id + 1;
}

/// Splits the tensor into contiguous-range blocks; segment lengths must sum
/// to the dimension in every mode.
inline BlockGrid partition(const DenseTensor& y, std::vector<std::vector<Index>> splits) {
    detail::require(static_cast<Index>(splits.size()) == y.order(),
                    "partition: one split list per mode required");
    BlockGrid grid;
    grid.tensor_shape = y.shape();
    grid.splits = std::move(splits);
    grid.offsets.resize(grid.splits.size());
    grid.grid_shape.resize(grid.splits.size());
    for (std::size_t n = 0; n < grid.splits.size(); ++n) {
        detail::require(!grid.splits[n].empty(), "partition: empty split list");
        Index off = 0;
        for (Index len : grid.splits[n]) {
            detail::require(len >= 1, "partition: segment lengths must be positive");
            grid.offsets[n].push_back(off);
            off += len;
        }
        detail::require(off == y.dim(static_cast<Index>(n)),
                        "partition: split lengths must sum to the mode dimension");
        grid.grid_shape[n] = static_cast<Index>(grid.splits[n].size());
    }

    const Index w_total = detail::shape_product(grid.grid_shape);
    grid.blocks.reserve(static_cast<std::size_t>(w_total));
    const Index order = y.order();
    for (Index w = 1; w <= w_total; ++w) {
        const auto subs = ind2sub(grid.grid_shape, w);
        std::vector<Index> bshape(static_cast<std::size_t>(order));
        std::vector<Index> lo(static_cast<std::size_t>(order));
        for (std::size_t n = 0; n < bshape.size(); ++n) {
            bshape[n] = grid.splits[n][static_cast<std::size_t>(subs[n] - 1)];
            lo[n] = grid.offsets[n][static_cast<std::size_t>(subs[n] - 1)];
        }
        DenseTensor block(bshape);
        // copy one contiguous column run at a time (fastest mode is mode 0)
        std::vector<Index> cnt(static_cast<std::size_t>(order), 0);
        const Index runs = block.size() / bshape[0];
        for (Index t = 0; t < runs; ++t) {
            Index src = 0, stride = 1, dst = 0, bstride = 1;
            for (std::size_t n = 0; n < bshape.size(); ++n) {
                src += (lo[n] + cnt[n]) * stride;
                stride *= y.dim(static_cast<Index>(n));
                dst += cnt[n] * bstride;
                bstride *= bshape[n];
            }
            std::copy_n(y.data() + src, bshape[0], block.data() + dst);
            for (std::size_t n = 1; n < bshape.size(); ++n) {
                if (++cnt[n] < bshape[n]) break;
                cnt[n] = 0;
            }
        }
        grid.blocks.push_back(std::move(block));
    }
    return grid;
}

/// Inverse of partition; bit-exact.
inline DenseTensor assemble(const BlockGrid& grid) {
    DenseTensor y(grid.tensor_shape);
    const Index order = y.order();
    for (Index w = 1; w <= grid.worker_count(); ++w) {
        const auto subs = ind2sub(grid.grid_shape, w);
        const DenseTensor& block = grid.blocks[static_cast<std::size_t>(w - 1)];
        std::vector<Index> lo(static_cast<std::size_t>(order));
        for (std::size_t n = 0; n < lo.size(); ++n)
            lo[n] = grid.offsets[n][static_cast<std::size_t>(subs[n] - 1)];
        std::vector<Index> cnt(static_cast<std::size_t>(order), 0);
        const Index runs = block.size() / block.dim(0);
        for (Index t = 0; t < runs; ++t) {
            Index dst = 0, stride = 1, src = 0, bstride = 1;
            for (std::size_t n = 0; n < cnt.size(); ++n) {
                dst += (lo[n] + cnt[n]) * stride;
                stride *= y.dim(static_cast<Index>(n));
                src += cnt[n] * bstride;
                bstride *= block.dim(static_cast<Index>(n));
            }
            std::copy_n(block.data() + src, block.dim(0), y.data() + dst);
            for (std::size_t n = 1; n < cnt.size(); ++n) {
                if (++cnt[n] < block.dim(static_cast<Index>(n))) break;
                cnt[n] = 0;
            }
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// Distributed unfolding layout (the block-of-blocks view of unfold(Y, n))
// ---------------------------------------------------------------------------

struct UnfoldBlockEntry {
    Index worker;     // p_(n)(s_n, k)
    Matrix unfolding; // mode-n unfolding of that worker's block
};

namespace detail {

/// Global column ids of a block in the mode-n unfolding of a tensor with the
/// given extents; ascending-mode mixed radix, lowest mode fastest. `lo`/`len`
/// give the block's index range per mode.
inline std::vector<Index> unfold_column_ids(const std::vector<Index>& extents,
                                            const std::vector<Index>& lo,
                                            const std::vector<Index>& len, Index mode) {
    const Index order = static_cast<Index>(extents.size());
    Index total = 1;
    for (Index j = 0; j < order; ++j)
        if (j != mode) total *= len[static_cast<std::size_t>(j)];
    std::vector<Index> ids(static_cast<std::size_t>(total));
    std::vector<Index> cnt(static_cast<std::size_t>(order), 0);
    for (Index t = 0; t < total; ++t) {
        Index id = 0, stride = 1;
        for (Index j = 0; j < order; ++j) {
            if (j == mode) continue;
            id += (lo[static_cast<std::size_t>(j)] + cnt[static_cast<std::size_t>(j)]) * stride;
            stride *= extents[static_cast<std::size_t>(j)];
        }
        ids[static_cast<std::size_t>(t)] = id;
        for (Index j = 0; j < order; ++j) {
            if (j == mode) continue;
            if (++cnt[static_cast<std::size_t>(j)] < len[static_cast<std::size_t>(j)]) break;
            cnt[static_cast<std::size_t>(j)] = 0;
        }
    }
    return ids;
}

}  // namespace detail

/// The (s_n, k) grid of per-worker mode-n unfoldings: entry [s_n-1][k-1] holds
/// worker p_(n)(s_n, k) (the mode-n unfolding of the resource tensor P) and
/// its block's unfolding. Scattering every block's columns to their global
/// positions reproduces unfold(assemble(grid), n) exactly.
inline std::vector<std::vector<UnfoldBlockEntry>> dist_unfold_map(const BlockGrid& grid,
                                                                  Index mode) {
    detail::require(mode >= 0 && mode < grid.order(), "dist_unfold_map: mode out of range");
    const Index s_n = grid.grid_shape[static_cast<std::size_t>(mode)];
    const Index k_total = grid.worker_count() / s_n;
    std::vector<std::vector<UnfoldBlockEntry>> layout(
        static_cast<std::size_t>(s_n), std::vector<UnfoldBlockEntry>(static_cast<std::size_t>(k_total)));
    for (Index w = 1; w <= grid.worker_count(); ++w) {
        const auto subs = ind2sub(grid.grid_shape, w);
        const Index row = subs[static_cast<std::size_t>(mode)] - 1;
        Index col = 0, stride = 1;
        for (Index j = 0; j < grid.order(); ++j) {
            if (j == mode) continue;
            col += (subs[static_cast<std::size_t>(j)] - 1) * stride;
            stride *= grid.grid_shape[static_cast<std::size_t>(j)];
        }
        layout[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] = {
            w, unfold(grid.blocks[static_cast<std::size_t>(w - 1)], mode)};
    }
    return layout;
}

/// unfold(assemble(grid), n) built by scattering block unfoldings to their
/// global column positions.
inline Matrix assemble_unfold(const BlockGrid& grid, Index mode) {
    const Index rows = grid.tensor_shape[static_cast<std::size_t>(mode)];
    const Index cols = detail::shape_product(grid.tensor_shape) / rows;
    Matrix out(rows, cols);
    for (Index w = 1; w <= grid.worker_count(); ++w) {
        const auto subs = ind2sub(grid.grid_shape, w);
        const DenseTensor& block = grid.blocks[static_cast<std::size_t>(w - 1)];
        std::vector<Index> lo(subs.size()), len(subs.size());
        for (std::size_t n = 0; n < subs.size(); ++n) {
            lo[n] = grid.offsets[n][static_cast<std::size_t>(subs[n] - 1)];
            len[n] = grid.splits[n][static_cast<std::size_t>(subs[n] - 1)];
        }
        const auto col_ids = detail::unfold_column_ids(grid.tensor_shape, lo, len, mode);
        const Matrix local = unfold(block, mode);
        const Index row0 = lo[static_cast<std::size_t>(mode)];
        for (std::size_t c = 0; c < col_ids.size(); ++c)
            out.block(row0, col_ids[c], local.rows(), 1) = local.col(static_cast<Index>(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Message contract
// ---------------------------------------------------------------------------

enum class MsgKind { partial_product, seed_broadcast, factor_block, core_block };

inline const char* to_string(MsgKind k) {
    switch (k) {
        case MsgKind::partial_product: return "partial_product";
        case MsgKind::seed_broadcast: return "seed_broadcast";
        case MsgKind::factor_block: return "factor_block";
        case MsgKind::core_block: return "core_block";
    }
    return "?";
}

/// One simulated message. Worker ids are 1-based; id 0 is the client. The
/// payload is a matrix; tensor-valued payloads carry their shape alongside.
struct WorkerMsg {
    std::uint64_t seq = 0;
    MsgKind kind = MsgKind::partial_product;
    Index source = 0;
    Index dest = 0;
    Index mode = -1;
    std::string tag;
    Matrix payload;
    std::vector<Index> tensor_shape;  // non-empty when the payload is a folded tensor
};

/// Audit log of everything sent through the simulator, in delivery order with
/// monotone sequence numbers.
class MessageLog {
public:
    struct Record {
        std::uint64_t seq;
        MsgKind kind;
        Index source, dest, mode;
        std::string tag;
        Index rows, cols;
    };

    void append(const WorkerMsg& msg) {
        records_.push_back({msg.seq, msg.kind, msg.source, msg.dest, msg.mode, msg.tag,
                            msg.payload.rows(), msg.payload.cols()});
    }

    const std::vector<Record>& records() const { return records_; }

    std::size_t count(MsgKind kind) const {
        std::size_t c = 0;
        for (const auto& r : records_)
            if (r.kind == kind) ++c;
        return c;
    }

    std::size_t count(MsgKind kind, Index mode) const {
        std::size_t c = 0;
        for (const auto& r : records_)
            if (r.kind == kind && r.mode == mode) ++c;
        return c;
    }

    /// Line-delimited records, one JSON object per message.
    void write_ndjson(std::ostream& os) const {
        for (const auto& r : records_) {
            os << "{\"seq\":" << r.seq << ",\"kind\":\"" << to_string(r.kind)
               << "\",\"source\":" << r.source << ",\"dest\":" << r.dest
               << ",\"mode\":" << r.mode << ",\"tag\":\"" << r.tag
               << "\",\"rows\":" << r.rows << ",\"cols\":" << r.cols << "}\n";
        }
    }

private:
    std::vector<Record> records_;
};

// ---------------------------------------------------------------------------
// Worker simulator
// ---------------------------------------------------------------------------

struct DistOptions {
    int threads = 0;  // 0 = hardware concurrency, capped at the worker count
};

struct DistResult {
    TuckerModel model;
    MessageLog log;
    std::vector<std::size_t> peak_bytes;   // per worker: peak live tracked bytes
    std::vector<std::size_t> block_bytes;  // per worker: original block size
};

namespace detail {

struct WorkerState {
    Index id = 0;
    std::vector<Index> subs;  // 1-based grid position
    DenseTensor block;        // current local addend
    std::vector<Index> lo, len;
    std::vector<Matrix> factor_rows;  // U^(p) rows owned by this worker
    std::vector<WorkerMsg> inbox;
    std::vector<WorkerMsg> outbox;
    std::size_t cur_bytes = 0, peak_bytes = 0;

    void track_alloc(std::size_t bytes) {
        cur_bytes += bytes;
        peak_bytes = std::max(peak_bytes, cur_bytes);
    }
    void track_free(std::size_t bytes) { cur_bytes -= std::min(bytes, cur_bytes); }

    void send(MsgKind kind, Index dest, Index mode, std::string tag, Matrix payload,
              std::vector<Index> tshape = {}) {
        outbox.push_back(
            {0, kind, id, dest, mode, std::move(tag), std::move(payload), std::move(tshape)});
    }
};

/// Barrier-synchronized phase executor over all workers; cross-worker data
/// moves only through mailboxes, delivered in canonical worker order with
/// monotone sequence numbers, so results do not depend on the thread count.
class ClusterSim {
public:
    ClusterSim(const BlockGrid& grid, const DistOptions& opts) {
        const Index w_total = grid.worker_count();
        int threads = opts.threads > 0 ? opts.threads
                                       : static_cast<int>(std::thread::hardware_concurrency());
        threads_ = std::max(1, std::min<int>(threads, static_cast<int>(w_total)));
        workers_.resize(static_cast<std::size_t>(w_total));
        for (Index w = 1; w <= w_total; ++w) {
            WorkerState& ws = workers_[static_cast<std::size_t>(w - 1)];
            ws.id = w;
            ws.subs = ind2sub(grid.grid_shape, w);
            ws.block = grid.blocks[static_cast<std::size_t>(w - 1)];
            ws.lo.resize(ws.subs.size());
            ws.len.resize(ws.subs.size());
            for (std::size_t n = 0; n < ws.subs.size(); ++n) {
                ws.lo[n] = grid.offsets[n][static_cast<std::size_t>(ws.subs[n] - 1)];
                ws.len[n] = grid.splits[n][static_cast<std::size_t>(ws.subs[n] - 1)];
            }
            ws.factor_rows.resize(static_cast<std::size_t>(grid.order()));
            ws.track_alloc(static_cast<std::size_t>(ws.block.size()) * sizeof(double));
        }
    }

    template <typename Fn>
    void run_phase(Fn&& task) {
        std::atomic<Index> next{0};
        auto body = [&] {
            for (;;) {
                const Index i = next.fetch_add(1);
                if (i >= static_cast<Index>(workers_.size())) break;
                task(workers_[static_cast<std::size_t>(i)]);
            }
        };
        if (threads_ == 1) {
            body();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(threads_));
            for (int t = 0; t < threads_; ++t) pool.emplace_back(body);
            for (auto& th : pool) th.join();
        }
        deliver();
    }

    /// Client-originated send (id 0), delivered immediately.
    void client_send(MsgKind kind, Index dest, Index mode, std::string tag, Matrix payload,
                     std::vector<Index> tshape = {}) {
        WorkerMsg msg{next_seq_++, kind, 0, dest, mode, std::move(tag), std::move(payload),
                      std::move(tshape)};
        log.append(msg);
        route(std::move(msg));
    }

    std::vector<WorkerMsg> take_client_inbox() { return std::move(client_inbox_); }

    WorkerState& worker(Index id) { return workers_[static_cast<std::size_t>(id - 1)]; }
    std::vector<WorkerState>& workers() { return workers_; }
    Index worker_count() const { return static_cast<Index>(workers_.size()); }

    MessageLog log;

private:
    void deliver() {
        for (WorkerState& ws : workers_) {
            for (WorkerMsg& msg : ws.outbox) {
                msg.seq = next_seq_++;
                log.append(msg);
                route(std::move(msg));
            }
            ws.outbox.clear();
        }
    }

    void route(WorkerMsg msg) {
        if (msg.dest == 0) client_inbox_.push_back(std::move(msg));
        else workers_[static_cast<std::size_t>(msg.dest - 1)].inbox.push_back(std::move(msg));
    }

    std::vector<WorkerState> workers_;
    std::vector<WorkerMsg> client_inbox_;
    std::uint64_t next_seq_ = 0;
    int threads_ = 1;
};

/// Column index of a grid position in the mode-n unfolding of the resource
/// tensor P (k in the paper's p_(n)(s_n, k) indexing), 0-based.
inline Index grid_unfold_col(const std::vector<Index>& grid_shape,
                             const std::vector<Index>& subs, Index mode) {
    Index col = 0, stride = 1;
    for (std::size_t j = 0; j < grid_shape.size(); ++j) {
        if (static_cast<Index>(j) == mode) continue;
        col += (subs[j] - 1) * stride;
        stride *= grid_shape[j];
    }
    return col;
}

inline Index leader_of(const std::vector<Index>& grid_shape, Index s_n, Index mode) {
    std::vector<Index> subs(grid_shape.size(), 1);
    subs[static_cast<std::size_t>(mode)] = s_n;
    return sub2ind(grid_shape, subs);
}

/// Sums partial products in ascending (k, source) order starting from the
/// leader's own contribution, which sits at k = 0 by construction.
inline Matrix reduce_partials(Matrix own, const std::vector<WorkerMsg>& msgs,
                              const std::vector<Index>& grid_shape, Index mode,
                              const std::string& tag) {
    std::vector<std::pair<std::pair<Index, Index>, const WorkerMsg*>> order;
    for (const WorkerMsg& m : msgs) {
        if (m.kind != MsgKind::partial_product || m.mode != mode || m.tag != tag) continue;
        const auto subs = ind2sub(grid_shape, m.source);
        order.push_back({{grid_unfold_col(grid_shape, subs, mode), m.source}, &m});
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    Matrix sum = std::move(own);
    for (const auto& [key, m] : order) sum += m->payload;
    return sum;
}

inline void erase_consumed(std::vector<WorkerMsg>& inbox, MsgKind kind, Index mode,
                           const std::string& tag) {
    inbox.erase(std::remove_if(inbox.begin(), inbox.end(),
                               [&](const WorkerMsg& m) {
                                   return m.kind == kind && m.mode == mode && m.tag == tag;
                               }),
                inbox.end());
}

/// unfold_n(block) * Omega-rows where Omega is the conceptual (width x r)
/// Gaussian matrix of `seed` and the block's columns sit at scattered global
/// positions given by lo/len over `extents`. Omega rows are generated in
/// fixed-size batches and discarded, so a worker never holds more than
/// O(len_n * r + batch * r) temporaries regardless of the block size.
inline Matrix streamed_block_product(const DenseTensor& block, Index mode,
                                     const std::vector<Index>& extents,
                                     const std::vector<Index>& lo, Index width, Index r_tilde,
                                     const SeedSpec& omega_seed) {
    constexpr Index kBatch = 4096;
    const Index order = block.order();
    const auto d = slab_dims(block.shape(), mode);
    Matrix z = Matrix::Zero(d.mode, r_tilde);
    const std::uint64_t key = omega_seed.key();

    // global strides of the virtual mode-n unfolding (ascending modes, mode
    // skipped, lowest fastest)
    std::vector<Index> stride(static_cast<std::size_t>(order), 0);
    {
        Index s = 1;
        for (Index j = 0; j < order; ++j) {
            if (j == mode) continue;
            stride[static_cast<std::size_t>(j)] = s;
            s *= extents[static_cast<std::size_t>(j)];
        }
    }

    const Index batch_rows = std::min(kBatch, std::max(d.before, mode == 0 ? d.after : Index{1}));
    Matrix omega(batch_rows, r_tilde);
    auto fill_omega_row = [&](Index out_row, Index col) {
        for (Index r = 0; r < r_tilde; ++r) {
            const std::uint64_t idx =
                static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(width) +
                static_cast<std::uint64_t>(col);
            const std::uint64_t pair = idx >> 1;
            const double u1 = counter_unit(key, 2 * pair);
            const double u2 = counter_unit(key, 2 * pair + 1);
            const double rad = std::sqrt(-2.0 * std::log(u1));
            const double angle = 6.283185307179586476925287 * u2;
            omega(out_row, r) = (idx & 1u) ? rad * std::sin(angle) : rad * std::cos(angle);
        }
    };

    if (mode == 0) {
        // the mode-0 unfolding is the contiguous (L x Q) view; batch over its
        // columns directly
        Eigen::Map<const Matrix> src(block.data(), d.mode, d.after);
        std::vector<Index> digits(static_cast<std::size_t>(order), 0);
        for (Index q0 = 0; q0 < d.after; q0 += kBatch) {
            const Index cur = std::min(kBatch, d.after - q0);
            for (Index t = 0; t < cur; ++t) {
                Index col = 0;
                for (Index j = 1; j < order; ++j)
                    col += (lo[static_cast<std::size_t>(j)] +
                            digits[static_cast<std::size_t>(j)]) *
                           stride[static_cast<std::size_t>(j)];
                fill_omega_row(t, col);
                for (Index j = 1; j < order; ++j) {
                    if (++digits[static_cast<std::size_t>(j)] < block.dim(j)) break;
                    digits[static_cast<std::size_t>(j)] = 0;
                }
            }
            z.noalias() += src.middleCols(q0, cur) * omega.topRows(cur);
        }
        return z;
    }

    std::vector<Index> q_digits(static_cast<std::size_t>(order), 0);  // modes > mode
    std::vector<Index> p_digits(static_cast<std::size_t>(order), 0);  // modes < mode
    for (Index q = 0; q < d.after; ++q) {
        Index q_off = 0;
        for (Index j = mode + 1; j < order; ++j)
            q_off += (lo[static_cast<std::size_t>(j)] + q_digits[static_cast<std::size_t>(j)]) *
                     stride[static_cast<std::size_t>(j)];

        Eigen::Map<const Matrix> slab(block.data() + q * d.before * d.mode, d.before, d.mode);
        std::fill(p_digits.begin(), p_digits.end(), 0);
        for (Index p0 = 0; p0 < d.before; p0 += kBatch) {
            const Index cur = std::min(kBatch, d.before - p0);
            for (Index p = 0; p < cur; ++p) {
                Index col = q_off;
                for (Index j = 0; j < mode; ++j)
                    col += (lo[static_cast<std::size_t>(j)] +
                            p_digits[static_cast<std::size_t>(j)]) *
                           stride[static_cast<std::size_t>(j)];
                fill_omega_row(p, col);
                for (Index j = 0; j < mode; ++j) {
                    if (++p_digits[static_cast<std::size_t>(j)] < block.dim(j)) break;
                    p_digits[static_cast<std::size_t>(j)] = 0;
                }
            }
            z.noalias() += slab.middleRows(p0, cur).transpose() * omega.topRows(cur);
        }

        for (Index j = mode + 1; j < order; ++j) {
            if (++q_digits[static_cast<std::size_t>(j)] < block.dim(j)) break;
            q_digits[static_cast<std::size_t>(j)] = 0;
        }
    }
    return z;
}

inline void broadcast_seed(ClusterSim& sim, const SeedSpec& seed) {
    for (Index w = 1; w <= sim.worker_count(); ++w) {
        Matrix payload(1, 4);  // root/stream split into 32-bit halves
        payload(0, 0) = static_cast<double>(seed.root >> 32);
        payload(0, 1) = static_cast<double>(seed.root & 0xFFFFFFFFull);
        payload(0, 2) = static_cast<double>(seed.stream >> 32);
        payload(0, 3) = static_cast<double>(seed.stream & 0xFFFFFFFFull);
        sim.client_send(MsgKind::seed_broadcast, w, -1, "seed", std::move(payload));
    }
}

/// One distributed randomized-compression step for `mode`: local products
/// against the shared test matrix, reduction at the row leaders, Gram-path
/// orthonormalization through the client, and factor-block broadcast.
/// Returns the stacked factor. `extents` are the current virtual mode sizes
/// and get updated to the effective rank kept for `mode`. With update_blocks
/// every worker contracts its addend so the mode dimension shrinks; with
/// project_block_first (the two-pass variant) the original blocks stay put and
/// are projected with the current factor rows before range finding.
inline Matrix dist_compress_mode(ClusterSim& sim, const BlockGrid& grid, Index mode,
                                 Index r_tilde, const SeedSpec& omega_seed,
                                 std::vector<Index>& extents, bool update_blocks,
                                 bool project_block_first) {
    const Index order = grid.order();
    const Index s_total = grid.grid_shape[static_cast<std::size_t>(mode)];
    Index width = 1;
    for (Index j = 0; j < order; ++j)
        if (j != mode) width *= extents[static_cast<std::size_t>(j)];

    // Leader-local state surviving between phases; one writer per slot.
    std::vector<Matrix> z_rows(static_cast<std::size_t>(s_total));
    std::vector<Matrix> factor_blocks(static_cast<std::size_t>(s_total));

    // Phase A: local partial products Z-partial = unfold_n(local) * Omega-rows.
    sim.run_phase([&](WorkerState& ws) {
        DenseTensor local = ws.block;
        std::size_t local_tracked = 0;
        if (project_block_first) {
            for (Index p = 0; p < order; ++p) {
                if (p == mode) continue;
                const Matrix& u = ws.factor_rows[static_cast<std::size_t>(p)];
                DenseTensor next = ttm(local, u.transpose(), p);
                const std::size_t nb = static_cast<std::size_t>(next.size()) * sizeof(double);
                ws.track_alloc(nb);
                if (local_tracked > 0) ws.track_free(local_tracked);
                local_tracked = nb;
                local = std::move(next);
            }
        }

        std::vector<Index> lo = ws.lo;
        if (project_block_first)
            for (Index j = 0; j < order; ++j)
                if (j != mode) lo[static_cast<std::size_t>(j)] = 0;

        const std::size_t batch_bytes =
            static_cast<std::size_t>(std::min<Index>(4096, local.size()) * r_tilde) *
            sizeof(double);
        ws.track_alloc(batch_bytes);
        Matrix partial =
            streamed_block_product(local, mode, extents, lo, width, r_tilde, omega_seed);
        const std::size_t partial_bytes =
            static_cast<std::size_t>(partial.size()) * sizeof(double);
        ws.track_alloc(partial_bytes);
        ws.track_free(batch_bytes);
        if (local_tracked > 0) ws.track_free(local_tracked);

        const Index s_row = ws.subs[static_cast<std::size_t>(mode)];
        const Index leader = leader_of(grid.grid_shape, s_row, mode);
        if (ws.id == leader) {
            z_rows[static_cast<std::size_t>(s_row - 1)] = std::move(partial);
        } else {
            ws.send(MsgKind::partial_product, leader, mode, "z", std::move(partial));
            ws.track_free(partial_bytes);
        }
    });

    // Phase B: leaders reduce Z rows in fixed (k, source) order and report
    // local Grams to the client.
    sim.run_phase([&](WorkerState& ws) {
        const Index s_row = ws.subs[static_cast<std::size_t>(mode)];
        if (ws.id != leader_of(grid.grid_shape, s_row, mode)) return;
        Matrix z = reduce_partials(std::move(z_rows[static_cast<std::size_t>(s_row - 1)]),
                                   ws.inbox, grid.grid_shape, mode, "z");
        erase_consumed(ws.inbox, MsgKind::partial_product, mode, "z");
        Matrix gram = z.transpose() * z;
        z_rows[static_cast<std::size_t>(s_row - 1)] = std::move(z);
        ws.send(MsgKind::partial_product, 0, mode, "gram", std::move(gram));
    });

    // Client: sum Grams in row order, eigendecompose, broadcast the transform.
    Matrix gram_sum = Matrix::Zero(r_tilde, r_tilde);
    {
        auto inbox = sim.take_client_inbox();
        std::sort(inbox.begin(), inbox.end(),
                  [](const WorkerMsg& a, const WorkerMsg& b) { return a.source < b.source; });
        for (const WorkerMsg& m : inbox) gram_sum += m.payload;
    }
    const Matrix transform = gram_ortho_transform(gram_sum).first;
    for (Index s = 1; s <= s_total; ++s)
        sim.client_send(MsgKind::factor_block, leader_of(grid.grid_shape, s, mode), mode,
                        "transform", transform);

    // Phase C: leaders form factor blocks, send them to the client and to
    // every worker sharing the row.
    sim.run_phase([&](WorkerState& ws) {
        const Index s_row = ws.subs[static_cast<std::size_t>(mode)];
        if (ws.id != leader_of(grid.grid_shape, s_row, mode)) return;
        Matrix t;
        for (const WorkerMsg& m : ws.inbox)
            if (m.kind == MsgKind::factor_block && m.mode == mode && m.tag == "transform")
                t = m.payload;
        erase_consumed(ws.inbox, MsgKind::factor_block, mode, "transform");
        Matrix& z = z_rows[static_cast<std::size_t>(s_row - 1)];
        Matrix u = z * t;
        ws.track_free(static_cast<std::size_t>(z.size()) * sizeof(double));
        z.resize(0, 0);
        ws.send(MsgKind::factor_block, 0, mode, "gather", u);
        for (Index w = 1; w <= sim.worker_count(); ++w) {
            if (w == ws.id) continue;
            const auto subs = ind2sub(grid.grid_shape, w);
            if (subs[static_cast<std::size_t>(mode)] == s_row)
                ws.send(MsgKind::factor_block, w, mode, "factor", u);
        }
        factor_blocks[static_cast<std::size_t>(s_row - 1)] = std::move(u);
    });

    // Phase D: every worker installs its factor rows; optionally contracts its
    // addend so the mode dimension shrinks to the effective rank.
    sim.run_phase([&](WorkerState& ws) {
        const Index s_row = ws.subs[static_cast<std::size_t>(mode)];
        const Index leader = leader_of(grid.grid_shape, s_row, mode);
        Matrix u;
        if (ws.id == leader) {
            u = factor_blocks[static_cast<std::size_t>(s_row - 1)];
        } else {
            for (const WorkerMsg& m : ws.inbox)
                if (m.kind == MsgKind::factor_block && m.mode == mode && m.tag == "factor")
                    u = m.payload;
            erase_consumed(ws.inbox, MsgKind::factor_block, mode, "factor");
        }
        Matrix& slot = ws.factor_rows[static_cast<std::size_t>(mode)];
        ws.track_free(static_cast<std::size_t>(slot.size()) * sizeof(double));
        slot = std::move(u);
        ws.track_alloc(static_cast<std::size_t>(slot.size()) * sizeof(double));
        if (update_blocks) {
            DenseTensor next = ttm(ws.block, slot.transpose(), mode);
            ws.track_alloc(static_cast<std::size_t>(next.size()) * sizeof(double));
            ws.track_free(static_cast<std::size_t>(ws.block.size()) * sizeof(double));
            ws.block = std::move(next);
            ws.lo[static_cast<std::size_t>(mode)] = 0;
            ws.len[static_cast<std::size_t>(mode)] = slot.cols();
        }
    });

    // Stack the gathered factor blocks in row order.
    auto inbox = sim.take_client_inbox();
    std::sort(inbox.begin(), inbox.end(),
              [](const WorkerMsg& a, const WorkerMsg& b) { return a.source < b.source; });
    Index rows = 0;
    for (const WorkerMsg& m : inbox) rows += m.payload.rows();
    const Index kept = inbox.empty() ? 0 : inbox.front().payload.cols();
    Matrix stacked(rows, kept);
    Index at = 0;
    for (const WorkerMsg& m : inbox) {
        stacked.middleRows(at, m.payload.rows()) = m.payload;
        at += m.payload.rows();
    }
    extents[static_cast<std::size_t>(mode)] = kept;
    return stacked;
}

/// Gathers the fully contracted addends and sums them in worker order.
inline DenseTensor gather_core(ClusterSim& sim, const std::vector<Index>& core_shape,
                               bool project_blocks) {
    const Index order = static_cast<Index>(core_shape.size());
    sim.run_phase([&](WorkerState& ws) {
        DenseTensor local = ws.block;
        std::size_t tracked = 0;
        if (project_blocks) {
            for (Index p = 0; p < order; ++p) {
                DenseTensor next = ttm(local, ws.factor_rows[static_cast<std::size_t>(p)].transpose(), p);
                const std::size_t nb = static_cast<std::size_t>(next.size()) * sizeof(double);
                ws.track_alloc(nb);
                if (tracked > 0) ws.track_free(tracked);
                tracked = nb;
                local = std::move(next);
            }
        }
        Matrix payload = Eigen::Map<const Matrix>(local.data(), local.size(), 1);
        ws.send(MsgKind::core_block, 0, -1, "core", std::move(payload), local.shape());
        if (tracked > 0) ws.track_free(tracked);
    });
    auto inbox = sim.take_client_inbox();
    std::sort(inbox.begin(), inbox.end(),
              [](const WorkerMsg& a, const WorkerMsg& b) { return a.source < b.source; });
    DenseTensor core(core_shape);
    for (const WorkerMsg& m : inbox) {
        detail::require(m.tensor_shape == core_shape, "core gather: addend shape mismatch");
        Eigen::Map<Vector>(core.data(), core.size()) += m.payload.col(0);
    }
    return core;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Distributed operations
// ---------------------------------------------------------------------------

/// Distributed product unfold(Y, n) * Omega on a fresh grid: every worker
/// multiplies its block's unfolding by its shared rows of the test matrix
/// (drawn locally from `seed`), partials are reduced at the k=1 row leaders in
/// ascending k order. Returns the Z row blocks, one per mode-n segment.
inline std::vector<Matrix> dist_multiply(const BlockGrid& grid, Index mode, Index r_tilde,
                                         const SeedSpec& seed, MessageLog* log = nullptr,
                                         const DistOptions& opts = {}) {
    detail::require(mode >= 0 && mode < grid.order(), "dist_multiply: mode out of range");
    detail::require(r_tilde >= 1, "dist_multiply: r_tilde must be positive");
    detail::ClusterSim sim(grid, opts);
    const std::vector<Index>& extents = grid.tensor_shape;
    const Index s_total = grid.grid_shape[static_cast<std::size_t>(mode)];
    Index width = 1;
    for (Index j = 0; j < grid.order(); ++j)
        if (j != mode) width *= extents[static_cast<std::size_t>(j)];

    std::vector<Matrix> z(static_cast<std::size_t>(s_total));
    sim.run_phase([&](detail::WorkerState& ws) {
        Matrix partial =
            detail::streamed_block_product(ws.block, mode, extents, ws.lo, width, r_tilde, seed);
        const Index s_row = ws.subs[static_cast<std::size_t>(mode)];
        const Index leader = detail::leader_of(grid.grid_shape, s_row, mode);
        if (ws.id != leader)
            ws.send(MsgKind::partial_product, leader, mode, "z", std::move(partial));
        else
            z[static_cast<std::size_t>(s_row - 1)] = std::move(partial);
    });

    sim.run_phase([&](detail::WorkerState& ws) {
        const Index s_row = ws.subs[static_cast<std::size_t>(mode)];
        if (ws.id != detail::leader_of(grid.grid_shape, s_row, mode)) return;
        z[static_cast<std::size_t>(s_row - 1)] =
            detail::reduce_partials(std::move(z[static_cast<std::size_t>(s_row - 1)]), ws.inbox,
                                    grid.grid_shape, mode, "z");
    });

    if (log) *log = sim.log;
    return z;
}

/// Distributed one-pass randomized Tucker over the block grid. Matches the
/// single-node algorithm's test matrices stream for stream; orthonormalization
/// runs through the Gram path, so factors agree with the single-node result up
/// to a column rotation of the same subspaces.
inline DistResult dist_rand_tucker(const BlockGrid& grid, const std::vector<Index>& ranks,
                                   Index oversample, const SeedSpec& seed,
                                   const DistOptions& opts = {}) {
    detail::require(static_cast<Index>(ranks.size()) == grid.order(),
                    "dist_rand_tucker: one rank per mode required");
    detail::ClusterSim sim(grid, opts);
    detail::broadcast_seed(sim, seed);

    std::vector<Index> extents = grid.tensor_shape;
    TuckerModel model;
    model.factors.resize(static_cast<std::size_t>(grid.order()));
    for (Index n = 0; n < grid.order(); ++n) {
        const Index r_tilde = std::min(ranks[static_cast<std::size_t>(n)] + oversample,
                                       grid.tensor_shape[static_cast<std::size_t>(n)]);
        model.factors[static_cast<std::size_t>(n)] = detail::dist_compress_mode(
            sim, grid, n, r_tilde, detail::alg2_omega_seed(seed, n), extents,
            /*update_blocks=*/true, /*project_block_first=*/false);
    }
    model.core = detail::gather_core(sim, extents, /*project_blocks=*/false);

    DistResult result;
    result.model = std::move(model);
    result.log = std::move(sim.log);
    for (auto& ws : sim.workers()) result.peak_bytes.push_back(ws.peak_bytes);
    for (Index w = 1; w <= grid.worker_count(); ++w)
        result.block_bytes.push_back(grid.block_bytes(w));
    return result;
}

/// Distributed two-pass randomized Tucker: blocks stay in place; each visit
/// projects the original blocks with the current factor rows (initially
/// Gaussian, generated locally from the broadcast seed) before range finding.
inline DistResult dist_rand_tucker_2i(const BlockGrid& grid, const std::vector<Index>& ranks,
                                      Index oversample, const SeedSpec& seed,
                                      const DistOptions& opts = {}) {
    detail::require(static_cast<Index>(ranks.size()) == grid.order(),
                    "dist_rand_tucker_2i: one rank per mode required");
    detail::ClusterSim sim(grid, opts);
    detail::broadcast_seed(sim, seed);
    const Index order = grid.order();

    // Gaussian initialization: every worker generates exactly its rows of the
    // shared init matrices (no messages needed).
    std::vector<Index> extents(static_cast<std::size_t>(order));
    for (Index n = 0; n < order; ++n) {
        const Index in = grid.tensor_shape[static_cast<std::size_t>(n)];
        extents[static_cast<std::size_t>(n)] =
            std::min(ranks[static_cast<std::size_t>(n)] + oversample, in);
    }
    sim.run_phase([&](detail::WorkerState& ws) {
        for (Index n = 0; n < order; ++n) {
            const Index in = grid.tensor_shape[static_cast<std::size_t>(n)];
            std::vector<Index> rows(static_cast<std::size_t>(ws.len[static_cast<std::size_t>(n)]));
            for (std::size_t i = 0; i < rows.size(); ++i)
                rows[i] = ws.lo[static_cast<std::size_t>(n)] + static_cast<Index>(i);
            ws.factor_rows[static_cast<std::size_t>(n)] = gaussian_rows(
                in, extents[static_cast<std::size_t>(n)], detail::alg3_init_seed(seed, n), rows);
        }
    });

    TuckerModel model;
    model.factors.resize(static_cast<std::size_t>(order));
    for (Index pass = 0; pass < 2; ++pass) {
        for (Index n = 0; n < order; ++n) {
            const Index r_tilde = std::min(ranks[static_cast<std::size_t>(n)] + oversample,
                                           grid.tensor_shape[static_cast<std::size_t>(n)]);
            std::vector<Index> proj_extents = extents;
            proj_extents[static_cast<std::size_t>(n)] =
                grid.tensor_shape[static_cast<std::size_t>(n)];
            model.factors[static_cast<std::size_t>(n)] = detail::dist_compress_mode(
                sim, grid, n, r_tilde, detail::alg3_omega_seed(seed, pass, n), proj_extents,
                /*update_blocks=*/false, /*project_block_first=*/true);
            extents[static_cast<std::size_t>(n)] = proj_extents[static_cast<std::size_t>(n)];
        }
    }
    model.core = detail::gather_core(sim, extents, /*project_blocks=*/true);

    DistResult result;
    result.model = std::move(model);
    result.log = std::move(sim.log);
    for (auto& ws : sim.workers()) result.peak_bytes.push_back(ws.peak_bytes);
    for (Index w = 1; w <= grid.worker_count(); ++w)
        result.block_bytes.push_back(grid.block_bytes(w));
    return result;
}

// ---------------------------------------------------------------------------
// Grid description files: lines of "modeK = len1 len2 ..." (1-based K)
// ---------------------------------------------------------------------------

inline std::vector<std::vector<Index>> read_grid_splits(std::istream& is) {
    std::vector<std::pair<int, std::vector<Index>>> entries;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
        detail::require(key.rfind("mode", 0) == 0, "grid file: expected modeK = lengths");
        const int mode = std::stoi(key.substr(4));
        std::istringstream vals(line.substr(eq + 1));
        std::vector<Index> lens;
        Index v = 0;
        while (vals >> v) lens.push_back(v);
        detail::require(!lens.empty(), "grid file: empty split list");
        entries.emplace_back(mode, std::move(lens));
    }
    detail::require(!entries.empty(), "grid file: no mode entries");
    std::sort(entries.begin(), entries.end());
    std::vector<std::vector<Index>> splits;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        detail::require(entries[i].first == static_cast<int>(i + 1),
                        "grid file: modes must be 1..N without gaps");
        splits.push_back(std::move(entries[i].second));
    }
    return splits;
}

inline void write_grid_splits(std::ostream& os, const std::vector<std::vector<Index>>& splits) {
    for (std::size_t n = 0; n < splits.size(); ++n) {
        os << "mode" << (n + 1) << " =";
        for (Index len : splits[n]) os << ' ' << len;
        os << '\n';
    }
}

}  // namespace tenkit
